use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guandan::cards::{classify, Card, CardSet, LevelRank, Rank, DECK_SIZE, NUM_IDS, NUM_RANKS};
use guandan::engine::{assign_values, next_seat, Game, RoundResult, RoundState, Valued, SEATS};
use guandan::features::*;
use guandan::movegen::{legal_follows, legal_leads};
use guandan::nn::Mlp;
use guandan::ppo::{gae, masked_softmax, top_k_candidates};

fn level() -> impl Strategy<Value = LevelRank> {
    (0..NUM_RANKS).prop_map(|i| LevelRank::new(Rank::NATURAL[i]).unwrap())
}

/// A hand of `0..=max` cards drawn from the double deck.
fn hand(max: usize) -> impl Strategy<Value = CardSet> {
    (any::<u64>(), 0..=max).prop_map(|(seed, n)| {
        let mut deck: Vec<Card> = CardSet::full_deck().iter().collect();
        deck.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        CardSet::from_cards(deck.into_iter().take(n)).unwrap()
    })
}

fn deck_total(r: &RoundState) -> bool {
    let mut all = CardSet::new();
    for s in 0..SEATS {
        all = all.union(&r.hands[s]).unwrap();
        all = all.union(&r.played_cards()[s]).unwrap();
    }
    all == CardSet::full_deck()
}

fn first_active_after(r: &RoundState, seat: usize) -> usize {
    let mut s = next_seat(seat);
    while !r.is_active(s) {
        s = next_seat(s);
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leads_are_classified_combos_from_the_hand(h in hand(12), lv in level()) {
        for c in legal_leads(&h, lv) {
            prop_assert!(!c.is_pass());
            prop_assert!(h.contains(&c.cards));
            prop_assert!(classify(&c.cards, lv).unwrap().contains(&c));
        }
    }

    #[test]
    fn follows_cover_and_shrink_with_the_hand(h in hand(14), other in hand(14), lv in level(), pick in any::<prop::sample::Index>()) {
        let leads = legal_leads(&other, lv);
        prop_assume!(!leads.is_empty());
        let beat = *pick.get(&leads);
        let follows = legal_follows(&h, &beat, lv);
        prop_assert!(follows[0].is_pass());
        for c in &follows[1..] {
            prop_assert!(c.covers(&beat));
            prop_assert!(!beat.covers(c));
            prop_assert!(h.contains(&c.cards));
        }
        if let Some(card) = h.iter().next() {
            let mut smaller = h;
            smaller.remove(card);
            for c in legal_follows(&smaller, &beat, lv) {
                prop_assert!(follows.contains(&c));
            }
        }
    }

    #[test]
    fn covering_is_irreflexive(h in hand(10), lv in level()) {
        for c in legal_leads(&h, lv) {
            prop_assert!(!c.covers(&c));
        }
    }

    #[test]
    fn round_conserves_cards_and_passes_turns_in_order(seed in any::<u64>()) {
        let mut r = RoundState::deal(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for h in &r.hands {
            prop_assert_eq!(h.len(), 27);
        }
        let mut plies = 0;
        while !r.is_over() {
            prop_assert!(deck_total(&r));
            let legal = r.legal_actions();
            prop_assert!(!legal.is_empty());
            let c = *legal.choose(&mut rng).unwrap();
            let (seat, trick) = (r.turn, r.trick_id);
            r.apply(&c).unwrap();
            if !r.is_over() && r.trick_id == trick {
                prop_assert_eq!(r.turn, first_active_after(&r, seat));
            }
            plies += 1;
            prop_assert!(plies <= 400);
        }
        prop_assert!(deck_total(&r));
        let res = r.result().unwrap();
        prop_assert!((1..=3).contains(&res.promotion));
    }

    #[test]
    fn deals_are_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(RoundState::deal(seed).hands, RoundState::deal(seed).hands);
        let (mut a, mut b) = (Game::new(seed), Game::new(seed));
        for _ in 0..30 {
            let c = a.legal_actions()[0];
            prop_assert_eq!(c, b.legal_actions()[0]);
            a.apply(&c).unwrap();
            b.apply(&c).unwrap();
        }
        prop_assert_eq!(a.log, b.log);
    }

    #[test]
    fn encoded_views_are_well_formed(seed in any::<u64>(), steps in 0usize..200) {
        let mut g = Game::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            if g.is_over() {
                break;
            }
            let legal = g.legal_actions();
            g.apply(legal.choose(&mut rng).unwrap()).unwrap();
        }
        prop_assume!(!g.is_over());
        let view = g.view(g.turn());
        let v = encode_state(&view);
        prop_assert_eq!(v, encode_state(&view.clone()));
        prop_assert!(v.iter().all(|&x| (-1..=2).contains(&x)));
        for i in 0..3 {
            let block = &v[LEVELS + i * NUM_RANKS..LEVELS + (i + 1) * NUM_RANKS];
            prop_assert_eq!(block.iter().map(|&x| x as i32).sum::<i32>(), 1);
            let counts = &v[COUNTS + i * COUNT_SLOTS..COUNTS + (i + 1) * COUNT_SLOTS];
            prop_assert_eq!(counts.iter().filter(|&&x| x == 1).count(), 1);
        }
        let mut decoded = [0u8; NUM_IDS];
        for (d, &x) in decoded.iter_mut().zip(&v[HAND..HAND + NUM_IDS]) {
            *d = x as u8;
        }
        prop_assert_eq!(CardSet::from_counts(decoded).unwrap(), view.hand);
        for c in g.legal_actions() {
            let a = encode_action(&c);
            prop_assert_eq!(a.iter().map(|&x| x as usize).sum::<usize>(), c.size());
            let (s2, a2) = split_q_input(&q_input(&v, &a));
            prop_assert_eq!(s2, v);
            prop_assert_eq!(a2, a);
        }
    }

    #[test]
    fn masked_softmax_is_a_distribution(logits in prop::collection::vec(-20.0f64..20.0, 1..8), mask in any::<u8>()) {
        let k = logits.len();
        let mut legal: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
        legal[0] = true;
        let p = masked_softmax(&logits, &legal);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (pi, &l) in p.iter().zip(&legal) {
            prop_assert_eq!(*pi > 0.0, l);
        }
    }

    #[test]
    fn top_k_takes_the_best_in_order(q in prop::collection::vec(-5.0f32..5.0, 1..40), k in 1usize..6) {
        let top = top_k_candidates(&q, k).unwrap();
        prop_assert_eq!(top.len(), k.min(q.len()));
        for w in top.windows(2) {
            prop_assert!(q[w[0]] >= q[w[1]]);
        }
        let worst_kept = q[*top.last().unwrap()];
        for (i, &x) in q.iter().enumerate() {
            if !top.contains(&i) {
                prop_assert!(x <= worst_kept);
            }
        }
    }

    #[test]
    fn gae_with_unit_lambda_gives_discounted_returns(r in prop::collection::vec(-3.0f64..3.0, 1..20), v in prop::collection::vec(-3.0f64..3.0, 20), gamma in 0.5f64..1.0) {
        let v = &v[..r.len()];
        let (adv, ret) = gae(&r, v, gamma, 1.0).unwrap();
        let mut g = 0.0;
        for t in (0..r.len()).rev() {
            g = r[t] + gamma * g;
            prop_assert!((ret[t] - g).abs() < 1e-9);
            prop_assert!((adv[t] - (g - v[t])).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>(), rows in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::<f64>::new(&[6, 5, 3], &mut rng);
        let x: Vec<f64> = (0..rows * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = net.predict(&x, rows).unwrap();
        prop_assert_eq!(&a, &net.predict(&x, rows).unwrap());
        // rows are independent of each other
        let first = net.predict(&x[..6], 1).unwrap();
        prop_assert_eq!(&a[..3], &first[..]);
    }
}

struct V(usize, f32);

impl Valued for V {
    fn seat(&self) -> usize {
        self.0
    }
    fn round(&self) -> usize {
        0
    }
    fn set_value(&mut self, v: f32) {
        self.1 = v;
    }
}

proptest! {
    #[test]
    fn round_values_are_zero_sum(order in Just([0usize, 1, 2, 3]).prop_shuffle(), winner in prop::option::of(0usize..2)) {
        let res = RoundResult::from_finish_order(&order[..3]).unwrap();
        let mut s: Vec<V> = (0..SEATS).map(|i| V(i, f32::NAN)).collect();
        assign_values(&[res], winner, &mut s);
        prop_assert_eq!(s.iter().map(|x| x.1).sum::<f32>(), 0.0);
        prop_assert_eq!(s[0].1, s[2].1);
        prop_assert_eq!(s[1].1, s[3].1);
    }
}

#[test]
fn every_card_is_dealt_evenly() {
    let mut seen = [0u64; NUM_IDS];
    for seed in 0..1000 {
        let r = RoundState::deal(seed);
        let mut total = 0;
        for h in &r.hands {
            total += h.len();
            for (s, &c) in seen.iter_mut().zip(h.counts()) {
                *s += c as u64;
            }
        }
        assert_eq!(total, DECK_SIZE);
    }
    assert!(seen.iter().all(|&n| n == 2000), "{seen:?}");
}

#[test]
fn random_rounds_terminate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut longest = 0;
    for seed in 0..10_000u64 {
        let mut r = RoundState::deal(seed);
        let mut plies = 0;
        while !r.is_over() {
            let legal = r.legal_actions();
            r.apply(legal.choose(&mut rng).unwrap()).unwrap();
            plies += 1;
            assert!(plies <= 400, "round {seed} still running");
        }
        longest = longest.max(plies);
    }
    assert!(longest > 50);
}
