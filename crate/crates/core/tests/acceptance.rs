//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (bypassing the harness capture) and then asserts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use guandan::arena::{play_episode, play_match, Agent, AgentKind, DmcAgent, PpoAgent};
use guandan::cards::{Card, CardSet, Combo, ComboKind, LevelRank, Rank};
use guandan::dmc::{dmc_loss, EpisodeData, Sample};
use guandan::engine::tribute::{apply_return, tribute_plan};
use guandan::engine::{
    apply_promotion, assign_values, sample_value, tribute_card, tribute_return, EpisodeState, Game, Phase, Return,
    Role, RoundResult, RoundState, StepError,
};
use guandan::features::{
    encode_action, encode_state, ppo_input, q_input, ACTION_DIM, COUNTS, COUNT_SLOTS, HAND, PARTNER_MOVE, PLAYED,
    Q_INPUT_DIM, STATE_DIM, TO_BEAT, UNSEEN,
};
use guandan::movegen::{legal_actions, legal_leads, oracle_moves, MoveContext};
use guandan::nn::{load_checkpoint, ppo_net_sizes, Mlp, NetKind};
use guandan::ppo::{gae, masked_softmax, ppo_losses, PpoBatch, PpoConfig};
use guandan::runtime::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(name: &str, ok: bool, detail: &str) {
    let line = format!("[{}] {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).ok();
    assert!(ok, "{name}: {detail}");
}

fn lv(r: Rank) -> LevelRank {
    LevelRank::new(r).unwrap()
}

fn set(s: &str) -> CardSet {
    CardSet::parse(s).unwrap()
}

fn card(s: &str) -> Card {
    s.parse().unwrap()
}

// ---------------------------------------------------------------- move generation

#[test]
fn oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let deck = CardSet::full_deck().to_vec();
    let n = 10_000;
    let mut mismatches = Vec::new();
    let mut follows = 0;
    for i in 0..n {
        let level = LevelRank::new(Rank::NATURAL[i % 13]).unwrap();
        let mut d = deck.clone();
        d.shuffle(&mut rng);
        let h = rng.gen_range(1..=10);
        let hand = CardSet::from_cards(d[..h].iter().copied()).unwrap();
        let to_beat = if rng.gen_bool(0.5) {
            let m = rng.gen_range(1..=10);
            let other = CardSet::from_cards(d[h..h + m].iter().copied()).unwrap();
            legal_leads(&other, level).choose(&mut rng).copied()
        } else {
            None
        };
        follows += to_beat.is_some() as usize;
        let ctx = MoveContext { hand, to_beat, level };
        if legal_actions(&ctx) != oracle_moves(&ctx).unwrap() {
            mismatches.push(i);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "oracle equivalence",
        mismatches.is_empty() && secs < 300.0,
        &format!("{n} contexts ({follows} follows, 13 levels), {} mismatches, {secs:.1}s", mismatches.len()),
    );
}

#[test]
fn opening_action_count() {
    let mut counts = Vec::with_capacity(40_000);
    for seed in 0..10_000u64 {
        let s = RoundState::deal(seed);
        for h in &s.hands {
            counts.push(legal_leads(h, LevelRank::TWO).len());
        }
    }
    counts.sort_unstable();
    let q = |p: f64| counts[((counts.len() - 1) as f64 * p) as usize];
    let max = *counts.last().unwrap();
    let over = counts.iter().filter(|&&c| c > 5000).count();
    verdict(
        "opening action count",
        max > 5000,
        &format!(
            "{} hands: min {} p50 {} p90 {} p99 {} max {max}; {over} hands above 5000",
            counts.len(),
            counts[0],
            q(0.5),
            q(0.9),
            q(0.99)
        ),
    );
}

// ---------------------------------------------------------------- rules

fn state(hands: [&str; 4], leader: usize) -> RoundState {
    RoundState::with_hands(hands.map(set), leader, LevelRank::TWO, [LevelRank::TWO; 2])
}

fn combo(s: &str, level: LevelRank) -> Combo {
    Combo::parse(s, level).unwrap()
}

fn result(order: &[usize]) -> RoundResult {
    RoundResult::from_finish_order(order).unwrap()
}

fn episode_at(ours: Rank, theirs: Rank, current: Rank) -> EpisodeState {
    EpisodeState {
        team_levels: [lv(ours), lv(theirs)],
        current_level: lv(current),
        round_index: 4,
        last_result: None,
        episode_winner: None,
    }
}

fn rules_scenarios() -> Vec<(&'static str, bool)> {
    let two = LevelRank::TWO;
    let five = lv(Rank::Five);
    let c = |s: &str| combo(s, two);
    let mut out: Vec<(&'static str, bool)> = Vec::new();

    // covering order
    let jokers = c("JokerBomb:BJ,BJ,RJ,RJ");
    let bomb8 = c("Bomb:S9,S9,C9,C9,D9,D9,H9,H9");
    let bomb10 = c("Bomb:S9,S9,C9,C9,D9,D9,H9,H9,H2,H2");
    let flush9 = c("StraightFlush:S5,S6,S7,S8,S9");
    let flush_k = c("StraightFlush:S9,ST,SJ,SQ,SK");
    let bomb5_a = c("Bomb:SA,SA,CA,CA,DA");
    let bomb6_2 = c("Bomb:S2,S2,C2,C2,D2,D2");
    let bomb4_3 = c("Bomb:S3,S3,C3,C3");
    let bomb4_k = c("Bomb:SK,SK,CK,CK");
    let bomb5_3 = c("Bomb:S3,S3,C3,C3,D3");
    out.push(("joker bomb covers an 8-card bomb", jokers.covers(&bomb8)));
    out.push(("joker bomb covers a 10-card bomb", jokers.covers(&bomb10)));
    out.push(("joker bomb covers a straight flush", jokers.covers(&flush_k)));
    out.push(("nothing covers the joker bomb", !bomb10.covers(&jokers) && !flush_k.covers(&jokers)));
    out.push(("straight flush covers a 5-card bomb of aces", flush9.covers(&bomb5_a)));
    out.push(("straight flush does not cover a 6-card bomb", !flush9.covers(&bomb6_2)));
    out.push(("6-card bomb covers a straight flush", bomb6_2.covers(&flush_k)));
    out.push(("higher straight flush covers lower", flush_k.covers(&flush9) && !flush9.covers(&flush_k)));
    out.push(("longer bomb covers shorter", bomb5_3.covers(&bomb4_k)));
    out.push(("same length bomb compares rank", bomb4_k.covers(&bomb4_3) && !bomb4_3.covers(&bomb4_k)));
    out.push(("any bomb covers a plain combo", bomb4_3.covers(&c("Straight:TJQKA")) && bomb4_3.covers(&c("Single:RJ"))));
    out.push(("equal pairs do not cover", !c("Pair:SK,CK").covers(&c("Pair:DK,HK"))));
    out.push(("pair of aces covers pair of kings", c("Pair:SA,CA").covers(&c("Pair:SK,CK"))));
    out.push(("different plain kinds never cover", !c("Pair:SA,CA").covers(&c("Single:S3"))));
    let a5 = combo("Single:SA", five);
    let l5 = combo("Single:S5", five);
    let rj = combo("Single:RJ", five);
    let bj = combo("Single:BJ", five);
    out.push(("level card single outranks the ace", l5.covers(&a5) && !a5.covers(&l5)));
    out.push(("jokers outrank the level card", bj.covers(&l5) && rj.covers(&bj) && !bj.covers(&rj)));
    let low = c("Straight:SA,C2,S3,S4,S5");
    let next = c("Straight:S2,C3,S4,S5,S6");
    out.push(("A2345 is the lowest straight", next.covers(&low) && !low.covers(&next)));
    out.push(("TJQKA covers 9TJQK", c("Straight:ST,CJ,SQ,SK,SA").covers(&c("Straight:S9,CT,SJ,SQ,SK"))));
    out.push(("tube compares by rank", c("Tube:S4,C4,S5,C5,S6,C6").covers(&c("Tube:S3,C3,S4,C4,S5,C5"))));
    out.push((
        "full house compares by the triple",
        c("FullHouse:S4,C4,D4,S3,C3").covers(&c("FullHouse:S3,C3,D3,SA,CA")),
    ));
    let wild_pair = guandan::cards::classify(&set("H2 S5"), two).unwrap();
    out.push(("the wild card completes a pair", wild_pair.iter().any(|x| x.kind == ComboKind::Pair)));
    out.push(("black and red joker are not a pair", guandan::cards::classify(&set("BJ RJ"), two).unwrap().is_empty()));

    // trick play
    let mut s = state(["S3 S4", "S5 S6", "S7 S8", "S9 ST"], 0);
    s.apply(&c("Single:S3")).unwrap();
    for _ in 0..3 {
        s.apply(&Combo::PASS).unwrap();
    }
    out.push(("three passes close the trick for the leader", s.turn == 0 && s.to_beat().is_none() && s.trick_id == 1));
    let mut s = state(["S3 S4", "S5 S6", "S7 S8", "S9 ST"], 0);
    s.apply(&c("Single:S3")).unwrap();
    s.apply(&c("Single:S5")).unwrap();
    for _ in 0..3 {
        s.apply(&Combo::PASS).unwrap();
    }
    out.push(("last player to play leads the next trick", s.turn == 1 && s.trick_leader == 1));
    let mut s = state(["S3", "S5 S6", "S7 S8", "S9 ST"], 0);
    s.apply(&c("Single:S3")).unwrap();
    for _ in 0..3 {
        s.apply(&Combo::PASS).unwrap();
    }
    out.push(("partner leads after a finisher's trick", s.finish_order == vec![0] && s.turn == 2));
    let mut s = state(["S3 S4", "S5 S6", "S7 S8", "S9 ST"], 0);
    out.push(("leader may not pass", s.apply(&Combo::PASS) == Err(StepError::PassWhenLeading)));
    let mut s = state(["S3 S4", "S5", "S7 S8", "S9 ST"], 0);
    s.apply(&c("Single:S3")).unwrap();
    s.apply(&c("Single:S5")).unwrap();
    out.push(("play order skips finished seats", s.turn == 2 && s.finish_order == vec![1]));
    let mut s = state(["S3 S4", "S5 S6", "S7 S8", "S9 ST"], 0);
    out.push((
        "out-of-turn play is rejected",
        s.apply_for(2, &c("Single:S7")) == Err(StepError::NotYourTurn { seat: 2, turn: 0 }),
    ));

    // round results
    let r = result(&[0, 2]);
    out.push((
        "first and second finish promote three",
        r.promotion == 3 && r.roles[1] == Role::DoubleDweller && r.roles[3] == Role::DoubleDweller,
    ));
    out.push(("partner third promotes two", result(&[0, 1, 2]).promotion == 2));
    out.push(("partner last promotes one", result(&[0, 1, 3]).promotion == 1));
    out.push(("round continues until a team is out", RoundResult::from_finish_order(&[0, 1]).is_none()));

    // promotion
    let n = apply_promotion(&episode_at(Rank::Queen, Rank::Two, Rank::Queen), &result(&[0, 2]));
    out.push(("Q plus three stops at A", n.team_levels[0] == LevelRank::ACE && n.episode_winner.is_none()));
    let n = apply_promotion(&episode_at(Rank::King, Rank::Two, Rank::King), &result(&[0, 1, 2]));
    out.push(("K plus two stops at A", n.team_levels[0] == LevelRank::ACE && n.episode_winner.is_none()));
    let n = apply_promotion(&episode_at(Rank::Ten, Rank::Two, Rank::Ten), &result(&[0, 2]));
    out.push(("ten plus three is K", n.team_levels[0] == lv(Rank::King)));
    let ace = episode_at(Rank::Ace, Rank::Six, Rank::Ace);
    out.push(("at A with partner Follower the episode is won", apply_promotion(&ace, &result(&[0, 2])).episode_winner == Some(0)));
    out.push(("at A with partner Third the episode is won", apply_promotion(&ace, &result(&[0, 1, 2])).episode_winner == Some(0)));
    let n = apply_promotion(&ace, &result(&[0, 1, 3]));
    out.push(("at A with partner Dweller the level stays A", n.episode_winner.is_none() && n.team_levels[0] == LevelRank::ACE));
    let n = apply_promotion(&episode_at(Rank::Ace, Rank::Six, Rank::Six), &result(&[0, 2]));
    out.push(("a win at the opponents' level does not end the episode", n.episode_winner.is_none()));

    // tribute
    out.push(("the Dweller pays the red joker", tribute_card(&set("S3 SA RJ BJ"), two) == Some(Card::RED_JOKER)));
    out.push(("the wild card is never paid", tribute_card(&set("H5 SA S3"), five) == Some(card("SA"))));
    out.push(("level cards outrank aces as tribute", tribute_card(&set("S5 SA S3"), five) == Some(card("S5"))));
    let mut hands = [set("S3 SK"), set("S4 SK"), set("S6 S7"), set("S8 SA")];
    let p = tribute_plan(&result(&[0, 2]), &hands, two, 2).unwrap();
    let banker_gets = p.payments.iter().find(|x| x.to == 0).map(|x| x.card);
    let mate_gets = p.payments.iter().find(|x| x.to == 2).map(|x| x.card);
    out.push(("double tribute: the Banker takes the higher card", banker_gets == Some(card("SA")) && mate_gets == Some(card("SK"))));
    out.push(("double tribute: the larger payer leads", p.leader == 3));
    hands[3] = set("S8 SK");
    let p = tribute_plan(&result(&[0, 2]), &hands, two, 2).unwrap();
    out.push((
        "equal double tributes: the payer after the Banker leads",
        p.leader == 1 && p.payments.iter().any(|x| x.from == 1 && x.to == 0),
    ));
    let p = tribute_plan(&result(&[0, 1, 3]), &[set("S3"), set("S4"), set("S5 RJ RJ"), set("S6")], two, 2).unwrap();
    out.push(("a Dweller with both red jokers annuls the tribute", p.annulled && p.payments.is_empty() && p.leader == 0));
    let p = tribute_plan(&result(&[0, 2]), &[set("S3"), set("S4 RJ"), set("S5"), set("S6 RJ")], two, 2).unwrap();
    out.push(("double Dwellers with one red joker each annul", p.annulled && p.leader == 0));
    let p = tribute_plan(&result(&[0, 1, 3]), &[set("S3"), set("S4"), set("S5 SQ"), set("S6")], two, 2).unwrap();
    out.push((
        "a single tribute goes to the Banker and the payer leads",
        p.payments.len() == 1 && p.payments[0].from == 2 && p.payments[0].to == 0 && p.leader == 2,
    ));
    out.push(("no tribute before round two", tribute_plan(&result(&[0, 2]), &hands, two, 1).is_err()));
    out.push(("return: a lone small card", tribute_return(&set("S4 S6 C6 SA SK SQ"), two) == card("S4")));
    out.push(("return: break a small pair", tribute_return(&set("S6 C6 SA SK"), two).rank() == Rank::Six));
    out.push(("return: break a bomb last", tribute_return(&set("S5 C5 D5 H5 SA SK"), two).rank() == Rank::Five));
    out.push(("return: keep a straight flush", tribute_return(&set("S3 S4 S5 S6 S7 D8 SA"), two) == card("D8")));
    let mut h = [set("SJ S3"), set("S4"), set("S5"), set("S6")];
    out.push((
        "returns above ten are rejected",
        apply_return(Return { from: 0, to: 1, card: card("SJ") }, &mut h).is_err()
            && apply_return(Return { from: 0, to: 1, card: card("S3") }, &mut h).is_ok(),
    ));

    // whole episodes: tribute leaves 27 cards each before play
    let mut ok = true;
    for seed in 0..20 {
        let mut g = Game::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rounds_checked = 0;
        while !g.is_over() && rounds_checked < 3 {
            let before = g.results.len();
            let a = *g.legal_actions().choose(&mut rng).unwrap();
            g.apply(&a).unwrap();
            if g.results.len() > before && !g.is_over() {
                ok &= g.phase() == Phase::Play && g.round.hands.iter().all(|h| h.len() == 27);
                rounds_checked += 1;
            }
        }
    }
    out.push(("after tribute every hand holds 27 cards", ok));
    out
}

#[test]
fn rules_suite() {
    let scenarios = rules_scenarios();
    let failed: Vec<&str> = scenarios.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        "rules suite",
        scenarios.len() >= 40 && failed.is_empty(),
        &format!("{} scenarios, {} failed {:?}", scenarios.len(), failed.len(), failed),
    );
}

// ---------------------------------------------------------------- encoders

#[test]
fn encoder_contracts() {
    let mut problems = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            problems.push(what.to_string());
        }
    };
    let s = RoundState::deal(3);
    let v = encode_state(&s.view(s.turn));
    check(v.len() == STATE_DIM && STATE_DIM == 513, "state length");
    check(encode_action(&Combo::PASS).len() == ACTION_DIM && ACTION_DIM == 54, "action length");
    check(q_input(&v, &encode_action(&Combo::PASS)).len() == Q_INPUT_DIM && Q_INPUT_DIM == 567, "q input length");
    check((0..3).all(|i| v[COUNTS + i * COUNT_SLOTS + 27] == 1), "opening counts one-hot at 27");
    let p = ppo_input(&v, &[Combo::PASS], 2).unwrap();
    check(p.legal == vec![true, false] && p.candidates[1].iter().all(|&x| x == -1), "pad slot");

    // the three conventions, on constructed positions
    let two = LevelRank::TWO;
    let lead = state(["S3 S4", "S5 S6", "S7 S8", "S9 ST"], 0);
    let v = encode_state(&lead.view(0));
    check(v[TO_BEAT..PARTNER_MOVE].iter().all(|&x| x == 0), "leading zeros");
    let mut passed = state(["S3 S4", "S5 S6", "S7 S8", "S9 ST"], 0);
    passed.apply(&combo("Single:S3", two)).unwrap();
    passed.apply(&combo("Single:S5", two)).unwrap();
    passed.apply(&Combo::PASS).unwrap(); // seat 2 passes
    let v = encode_state(&passed.view(0));
    check(v[PARTNER_MOVE..PARTNER_MOVE + 54].iter().all(|&x| x == 0), "partner pass zeros");
    let mut done = state(["S3 S4", "S5 S6", "S7", "S9 ST"], 2);
    done.apply(&combo("Single:S7", two)).unwrap();
    let v = encode_state(&done.view(0));
    check(v[PARTNER_MOVE..PARTNER_MOVE + 54].iter().all(|&x| x == -1), "partner finished -1");

    // conservation over simulated states
    let deck = CardSet::full_deck();
    let (mut states, mut leading, mut partner_passed, mut partner_done) = (0, 0, 0, 0);
    let mut seed = 0;
    while states < 1000 {
        let mut g = Game::new(1000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed += 1;
        while !g.is_over() && states < 1000 {
            let seat = g.turn();
            let view = g.view(seat);
            let v = encode_state(&view);
            let hidden: Vec<u8> = (0..54)
                .map(|i| (0..4).filter(|&o| o != seat).map(|o| g.round.hands[o].counts()[i]).sum())
                .collect();
            let played = g.round.played_cards();
            let mut ok = true;
            for i in 0..54 {
                let unseen = v[UNSEEN + i] as i32;
                let others_played: i32 = (0..3).map(|j| v[PLAYED + j * 54 + i] as i32).sum();
                ok &= unseen == hidden[i] as i32;
                ok &= v[HAND + i] as i32 + unseen + others_played + played[seat].counts()[i] as i32
                    == deck.counts()[i] as i32;
                ok &= (0..=2).contains(&unseen);
            }
            check(ok, "conservation");
            let partner = v[PARTNER_MOVE..PARTNER_MOVE + 54].to_vec();
            if view.to_beat.is_none() {
                leading += 1;
                check(v[TO_BEAT..PARTNER_MOVE].iter().all(|&x| x == 0), "simulated leading zeros");
            }
            match view.partner_move {
                guandan::engine::PartnerMove::Passed => {
                    partner_passed += 1;
                    check(partner.iter().all(|&x| x == 0), "simulated partner pass");
                }
                guandan::engine::PartnerMove::Finished => {
                    partner_done += 1;
                    check(partner.iter().all(|&x| x == -1), "simulated partner finished");
                }
                _ => {}
            }
            states += 1;
            let a = *g.legal_actions().choose(&mut rng).unwrap();
            g.apply(&a).unwrap();
        }
    }
    problems.sort();
    problems.dedup();
    verdict(
        "encoder contracts",
        problems.is_empty() && leading > 0 && partner_passed > 0 && partner_done > 0,
        &format!(
            "lengths 513/54/567; {states} simulated states ({leading} leading, {partner_passed} partner passed, \
             {partner_done} partner finished); problems {problems:?}"
        ),
    );
}

// ---------------------------------------------------------------- numerics

fn central_diff(net: &Mlp<f64>, f: &dyn Fn(&Mlp<f64>) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut probe = net.clone();
    (0..net.params().len())
        .map(|i| {
            let p = net.params()[i];
            probe.params_mut()[i] = p + h;
            let up = f(&probe);
            probe.params_mut()[i] = p - h;
            let down = f(&probe);
            probe.params_mut()[i] = p;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

fn small_net(rng: &mut ChaCha8Rng, input: usize, output: usize) -> Mlp<f64> {
    let mut sizes = vec![input];
    for _ in 0..rng.gen_range(1..=3) {
        sizes.push(rng.gen_range(2..=8));
    }
    sizes.push(output);
    Mlp::new(&sizes, rng)
}

/// Mean squared error straight from the network outputs.
fn mse(net: &Mlp<f64>, x: &[f64], r: &[f64]) -> f64 {
    let q = net.predict(x, r.len()).unwrap();
    q.iter().zip(r).map(|(q, r)| (q - r).powi(2)).sum::<f64>() / r.len() as f64
}

/// Clipped-surrogate total loss straight from the network outputs.
fn ppo_total(net: &Mlp<f64>, b: &PpoBatch<f64>, cfg: &PpoConfig) -> f64 {
    let n = b.slots.len();
    let k = b.k;
    let out = net.predict(&b.inputs, n).unwrap();
    let (mut surr, mut ent, mut vl) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let row = &out[i * (k + 1)..(i + 1) * (k + 1)];
        let legal = &b.legal[i * k..(i + 1) * k];
        let m = (0..k).filter(|&j| legal[j]).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..k).filter(|&j| legal[j]).map(|j| (row[j] - m).exp()).sum();
        let p: Vec<f64> = (0..k).map(|j| if legal[j] { (row[j] - m).exp() / z } else { 0.0 }).collect();
        let ratio = (p[b.slots[i]].ln() - b.old_logprobs[i]).exp();
        let a = b.advantages[i];
        surr += (ratio * a).min(ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a);
        ent -= p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>();
        vl += (row[k] - b.returns[i]).powi(2);
    }
    let n = n as f64;
    let lp = -surr / n - cfg.entropy_coef * ent / n;
    cfg.policy_weight * lp + cfg.value_coef * vl / n
}

fn random_batch(rng: &mut ChaCha8Rng, net: &Mlp<f64>, k: usize, n: usize) -> PpoBatch<f64> {
    let dim = net.input_dim();
    let inputs: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out = net.predict(&inputs, n).unwrap();
    let mut b = PpoBatch {
        k,
        inputs,
        legal: vec![],
        slots: vec![],
        old_logprobs: vec![],
        advantages: vec![],
        returns: vec![],
    };
    for i in 0..n {
        let m = rng.gen_range(1..=k);
        let legal: Vec<bool> = (0..k).map(|j| j < m).collect();
        let slot = rng.gen_range(0..m);
        let p = masked_softmax(&out[i * (k + 1)..i * (k + 1) + k], &legal);
        b.legal.extend(legal);
        b.slots.push(slot);
        b.old_logprobs.push(p[slot].ln() + rng.gen_range(-0.5..0.5));
        b.advantages.push(rng.gen_range(-2.0..2.0));
        b.returns.push(rng.gen_range(-3.0..3.0));
    }
    b
}

#[test]
fn numerical_gradients_and_loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = PpoConfig::default();
    let (mut w_out, mut w_dmc, mut w_ppo, mut value_gap) = (0f64, 0f64, 0f64, 0f64);
    for _ in 0..100 {
        let dim = rng.gen_range(2..=8);
        let rows = rng.gen_range(1..=6);
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let outs = rng.gen_range(1..=3);
        let net = small_net(&mut rng, dim, outs);
        let w: Vec<f64> = (0..rows * outs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic = net.backward(&net.forward(&x, rows).unwrap(), &w).unwrap();
        let numeric = central_diff(&net, &|m| m.predict(&x, rows).unwrap().iter().zip(&w).map(|(o, w)| o * w).sum());
        w_out = w_out.max(rel_err(&analytic, &numeric));

        let net = small_net(&mut rng, dim, 1);
        let r: Vec<f64> = (0..rows).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let (loss, analytic) = dmc_loss(&net, &x, &r).unwrap();
        value_gap = value_gap.max((loss - mse(&net, &x, &r)).abs());
        w_dmc = w_dmc.max(rel_err(&analytic, &central_diff(&net, &|m| mse(m, &x, &r))));

        let k = rng.gen_range(1..=4);
        let net = small_net(&mut rng, dim, k + 1);
        let b = random_batch(&mut rng, &net, k, rows);
        let l = ppo_losses(&net, &b, &cfg).unwrap();
        value_gap = value_gap.max((l.total - ppo_total(&net, &b, &cfg)).abs());
        w_ppo = w_ppo.max(rel_err(&l.grads, &central_diff(&net, &|m| ppo_total(m, &b, &cfg))));
    }

    // clip and advantage examples on a zero network: logits 0, value 0
    let mut examples = Vec::new();
    let zero = Mlp::<f64>::zeros(&[3, 4, 3]);
    let batch = |old: f64, adv: f64, ret: f64| PpoBatch {
        k: 2,
        inputs: vec![0.5, -0.5, 1.0],
        legal: vec![true, true],
        slots: vec![0],
        old_logprobs: vec![old],
        advantages: vec![adv],
        returns: vec![ret],
    };
    let half = 0.5f64.ln();
    let l = ppo_losses(&zero, &batch(half, 1.5, 0.0), &cfg).unwrap();
    examples.push(("ratio 1 gives the advantage", (l.surrogate - 1.5).abs() < 1e-12));
    examples.push(("value equal to return gives zero value loss", l.value_loss == 0.0));
    let l = ppo_losses(&zero, &batch(0.25f64.ln(), 1.5, 0.0), &cfg).unwrap();
    examples.push(("ratio 2 with positive advantage clips to 1.2", (l.surrogate - 1.2 * 1.5).abs() < 1e-12));
    let l = ppo_losses(&zero, &batch(0.25f64.ln(), -1.5, 0.0), &cfg).unwrap();
    examples.push(("ratio 2 with negative advantage stays unclipped", (l.surrogate - 2.0 * -1.5).abs() < 1e-12));
    let wide = PpoConfig { clip: 1e9, ..cfg.clone() };
    let l = ppo_losses(&zero, &batch(0.25f64.ln(), 1.5, 0.0), &wide).unwrap();
    examples.push(("no clip gives the plain surrogate", (l.surrogate - 3.0).abs() < 1e-12));
    let p = masked_softmax(&[0.3f64, 0.3, 5.0], &[true, true, false]);
    examples.push(("equal logits over two of three slots", p == vec![0.5, 0.5, 0.0]));
    let (a, r) = gae(&[2.0], &[0.5], 0.99, 0.95).unwrap();
    examples.push(("one terminal step: r - V", a == vec![1.5] && r == vec![2.0]));
    let (a, _) = gae(&[0.0, 3.0], &[0.4, 0.9], 1.0, 1.0).unwrap();
    examples.push(("gamma = lambda = 1 telescopes", (a[0] - (3.0 - 0.4)).abs() < 1e-12));
    let (g, l) = (0.99f64, 0.95f64);
    let (rw, vs) = ([0.0, 0.5, -2.0], [0.1, -0.3, 0.7]);
    let d0 = rw[0] + g * vs[1] - vs[0];
    let d1 = rw[1] + g * vs[2] - vs[1];
    let d2 = rw[2] - vs[2];
    let (a, r) = gae(&rw, &vs, g, l).unwrap();
    let want = [d0 + g * l * d1 + (g * l).powi(2) * d2, d1 + g * l * d2, d2];
    examples.push((
        "three-step hand unrolled recursion",
        a.iter().zip(want).all(|(x, y)| (x - y).abs() < 1e-12) && (r[0] - (a[0] + vs[0])).abs() < 1e-12,
    ));
    let failed: Vec<&str> = examples.iter().filter(|e| !e.1).map(|e| e.0).collect();

    let worst = w_out.max(w_dmc).max(w_ppo);
    verdict(
        "numerical gradients",
        worst < 1e-4 && value_gap < 1e-9 && failed.is_empty(),
        &format!(
            "100 nets, worst relative error output {w_out:.1e} dmc {w_dmc:.1e} ppo {w_ppo:.1e}; \
             loss values agree to {value_gap:.1e}; {} clip/advantage examples, failed {failed:?}",
            examples.len()
        ),
    );
}

// ---------------------------------------------------------------- rewards

#[derive(Clone)]
struct S {
    seat: usize,
    r: f32,
}

impl guandan::engine::Valued for S {
    fn seat(&self) -> usize {
        self.seat
    }
    fn round(&self) -> usize {
        0
    }
    fn set_value(&mut self, r: f32) {
        self.r = r;
    }
}

#[test]
fn reward_scheme() {
    // (finish order, episode winner, winners' value, losers' value)
    let table: [(&[usize], usize, f32, f32); 6] = [
        (&[0, 2], 0, 4.0, -4.0),
        (&[0, 2], 1, 2.0, -2.0),
        (&[0, 1, 2], 0, 3.0, -3.0),
        (&[0, 1, 2], 1, 1.0, -1.0),
        (&[0, 1, 3], 0, 2.0, -2.0),
        (&[0, 1, 3], 1, 0.0, 0.0),
    ];
    let mut bad = Vec::new();
    for (order, winner, w, l) in table {
        let res = result(order);
        let mut samples: Vec<S> = (0..4).flat_map(|seat| [S { seat, r: f32::NAN }, S { seat, r: f32::NAN }]).collect();
        assign_values(std::slice::from_ref(&res), Some(winner), &mut samples);
        let ok = samples.iter().all(|s| s.r == if s.seat % 2 == 0 { w } else { l })
            && samples.iter().map(|s| s.r).sum::<f32>() == 0.0
            && sample_value(&res, 0, None) == res.promotion as f32
            && sample_value(&res, 1, None) == -(res.promotion as f32);
        if !ok {
            bad.push(format!("{order:?}/{winner}"));
        }
    }
    verdict(
        "reward scheme",
        bad.is_empty(),
        &format!("6 role x outcome cases, values +-4/+-3/+-2 for episode winners, zero-sum; failed {bad:?}"),
    );
}

// ---------------------------------------------------------------- training

struct Trained {
    _dir: tempfile::TempDir,
    dmc_dir: PathBuf,
    final_ckpt: PathBuf,
}

fn dmc_run() -> &'static Trained {
    static RUN: OnceLock<Trained> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let dmc_dir = dir.path().join("dmc");
        let mut cfg = RunConfig::desk(Algorithm::Dmc);
        cfg.seed = 11;
        cfg.actors = 1;
        cfg.episodes = 300;
        cfg.checkpoint_secs = 0.0;
        cfg.checkpoint_updates = 100;
        cfg.eval_secs = 0.0;
        cfg.dmc.hidden = vec![64, 64];
        let report = train(&cfg, &dmc_dir).unwrap();
        assert_eq!(report.receptions, 300);
        let final_ckpt = checkpoint_path(&dmc_dir, report.updates);
        Trained { _dir: dir, dmc_dir, final_ckpt }
    })
}

fn q_net(path: &Path) -> Arc<Mlp<f32>> {
    Arc::new(load_checkpoint(path, Some(NetKind::Q)).unwrap().net)
}

#[test]
fn dmc_training_smoke() {
    let start = Instant::now();
    let run = dmc_run();
    let train_secs = start.elapsed().as_secs_f64();
    let ckpts = list_checkpoints(&run.dmc_dir).unwrap();
    let mut series = Vec::new();
    for (i, (step, path)) in ckpts.iter().enumerate() {
        let games = if i + 1 == ckpts.len() { 1000 } else { 400 };
        let r = play_match(&AgentKind::Dmc(q_net(path)), &AgentKind::Random, games, 5);
        series.push((*step, r));
    }
    let mut monotone = true;
    for w in series.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        let se = |r: &guandan::arena::MatchReport| r.winrate_a * (1.0 - r.winrate_a) / r.n_games as f64;
        let tol = 1.96 * (se(a) + se(b)).sqrt();
        monotone &= b.winrate_a >= a.winrate_a - tol.max(1e-9);
    }
    let last = &series.last().unwrap().1;
    let text: Vec<String> = series.iter().map(|(s, r)| format!("{s}:{:.3}", r.winrate_a)).collect();
    verdict(
        "dmc training smoke",
        series.len() >= 3 && monotone && last.winrate_a >= 0.70 && last.ci_excludes_half() && last.n_games == 1000,
        &format!(
            "hidden [64,64], 300 episodes in {train_secs:.0}s; winrate vs random by checkpoint [{}]; final {}/{} \
             CI ({:.3}, {:.3}), forfeits {:?}",
            text.join(" "),
            last.team_a_wins,
            last.n_games,
            last.ci95.0,
            last.ci95.1,
            last.forfeits
        ),
    );
}

#[test]
fn ppo_over_candidates() {
    let run = dmc_run();
    let start = Instant::now();
    let ppo_dir = run.dmc_dir.parent().unwrap().join("ppo");
    let mut cfg = RunConfig::desk(Algorithm::Ppo);
    cfg.seed = 12;
    cfg.actors = 1;
    cfg.episodes = 250;
    cfg.checkpoint_secs = 0.0;
    cfg.eval_secs = 0.0;
    cfg.dmc_checkpoint = Some(run.final_ckpt.clone());
    let report = train(&cfg, &ppo_dir).unwrap();
    let train_secs = start.elapsed().as_secs_f64();
    let policy = Arc::new(load_checkpoint(&checkpoint_path(&ppo_dir, report.updates), Some(NetKind::Ppo)).unwrap().net);
    let dmc = q_net(&run.final_ckpt);
    let r = play_match(
        &AgentKind::Ppo { dmc: dmc.clone(), policy, k: 2 },
        &AgentKind::UniformTopK { dmc: dmc.clone(), k: 2 },
        1000,
        6,
    );

    // k = 1: the policy has a single slot, so play must follow the Q argmax
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let one = Arc::new(Mlp::<f32>::new(&ppo_net_sizes(&[16], 1), &mut rng));
    let mut identical = 0;
    let traces = 20;
    for seed in 0..traces {
        let mut a = Game::new(seed);
        let mut greedy: Vec<Box<dyn Agent>> = (0..4).map(|_| Box::new(DmcAgent::new(dmc.clone())) as Box<dyn Agent>).collect();
        play_episode(&mut a, &mut greedy);
        let mut b = Game::new(seed);
        let mut ppo: Vec<Box<dyn Agent>> = (0..4)
            .map(|s| Box::new(PpoAgent::new(dmc.clone(), one.clone(), 1, seed * 4 + s)) as Box<dyn Agent>)
            .collect();
        play_episode(&mut b, &mut ppo);
        identical += (a.log == b.log) as u64;
    }
    verdict(
        "ppo over top-2 candidates",
        r.winrate_a >= 0.55 && r.ci_excludes_half() && identical == traces,
        &format!(
            "250 episodes in {train_secs:.0}s; vs uniform top-2 {}/{} = {:.3} CI ({:.3}, {:.3}); \
             k=1 traces identical to greedy Q play {identical}/{traces}",
            r.team_a_wins, r.n_games, r.winrate_a, r.ci95.0, r.ci95.1
        ),
    );
}

// ---------------------------------------------------------------- runtime

struct Synthetic {
    id: u32,
}

impl Rollout for Synthetic {
    type Sample = Sample;

    fn play(&mut self, seed: u64, _params: &Mlp<f32>) -> Result<EpisodeData<Sample>, RuntimeError> {
        let trajectories = std::array::from_fn(|seat| {
            (0..2)
                .map(|i| {
                    let mut state = [0i8; STATE_DIM];
                    state[((seed % 4096) as usize + i + self.id as usize) % STATE_DIM] = 1;
                    Sample {
                        state,
                        action: [0; ACTION_DIM],
                        behavior_q: 0.0,
                        r: if seat % 2 == 0 { 3.0 } else { -3.0 },
                        seat: seat as u8,
                        round: 0,
                    }
                })
                .collect()
        });
        Ok(EpisodeData { trajectories, results: vec![], winner: 0 })
    }
}

#[test]
fn runtime_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let dmc = guandan::dmc::DmcConfig { buffer_capacity: 256, batch_size: 8, train_freq: 3, hidden: vec![8], ..Default::default() };
    let mut t = guandan::dmc::DmcLearner::new(dmc.clone(), 4);
    let bulletin = ParameterBulletin::new(0, t.net.clone());
    let setup = InProcess { actors: 2, channel_capacity: 2, actor: ActorOptions { seed: 1, pull_period: 1, episodes: Some(10) } };
    let opts = LearnerOptions { out_dir: Some(dir.path().into()), checkpoint_updates: Some(2), ..Default::default() };
    let (report, _) = train_in_process(&mut t, &bulletin, |id| Synthetic { id }, &setup, &opts, None).unwrap();

    let bits = |xs: &[f32]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let ck = load_checkpoint(&checkpoint_path(dir.path(), report.updates), Some(NetKind::Q)).unwrap();
    let bit_exact = bits(ck.net.params()) == bits(t.net.params());
    let mut r = guandan::dmc::DmcLearner::new(dmc, 99);
    let resumed = resume(&mut r, dir.path()).unwrap();
    let same = bits(r.net.params()) == bits(t.net.params()) && bits(&r.optimizer.sq) == bits(&t.optimizer.sq);
    verdict(
        "runtime contracts",
        report.trajectories == 80 && report.updates == report.receptions / 3 && bit_exact && same && resumed == Some(report.updates),
        &format!(
            "{} trajectories from {} receptions, {} updates at train_freq 3, checkpoint bit-exact {bit_exact}, \
             resume identical {same}",
            report.trajectories, report.receptions, report.updates
        ),
    );
}
