use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use guandan::arena::{mix_seed, AgentKind, GreedyAgent};
use guandan::cards::{classify, Card, CardSet, Combo};
use guandan::engine::{Payment, ReplayEvent, Return, SeatView, SEATS};
use guandan::features::encode_state;
use guandan::nn::{ppo_net_sizes, q_net_sizes, Mlp};
use guandan::table::server::{serve, ServeConfig};
use guandan::table::{ClientEnvelope, ClientMsg, ErrorCode, Outgoing, SeatSpec, ServerMsg, Table};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn act(combo: Combo) -> ClientEnvelope {
    ClientEnvelope { game_id: None, seq: None, msg: ClientMsg::Act { combo: Some(combo), card: None } }
}

fn ret(card: Card) -> ClientEnvelope {
    ClientEnvelope { game_id: None, seq: None, msg: ClientMsg::Act { combo: None, card: Some(card) } }
}

fn bots(kinds: [AgentKind; 4]) -> Vec<SeatSpec> {
    kinds.into_iter().map(SeatSpec::Bot).collect()
}

fn run_bot_table(seed: u64, seats: &[SeatSpec]) -> (Table, Vec<Outgoing>) {
    let mut t = Table::new(1, seed, seats);
    t.start();
    let out = t.drain();
    (t, out)
}

/// Plays every human seat with random legal actions, calling `check`
/// after each accepted act. Returns everything the table sent.
fn drive_humans(t: &mut Table, seed: u64, mut check: impl FnMut(&Table, &[Outgoing])) -> Vec<Outgoing> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::new();
    let mut pending = t.drain();
    while !pending.is_empty() {
        check(t, &pending);
        all.extend(pending.iter().cloned());
        let mut replies = Vec::new();
        for o in &pending {
            match &o.env.msg {
                ServerMsg::LegalActions { seat, actions } => {
                    replies.push((*seat, act(*actions.choose(&mut rng).unwrap())));
                }
                ServerMsg::TributePrompt { seat, suggested, .. } => {
                    replies.push((*seat, ret(*suggested)));
                }
                _ => {}
            }
        }
        if replies.is_empty() {
            break;
        }
        for (seat, msg) in replies {
            t.handle(seat, msg);
        }
        pending = t.drain();
    }
    all
}

fn human_table(seed: u64, seats: &[SeatSpec]) -> Table {
    let mut t = Table::new(7, seed, seats);
    for s in 0..SEATS {
        if t.is_human(s) {
            t.connect(s).unwrap();
        }
    }
    t.start();
    t
}

fn random_net(sizes: &[usize], seed: u64) -> Arc<Mlp<f32>> {
    Arc::new(Mlp::new(sizes, &mut ChaCha8Rng::seed_from_u64(seed)))
}

#[test]
fn four_bot_table_finishes_an_episode() {
    let seats = bots([AgentKind::Random, AgentKind::Greedy(GreedyAgent::default()), AgentKind::Random, AgentKind::Random]);
    let (t, out) = run_bot_table(11, &seats);
    assert!(t.is_over());
    let ends: Vec<_> = out.iter().filter(|o| matches!(o.env.msg, ServerMsg::EpisodeEnd { .. })).collect();
    assert_eq!(ends.len(), SEATS);
    let ServerMsg::EpisodeEnd { winner, .. } = ends[0].env.msg else { unreachable!() };
    assert_eq!(Some(winner), t.game().winner());
}

#[test]
fn bot_only_tables_are_deterministic() {
    let seats = bots([AgentKind::Random, AgentKind::Greedy(GreedyAgent::default()), AgentKind::Random, AgentKind::Random]);
    let (_, a) = run_bot_table(5, &seats);
    let (_, b) = run_bot_table(5, &seats);
    assert_eq!(a, b);
    let (_, c) = run_bot_table(6, &seats);
    assert_ne!(a, c);
}

#[test]
fn seq_strictly_increases_for_every_seat() {
    let seats = vec![SeatSpec::Human, SeatSpec::Bot(AgentKind::Random), SeatSpec::Human, SeatSpec::Bot(AgentKind::Random)];
    let mut t = human_table(3, &seats);
    let out = drive_humans(&mut t, 1, |_, _| {});
    assert!(t.is_over());
    for s in 0..SEATS {
        let seqs: Vec<u64> = out.iter().filter(|o| o.seat == s).map(|o| o.env.seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]), "seat {s}");
        assert!(out.iter().all(|o| o.env.game_id == 7));
    }
}

#[test]
fn illegal_act_is_rejected_and_turn_kept() {
    let seats = vec![SeatSpec::Human, SeatSpec::Bot(AgentKind::Random), SeatSpec::Bot(AgentKind::Random), SeatSpec::Bot(AgentKind::Random)];
    let mut t = human_table(21, &seats);
    t.drain();
    assert_eq!(t.game().turn(), 0, "play stops at the human seat");
    let before = (t.game().log.clone(), t.game().view(0));
    let legal = t.game().legal_actions();

    let hand = t.game().view(0).hand;
    let absent = (0..54).map(Card::from_index).find(|c| hand.count(*c) == 0).unwrap();
    let bogus = classify(&CardSet::from_cards([absent]).unwrap(), t.game().round.level).unwrap()[0];
    t.handle(0, act(bogus));
    let out = t.drain();
    assert_eq!(out.len(), 1);
    match &out[0].env.msg {
        ServerMsg::Error { code: ErrorCode::IllegalAction, legal: Some(l), .. } => assert_eq!(l, &legal),
        m => panic!("unexpected {m:?}"),
    }
    let wire = serde_json::to_value(&out[0].env).unwrap();
    assert_eq!(wire["type"], "error");
    assert_eq!(wire["code"], "illegal_action");
    assert!(wire["legal"].is_array());
    assert_eq!((t.game().log.clone(), t.game().view(0)), before);
    assert_eq!(t.game().turn(), 0);

    // a seat that is not to move, and a message for another game
    t.handle(1, act(legal[0]));
    t.handle(0, ClientEnvelope { game_id: Some(99), seq: None, msg: ClientMsg::Act { combo: Some(legal[0]), card: None } });
    let codes: Vec<ErrorCode> = t
        .drain()
        .into_iter()
        .map(|o| match o.env.msg {
            ServerMsg::Error { code, .. } => code,
            m => panic!("unexpected {m:?}"),
        })
        .collect();
    assert_eq!(codes, vec![ErrorCode::NotYourTurn, ErrorCode::WrongGame]);
    assert_eq!(t.game().log, before.0);

    t.handle(0, act(legal[0]));
    assert!(t.game().log.len() > before.0.len());
}

#[test]
fn humans_get_legal_actions_only_on_their_turn() {
    let seats = vec![SeatSpec::Human, SeatSpec::Bot(AgentKind::Random), SeatSpec::Human, SeatSpec::Bot(AgentKind::Random)];
    let mut t = human_table(8, &seats);
    drive_humans(&mut t, 2, |t, batch| {
        for o in batch {
            if let ServerMsg::LegalActions { seat, actions } = &o.env.msg {
                assert_eq!(o.seat, *seat);
                assert_eq!(t.game().turn(), *seat);
                assert_eq!(actions, &t.game().legal_actions());
            }
        }
    });
    assert!(t.is_over());
}

#[test]
fn ppo_bot_moves_carry_candidates() {
    let dmc = random_net(&q_net_sizes(&[16]), 1);
    let policy = random_net(&ppo_net_sizes(&[16], 2), 2);
    let ppo = AgentKind::Ppo { dmc: dmc.clone(), policy, k: 2 };
    let seats = bots([ppo.clone(), AgentKind::Dmc(dmc), ppo, AgentKind::Random]);
    let (_, out) = run_bot_table(4, &seats);
    let mut seen = 0;
    for o in out.iter().filter(|o| o.seat == 1) {
        if let ServerMsg::BotMove { seat, combo, candidates } = &o.env.msg {
            match seat {
                0 | 2 => {
                    seen += 1;
                    assert!(!candidates.is_empty() && candidates.len() <= 2);
                    assert!(candidates.iter().any(|c| c.combo == *combo));
                    assert!(candidates.iter().all(|c| c.prob.is_some()));
                    assert!(candidates.windows(2).all(|w| w[0].score >= w[1].score));
                    let v = serde_json::to_value(&o.env).unwrap();
                    assert_eq!(v["type"], "bot_move");
                    assert!(v["candidates"][0]["score"].is_number());
                }
                1 => assert!(!candidates.is_empty() && candidates[0].combo == *combo),
                _ => assert!(candidates.is_empty()),
            }
        }
    }
    assert!(seen > 0);
}

const VIEW_KEYS: [&str; 13] = [
    "seat",
    "hand",
    "level",
    "team_levels",
    "hand_counts",
    "played",
    "to_beat",
    "partner_move",
    "last_actions",
    "finish_order",
    "turn",
    "trick_id",
    "history",
];

#[test]
fn state_payloads_hide_other_hands() {
    let seats = vec![SeatSpec::Human; 4];
    let mut states = 0;
    let mut seed = 0;
    while states < 1000 {
        seed += 1;
        let mut t = human_table(100 + seed, &seats);
        drive_humans(&mut t, seed, |t, batch| {
            for o in batch {
                let ServerMsg::State { seat, view, .. } = &o.env.msg else { continue };
                states += 1;
                assert_eq!(o.seat, *seat);
                let wire = serde_json::to_value(&o.env).unwrap();
                let keys: Vec<&String> = wire["view"].as_object().unwrap().keys().collect();
                assert!(keys.iter().all(|k| VIEW_KEYS.contains(&k.as_str())), "{keys:?}");
                let back: SeatView = serde_json::from_value(wire["view"].clone()).unwrap();
                assert_eq!(&back, view);

                let engine = t.game().view(*seat);
                if t.game().phase() == guandan::engine::Phase::Play {
                    // the latest state for this seat matches the engine
                    let last = batch.iter().rev().find(|x| x.seat == *seat && matches!(x.env.msg, ServerMsg::State { .. }));
                    if std::ptr::eq(last.unwrap(), o) {
                        assert_eq!(encode_state(&back), encode_state(&engine));
                        let counts: Vec<u8> = (0..SEATS).map(|s| t.game().view(s).hand.len() as u8).collect();
                        assert_eq!(back.hand_counts.to_vec(), counts);
                    }
                }
                // the only card list tied to a seat's holdings is its own hand
                let start = t.game().hands()[*seat];
                assert!(start.contains(&back.hand) || !t.game().results.is_empty());
                for other in (0..SEATS).filter(|s| s != seat) {
                    let hidden = t.game().view(other).hand;
                    if !hidden.is_empty() {
                        assert_ne!(back.hand, hidden);
                    }
                }
            }
        });
    }
}

/// Rebuilds the engine log from what the four seats were sent.
fn reconstruct(out: &[Outgoing]) -> Vec<ReplayEvent> {
    type Info = (Vec<Payment>, Vec<Return>, bool);
    let mut tribute: BTreeMap<u32, Info> = BTreeMap::new();
    let mut openings: BTreeMap<u32, [Option<SeatView>; SEATS]> = BTreeMap::new();
    let mut in_round: [bool; SEATS] = [false; SEATS];
    for o in out {
        match &o.env.msg {
            ServerMsg::TributeInfo { round, payments, returns, anti_tribute, .. } if o.seat == 0 => {
                tribute.insert(*round, (payments.clone(), returns.clone(), *anti_tribute));
            }
            ServerMsg::State { seat, round, view, event: None } if !in_round[*seat] => {
                openings.entry(*round).or_default()[*seat] = Some(view.clone());
                in_round[*seat] = true;
            }
            ServerMsg::RoundEnd { .. } => in_round[o.seat] = false,
            _ => {}
        }
    }
    let mut log = Vec::new();
    let mut opened = 0;
    for o in out.iter().filter(|o| o.seat == 0) {
        match &o.env.msg {
            ServerMsg::State { round, event: None, .. } if *round > opened => {
                opened = *round;
                let views = &openings[round];
                let v0 = views[0].as_ref().unwrap();
                let (tribute, returns, anti_tribute) = tribute.get(round).cloned().unwrap_or_default();
                log.push(ReplayEvent::RoundStart {
                    round: *round,
                    level: v0.level,
                    team_levels: v0.team_levels,
                    hands: std::array::from_fn(|s| views[s].as_ref().unwrap().hand),
                    leader: v0.turn,
                    tribute,
                    returns,
                    anti_tribute,
                });
            }
            ServerMsg::State { event: Some(e), .. } => log.push(e.clone()),
            ServerMsg::RoundEnd { round, result, .. } => log.push(ReplayEvent::RoundEnd { round: *round, result: result.clone() }),
            ServerMsg::EpisodeEnd { winner, team_levels, rounds } => {
                log.push(ReplayEvent::EpisodeEnd { winner: *winner, team_levels: *team_levels, rounds: *rounds })
            }
            _ => {}
        }
    }
    log
}

#[test]
fn state_stream_reconstructs_the_replay_log() {
    let seats = bots([AgentKind::Random, AgentKind::Greedy(GreedyAgent::default()), AgentKind::Random, AgentKind::Greedy(GreedyAgent::default())]);
    for seed in 0..6 {
        let (t, out) = run_bot_table(seed, &seats);
        assert_eq!(reconstruct(&out), t.game().log, "seed {seed}");
    }
    let mut t = human_table(40, &[SeatSpec::Human, SeatSpec::Bot(AgentKind::Random), SeatSpec::Human, SeatSpec::Bot(AgentKind::Random)]);
    let out = drive_humans(&mut t, 40, |_, _| {});
    assert_eq!(reconstruct(&out), t.game().log);
}

#[test]
fn tribute_prompt_and_return() {
    let seats = vec![SeatSpec::Human, SeatSpec::Bot(AgentKind::Random), SeatSpec::Human, SeatSpec::Bot(AgentKind::Random)];
    let mut checked = false;
    for seed in 0..40 {
        let mut t = human_table(seed, &seats);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pending = t.drain();
        while !pending.is_empty() && !checked {
            let mut reply = None;
            for o in &pending {
                match &o.env.msg {
                    ServerMsg::LegalActions { seat, actions } => reply = Some((*seat, act(*actions.choose(&mut rng).unwrap()))),
                    ServerMsg::TributePrompt { seat, to, received, hand, suggested } => {
                        assert_eq!(o.seat, *seat);
                        assert!(received.is_some());
                        assert!(t.game().pending_returns().contains(&(*seat, *to)));
                        assert!(suggested.rank().point() <= 10 && hand.count(*suggested) > 0);
                        // a high card is refused and nothing moves
                        let level = t.game().round.level;
                        let high = hand.iter().find(|c| c.rank().point() > 10 && !c.is_wild(level));
                        if let Some(high) = high {
                            let log = t.game().log.len();
                            t.handle(*seat, ret(high));
                            let err = t.drain();
                            assert!(matches!(err[0].env.msg, ServerMsg::Error { code: ErrorCode::IllegalReturn, .. }));
                            assert_eq!(t.game().log.len(), log);
                            assert!(t.game().pending_returns().contains(&(*seat, *to)));
                        }
                        let (seat, card) = (*seat, *suggested);
                        t.handle(seat, ret(card));
                        let after = t.drain();
                        assert!(!t.game().pending_returns().iter().any(|&(g, _)| g == seat));
                        if t.game().pending_returns().is_empty() {
                            let info = after.iter().find(|o| matches!(o.env.msg, ServerMsg::TributeInfo { .. })).unwrap();
                            let ServerMsg::TributeInfo { returns, .. } = &info.env.msg else { unreachable!() };
                            assert!(returns.iter().any(|r| r.from == seat && r.card == card));
                        }
                        checked = true;
                    }
                    _ => {}
                }
            }
            match reply {
                Some((s, m)) if !checked => t.handle(s, m),
                _ => break,
            }
            pending = t.drain();
        }
        if checked {
            break;
        }
    }
    assert!(checked, "no seed produced a human return");
}

#[test]
fn disconnected_seat_falls_back_to_random() {
    let seats = vec![SeatSpec::Human, SeatSpec::Bot(AgentKind::Greedy(GreedyAgent::default())), SeatSpec::Human, SeatSpec::Bot(AgentKind::Random)];
    let mut t = human_table(9, &seats);
    t.drain();
    t.disconnect(0);
    t.disconnect(2);
    assert_eq!(t.free_human_seats(), vec![0, 2]);
    assert!(!t.is_over());
    t.fallback(0);
    t.fallback(2);
    assert_eq!(t.fallback_seats(), vec![0, 2]);
    assert!(t.is_over());

    // a returning client takes its seat back from the fallback agent
    let mut t = human_table(10, &seats);
    t.drain();
    t.disconnect(0);
    t.fallback(0);
    t.drain();
    if !t.is_over() {
        t.connect(0).unwrap();
        assert!(t.fallback_seats().is_empty());
        let out = t.drain();
        assert!(matches!(out[0].env.msg, ServerMsg::Hello { seat: 0, .. }));
        assert!(matches!(out[1].env.msg, ServerMsg::State { seat: 0, .. }));
    }
}

#[test]
fn seat_list_parsing() {
    let s = SeatSpec::parse_list("human,greedy,human,random").unwrap();
    assert!(matches!(s[0], SeatSpec::Human));
    assert!(matches!(s[1], SeatSpec::Bot(AgentKind::Greedy(_))));
    assert!(SeatSpec::parse_list("human,greedy").is_err());
    assert!(SeatSpec::parse_list("human,bogus,human,random").is_err());
    // commas inside a ppo spec stay with it; the missing file is the error
    let e = SeatSpec::parse_list("human,ppo:/nope/p.dzck,dmc:/nope/q.dzck,k=2,human,random").err().unwrap();
    assert!(e.to_string().contains("/nope/p.dzck"), "{e}");
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    last_seq: u64,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Client {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        s.set_nodelay(true).unwrap();
        Client { reader: BufReader::new(s.try_clone().unwrap()), writer: s, last_seq: 0 }
    }

    fn send(&mut self, v: Value) {
        self.writer.write_all(format!("{v}\n").as_bytes()).unwrap();
    }

    fn recv(&mut self) -> Option<Value> {
        let mut line = String::new();
        if self.reader.read_line(&mut line).unwrap_or(0) == 0 {
            return None;
        }
        let v: Value = serde_json::from_str(&line).unwrap();
        let seq = v["seq"].as_u64().unwrap();
        assert!(seq > self.last_seq, "seq went from {} to {seq}", self.last_seq);
        self.last_seq = seq;
        Some(v)
    }
}

fn spawn_server(cfg: ServeConfig) -> (std::net::SocketAddr, std::thread::JoinHandle<guandan::table::server::ServeReport>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let h = std::thread::spawn(move || serve(listener, cfg, Arc::new(AtomicBool::new(false))).unwrap());
    (addr, h)
}

#[test]
fn tcp_human_plays_a_full_episode() {
    let seats = vec![SeatSpec::Human, SeatSpec::Bot(AgentKind::Random), SeatSpec::Bot(AgentKind::Greedy(GreedyAgent::default())), SeatSpec::Bot(AgentKind::Random)];
    let (addr, server) = spawn_server(ServeConfig::new(seats, 12));
    let mut c = Client::connect(addr);
    c.send(serde_json::json!({"type": "nonsense"}));
    let bad = c.recv().unwrap();
    assert_eq!(bad["type"], "error");
    assert_eq!(bad["code"], "bad_message");
    c.send(serde_json::json!({"type": "hello"}));
    let hello = c.recv().unwrap();
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["seat"], 0);
    assert_eq!(hello["protocol"], 1);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut types = std::collections::BTreeSet::new();
    let mut errors = 0;
    loop {
        let v = c.recv().expect("server closed before the episode ended");
        let ty = v["type"].as_str().unwrap().to_string();
        types.insert(ty.clone());
        match ty.as_str() {
            "legal_actions" => {
                let actions = v["actions"].as_array().unwrap();
                // a pass while leading is refused; the turn stays open
                if errors == 0 && actions.iter().all(|a| a["kind"] != "Pass") {
                    c.send(serde_json::json!({"type": "act", "combo": {"kind": "Pass", "key": 0, "cards": []}}));
                    let e = c.recv().unwrap();
                    assert_eq!(e["code"], "illegal_action");
                    assert_eq!(e["legal"].as_array().unwrap(), actions);
                    errors += 1;
                }
                let pick = actions.choose(&mut rng).unwrap().clone();
                c.send(serde_json::json!({"type": "act", "game_id": v["game_id"], "combo": pick}));
            }
            "tribute_prompt" => c.send(serde_json::json!({"type": "act", "card": v["suggested"]})),
            "error" => panic!("unexpected error {v}"),
            "episode_end" => break,
            _ => {}
        }
    }
    assert!(errors >= 1);
    for t in ["new_game", "state", "legal_actions", "bot_move", "round_end", "episode_end"] {
        assert!(types.contains(t), "never saw {t}");
    }
    let report = server.join().unwrap();
    assert_eq!(report.games.len(), 1);
}

#[test]
fn tcp_bot_only_table_and_dropped_human() {
    let seats = bots([AgentKind::Random, AgentKind::Random, AgentKind::Random, AgentKind::Random]);
    let mut cfg = ServeConfig::new(seats, 3);
    cfg.episodes = 2;
    let (_, server) = spawn_server(cfg);
    let report = server.join().unwrap();
    assert_eq!(report.games.iter().map(|g| g.0).collect::<Vec<_>>(), vec![1, 2]);

    let seats = vec![SeatSpec::Human, SeatSpec::Bot(AgentKind::Random), SeatSpec::Human, SeatSpec::Bot(AgentKind::Random)];
    let mut cfg = ServeConfig::new(seats, 4);
    cfg.fallback_after = Duration::from_millis(100);
    let (addr, server) = spawn_server(cfg);
    let mut a = Client::connect(addr);
    let mut b = Client::connect(addr);
    a.send(serde_json::json!({"type": "hello", "seat": 2}));
    assert_eq!(a.recv().unwrap()["seat"], 2);
    b.send(serde_json::json!({"type": "hello", "seat": 2}));
    let taken = b.recv().unwrap();
    assert_eq!(taken["code"], "no_seat");
    b.send(serde_json::json!({"type": "hello"}));
    assert_eq!(b.recv().unwrap()["seat"], 0);
    drop(a);
    drop(b);
    let report = server.join().unwrap();
    assert_eq!(report.games.len(), 1);
}

#[test]
fn continued_games_keep_seq_increasing() {
    let seats = bots([AgentKind::Random, AgentKind::Random, AgentKind::Random, AgentKind::Random]);
    let (mut first, out) = run_bot_table(1, &seats);
    let mut second = Table::new(2, mix_seed(1, 2), &seats);
    second.continue_seq(first.seq());
    second.start();
    let next = second.drain();
    assert!(next[0].env.seq > out.last().unwrap().env.seq);
    assert!(first.drain().is_empty());
}
