//! Newline-delimited JSON over TCP. One thread owns the table; each
//! connection gets a reader and a writer thread that only move lines.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::protocol::{ClientEnvelope, ClientMsg, Envelope, ErrorCode, ServerMsg};
use super::{SeatSpec, Table};
use crate::arena::mix_seed;
use crate::engine::SEATS;

#[derive(Clone)]
pub struct ServeConfig {
    pub seats: Vec<SeatSpec>,
    pub seed: u64,
    /// Episodes to host; 0 keeps starting new ones.
    pub episodes: u64,
    pub heartbeat: Duration,
    /// How long a dropped human seat waits before a random agent takes it.
    pub fallback_after: Duration,
}

impl ServeConfig {
    pub fn new(seats: Vec<SeatSpec>, seed: u64) -> ServeConfig {
        ServeConfig { seats, seed, episodes: 1, heartbeat: Duration::from_secs(15), fallback_after: Duration::from_secs(30) }
    }
}

/// Finished episodes as `(game_id, winning team)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServeReport {
    pub games: Vec<(u64, usize)>,
}

enum Event {
    Open(u64, Sender<String>),
    Line(u64, String),
    Closed(u64),
}

fn spawn_connection(id: u64, stream: TcpStream, events: Sender<Event>) -> io::Result<()> {
    let (tx, rx) = unbounded::<String>();
    let mut w = stream.try_clone()?;
    std::thread::spawn(move || {
        for mut line in rx {
            line.push('\n');
            if w.write_all(line.as_bytes()).and_then(|_| w.flush()).is_err() {
                break;
            }
        }
    });
    events.send(Event::Open(id, tx)).ok();
    std::thread::spawn(move || {
        let r = BufReader::new(stream);
        for line in r.lines() {
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => {
                    if events.send(Event::Line(id, l)).is_err() {
                        return;
                    }
                }
                Err(_) => break,
            }
        }
        events.send(Event::Closed(id)).ok();
    });
    Ok(())
}

fn accept_loop(listener: TcpListener, events: Sender<Event>, stop: Arc<AtomicBool>) {
    let mut next = 1u64;
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client {next} connected from {peer}");
                stream.set_nonblocking(false).ok();
                stream.set_nodelay(true).ok();
                if let Err(e) = spawn_connection(next, stream, events.clone()) {
                    log::warn!("client {next}: {e}");
                }
                next += 1;
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => log::warn!("accept: {e}"),
        }
    }
}

struct Owner {
    cfg: ServeConfig,
    table: Table,
    conns: HashMap<u64, Sender<String>>,
    seat_of: HashMap<u64, usize>,
    conn_of: [Option<u64>; SEATS],
    dropped_at: [Option<Instant>; SEATS],
    report: ServeReport,
}

impl Owner {
    fn send(&self, conn: u64, env: &Envelope) {
        if let Some(tx) = self.conns.get(&conn) {
            tx.send(serde_json::to_string(env).expect("messages serialize")).ok();
        }
    }

    fn flush(&mut self) {
        for o in self.table.drain() {
            if let Some(conn) = self.conn_of[o.seat] {
                self.send(conn, &o.env);
            }
        }
    }

    fn reject(&mut self, conn: u64, code: ErrorCode, message: String) {
        let env = self.table.unrouted(ServerMsg::Error { code, message, legal: None });
        self.send(conn, &env);
    }

    fn hello(&mut self, conn: u64, want: Option<usize>) {
        if self.seat_of.contains_key(&conn) {
            return self.reject(conn, ErrorCode::BadMessage, "already seated".into());
        }
        let open: Vec<usize> = (0..SEATS)
            .filter(|&s| self.conn_of[s].is_none() && self.cfg_is_human(s))
            .collect();
        let seat = match want {
            Some(s) if open.contains(&s) => s,
            Some(s) => return self.reject(conn, ErrorCode::NoSeat, format!("seat {s} is not available")),
            None => match open.first() {
                Some(&s) => s,
                None => return self.reject(conn, ErrorCode::NoSeat, "no human seat is free".into()),
            },
        };
        self.seat_of.insert(conn, seat);
        self.conn_of[seat] = Some(conn);
        self.dropped_at[seat] = None;
        if let Err(code) = self.table.connect(seat) {
            return self.reject(conn, code, format!("seat {seat} cannot be taken"));
        }
        self.table.start();
    }

    fn cfg_is_human(&self, seat: usize) -> bool {
        matches!(self.cfg.seats[seat], SeatSpec::Human)
    }

    fn line(&mut self, conn: u64, text: &str) {
        let env: ClientEnvelope = match serde_json::from_str(text) {
            Ok(e) => e,
            Err(e) => return self.reject(conn, ErrorCode::BadMessage, e.to_string()),
        };
        match (&env.msg, self.seat_of.get(&conn).copied()) {
            (ClientMsg::Hello { seat }, _) => self.hello(conn, *seat),
            (ClientMsg::Pong, _) => {}
            (_, Some(seat)) => self.table.handle(seat, env),
            (_, None) => self.reject(conn, ErrorCode::NoSeat, "send hello first".into()),
        }
    }

    fn closed(&mut self, conn: u64) {
        self.conns.remove(&conn);
        if let Some(seat) = self.seat_of.remove(&conn) {
            self.conn_of[seat] = None;
            self.dropped_at[seat] = Some(Instant::now());
            self.table.disconnect(seat);
        }
    }

    fn tick(&mut self) {
        for seat in 0..SEATS {
            if self.dropped_at[seat].is_some_and(|t| t.elapsed() >= self.cfg.fallback_after) {
                log::info!("seat {seat} handed to the fallback agent");
                self.dropped_at[seat] = None;
                self.table.fallback(seat);
            }
        }
    }

    fn next_game(&mut self) -> bool {
        let winner = self.table.game().winner().expect("finished episode has a winner");
        self.report.games.push((self.table.game_id, winner % 2));
        if self.cfg.episodes > 0 && self.report.games.len() as u64 >= self.cfg.episodes {
            return false;
        }
        let id = self.table.game_id + 1;
        let mut t = Table::new(id, mix_seed(self.cfg.seed, id), &self.cfg.seats);
        t.continue_seq(self.table.seq());
        self.table = t;
        for seat in 0..SEATS {
            if self.conn_of[seat].is_some() {
                self.table.connect(seat).ok();
            }
        }
        self.table.start();
        true
    }
}

/// Hosts tables on `listener` until the configured episodes are done or
/// `stop` is set. A table with no human seat starts at once; otherwise it
/// starts when the first human says hello.
pub fn serve(listener: TcpListener, cfg: ServeConfig, stop: Arc<AtomicBool>) -> io::Result<ServeReport> {
    listener.set_nonblocking(true)?;
    let (events_tx, events): (Sender<Event>, Receiver<Event>) = unbounded();
    let acceptor = {
        let stop = stop.clone();
        std::thread::spawn(move || accept_loop(listener, events_tx, stop))
    };
    let table = Table::new(1, mix_seed(cfg.seed, 1), &cfg.seats);
    let mut o = Owner {
        table,
        conns: HashMap::new(),
        seat_of: HashMap::new(),
        conn_of: [None; SEATS],
        dropped_at: [None; SEATS],
        report: ServeReport::default(),
        cfg,
    };
    if (0..SEATS).all(|s| !o.cfg_is_human(s)) {
        o.table.start();
    }
    let mut last_ping = Instant::now();
    loop {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        match events.recv_timeout(Duration::from_millis(50)) {
            Ok(Event::Open(id, tx)) => {
                o.conns.insert(id, tx);
            }
            Ok(Event::Line(id, text)) => o.line(id, &text),
            Ok(Event::Closed(id)) => o.closed(id),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        o.tick();
        o.flush();
        if o.table.is_over() {
            let more = o.next_game();
            o.flush();
            if !more {
                break;
            }
        }
        if last_ping.elapsed() >= o.cfg.heartbeat {
            last_ping = Instant::now();
            let conns: Vec<u64> = o.conns.keys().copied().collect();
            for c in conns {
                let env = o.table.unrouted(ServerMsg::Ping);
                o.send(c, &env);
            }
        }
    }
    stop.store(true, Ordering::Relaxed);
    acceptor.join().ok();
    // let writer threads drain their queues
    drop(o.conns);
    std::thread::sleep(Duration::from_millis(50));
    Ok(o.report)
}
