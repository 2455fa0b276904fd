use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use guandan::arena::{dump_case_study, play_match, AgentSpec};
use guandan::cards::{CardSet, Combo, LevelRank};
use guandan::engine::replay::from_jsonl;
use guandan::gradcheck::selfcheck;
use guandan::movegen::{legal_follows, legal_leads};
use guandan::runtime::{run_actor_client, run_learner_server, train, Algorithm, RunConfig};
use guandan::table::server::{serve, ServeConfig};
use guandan::table::SeatSpec;

#[derive(Parser)]
#[command(name = "guandan", version, about = "GuanDan engine, self-play training and tables")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the legal actions of a hand.
    Moves {
        /// Cards such as "H2 S3 S3 BJ".
        #[arg(long)]
        hand: String,
        /// Combo to cover, e.g. "Pair:99" or "Pair:S9,C9".
        #[arg(long)]
        beat: Option<String>,
        #[arg(long, default_value = "2")]
        level: String,
    },
    /// Network utilities.
    Nn {
        #[command(subcommand)]
        cmd: NnCmd,
    },
    /// Deep Monte Carlo self-play training.
    TrainDmc(TrainArgs),
    /// PPO over the top-k actions of a trained Q network.
    TrainPpo {
        #[command(flatten)]
        train: TrainArgs,
        /// Frozen Q network checkpoint.
        #[arg(long)]
        dmc_ckpt: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Learner process of a multi-process run.
    ServeLearner {
        #[command(flatten)]
        train: TrainArgs,
        /// `dmc` or `ppo`; overrides the config.
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        tcp: String,
    },
    /// Actor processes that connect to a learner.
    ServeActors {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `dmc` or `ppo`; overrides the config.
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        tcp: String,
        /// Actor threads; defaults to the config.
        #[arg(long)]
        actors: Option<usize>,
        /// Episodes per actor; runs until the learner stops when absent.
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Team match between two agent specs.
    Eval {
        #[arg(long)]
        team_a: String,
        #[arg(long)]
        team_b: String,
        #[arg(long, default_value_t = 1000)]
        games: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One decision of a replay, as the given agent sees it.
    CaseStudy {
        #[arg(long)]
        replay: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        index: usize,
    },
    /// Host a live table.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7000")]
        bind: String,
        /// Four comma-separated seats: `human` or an agent spec.
        #[arg(long)]
        seats: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Episodes to host; 0 keeps going.
        #[arg(long, default_value_t = 0)]
        episodes: u64,
        /// Seconds before a dropped seat is played by a random agent.
        #[arg(long, default_value_t = 30)]
        fallback_secs: u64,
    },
}

#[derive(Subcommand)]
enum NnCmd {
    /// Compare analytic gradients with central differences.
    Selfcheck {
        #[arg(long, default_value_t = 100)]
        nets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run config; desk settings when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint and metrics directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Stop after this many episodes.
    #[arg(long)]
    episodes: Option<u64>,
}

fn algorithm(s: Option<&str>) -> Result<Option<Algorithm>> {
    match s {
        None => Ok(None),
        Some("dmc") => Ok(Some(Algorithm::Dmc)),
        Some("ppo") => Ok(Some(Algorithm::Ppo)),
        Some(s) => bail!("unknown algorithm {s:?}, expected dmc or ppo"),
    }
}

/// The config at `path`, or desk settings. `alg` overrides the algorithm.
fn load_config(path: Option<&Path>, alg: Option<Algorithm>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::read(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::desk(alg.unwrap_or(Algorithm::Dmc)),
    };
    if let Some(a) = alg {
        cfg.algorithm = a;
    }
    Ok(cfg)
}

fn run_training(mut cfg: RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    cfg.validate()?;
    let report = train(&cfg, &args.out)?;
    println!(
        "{} episodes, {} updates, version {}, {} checkpoints in {}",
        report.receptions,
        report.updates,
        report.version,
        report.checkpoints.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Moves { hand, beat, level } => {
            let level: LevelRank = level.parse()?;
            let hand: CardSet = hand.parse()?;
            let moves = match beat {
                Some(b) => legal_follows(&hand, &Combo::parse(&b, level)?, level),
                None => legal_leads(&hand, level),
            };
            for m in &moves {
                println!("{:<28} {}", m.short(level), m.notation());
            }
            println!("{} actions", moves.len());
        }
        Cmd::Nn { cmd: NnCmd::Selfcheck { nets, seed } } => {
            let mut ok = true;
            for c in selfcheck(nets, seed) {
                let pass = c.worst < 1e-4;
                ok &= pass;
                println!("{:<16} {} nets  worst relative error {:.2e}  {}", c.case, c.nets, c.worst, if pass { "ok" } else { "FAIL" });
            }
            if !ok {
                bail!("gradient check failed");
            }
        }
        Cmd::TrainDmc(args) => {
            let cfg = load_config(args.config.as_deref(), Some(Algorithm::Dmc))?;
            run_training(cfg, &args)?;
        }
        Cmd::TrainPpo { train, dmc_ckpt, k } => {
            let mut cfg = load_config(train.config.as_deref(), Some(Algorithm::Ppo))?;
            if dmc_ckpt.is_some() {
                cfg.dmc_checkpoint = dmc_ckpt;
            }
            if let Some(k) = k {
                cfg.ppo.k = k;
            }
            run_training(cfg, &train)?;
        }
        Cmd::ServeLearner { train, algorithm: alg, tcp } => {
            let mut cfg = load_config(train.config.as_deref(), algorithm(alg.as_deref())?)?;
            if let Some(n) = train.episodes {
                cfg.episodes = n;
            }
            let r = run_learner_server(&cfg, &train.out, &tcp)?;
            println!("{} episodes, {} updates, {} dropped", r.receptions, r.updates, r.dropped);
        }
        Cmd::ServeActors { config, algorithm: alg, tcp, actors, episodes } => {
            let cfg = load_config(config.as_deref(), algorithm(alg.as_deref())?)?;
            let n = actors.unwrap_or(cfg.actors);
            let reports = run_actor_client(&cfg, &tcp, n, episodes)?;
            let played: u64 = reports.iter().map(|r| r.episodes).sum();
            println!("{n} actors played {played} episodes");
        }
        Cmd::Eval { team_a, team_b, games, seed, out } => {
            let a = team_a.parse::<AgentSpec>()?.load()?;
            let b = team_b.parse::<AgentSpec>()?.load()?;
            let r = play_match(&a, &b, games, seed);
            println!(
                "{} vs {}: {}/{} won, winrate {:.3} (95% CI {:.3} to {:.3}), {:.1} rounds per episode, forfeits {:?}",
                r.team_a, r.team_b, r.team_a_wins, r.n_games, r.winrate_a, r.ci95.0, r.ci95.1, r.mean_rounds, r.forfeits
            );
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&r)?)?;
            }
        }
        Cmd::CaseStudy { replay, agent, index } => {
            let text = std::fs::read_to_string(&replay).with_context(|| format!("reading {}", replay.display()))?;
            let events = from_jsonl(&text)?;
            let mut agent = agent.parse::<AgentSpec>()?.load()?.build(0);
            let panel = dump_case_study(&events, agent.as_mut(), index)?;
            println!("{}", serde_json::to_string_pretty(&panel)?);
        }
        Cmd::Serve { bind, seats, seed, episodes, fallback_secs } => {
            let seats = SeatSpec::parse_list(&seats)?;
            let mut cfg = ServeConfig::new(seats, seed);
            cfg.episodes = episodes;
            cfg.fallback_after = Duration::from_secs(fallback_secs);
            let listener = TcpListener::bind(&bind)?;
            log::info!("table listening on {}", listener.local_addr()?);
            let report = serve(listener, cfg, Arc::new(AtomicBool::new(false)))?;
            for (id, team) in report.games {
                println!("game {id}: team {team} won");
            }
        }
    }
    Ok(())
}
