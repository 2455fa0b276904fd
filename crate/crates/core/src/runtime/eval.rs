use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::learner::list_checkpoints;
use super::metrics::MetricRecord;
use super::RuntimeError;
use crate::arena::{play_match, AgentKind, MatchReport};
use crate::nn::{load_checkpoint, Mlp, NetKind};

/// Opponents and match settings for checkpoint evaluation.
#[derive(Clone)]
pub struct EvalSetup {
    pub opponents: Vec<AgentKind>,
    pub games: u64,
    pub seed: u64,
    /// Q network paired with policy checkpoints.
    pub dmc: Option<Arc<Mlp<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub opponent: String,
    pub report: MatchReport,
}

/// The agent a checkpoint file describes.
pub fn checkpoint_agent(path: &Path, dmc: Option<&Arc<Mlp<f32>>>) -> Result<AgentKind, RuntimeError> {
    let ck = load_checkpoint(path, None)?;
    Ok(match ck.meta.kind {
        NetKind::Q => AgentKind::Dmc(Arc::new(ck.net)),
        NetKind::Ppo => {
            let dmc = dmc.ok_or_else(|| RuntimeError::Resume("policy checkpoint needs a Q network".into()))?;
            AgentKind::Ppo { dmc: dmc.clone(), policy: Arc::new(ck.net), k: ck.meta.k }
        }
    })
}

fn evaluate(step: u64, path: &Path, setup: &EvalSetup) -> Result<Vec<EvalPoint>, RuntimeError> {
    let agent = checkpoint_agent(path, setup.dmc.as_ref())?;
    Ok(setup
        .opponents
        .iter()
        .map(|o| EvalPoint { step, opponent: o.name(), report: play_match(&agent, o, setup.games, setup.seed) })
        .collect())
}

/// Metrics records for one checkpoint against every opponent.
pub fn evaluate_checkpoint(path: &Path, setup: &EvalSetup) -> Result<Vec<MetricRecord>, RuntimeError> {
    let step = load_checkpoint(path, None)?.meta.step;
    Ok(evaluate(step, path, setup)?
        .into_iter()
        .map(|p| MetricRecord::Eval {
            step,
            opponent: p.opponent,
            games: p.report.n_games as usize,
            winrate: p.report.winrate_a,
            ci95: p.report.ci95,
        })
        .collect())
}

/// Win-rate series over every checkpoint in `dir`, oldest first.
pub fn evaluate_periodically(dir: &Path, setup: &EvalSetup) -> Result<Vec<EvalPoint>, RuntimeError> {
    let mut out = Vec::new();
    for (step, path) in list_checkpoints(dir)? {
        out.extend(evaluate(step, &path, setup)?);
    }
    Ok(out)
}
