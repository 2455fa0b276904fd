//! GuanDan rules engine, feature encoders and the two-stage self-play
//! learning system (Deep Monte Carlo, then PPO over top-k candidates).

pub mod arena;
pub mod cards;
pub mod dmc;
pub mod engine;
pub mod features;
pub mod gradcheck;
pub mod movegen;
pub mod nn;
pub mod ppo;
pub mod runtime;
pub mod table;

pub use cards::{Card, CardSet, Combo, ComboKind, Coverage, LevelRank, Rank, Suit};
