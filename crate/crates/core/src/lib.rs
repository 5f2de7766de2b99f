//! Reward computation, data curation and evaluation for chart-to-code
//! models trained with execution-grounded reinforcement learning.

pub mod asymmetry;
pub mod contamination;
pub mod curation;
pub mod embedding;
pub mod eval;
pub mod fixtures;
pub mod image_io;
pub mod inspector;
pub mod limiter;
pub mod matcher;
pub mod model;
pub mod reward;
pub mod sandbox;
pub mod shard;
pub mod stats;
pub mod toy_rl;
