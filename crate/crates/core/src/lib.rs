//! Over-training-aware neural scaling laws: fit loss as a function of
//! compute and token multiplier, map loss to downstream top-1 error, and
//! validate extrapolations against held-out or synthetic runs.

pub mod error;
pub mod fitting;
pub mod lawform;
pub mod lmfit;
pub mod model;
pub mod stats;
pub mod synth;
pub mod testbed;

pub use error::{Error, Result};
pub use lawform::{chain_predict, ChinchillaLaw, ErrLaw, Law, LossLawCM, PowerLaw};
pub use model::{resolve_run_geometry, DatasetBudget, RunGeometry, RunRecord, TaskResult, TaskSpec};
