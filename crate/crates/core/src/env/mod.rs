//! Benchmark environments: the synthetic three-arm problem and the
//! classification-to-bandit adapter.

mod dataset;
mod synthetic;

pub use dataset::ClassificationEnv;
pub use synthetic::{Phase, SpecMode, SyntheticEnv, SYNTHETIC_ARMS, WARM_START_SIZE};
