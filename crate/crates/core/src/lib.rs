//! Balanced linear contextual bandits.
//!
//! This crate implements four linear contextual-bandit policies behind one
//! choose/observe interface — Thompson sampling (`LinTS`), upper confidence
//! bounds (`LinUCB`), and their balanced variants (`BLTS`, `BLUCB`) that
//! reweight each arm's history by clipped inverse propensity scores — plus
//! the environments and experiment harness used to benchmark them:
//!
//! * a synthetic three-arm environment with a deliberately narrow warm-start
//!   region and an optional misspecified (linear-only) feature map, and
//! * an adapter that turns any multiclass classification CSV into a bandit
//!   with 0/1 rewards.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases at the crate root are the instantiations the CLI uses.

pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod policy;
pub mod propensity;
pub mod regression;
pub mod scalar;

pub use error::{Error, Result};
pub use policy::PolicyKind;
pub use scalar::Scalar;

/// `f64` instantiations used by the harness, CLI and most tests.
pub type Matrix64 = linalg::Matrix<f64>;
pub type DesignData64 = regression::DesignData<f64>;
pub type LinearEstimate64 = regression::LinearEstimate<f64>;
pub type PosteriorSnapshot64 = propensity::PosteriorSnapshot<f64>;
pub type LogitModel64 = propensity::LogitModel<f64>;
pub type PolicyConfig64 = policy::PolicyConfig<f64>;
pub type Policy64 = policy::Policy<f64>;
