//! Three-arm synthetic environment with a covariate-shifted warm start.
//!
//! Contexts are two standard-normal coordinates. Expected rewards are
//!
//! ```text
//! E[r(0)] = 0.5 (x₀+1)² + 0.5 (x₁+1)²
//! E[r(1)] = 1
//! E[r(2)] = 2 − 0.5 (x₀+1)² − 0.5 (x₁+1)²
//! ```
//!
//! plus `N(0, 0.01)` noise. Warm-start contexts are truncated coordinate-wise
//! to `(−1.15, −0.85)`, a narrow region where the three surfaces barely
//! differ, which biases the first fits. The feature map either includes the
//! quadratic terms (well-specified) or only the linear ones (misspecified).

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// Number of arms in the synthetic problem.
pub const SYNTHETIC_ARMS: usize = 3;
/// Size of the uniformly assigned warm-start batch.
pub const WARM_START_SIZE: usize = 50;

const NOISE_VARIANCE: f64 = 0.01;
const TRUNCATION: (f64, f64) = (-1.15, -0.85);

/// Which feature map the policies see.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecMode {
    /// `(1, x₀, x₁, x₀², x₁²)` — can represent all three reward surfaces.
    WellSpecified,
    /// `(1, x₀, x₁)` — linear-only, cannot represent arms 0 and 2.
    Misspecified,
}

/// Context distribution phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Coordinates truncated to the warm-start window.
    Warm,
    /// Untruncated standard normal coordinates.
    Online,
}

#[derive(Clone, Debug)]
pub struct SyntheticEnv<F> {
    mode: SpecMode,
    noise_std: F,
    warm_start_size: usize,
    truncation: (F, F),
    /// Adds the `x₀x₁` cross term to the well-specified map.
    pub include_cross_term: bool,
    /// Rescales raw contexts onto the unit disk before the feature map.
    pub normalize_contexts: bool,
}

impl<F: Scalar> SyntheticEnv<F> {
    pub fn new(mode: SpecMode) -> Self {
        Self {
            mode,
            noise_std: F::cast(NOISE_VARIANCE.sqrt()),
            warm_start_size: WARM_START_SIZE,
            truncation: (F::cast(TRUNCATION.0), F::cast(TRUNCATION.1)),
            include_cross_term: false,
            normalize_contexts: false,
        }
    }

    pub fn mode(&self) -> SpecMode {
        self.mode
    }

    pub fn n_arms(&self) -> usize {
        SYNTHETIC_ARMS
    }

    pub fn warm_start_size(&self) -> usize {
        self.warm_start_size
    }

    pub fn feature_dim(&self) -> usize {
        match self.mode {
            SpecMode::Misspecified => 3,
            SpecMode::WellSpecified => {
                if self.include_cross_term {
                    6
                } else {
                    5
                }
            }
        }
    }

    /// Draws a raw two-coordinate context. Warm-phase coordinates are
    /// rejection-sampled into the truncation window.
    pub fn context<R: Rng + ?Sized>(&self, phase: Phase, rng: &mut R) -> [F; 2] {
        let mut draw = || match phase {
            Phase::Online => F::standard_normal(rng),
            Phase::Warm => loop {
                let v = F::standard_normal(rng);
                if v > self.truncation.0 && v < self.truncation.1 {
                    break v;
                }
            },
        };
        let a = draw();
        let b = draw();
        [a, b]
    }

    /// Maps a raw context into the policy's feature space.
    pub fn features(&self, x: [F; 2]) -> Vec<F> {
        let x = self.maybe_normalize(x);
        let mut out = vec![F::one(), x[0], x[1]];
        if self.mode == SpecMode::WellSpecified {
            out.push(x[0] * x[0]);
            out.push(x[1] * x[1]);
            if self.include_cross_term {
                out.push(x[0] * x[1]);
            }
        }
        out
    }

    /// Noiseless expected reward of an arm at a raw context.
    pub fn expected_reward(&self, arm: usize, x: [F; 2]) -> Result<F> {
        let half = F::cast(0.5);
        let one = F::one();
        let bump = half * (x[0] + one) * (x[0] + one) + half * (x[1] + one) * (x[1] + one);
        match arm {
            0 => Ok(bump),
            1 => Ok(one),
            2 => Ok(F::cast(2.0) - bump),
            _ => Err(Error::UnknownArm {
                arm,
                n_arms: SYNTHETIC_ARMS,
            }),
        }
    }

    /// Realized reward: the expected surface plus Gaussian noise.
    pub fn reward<R: Rng + ?Sized>(&self, arm: usize, x: [F; 2], rng: &mut R) -> Result<F> {
        Ok(self.expected_reward(arm, x)? + self.noise_std * F::standard_normal(rng))
    }

    /// Argmax of the true expected rewards, lowest index on ties.
    pub fn true_optimal_arm(&self, x: [F; 2]) -> usize {
        let mut best = 0;
        let mut best_value = F::neg_infinity();
        for arm in 0..SYNTHETIC_ARMS {
            let value = self.expected_reward(arm, x).expect("valid arm");
            if value > best_value {
                best_value = value;
                best = arm;
            }
        }
        best
    }

    /// One warm-start observation: truncated context, uniform arm, noisy
    /// reward — drawn in that fixed order so streams replay identically.
    pub fn warm_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<([F; 2], usize, F)> {
        let x = self.context(Phase::Warm, rng);
        let arm = rng.random_range(0..SYNTHETIC_ARMS);
        let reward = self.reward(arm, x, rng)?;
        Ok((x, arm, reward))
    }

    /// Feeds the uniformly assigned warm-start batch into a policy with
    /// logged propensity `1/3` per observation.
    pub fn warm_start<R: Rng + ?Sized>(&self, policy: &mut Policy<F>, rng: &mut R) -> Result<()> {
        let third = F::one() / F::cast(SYNTHETIC_ARMS as f64);
        for _ in 0..self.warm_start_size {
            let (x, arm, reward) = self.warm_draw(rng)?;
            policy.observe_uniform(&self.features(x), arm, reward, third)?;
        }
        Ok(())
    }

    fn maybe_normalize(&self, x: [F; 2]) -> [F; 2] {
        if !self.normalize_contexts {
            return x;
        }
        let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if norm <= F::one() {
            x
        } else {
            [x[0] / norm, x[1] / norm]
        }
    }
}
