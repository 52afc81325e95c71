//! Experiment harness: configuration, replication runner, metrics and
//! results persistence.

mod report;
mod runner;

use std::path::PathBuf;

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::{LambdaRule, Policy, PolicyKind};
use crate::scalar::Scalar;

pub use report::{summarize, write_outputs, SummaryRow};
pub use runner::{
    run_dataset_replication, run_experiment, run_synthetic_replication, ComboResult,
    ExperimentResult, OptimalAssignmentProbe, ReplicationResult, StepRecord,
};

/// Desk-scale default online horizon for the synthetic environment.
pub const DEFAULT_SYNTHETIC_HORIZON: usize = 2000;
/// Default replication count for synthetic runs.
pub const DEFAULT_SYNTHETIC_REPLICATIONS: usize = 50;
/// Default shuffle count for dataset runs.
pub const DEFAULT_DATASET_REPLICATIONS: usize = 10;
/// Default probe-set size for optimal-assignment detection.
pub const DEFAULT_PROBE_SIZE: usize = 1000;
/// Default greedy-agreement threshold declaring the assignment found.
pub const DEFAULT_AGREEMENT_THRESHOLD: f64 = 0.95;
/// Detection checkpoint cadence in online steps.
pub const DEFAULT_CHECKPOINT_INTERVAL: usize = 10;

/// Which environment an experiment runs against.
#[derive(Clone, Debug)]
pub enum EnvSpec {
    SyntheticWell,
    SyntheticMis,
    Dataset {
        path: PathBuf,
        label_column: Option<String>,
    },
}

impl EnvSpec {
    pub fn is_synthetic(&self) -> bool {
        matches!(self, EnvSpec::SyntheticWell | EnvSpec::SyntheticMis)
    }
}

/// One point of the policy sweep.
#[derive(Clone, Debug)]
pub struct PolicyCombo<F> {
    pub kind: PolicyKind,
    pub alpha: F,
    pub gamma: Option<F>,
}

impl<F: Scalar> PolicyCombo<F> {
    /// Stable sweep label, e.g. `blts-a1-g0.1`, used in file names.
    pub fn label(&self) -> String {
        match self.gamma {
            Some(g) => format!("{}-a{}-g{}", self.kind, self.alpha, g),
            None => format!("{}-a{}", self.kind, self.alpha),
        }
    }
}

/// Full experiment description: environment, policy sweep, horizon,
/// replications and fidelity switches.
#[derive(Clone, Debug)]
pub struct ExperimentConfig<F> {
    pub env: EnvSpec,
    pub policies: Vec<PolicyKind>,
    /// Exploration constants; `None` picks the per-kind default
    /// (1 for the Thompson kinds, 2 for the UCB kinds).
    pub alphas: Option<Vec<F>>,
    /// Clipping thresholds swept by the balanced kinds.
    pub gammas: Vec<F>,
    pub lambda: LambdaRule<F>,
    /// Online horizon; `None` means the desk-scale synthetic default or the
    /// full dataset length.
    pub horizon: Option<usize>,
    pub replications: usize,
    pub base_seed: u64,
    pub mc_iterations: usize,
    /// Fidelity switch: recompute all propensities each period (BLTS).
    pub recompute_propensities: bool,
    /// Fidelity switch: refit the BLUCB propensity model every period.
    pub logit_refit_always: bool,
    pub probe_size: usize,
    pub agreement_threshold: f64,
    pub checkpoint_interval: usize,
}

impl<F: Scalar> ExperimentConfig<F> {
    pub fn new(env: EnvSpec) -> Self {
        let replications = if env.is_synthetic() {
            DEFAULT_SYNTHETIC_REPLICATIONS
        } else {
            DEFAULT_DATASET_REPLICATIONS
        };
        Self {
            env,
            policies: Vec::new(),
            alphas: None,
            gammas: vec![F::cast(0.1)],
            lambda: LambdaRule::default_grid(),
            horizon: None,
            replications,
            base_seed: 0,
            mc_iterations: crate::propensity::DEFAULT_MC_ITERATIONS,
            recompute_propensities: false,
            logit_refit_always: false,
            probe_size: DEFAULT_PROBE_SIZE,
            agreement_threshold: DEFAULT_AGREEMENT_THRESHOLD,
            checkpoint_interval: DEFAULT_CHECKPOINT_INTERVAL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::invalid("policies", "at least one policy required"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if let Some(t) = self.horizon {
            if t == 0 {
                return Err(Error::invalid("horizon", "must be at least 1"));
            }
        }
        if let Some(alphas) = &self.alphas {
            if alphas.is_empty() {
                return Err(Error::invalid("alphas", "grid must be nonempty"));
            }
        }
        if self.policies.iter().any(|k| k.is_balanced()) && self.gammas.is_empty() {
            return Err(Error::invalid("gammas", "grid must be nonempty"));
        }
        if self.probe_size == 0 {
            return Err(Error::invalid("probe_size", "must be at least 1"));
        }
        if !(self.agreement_threshold > 0.0 && self.agreement_threshold <= 1.0) {
            return Err(Error::invalid("agreement_threshold", "must lie in (0, 1]"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::invalid("checkpoint_interval", "must be at least 1"));
        }
        Ok(())
    }

    fn default_alpha(kind: PolicyKind) -> F {
        if kind.is_thompson() {
            F::one()
        } else {
            F::cast(2.0)
        }
    }

    /// Expands the sweep: one combo per (kind, α) for the unbalanced kinds
    /// and per (kind, α, γ) for the balanced ones.
    pub fn combos(&self) -> Vec<PolicyCombo<F>> {
        let mut out = Vec::new();
        for &kind in &self.policies {
            let alphas = match &self.alphas {
                Some(explicit) => explicit.clone(),
                None => vec![Self::default_alpha(kind)],
            };
            for &alpha in &alphas {
                if kind.is_balanced() {
                    for &gamma in &self.gammas {
                        out.push(PolicyCombo {
                            kind,
                            alpha,
                            gamma: Some(gamma),
                        });
                    }
                } else {
                    out.push(PolicyCombo {
                        kind,
                        alpha,
                        gamma: None,
                    });
                }
            }
        }
        out
    }

    pub fn build_policy(
        &self,
        combo: &PolicyCombo<F>,
        dim: usize,
        n_arms: usize,
        seed: u64,
    ) -> Result<Policy<F>> {
        let mut pc = crate::policy::PolicyConfig::new(combo.kind, combo.alpha);
        pc.gamma = combo.gamma;
        pc.lambda = self.lambda.clone();
        pc.mc_iterations = self.mc_iterations;
        pc.recompute_propensities = self.recompute_propensities;
        pc.logit_refit_always = self.logit_refit_always;
        Policy::new(pc, dim, n_arms, seed)
    }
}

/// Minimal choose/observe surface the runner drives. [`Policy`] implements
/// it; tests plug in oracle and uniform-random agents through it.
pub trait Agent<F: Scalar> {
    fn choose<R: Rng + ?Sized>(&mut self, x: &[F], rng: &mut R) -> Result<(usize, F)>;

    fn observe(&mut self, x: &[F], arm: usize, reward: F, propensity: F) -> Result<()>;

    /// Observation assigned uniformly at random outside the agent.
    fn observe_uniform(&mut self, x: &[F], arm: usize, reward: F, propensity: F) -> Result<()> {
        self.observe(x, arm, reward, propensity)
    }

    /// Exploration-free argmax, if the agent can provide one.
    fn greedy_arm(&self, _x: &[F]) -> Result<Option<usize>> {
        Ok(None)
    }
}

impl<F: Scalar> Agent<F> for Policy<F> {
    fn choose<R: Rng + ?Sized>(&mut self, x: &[F], rng: &mut R) -> Result<(usize, F)> {
        Policy::choose(self, x, rng)
    }

    fn observe(&mut self, x: &[F], arm: usize, reward: F, propensity: F) -> Result<()> {
        Policy::observe(self, x, arm, reward, propensity)
    }

    fn observe_uniform(&mut self, x: &[F], arm: usize, reward: F, propensity: F) -> Result<()> {
        Policy::observe_uniform(self, x, arm, reward, propensity)
    }

    fn greedy_arm(&self, x: &[F]) -> Result<Option<usize>> {
        Policy::greedy_arm(self, x)
    }
}

/// Stream roles for per-replication seed derivation.
pub(crate) mod stream {
    /// Environment draws: contexts, warm-start arms, reward noise.
    pub const ENV: u64 = 1;
    /// Policy decision draws handed to `choose`.
    pub const DECISION: u64 = 2;
    /// Policy-internal bookkeeping (snapshot reservoir, propensity MC).
    pub const AUX: u64 = 3;
    /// Dataset shuffle order.
    pub const SHUFFLE: u64 = 4;
    /// Probe-set generation and the misspecified reference fit.
    pub const PROBE: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Disjoint, well-mixed rng seed per (replication, role), anchored at
/// `base_seed + replication` so replications use independent streams and a
/// given replication is reproducible in isolation.
pub(crate) fn stream_seed(base_seed: u64, replication: u64, role: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(replication) ^ splitmix64(role))
}

/// Seed of the environment stream (contexts, warm-start arms, noise) used
/// by replication `replication` of a run with `base_seed`. Exposed with its
/// siblings so custom loops can replay harness runs exactly.
pub fn env_seed(base_seed: u64, replication: u64) -> u64 {
    stream_seed(base_seed, replication, stream::ENV)
}

/// Seed of the decision stream handed to `choose`.
pub fn decision_seed(base_seed: u64, replication: u64) -> u64 {
    stream_seed(base_seed, replication, stream::DECISION)
}

/// Seed of the policy-internal bookkeeping stream.
pub fn aux_seed(base_seed: u64, replication: u64) -> u64 {
    stream_seed(base_seed, replication, stream::AUX)
}

/// Seed of the dataset shuffle stream.
pub fn shuffle_seed(base_seed: u64, replication: u64) -> u64 {
    stream_seed(base_seed, replication, stream::SHUFFLE)
}

/// Seed of the probe-set stream (shared by all replications of a run).
pub fn probe_seed(base_seed: u64) -> u64 {
    stream_seed(base_seed, 0, stream::PROBE)
}
