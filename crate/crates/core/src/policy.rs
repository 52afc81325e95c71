//! The four assignment policies behind one choose/observe interface.
//!
//! `LinTS` and `LinUCB` fit each arm's reward model by plain ridge
//! regression on that arm's history. Their balanced variants `BLTS` and
//! `BLUCB` fit the same models by weighted ridge regression, weighting each
//! observation by the clipped inverse of its assignment probability:
//!
//! * `BLTS` knows its assignment probabilities implicitly (probability
//!   matching) and estimates them by Monte-Carlo simulation over a reservoir
//!   of frozen posterior snapshots. By default the propensity computed at
//!   assignment time is cached and reused; a fidelity flag recomputes every
//!   propensity over the current reservoir at each update instead.
//! * `BLUCB` has a deterministic rule, so it estimates propensities with a
//!   multinomial logistic regression refit on the assignment log.
//!
//! A policy is single-writer: `choose`/`observe` on one value must be
//! externally serialized. Distinct policies are fully independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::propensity::{
    clip_weight, fit_multinomial_logit, mc_propensities, LogitFitOptions, LogitModel,
    PosteriorSnapshot, PropensityRecord, DEFAULT_MC_ITERATIONS, DEFAULT_SNAPSHOT_CAP,
};
use crate::regression::{fit_weighted_ridge, DesignData, LinearEstimate};
use crate::scalar::Scalar;

/// Default ridge grid for cross-validated regularization.
pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
/// Folds used by [`LambdaRule::CrossValidated`].
pub const CV_FOLDS: usize = 5;
/// Arms with fewer observations than this skip cross-validation.
pub const CV_MIN_OBSERVATIONS: usize = 10;
/// Ridge value used below [`CV_MIN_OBSERVATIONS`].
pub const CV_FALLBACK_LAMBDA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    LinTs,
    LinUcb,
    Blts,
    Blucb,
}

impl PolicyKind {
    pub fn is_balanced(self) -> bool {
        matches!(self, PolicyKind::Blts | PolicyKind::Blucb)
    }

    pub fn is_thompson(self) -> bool {
        matches!(self, PolicyKind::LinTs | PolicyKind::Blts)
    }

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::LinTs => "lints",
            PolicyKind::LinUcb => "linucb",
            PolicyKind::Blts => "blts",
            PolicyKind::Blucb => "blucb",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lints" => Ok(PolicyKind::LinTs),
            "linucb" => Ok(PolicyKind::LinUcb),
            "blts" => Ok(PolicyKind::Blts),
            "blucb" => Ok(PolicyKind::Blucb),
            other => Err(Error::invalid("algo", format!("unknown policy `{other}`"))),
        }
    }
}

/// How the ridge parameter is picked at each refit.
#[derive(Clone, Debug)]
pub enum LambdaRule<F> {
    Fixed(F),
    /// 5-fold cross-validation over the grid, minimizing weighted squared
    /// prediction error; arms with fewer than [`CV_MIN_OBSERVATIONS`]
    /// observations use [`CV_FALLBACK_LAMBDA`].
    CrossValidated(Vec<F>),
}

impl<F: Scalar> LambdaRule<F> {
    pub fn default_grid() -> Self {
        LambdaRule::CrossValidated(DEFAULT_LAMBDA_GRID.iter().map(|&l| F::cast(l)).collect())
    }
}

/// Per-step exploration schedule; `Constant` matches the benchmark setup.
#[derive(Clone, Copy, Debug)]
pub enum AlphaSchedule<F> {
    Constant,
    /// `f(step, base_alpha)`, for UCB variants that grow `alpha` with `t`.
    Custom(fn(usize, F) -> F),
}

#[derive(Clone, Debug)]
pub struct PolicyConfig<F> {
    pub kind: PolicyKind,
    pub alpha: F,
    /// Propensity clipping threshold; required for balanced kinds.
    pub gamma: Option<F>,
    pub lambda: LambdaRule<F>,
    /// Monte-Carlo iterations per propensity estimate (BLTS).
    pub mc_iterations: usize,
    /// Reservoir cap on retained posterior snapshots (BLTS).
    pub snapshot_cap: usize,
    /// Recompute all of the chosen arm's propensities over the current
    /// reservoir at every update instead of using cached ones (BLTS).
    pub recompute_propensities: bool,
    /// Refit the logit every period while `t` is at most this (BLUCB).
    pub logit_refit_every_until: usize,
    /// After that, refit every this many periods (BLUCB).
    pub logit_refit_interval: usize,
    /// Force a logit refit every period regardless of `t` (BLUCB).
    pub logit_refit_always: bool,
    pub alpha_schedule: AlphaSchedule<F>,
}

impl<F: Scalar> PolicyConfig<F> {
    pub fn new(kind: PolicyKind, alpha: F) -> Self {
        Self {
            kind,
            alpha,
            gamma: None,
            lambda: LambdaRule::default_grid(),
            mc_iterations: DEFAULT_MC_ITERATIONS,
            snapshot_cap: DEFAULT_SNAPSHOT_CAP,
            recompute_propensities: false,
            logit_refit_every_until: 200,
            logit_refit_interval: 10,
            logit_refit_always: false,
            alpha_schedule: AlphaSchedule::Constant,
        }
    }

    pub fn with_gamma(mut self, gamma: F) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_lambda(mut self, lambda: LambdaRule<F>) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_mc_iterations(mut self, iterations: usize) -> Self {
        self.mc_iterations = iterations;
        self
    }

    fn validate(&self, n_arms: usize) -> Result<()> {
        if n_arms == 0 {
            return Err(Error::invalid("n_arms", "must be at least 1"));
        }
        if !(self.alpha >= F::zero()) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha", "must be finite and nonnegative"));
        }
        match (self.kind.is_balanced(), self.gamma) {
            (true, None) => {
                return Err(Error::invalid("gamma", "required for balanced policies"))
            }
            (true, Some(g)) => {
                if !(g > F::zero()) || !(g <= F::one()) {
                    return Err(Error::invalid("gamma", "must lie in (0, 1]"));
                }
            }
            (false, Some(_)) => {
                return Err(Error::invalid(
                    "gamma",
                    "only meaningful for balanced policies",
                ))
            }
            (false, None) => {}
        }
        if let LambdaRule::CrossValidated(grid) = &self.lambda {
            if grid.is_empty() {
                return Err(Error::invalid("lambda_grid", "must be nonempty"));
            }
            if grid.iter().any(|l| !(*l >= F::zero()) || !l.is_finite()) {
                return Err(Error::invalid("lambda_grid", "entries must be nonnegative"));
            }
        }
        if self.mc_iterations == 0 {
            return Err(Error::invalid("mc_iterations", "must be at least 1"));
        }
        if self.snapshot_cap == 0 {
            return Err(Error::invalid("snapshot_cap", "must be at least 1"));
        }
        if self.logit_refit_interval == 0 {
            return Err(Error::invalid("logit_refit_interval", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Observation<F> {
    context: Vec<F>,
    arm: usize,
    reward: F,
    propensity: F,
    /// Assigned by an explicitly uniform rule (cold start or warm start);
    /// such rows keep their recorded propensity even in recompute mode.
    uniform: bool,
}

#[derive(Clone, Debug)]
struct ArmModel<F> {
    rows: Vec<usize>,
    estimate: Option<LinearEstimate<F>>,
}

impl<F> Default for ArmModel<F> {
    fn default() -> Self {
        Self {
            rows: Vec::new(),
            estimate: None,
        }
    }
}

/// One policy's full mutable state: per-arm models, the observation log,
/// posterior snapshots (BLTS) and the propensity model (BLUCB).
#[derive(Clone, Debug)]
pub struct Policy<F: Scalar> {
    config: PolicyConfig<F>,
    dim: usize,
    n_arms: usize,
    log: Vec<Observation<F>>,
    arms: Vec<ArmModel<F>>,
    snapshots: Vec<PosteriorSnapshot<F>>,
    snapshot_periods_seen: usize,
    logit: Option<LogitModel<F>>,
    steps: usize,
    /// Internal stream for snapshot retention and propensity estimation,
    /// kept separate from the decision stream handed to `choose` so that
    /// balancing bookkeeping never shifts the decision draws.
    aux_rng: ChaCha8Rng,
}

impl<F: Scalar> Policy<F> {
    pub fn new(config: PolicyConfig<F>, dim: usize, n_arms: usize, seed: u64) -> Result<Self> {
        config.validate(n_arms)?;
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        Ok(Self {
            config,
            dim,
            n_arms,
            log: Vec::new(),
            arms: (0..n_arms).map(|_| ArmModel::default()).collect(),
            snapshots: Vec::new(),
            snapshot_periods_seen: 0,
            logit: None,
            steps: 0,
            aux_rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &PolicyConfig<F> {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    /// Number of observations absorbed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn arm_estimate(&self, arm: usize) -> Option<&LinearEstimate<F>> {
        self.arms[arm].estimate.as_ref()
    }

    pub fn arm_observations(&self, arm: usize) -> usize {
        self.arms[arm].rows.len()
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.len()
    }

    pub fn logit_model(&self) -> Option<&LogitModel<F>> {
        self.logit.as_ref()
    }

    /// True while some arm still has no observations.
    pub fn in_cold_start(&self) -> bool {
        self.arms.iter().any(|a| a.estimate.is_none())
    }

    /// Assignment probabilities and clipped weights of every logged
    /// observation, in arrival order.
    pub fn propensity_records(&self) -> Vec<PropensityRecord<F>> {
        self.log
            .iter()
            .enumerate()
            .map(|(index, obs)| PropensityRecord {
                index,
                arm: obs.arm,
                propensity: obs.propensity,
                weight: match self.config.gamma {
                    Some(gamma) => clip_weight(obs.propensity, gamma)
                        .expect("logged propensity and gamma were validated"),
                    None => F::one(),
                },
            })
            .collect()
    }

    /// Picks an arm for context `x` and returns it with its assignment
    /// probability: `1/K` in the uniform cold-start phase, the Monte-Carlo
    /// probability-matching estimate for BLTS and 1 for the deterministic
    /// UCB rules (and for LinTS, whose fits never use propensities).
    pub fn choose<R: Rng + ?Sized>(&mut self, x: &[F], rng: &mut R) -> Result<(usize, F)> {
        self.check_dim(x)?;
        if self.in_cold_start() {
            let arm = rng.random_range(0..self.n_arms);
            return Ok((arm, F::one() / F::cast(self.n_arms as f64)));
        }
        let alpha = self.effective_alpha();
        let arm = if self.config.kind.is_thompson() {
            let mut best = 0usize;
            let mut best_score = F::neg_infinity();
            for (a, model) in self.arms.iter().enumerate() {
                let estimate = model.estimate.as_ref().expect("past cold start");
                let draw = estimate.sample(alpha, rng)?;
                let score = linalg::dot(&draw, x);
                if score > best_score {
                    best_score = score;
                    best = a;
                }
            }
            best
        } else {
            let mut best = 0usize;
            let mut best_score = F::neg_infinity();
            for (a, model) in self.arms.iter().enumerate() {
                let estimate = model.estimate.as_ref().expect("past cold start");
                let score = ucb_index(estimate, x, alpha)?;
                if score > best_score {
                    best_score = score;
                    best = a;
                }
            }
            best
        };
        let probability = if self.config.kind == PolicyKind::Blts {
            let probs = mc_propensities(
                &self.snapshots,
                x,
                alpha,
                self.config.mc_iterations,
                &mut self.aux_rng,
            )?;
            probs[arm]
        } else {
            F::one()
        };
        Ok((arm, probability))
    }

    /// Absorbs one observation: appends it to the chosen arm's history,
    /// recomputes that arm's weights over its full history and refits it.
    /// BLTS additionally snapshots the posterior once every arm has a model;
    /// BLUCB refits its propensity model on the configured cadence.
    pub fn observe(&mut self, x: &[F], arm: usize, reward: F, propensity: F) -> Result<()> {
        let uniform = self.in_cold_start();
        self.observe_inner(x, arm, reward, propensity, uniform)
    }

    /// Like [`Policy::observe`] for observations that were assigned
    /// uniformly at random outside the policy, e.g. a warm-start batch.
    pub fn observe_uniform(&mut self, x: &[F], arm: usize, reward: F, propensity: F) -> Result<()> {
        self.observe_inner(x, arm, reward, propensity, true)
    }

    fn observe_inner(
        &mut self,
        x: &[F],
        arm: usize,
        reward: F,
        propensity: F,
        uniform: bool,
    ) -> Result<()> {
        self.check_dim(x)?;
        if arm >= self.n_arms {
            return Err(Error::UnknownArm {
                arm,
                n_arms: self.n_arms,
            });
        }
        if !(propensity >= F::zero()) || !(propensity <= F::one()) {
            return Err(Error::invalid("propensity", "must lie in [0, 1]"));
        }
        if !reward.is_finite() {
            return Err(Error::invalid("reward", "must be finite"));
        }

        self.log.push(Observation {
            context: x.to_vec(),
            arm,
            reward,
            propensity,
            uniform,
        });
        self.arms[arm].rows.push(self.log.len() - 1);
        self.steps += 1;

        if self.config.kind == PolicyKind::Blucb && self.should_refit_logit() {
            self.refit_logit()?;
        }

        let weights = self.weights_for_arm(arm)?;
        let rows = &self.arms[arm].rows;
        let contexts =
            Matrix::from_rows(&rows.iter().map(|&i| self.log[i].context.clone()).collect::<Vec<_>>())?;
        let rewards: Vec<F> = rows.iter().map(|&i| self.log[i].reward).collect();
        let data = DesignData::new(contexts, rewards, weights)?;
        let lambda = select_lambda(&data, &self.config.lambda)?;
        self.arms[arm].estimate = Some(fit_weighted_ridge(&data, lambda)?);

        if self.config.kind == PolicyKind::Blts && !self.in_cold_start() {
            self.record_snapshot()?;
        }
        Ok(())
    }

    /// Current inverse-propensity weights over one arm's history, in the
    /// arm's own observation order. Unbalanced kinds always weigh 1.
    pub fn weights_for_arm(&mut self, arm: usize) -> Result<Vec<F>> {
        if arm >= self.n_arms {
            return Err(Error::UnknownArm {
                arm,
                n_arms: self.n_arms,
            });
        }
        if self.arms[arm].rows.is_empty() {
            return Err(Error::EmptyArmHistory { arm });
        }
        match self.config.kind {
            PolicyKind::LinTs | PolicyKind::LinUcb => {
                Ok(vec![F::one(); self.arms[arm].rows.len()])
            }
            PolicyKind::Blts => {
                let gamma = self.config.gamma.expect("validated");
                let recompute = self.config.recompute_propensities && !self.snapshots.is_empty();
                let alpha = self.effective_alpha();
                let rows = self.arms[arm].rows.clone();
                let mut weights = Vec::with_capacity(rows.len());
                for i in rows {
                    let obs = &self.log[i];
                    let p = if recompute && !obs.uniform {
                        mc_propensities(
                            &self.snapshots,
                            &obs.context,
                            alpha,
                            self.config.mc_iterations,
                            &mut self.aux_rng,
                        )?[arm]
                    } else {
                        obs.propensity
                    };
                    weights.push(clip_weight(p, gamma)?);
                }
                Ok(weights)
            }
            PolicyKind::Blucb => {
                let gamma = self.config.gamma.expect("validated");
                let fallback = LogitModel::zeros(self.n_arms, self.dim);
                let model = self.logit.as_ref().unwrap_or(&fallback);
                self.arms[arm]
                    .rows
                    .iter()
                    .map(|&i| {
                        let p = model.predict(&self.log[i].context)?[arm];
                        clip_weight(p, gamma)
                    })
                    .collect()
            }
        }
    }

    /// Exploration-free argmax of the estimated means, or `None` while some
    /// arm is still unmodeled.
    pub fn greedy_arm(&self, x: &[F]) -> Result<Option<usize>> {
        self.check_dim(x)?;
        let mut best = 0usize;
        let mut best_score = F::neg_infinity();
        for (a, model) in self.arms.iter().enumerate() {
            let Some(estimate) = model.estimate.as_ref() else {
                return Ok(None);
            };
            let score = estimate.mean(x)?;
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        Ok(Some(best))
    }

    fn effective_alpha(&self) -> F {
        match self.config.alpha_schedule {
            AlphaSchedule::Constant => self.config.alpha,
            AlphaSchedule::Custom(f) => f(self.steps, self.config.alpha),
        }
    }

    fn should_refit_logit(&self) -> bool {
        self.config.logit_refit_always
            || self.steps <= self.config.logit_refit_every_until
            || self.steps % self.config.logit_refit_interval == 0
    }

    fn refit_logit(&mut self) -> Result<()> {
        let contexts = Matrix::from_rows(
            &self.log.iter().map(|o| o.context.clone()).collect::<Vec<_>>(),
        )?;
        let labels: Vec<usize> = self.log.iter().map(|o| o.arm).collect();
        let model = fit_multinomial_logit(
            &contexts,
            &labels,
            self.n_arms,
            &LogitFitOptions::default(),
            self.logit.as_ref(),
        )?;
        self.logit = Some(model);
        Ok(())
    }

    fn record_snapshot(&mut self) -> Result<()> {
        let estimates: Vec<&LinearEstimate<F>> = self
            .arms
            .iter()
            .map(|a| a.estimate.as_ref().expect("all arms modeled"))
            .collect();
        let snapshot = PosteriorSnapshot::from_estimates(self.steps, &estimates)?;
        self.snapshot_periods_seen += 1;
        if self.snapshots.len() < self.config.snapshot_cap {
            self.snapshots.push(snapshot);
        } else {
            // reservoir sampling keeps the retained set uniform over periods
            let j = self.aux_rng.random_range(0..self.snapshot_periods_seen);
            if j < self.config.snapshot_cap {
                self.snapshots[j] = snapshot;
            }
        }
        Ok(())
    }

    fn check_dim(&self, x: &[F]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Upper confidence index `x^T θ̂ + α sqrt(x^T V x)`.
pub fn ucb_index<F: Scalar>(estimate: &LinearEstimate<F>, x: &[F], alpha: F) -> Result<F> {
    Ok(estimate.mean(x)? + alpha * estimate.variance(x)?.sqrt())
}

/// Applies a [`LambdaRule`] to one arm's current design.
pub fn select_lambda<F: Scalar>(data: &DesignData<F>, rule: &LambdaRule<F>) -> Result<F> {
    match rule {
        LambdaRule::Fixed(lambda) => Ok(*lambda),
        LambdaRule::CrossValidated(grid) => {
            if grid.is_empty() {
                return Err(Error::invalid("lambda_grid", "must be nonempty"));
            }
            if data.len() < CV_MIN_OBSERVATIONS {
                return Ok(F::cast(CV_FALLBACK_LAMBDA));
            }
            cross_validate_lambda(data, grid)
        }
    }
}

fn cross_validate_lambda<F: Scalar>(data: &DesignData<F>, grid: &[F]) -> Result<F> {
    let n = data.len();
    let folds: Vec<usize> = (0..n).map(|i| i % CV_FOLDS).collect();
    let mut best: Option<(F, F)> = None; // (lambda, score)
    for &lambda in grid {
        let mut score = F::zero();
        let mut valid = true;
        for fold in 0..CV_FOLDS {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
            if train.is_empty() || test.is_empty() {
                continue;
            }
            let contexts = Matrix::from_rows(
                &train.iter().map(|&i| data.contexts().row(i).to_vec()).collect::<Vec<_>>(),
            )?;
            let rewards: Vec<F> = train.iter().map(|&i| data.rewards()[i]).collect();
            let weights: Vec<F> = train.iter().map(|&i| data.weights()[i]).collect();
            let sub = DesignData::new(contexts, rewards, weights)?;
            match fit_weighted_ridge(&sub, lambda) {
                Ok(estimate) => {
                    for &i in &test {
                        let resid = data.rewards()[i]
                            - estimate.mean(data.contexts().row(i))?;
                        score += data.weights()[i] * resid * resid;
                    }
                }
                Err(Error::SingularSystem) => {
                    valid = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !valid || !score.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, best_score)) => score < best_score,
        };
        if better {
            best = Some((lambda, score));
        }
    }
    best.map(|(lambda, _)| lambda).ok_or(Error::SingularSystem)
}
