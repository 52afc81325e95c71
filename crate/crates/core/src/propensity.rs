//! Assignment-probability estimation and inverse-propensity clipping.
//!
//! The balanced Thompson-sampling policy knows its assignment probabilities
//! only implicitly, so they are approximated by Monte-Carlo probability
//! matching over frozen posterior snapshots. The balanced UCB policy has a
//! deterministic rule and instead estimates propensities with a multinomial
//! logistic regression over the assignment log. Both feed weights
//! `w = 1 / max(γ, p)` into the per-arm weighted ridge fits.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::regression::{CovarianceRoot, LinearEstimate};
use crate::scalar::Scalar;

/// Default Monte-Carlo iteration count (binomial standard error ≤ 1.6%).
pub const DEFAULT_MC_ITERATIONS: usize = 1000;
/// Default cap on retained posterior snapshots.
pub const DEFAULT_SNAPSHOT_CAP: usize = 512;

/// Inverse propensity with the score floored at `gamma`.
///
/// `gamma = 1` disables balancing (every weight becomes 1), which is the
/// degenerate configuration that reduces the balanced policies to their
/// unbalanced counterparts.
pub fn clip_weight<F: Scalar>(p: F, gamma: F) -> Result<F> {
    if !(gamma > F::zero()) || !(gamma <= F::one()) {
        return Err(Error::invalid("gamma", "must lie in (0, 1]"));
    }
    if !(p >= F::zero()) || !(p <= F::one()) {
        return Err(Error::invalid("propensity", "must lie in [0, 1]"));
    }
    Ok(F::one() / gamma.max(p))
}

/// One historical observation's assignment probability and clipped weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropensityRecord<F> {
    /// Index of the observation in arrival order.
    pub index: usize,
    /// Arm the observation was assigned to.
    pub arm: usize,
    /// Probability of that assignment at decision time.
    pub propensity: F,
    /// `1 / max(γ, propensity)`; 1 for unbalanced policies.
    pub weight: F,
}

/// One arm's frozen posterior: mean and factored covariance.
#[derive(Clone, Debug)]
pub struct ArmPosterior<F> {
    mean: Vec<F>,
    root: CovarianceRoot<F>,
}

impl<F: Scalar> ArmPosterior<F> {
    pub fn from_estimate(estimate: &LinearEstimate<F>) -> Result<Self> {
        Ok(Self {
            mean: estimate.theta().to_vec(),
            root: estimate.covariance_root()?,
        })
    }

    pub fn mean(&self) -> &[F] {
        &self.mean
    }

    /// One draw from `N(mean, α² V)`.
    pub fn draw<R: Rng + ?Sized>(&self, alpha: F, rng: &mut R) -> Vec<F> {
        if alpha == F::zero() {
            return self.mean.clone();
        }
        self.root.draw(&self.mean, alpha, rng)
    }
}

/// Per-arm posteriors frozen at the end of one time period.
#[derive(Clone, Debug)]
pub struct PosteriorSnapshot<F> {
    period: usize,
    arms: Vec<ArmPosterior<F>>,
}

impl<F: Scalar> PosteriorSnapshot<F> {
    /// Freezes the given per-arm estimates. Covariances are factored once
    /// here so repeated Monte-Carlo draws stay cheap.
    pub fn from_estimates(period: usize, estimates: &[&LinearEstimate<F>]) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::EmptyDesign);
        }
        let arms = estimates
            .iter()
            .map(|est| ArmPosterior::from_estimate(est))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { period, arms })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn dim(&self) -> usize {
        self.arms[0].mean.len()
    }

    pub fn arm(&self, a: usize) -> &ArmPosterior<F> {
        &self.arms[a]
    }
}

/// Monte-Carlo assignment probabilities for every arm at context `x`.
///
/// Each iteration picks one snapshot uniformly at random, draws a parameter
/// vector for every arm from that snapshot, and credits the arm with the
/// highest sampled reward (lowest index on ties). The result is the vector
/// of credited fractions, which sums to one by construction.
pub fn mc_propensities<F: Scalar, R: Rng + ?Sized>(
    snapshots: &[PosteriorSnapshot<F>],
    x: &[F],
    alpha: F,
    iterations: usize,
    rng: &mut R,
) -> Result<Vec<F>> {
    if snapshots.is_empty() {
        return Err(Error::NoSnapshots);
    }
    if iterations == 0 {
        return Err(Error::invalid("iterations", "must be at least 1"));
    }
    if !(alpha >= F::zero()) || !alpha.is_finite() {
        return Err(Error::invalid("alpha", "must be finite and nonnegative"));
    }
    let k = snapshots[0].n_arms();
    let dim = snapshots[0].dim();
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }

    // Per (snapshot, arm): x^T θ̃ = x^T mean + α (L^T x)^T z, so precompute
    // the base score and L^T x once and draw only the z's in the hot loop.
    struct Projected<F> {
        base: F,
        axis: Option<Vec<F>>,
    }
    let projected: Vec<Vec<Projected<F>>> = snapshots
        .iter()
        .map(|snap| {
            snap.arms
                .iter()
                .map(|arm| {
                    let base = linalg::dot(&arm.mean, x);
                    let axis = match &arm.root {
                        CovarianceRoot::Zero => None,
                        CovarianceRoot::Factor(l) => {
                            let u: Vec<F> = (0..dim)
                                .map(|kk| {
                                    (kk..dim).map(|i| l[(i, kk)] * x[i]).sum::<F>()
                                })
                                .collect();
                            Some(u)
                        }
                    };
                    Projected { base, axis }
                })
                .collect()
        })
        .collect();

    let mut counts = vec![0usize; k];
    for _ in 0..iterations {
        let snap = &projected[rng.random_range(0..projected.len())];
        let mut best = 0usize;
        let mut best_score = F::neg_infinity();
        for (arm, proj) in snap.iter().enumerate() {
            let score = match &proj.axis {
                None => proj.base,
                Some(u) => {
                    let mut s = F::zero();
                    for &uk in u {
                        s += uk * F::standard_normal(rng);
                    }
                    proj.base + alpha * s
                }
            };
            if score > best_score {
                best_score = score;
                best = arm;
            }
        }
        counts[best] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| F::cast(c as f64) / F::cast(iterations as f64))
        .collect())
}

/// Monte-Carlo assignment probability of a single arm.
pub fn mc_propensity<F: Scalar, R: Rng + ?Sized>(
    snapshots: &[PosteriorSnapshot<F>],
    x: &[F],
    arm: usize,
    alpha: F,
    iterations: usize,
    rng: &mut R,
) -> Result<F> {
    let probs = mc_propensities(snapshots, x, alpha, iterations, rng)?;
    probs.get(arm).copied().ok_or(Error::UnknownArm {
        arm,
        n_arms: probs.len(),
    })
}

/// Softmax regression over arms, with an intercept per arm.
#[derive(Clone, Debug)]
pub struct LogitModel<F> {
    /// K × (d+1) coefficients; column 0 is the intercept.
    coef: Matrix<F>,
    l2: F,
    converged: bool,
}

impl<F: Scalar> LogitModel<F> {
    /// All-zero model: predicts the uniform distribution everywhere.
    pub fn zeros(n_arms: usize, dim: usize) -> Self {
        Self {
            coef: Matrix::zeros(n_arms, dim + 1),
            l2: F::zero(),
            converged: true,
        }
    }

    pub fn from_coefficients(coef: Matrix<F>, l2: F) -> Self {
        Self {
            coef,
            l2,
            converged: true,
        }
    }

    pub fn n_arms(&self) -> usize {
        self.coef.nrows()
    }

    /// Feature dimension, excluding the intercept.
    pub fn dim(&self) -> usize {
        self.coef.ncols() - 1
    }

    /// L2 penalty the model was trained with.
    pub fn l2(&self) -> F {
        self.l2
    }

    /// False when the fit stopped at the iteration cap instead of the
    /// gradient tolerance. Predictions are valid probabilities either way.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn coefficients(&self) -> &Matrix<F> {
        &self.coef
    }

    /// Softmax probabilities over arms for context `x`.
    pub fn predict(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let scores: Vec<F> = (0..self.n_arms())
            .map(|a| {
                let row = self.coef.row(a);
                row[0] + linalg::dot(&row[1..], x)
            })
            .collect();
        Ok(softmax(&scores))
    }
}

fn softmax<F: Scalar>(scores: &[F]) -> Vec<F> {
    let max = scores.iter().fold(F::neg_infinity(), |m, &s| m.max(s));
    let exps: Vec<F> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient-descent settings for [`fit_multinomial_logit`].
#[derive(Clone, Copy, Debug)]
pub struct LogitFitOptions<F> {
    pub l2: F,
    pub grad_tol: F,
    pub max_iters: usize,
}

impl<F: Scalar> Default for LogitFitOptions<F> {
    fn default() -> Self {
        Self {
            l2: F::cast(1e-4),
            grad_tol: F::cast(1e-6),
            max_iters: 500,
        }
    }
}

/// Mean penalized negative log-likelihood and its gradient.
///
/// The objective is `(1/n) Σ_i −log softmax(Θ x̃_i)[y_i] + (l2/2) ‖Θ‖²`
/// with `x̃ = (1, x)`. Exposed so the analytic gradient can be checked
/// against finite differences.
pub fn logit_objective<F: Scalar>(
    coef: &Matrix<F>,
    contexts: &Matrix<F>,
    labels: &[usize],
    l2: F,
) -> Result<(F, Matrix<F>)> {
    let (value, grad) = logit_eval(coef, contexts, labels, l2, true)?;
    Ok((value, grad.expect("gradient requested")))
}

fn logit_eval<F: Scalar>(
    coef: &Matrix<F>,
    contexts: &Matrix<F>,
    labels: &[usize],
    l2: F,
    want_grad: bool,
) -> Result<(F, Option<Matrix<F>>)> {
    let n = contexts.nrows();
    let d = contexts.ncols();
    let k = coef.nrows();
    if coef.ncols() != d + 1 {
        return Err(Error::DimensionMismatch {
            expected: d + 1,
            got: coef.ncols(),
        });
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyDesign);
    }

    let inv_n = F::one() / F::cast(n as f64);
    let mut nll = F::zero();
    let mut grad = want_grad.then(|| Matrix::zeros(k, d + 1));
    let mut scores = vec![F::zero(); k];
    for i in 0..n {
        let x = contexts.row(i);
        let y = labels[i];
        if y >= k {
            return Err(Error::UnknownArm { arm: y, n_arms: k });
        }
        for (a, s) in scores.iter_mut().enumerate() {
            let row = coef.row(a);
            *s = row[0] + linalg::dot(&row[1..], x);
        }
        let max = scores.iter().fold(F::neg_infinity(), |m, &s| m.max(s));
        let lse = max + scores.iter().map(|&s| (s - max).exp()).sum::<F>().ln();
        nll += lse - scores[y];
        if let Some(g) = grad.as_mut() {
            for a in 0..k {
                let p = (scores[a] - lse).exp();
                let delta = if a == y { p - F::one() } else { p } * inv_n;
                let row = g.row_mut(a);
                row[0] += delta;
                for j in 0..d {
                    row[j + 1] += delta * x[j];
                }
            }
        }
    }

    let half = F::cast(0.5);
    let penalty: F = coef.as_slice().iter().map(|&v| v * v).sum::<F>() * half * l2;
    let value = nll * inv_n + penalty;
    if let Some(g) = grad.as_mut() {
        for (gv, &cv) in g.as_mut_slice().iter_mut().zip(coef.as_slice()) {
            *gv += l2 * cv;
        }
    }
    Ok((value, grad))
}

/// Fits the softmax regression by full-batch gradient descent with a
/// backtracking line search. Non-convergence within the iteration cap is
/// reported through [`LogitModel::converged`], not as an error.
pub fn fit_multinomial_logit<F: Scalar>(
    contexts: &Matrix<F>,
    labels: &[usize],
    n_arms: usize,
    options: &LogitFitOptions<F>,
    warm_start: Option<&LogitModel<F>>,
) -> Result<LogitModel<F>> {
    if n_arms == 0 {
        return Err(Error::invalid("n_arms", "must be at least 1"));
    }
    let d = contexts.ncols();
    let mut coef = match warm_start {
        Some(model) if model.n_arms() == n_arms && model.dim() == d => model.coef.clone(),
        _ => Matrix::zeros(n_arms, d + 1),
    };

    let armijo = F::cast(1e-4);
    let (mut value, mut grad) = logit_objective(&coef, contexts, labels, options.l2)?;
    let mut previous: Option<(Matrix<F>, Matrix<F>)> = None;
    let mut converged = false;
    for _ in 0..options.max_iters {
        let grad_sq: F = grad.as_slice().iter().map(|&g| g * g).sum();
        if grad_sq.sqrt() <= options.grad_tol {
            converged = true;
            break;
        }
        // Barzilai-Borwein step from the last accepted move, safeguarded by
        // Armijo backtracking below.
        let mut step = match &previous {
            Some((prev_coef, prev_grad)) => {
                let mut dx_dx = F::zero();
                let mut dx_dg = F::zero();
                for ((&c, &pc), (&g, &pg)) in coef
                    .as_slice()
                    .iter()
                    .zip(prev_coef.as_slice())
                    .zip(grad.as_slice().iter().zip(prev_grad.as_slice()))
                {
                    let dx = c - pc;
                    let dg = g - pg;
                    dx_dx += dx * dx;
                    dx_dg += dx * dg;
                }
                if dx_dg > F::zero() && dx_dx > F::zero() {
                    (dx_dx / dx_dg).min(F::cast(1e6))
                } else {
                    F::one()
                }
            }
            None => F::one(),
        };
        let mut accepted = false;
        while step > F::cast(1e-20) {
            let mut candidate = coef.clone();
            for (c, &g) in candidate.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                *c -= step * g;
            }
            let (cand_value, _) = logit_eval(&candidate, contexts, labels, options.l2, false)?;
            if cand_value <= value - armijo * step * grad_sq {
                let (_, cand_grad) = logit_objective(&candidate, contexts, labels, options.l2)?;
                previous = Some((coef, grad));
                coef = candidate;
                value = cand_value;
                grad = cand_grad;
                accepted = true;
                break;
            }
            step = step * F::cast(0.5);
        }
        if !accepted {
            break;
        }
    }

    Ok(LogitModel {
        coef,
        l2: options.l2,
        converged,
    })
}
