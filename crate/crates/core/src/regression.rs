//! Weighted ridge regression and the Gaussian posterior built from it.
//!
//! Every policy estimates one linear reward model per arm. The balanced
//! policies reweight each arm's history by clipped inverse propensities, so
//! the estimator here is the weighted form; unit weights recover plain ridge
//! regression.
//!
//! For weights `W = diag(w)` and ridge `λ`:
//!
//! ```text
//! B      = X^T W X + λI
//! θ̂      = B^{-1} X^T W r
//! V(θ̂)   = B^{-1} · (r − Xθ̂)^T W (r − Xθ̂)
//! ```
//!
//! The covariance is the scalar weighted residual sum of squares times
//! `B^{-1}`, with no degrees-of-freedom correction.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// One arm's regression inputs: contexts, rewards and per-row weights.
#[derive(Clone, Debug)]
pub struct DesignData<F> {
    x: Matrix<F>,
    rewards: Vec<F>,
    weights: Vec<F>,
}

impl<F: Scalar> DesignData<F> {
    /// Validates shapes and requires every weight to be strictly positive.
    pub fn new(x: Matrix<F>, rewards: Vec<F>, weights: Vec<F>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::EmptyDesign);
        }
        if rewards.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: rewards.len(),
            });
        }
        if weights.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: weights.len(),
            });
        }
        for (index, w) in weights.iter().enumerate() {
            if !(*w > F::zero()) || !w.is_finite() {
                return Err(Error::NonPositiveWeight {
                    index,
                    value: w.to_f64_lossy(),
                });
            }
        }
        Ok(Self { x, rewards, weights })
    }

    /// Unit-weight design, as used by the unbalanced policies.
    pub fn unweighted(x: Matrix<F>, rewards: Vec<F>) -> Result<Self> {
        let n = x.nrows();
        Self::new(x, rewards, vec![F::one(); n])
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn contexts(&self) -> &Matrix<F> {
        &self.x
    }

    pub fn rewards(&self) -> &[F] {
        &self.rewards
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }
}

/// Fitted coefficients with their covariance.
#[derive(Clone, Debug)]
pub struct LinearEstimate<F> {
    theta_hat: Vec<F>,
    covariance: Matrix<F>,
    ridge: F,
}

impl<F: Scalar> LinearEstimate<F> {
    /// Wraps externally computed pieces. The covariance must be square,
    /// match `theta_hat`, and be symmetric (checked up to round-off).
    pub fn new(theta_hat: Vec<F>, covariance: Matrix<F>, ridge: F) -> Result<Self> {
        if covariance.nrows() != theta_hat.len() || covariance.ncols() != theta_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: theta_hat.len(),
                got: covariance.nrows(),
            });
        }
        let max_abs = covariance
            .as_slice()
            .iter()
            .fold(F::zero(), |acc, v| acc.max(v.abs()));
        let tol = F::cast(1e-8) * (F::one() + max_abs);
        if !covariance.is_symmetric(tol) {
            return Err(Error::invalid("covariance", "matrix is not symmetric"));
        }
        if !(ridge >= F::zero()) {
            return Err(Error::invalid("ridge", "must be nonnegative"));
        }
        Ok(Self {
            theta_hat,
            covariance,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn theta(&self) -> &[F] {
        &self.theta_hat
    }

    pub fn covariance(&self) -> &Matrix<F> {
        &self.covariance
    }

    pub fn ridge(&self) -> F {
        self.ridge
    }

    /// Conditional mean `x^T θ̂`.
    pub fn mean(&self, x: &[F]) -> Result<F> {
        self.check_dim(x)?;
        Ok(linalg::dot(&self.theta_hat, x))
    }

    /// Quadratic form `x^T V x`, clamped at zero against round-off.
    pub fn variance(&self, x: &[F]) -> Result<F> {
        self.check_dim(x)?;
        Ok(linalg::quad_form(&self.covariance, x).max(F::zero()))
    }

    /// One draw from `N(θ̂, α² V)`. `alpha = 0` returns `θ̂` exactly and
    /// consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, alpha: F, rng: &mut R) -> Result<Vec<F>> {
        if !(alpha >= F::zero()) || !alpha.is_finite() {
            return Err(Error::invalid("alpha", "must be finite and nonnegative"));
        }
        if alpha == F::zero() {
            return Ok(self.theta_hat.clone());
        }
        let root = self.covariance_root()?;
        Ok(root.draw(&self.theta_hat, alpha, rng))
    }

    /// Lower-triangular square root of the covariance.
    ///
    /// The covariance can be rank-deficient (zero residuals, short
    /// histories), so on factorization failure a diagonal jitter of
    /// `10^{-10} · trace(V)/d` is added, escalating tenfold up to
    /// `10^{-4} · trace(V)/d` before giving up.
    pub fn covariance_root(&self) -> Result<CovarianceRoot<F>> {
        if self.covariance.as_slice().iter().all(|v| *v == F::zero()) {
            return Ok(CovarianceRoot::Zero);
        }
        if let Ok(l) = linalg::cholesky(&self.covariance) {
            return Ok(CovarianceRoot::Factor(l));
        }
        let base = self.covariance.trace() / F::cast(self.dim() as f64);
        for exp in -10..=-4 {
            let mut jittered = self.covariance.clone();
            jittered.add_diagonal(F::cast(10f64.powi(exp)) * base);
            if let Ok(l) = linalg::cholesky(&jittered) {
                return Ok(CovarianceRoot::Factor(l));
            }
        }
        Err(Error::FactorizationFailed)
    }

    fn check_dim(&self, x: &[F]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Factored covariance used for repeated Gaussian draws.
#[derive(Clone, Debug)]
pub enum CovarianceRoot<F> {
    /// Zero covariance: the draw is the mean itself.
    Zero,
    /// Lower-triangular factor `L` with `V ≈ L L^T`.
    Factor(Matrix<F>),
}

impl<F: Scalar> CovarianceRoot<F> {
    /// `mean + α L z` with `z ~ N(0, I)`. The `Zero` root consumes no
    /// randomness so degenerate posteriors stay replayable.
    pub fn draw<R: Rng + ?Sized>(&self, mean: &[F], alpha: F, rng: &mut R) -> Vec<F> {
        match self {
            CovarianceRoot::Zero => mean.to_vec(),
            CovarianceRoot::Factor(l) => {
                let d = mean.len();
                let z: Vec<F> = (0..d).map(|_| F::standard_normal(rng)).collect();
                let mut out = mean.to_vec();
                for i in 0..d {
                    let mut s = F::zero();
                    for k in 0..=i {
                        s += l[(i, k)] * z[k];
                    }
                    out[i] += alpha * s;
                }
                out
            }
        }
    }
}

/// Solves the weighted ridge normal equations and attaches the covariance.
///
/// `lambda = 0` is allowed only when `X^T W X` is invertible; otherwise the
/// solve fails with [`Error::SingularSystem`]. `B` is factored rather than
/// inverted; `B^{-1}` is materialized only for the covariance output.
pub fn fit_weighted_ridge<F: Scalar>(data: &DesignData<F>, lambda: F) -> Result<LinearEstimate<F>> {
    if !(lambda >= F::zero()) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite and nonnegative"));
    }
    let n = data.len();
    let d = data.dim();
    let x = data.contexts();

    let mut b = Matrix::zeros(d, d);
    let mut xtwr = vec![F::zero(); d];
    for i in 0..n {
        let row = x.row(i);
        let w = data.weights[i];
        let wr = w * data.rewards[i];
        for j in 0..d {
            let wxj = w * row[j];
            xtwr[j] += wr * row[j];
            for k in 0..=j {
                b[(j, k)] += wxj * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            b[(k, j)] = b[(j, k)];
        }
    }
    b.add_diagonal(lambda);

    let factor = linalg::cholesky(&b)?;
    let theta_hat = linalg::cholesky_solve(&factor, &xtwr);

    let mut wrss = F::zero();
    for i in 0..n {
        let resid = data.rewards[i] - linalg::dot(x.row(i), &theta_hat);
        wrss += data.weights[i] * resid * resid;
    }

    let covariance = if wrss == F::zero() {
        Matrix::zeros(d, d)
    } else {
        let mut inv = linalg::cholesky_inverse(&factor);
        inv.scale(wrss);
        inv
    };

    Ok(LinearEstimate {
        theta_hat,
        covariance,
        ridge: lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent check: form B and solve the normal equations by explicit
    /// Gauss-Jordan inversion. Deliberately avoids the Cholesky path.
    fn brute_force_fit(
        x: &[Vec<f64>],
        r: &[f64],
        w: &[f64],
        lambda: f64,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = x.len();
        let d = x[0].len();
        let mut b = vec![vec![0.0; d]; d];
        let mut c = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                c[j] += w[i] * r[i] * x[i][j];
                for k in 0..d {
                    b[j][k] += w[i] * x[i][j] * x[i][k];
                }
            }
        }
        for j in 0..d {
            b[j][j] += lambda;
        }
        let binv = invert(&b);
        let theta: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|k| binv[j][k] * c[k]).sum())
            .collect();
        let mut rss = 0.0;
        for i in 0..n {
            let pred: f64 = (0..d).map(|j| x[i][j] * theta[j]).sum();
            rss += w[i] * (r[i] - pred) * (r[i] - pred);
        }
        let cov = binv
            .iter()
            .map(|row| row.iter().map(|v| v * rss).collect())
            .collect();
        (theta, cov)
    }

    fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = m.len();
        let mut a: Vec<Vec<f64>> = m
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut ext = row.clone();
                ext.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                ext
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            let div = a[col][col];
            assert!(div.abs() > 1e-12, "oracle hit a singular matrix");
            for v in &mut a[col] {
                *v /= div;
            }
            for row in 0..n {
                if row != col {
                    let f = a[row][col];
                    for j in 0..2 * n {
                        a[row][j] -= f * a[col][j];
                    }
                }
            }
        }
        a.iter().map(|row| row[n..].to_vec()).collect()
    }

    fn design(x: &[Vec<f64>], r: &[f64], w: &[f64]) -> DesignData<f64> {
        DesignData::new(Matrix::from_rows(&x.to_vec()).unwrap(), r.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        let est = fit_weighted_ridge(&design(&[vec![1.0]], &[2.0], &[1.0]), 1.0).unwrap();
        assert_relative_eq!(est.theta()[0], 1.0);
        assert_relative_eq!(est.covariance()[(0, 0)], 0.5);
    }

    #[test]
    fn zero_rewards_give_zero_solution_and_covariance() {
        let x = vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]];
        let est = fit_weighted_ridge(&design(&x, &[0.0; 3], &[1.0, 2.0, 0.5]), 0.7).unwrap();
        assert!(est.theta().iter().all(|v| *v == 0.0));
        assert!(est.covariance().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matches_brute_force_oracle_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = vec![1.0; 5];
        let est = fit_weighted_ridge(&design(&x, &r, &w), 0.3).unwrap();
        let (theta, cov) = brute_force_fit(&x, &r, &w, 0.3);
        for j in 0..2 {
            assert_relative_eq!(est.theta()[j], theta[j], max_relative = 1e-10);
            for k in 0..2 {
                assert_relative_eq!(est.covariance()[(j, k)], cov[j][k], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn unit_weights_equal_plain_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(3..12);
            let d = rng.random_range(1..4);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let est = fit_weighted_ridge(&design(&x, &r, &vec![1.0; n]), 0.5).unwrap();
            let (theta, _) = brute_force_fit(&x, &r, &vec![1.0; n], 0.5);
            for j in 0..d {
                assert_relative_eq!(est.theta()[j], theta[j], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn rescaling_weights_and_ridge_preserves_theta() {
        let x = vec![vec![1.0, 0.3], vec![-0.4, 1.1], vec![0.9, -0.7], vec![0.2, 0.2]];
        let r = vec![1.0, -0.5, 0.25, 2.0];
        let w = vec![0.5, 2.0, 1.5, 3.0];
        let c = 7.5;
        let a = fit_weighted_ridge(&design(&x, &r, &w), 0.8).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let b = fit_weighted_ridge(&design(&x, &r, &scaled), 0.8 * c).unwrap();
        for j in 0..2 {
            assert_relative_eq!(a.theta()[j], b.theta()[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn growing_ridge_shrinks_theta_monotonically() {
        let x = vec![vec![1.0, 0.5], vec![0.5, -1.0], vec![-0.25, 0.75]];
        let r = vec![1.0, 2.0, -1.0];
        let w = vec![1.0; 3];
        let mut last = f64::INFINITY;
        for lambda in [1e-2, 1e0, 1e2, 1e4, 1e6, 1e8] {
            let est = fit_weighted_ridge(&design(&x, &r, &w), lambda).unwrap();
            let norm = est.theta().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < last, "norm should shrink with lambda");
            last = norm;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn singular_system_without_ridge_is_an_error() {
        // one row, two columns: X^T X has rank 1
        let data = design(&[vec![1.0, 2.0]], &[1.0], &[1.0]);
        assert!(matches!(
            fit_weighted_ridge(&data, 0.0),
            Err(Error::SingularSystem)
        ));
        assert!(fit_weighted_ridge(&data, 0.1).is_ok());
    }

    #[test]
    fn non_positive_weight_is_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let err = DesignData::new(x, vec![1.0, 2.0], vec![1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveWeight { index: 1, .. }));
    }

    #[test]
    fn mean_is_the_inner_product() {
        let est = LinearEstimate::new(vec![1.0, 2.0], Matrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(est.mean(&[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(est.mean(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(est.mean(&[1.0]).is_err());
        let zero = LinearEstimate::new(vec![0.0, 0.0], Matrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(zero.mean(&[3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn variance_quadratic_forms() {
        let ident = LinearEstimate::new(vec![0.0, 0.0], Matrix::identity(2), 1.0).unwrap();
        assert_eq!(ident.variance(&[1.0, 0.0]).unwrap(), 1.0);
        let zero = LinearEstimate::new(vec![0.0, 0.0], Matrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(zero.variance(&[5.0, -3.0]).unwrap(), 0.0);
        let diag = LinearEstimate::new(
            vec![0.0, 0.0],
            Matrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 3.0]),
            1.0,
        )
        .unwrap();
        assert_eq!(diag.variance(&[1.0, 1.0]).unwrap(), 5.0);
    }

    #[test]
    fn sampling_degenerate_cases_return_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zero_cov = LinearEstimate::new(vec![1.5, -2.0], Matrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(zero_cov.sample(3.0, &mut rng).unwrap(), vec![1.5, -2.0]);
        let ident = LinearEstimate::new(vec![1.5, -2.0], Matrix::identity(2), 1.0).unwrap();
        assert_eq!(ident.sample(0.0, &mut rng).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn sample_variance_close_to_unit() {
        let est = LinearEstimate::new(vec![0.0], Matrix::identity(1), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| est.sample(1.0, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (draws.len() - 1) as f64;
        assert!((0.94..=1.06).contains(&var), "sample variance {var}");
    }

    #[test]
    fn sampling_is_replayable() {
        let est = LinearEstimate::new(
            vec![1.0, 2.0],
            Matrix::from_vec(2, 2, vec![1.0, 0.2, 0.2, 2.0]),
            1.0,
        )
        .unwrap();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..8).map(|_| est.sample(0.7, &mut rng).unwrap()).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..8).map(|_| est.sample(0.7, &mut rng).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn rank_deficient_covariance_samples_after_jitter() {
        // rank-1 PSD matrix, exact Cholesky fails on the second pivot
        let cov = Matrix::from_vec(2, 2, vec![1.0f64, 1.0, 1.0, 1.0]);
        let est = LinearEstimate::new(vec![0.0, 0.0], cov, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = est.sample(1.0, &mut rng).unwrap();
        assert!(draw.iter().all(|v| v.is_finite()));
        // the two coordinates move together up to the jitter scale
        assert!((draw[0] - draw[1]).abs() < 1e-3);
    }
}
