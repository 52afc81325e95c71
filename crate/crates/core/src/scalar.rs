//! Floating-point abstraction used by every numeric module.
//!
//! All estimation and policy math is generic over [`Scalar`] so the same code
//! runs in `f32` or `f64`. The benchmark harness and CLI instantiate `f64`;
//! `f32` is mainly useful for memory-constrained embedding of the policies.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

/// Scalar type for contexts, rewards, weights and model parameters.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// One draw from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal. Panics on values that cannot
    /// be represented at all (never the case for finite constants).
    fn cast(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 literal")
    }

    /// Lossy conversion to `f64` for logging and reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cast_round_trips_literals() {
        assert_eq!(f64::cast(0.25), 0.25);
        assert_eq!(f32::cast(0.25), 0.25f32);
    }

    #[test]
    fn standard_normal_is_seed_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..16 {
            assert_eq!(f64::standard_normal(&mut a), f64::standard_normal(&mut b));
        }
    }
}
