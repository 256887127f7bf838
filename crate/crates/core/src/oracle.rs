//! Score and energy-difference queries with bounded, deterministic error.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, RtkError};
use crate::mixture::IsotropicGaussianMixture;
use crate::rng::hash_words;

/// What an inner sampler may ask of a diffusion model.
pub trait ScoreModel: Sync {
    fn dim(&self) -> usize;

    /// Estimate of `grad ln p_t(x)`.
    fn score(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64>;

    /// Estimate of `f_t(z2) - f_t(z)` where `f_t = -ln p_t`.
    fn energy_difference(&self, t: f64, z: ArrayView1<f64>, z2: ArrayView1<f64>) -> f64;

    /// Upper bound on the Hessian of `f_t`, when known.
    fn smoothness_bound(&self, _t: f64) -> Option<f64> {
        None
    }

    /// `E ||x_0||^2`, when known.
    fn second_moment(&self) -> Option<f64> {
        None
    }
}

// Grid used to quantize coordinates before hashing.
const QUANTUM: f64 = 1.0 / (1u64 << 32) as f64;
// Keeps the realized error strictly inside the bound after rounding.
const BOUND_SLACK: f64 = 1.0 - 1e-9;

#[derive(Clone, Debug)]
pub struct ScoreOracle {
    base: IsotropicGaussianMixture,
    score_error: f64,
    energy_error: f64,
    error_seed: u64,
}

impl ScoreOracle {
    pub fn exact(base: IsotropicGaussianMixture) -> Self {
        Self {
            base,
            score_error: 0.0,
            energy_error: 0.0,
            error_seed: 0,
        }
    }

    pub fn with_errors(
        base: IsotropicGaussianMixture,
        score_error: f64,
        energy_error: f64,
        error_seed: u64,
    ) -> Result<Self> {
        if !(score_error >= 0.0 && score_error.is_finite()) {
            return Err(RtkError::param("score_error", "must be finite and nonnegative"));
        }
        if !(energy_error >= 0.0 && energy_error.is_finite()) {
            return Err(RtkError::param("energy_error", "must be finite and nonnegative"));
        }
        Ok(Self {
            base,
            score_error,
            energy_error,
            error_seed,
        })
    }

    pub fn base(&self) -> &IsotropicGaussianMixture {
        &self.base
    }

    pub fn score_error(&self) -> f64 {
        self.score_error
    }

    pub fn energy_error(&self) -> f64 {
        self.energy_error
    }

    pub fn exact_score(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
        self.base.score(t, x)
    }

    pub fn log_density(&self, t: f64, x: ArrayView1<f64>) -> f64 {
        self.base.log_density(t, x)
    }

    fn point_hash(&self, tag: u64, t: f64, x: ArrayView1<f64>) -> u64 {
        let coords = x.iter().map(|v| (v / QUANTUM).round() as i64 as u64);
        hash_words(
            self.error_seed ^ tag,
            std::iter::once(t.to_bits()).chain(coords),
        )
    }

    /// Deterministic vector of norm just under `score_error`.
    fn score_perturbation(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.point_hash(0x5C0E, t, x));
        let mut dir: Array1<f64> = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.dot(&dir).sqrt();
        if norm > 0.0 {
            dir *= self.score_error * BOUND_SLACK / norm;
        }
        dir
    }

    /// Deterministic value in `[-1, 1]` keyed on an ordered pair.
    fn pair_uniform(&self, t: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        let h = hash_words(self.point_hash(0xE4E6, t, a), [self.point_hash(0xE4E6, t, b)]);
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * unit - 1.0
    }
}

impl ScoreModel for ScoreOracle {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn score(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
        let mut s = self.base.score(t, x);
        if self.score_error > 0.0 {
            s += &self.score_perturbation(t, x);
        }
        s
    }

    fn energy_difference(&self, t: f64, z: ArrayView1<f64>, z2: ArrayView1<f64>) -> f64 {
        let exact = self.base.log_density(t, z) - self.base.log_density(t, z2);
        if self.energy_error == 0.0 {
            return exact;
        }
        // Antisymmetric in (z, z2): the error vanishes on the diagonal.
        let u = 0.5 * (self.pair_uniform(t, z, z2) - self.pair_uniform(t, z2, z));
        exact + self.energy_error * BOUND_SLACK * u
    }

    fn smoothness_bound(&self, t: f64) -> Option<f64> {
        Some(1.0 / self.base.min_variance(t))
    }

    fn second_moment(&self) -> Option<f64> {
        Some(self.base.second_moment())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use ndarray::array;

    fn benchmark() -> IsotropicGaussianMixture {
        IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap()
    }

    #[test]
    fn exact_oracle_matches_analytic_score() {
        let o = ScoreOracle::exact(benchmark());
        let x = Array1::from_elem(10, 0.1);
        assert_eq!(o.score(0.3, x.view()), o.base().score(0.3, x.view()));
    }

    #[test]
    fn energy_difference_examples() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::standard_normal(2));
        let z = array![0.5, -1.0];
        let z2 = array![2.0, 0.25];
        assert_eq!(o.energy_difference(0.0, z.view(), z.view()), 0.0);
        let expected = 0.5 * (z2.dot(&z2) - z.dot(&z));
        assert!((o.energy_difference(0.0, z.view(), z2.view()) - expected).abs() < 1e-14);

        let noisy = ScoreOracle::with_errors(IsotropicGaussianMixture::standard_normal(2), 0.0, 0.1, 9).unwrap();
        let mut rng = stream_rng(1, 1);
        for _ in 0..1000 {
            let a: Array1<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Array1<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let exact = o.energy_difference(0.0, a.view(), b.view());
            let got = noisy.energy_difference(0.0, a.view(), b.view());
            assert!((got - exact).abs() <= 0.1);
            assert_eq!(noisy.energy_difference(0.0, a.view(), a.view()), 0.0);
        }
    }

    #[test]
    fn score_error_is_bounded_and_deterministic() {
        let eps = 0.05;
        let o = ScoreOracle::with_errors(benchmark(), eps, 0.0, 42).unwrap();
        let mut rng = stream_rng(2, 0);
        for _ in 0..10_000 {
            let t: f64 = rng.random_range(0.0..2.0);
            let x: Array1<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let pert = o.score(t, x.view());
            let exact = o.exact_score(t, x.view());
            let dev = &pert - &exact;
            assert!(dev.dot(&dev).sqrt() <= eps);
            assert_eq!(pert, o.score(t, x.view()));
        }
    }

    #[test]
    fn rejects_negative_errors() {
        assert!(ScoreOracle::with_errors(benchmark(), -1.0, 0.0, 0).is_err());
        assert!(ScoreOracle::with_errors(benchmark(), 0.0, f64::NAN, 0).is_err());
    }
}
