//! Outer RTK loop: segment schedule, per-segment targets, initializations.
//!
//! Segment `k` of `K` samples the reverse kernel from `x_prev` at forward
//! time `t_base + eta` down to `t_base`. Its energy is
//!
//! ```text
//! g(z) = f_{t_base}(z) + ||x_prev - e^{-eta} z||^2 / (2 (1 - e^{-2 eta}))
//! ```
//!
//! with `f_t = -ln p_t`. The quadratic has curvature
//! `c = e^{-2 eta} / (1 - e^{-2 eta})`, which equals `2L` when
//! `eta = eta_for(L)`; an `L`-smooth `f_t` then gives an `L`-strongly convex,
//! `3L`-smooth `g`.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, RtkError};
use crate::mixture::noise_fraction;
use crate::oracle::ScoreModel;

/// Segment length `0.5 ln((2L + 1) / (2L))`.
pub fn eta_for(smoothness: f64) -> Result<f64> {
    if !(smoothness > 0.0 && smoothness.is_finite()) {
        return Err(RtkError::param("L", format!("must be positive, got {smoothness}")));
    }
    Ok(0.5 * (1.0 / (2.0 * smoothness)).ln_1p())
}

/// `ceil(4L ln(((1 + L^2) d + ||grad f_*(0)||^2) / eps^2))`, at least 1.
pub fn outer_steps(smoothness: f64, dim: usize, grad0_norm: f64, eps: f64) -> Result<usize> {
    if !(smoothness > 0.0) {
        return Err(RtkError::param("L", "must be positive"));
    }
    if !(eps > 0.0) {
        return Err(RtkError::param("eps", "must be positive"));
    }
    if dim == 0 {
        return Err(RtkError::param("d", "must be at least 1"));
    }
    let arg = ((1.0 + smoothness * smoothness) * dim as f64 + grad0_norm * grad0_norm) / (eps * eps);
    let k = (4.0 * smoothness * arg.ln()).ceil();
    Ok(if k.is_finite() && k >= 1.0 { k as usize } else { 1 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    /// Forward time of the segment's output.
    pub t_base: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RtkSchedule {
    smoothness: f64,
    horizon: f64,
    segments: Vec<Segment>,
}

impl RtkSchedule {
    /// `K` segments of equal length `eta`; `T = K eta`.
    pub fn uniform(smoothness: f64, eta: f64, steps: usize) -> Result<Self> {
        if !(smoothness > 0.0) {
            return Err(RtkError::param("L", "must be positive"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(RtkError::param("eta", "must be positive"));
        }
        let segments = (0..steps)
            .map(|k| Segment {
                t_base: (steps - k - 1) as f64 * eta,
                eta,
            })
            .collect();
        Ok(Self {
            smoothness,
            horizon: steps as f64 * eta,
            segments,
        })
    }

    /// `eta = eta_for(L)` and `K` from [`outer_steps`], capped at `max_steps`.
    pub fn theory(
        smoothness: f64,
        dim: usize,
        grad0_norm: f64,
        eps: f64,
        max_steps: usize,
    ) -> Result<Self> {
        let eta = eta_for(smoothness)?;
        let k = outer_steps(smoothness, dim, grad0_norm, eps)?.min(max_steps.max(1));
        Self::uniform(smoothness, eta, k)
    }

    /// Segments starting at reverse times `fractions[k] * horizon`; the
    /// fractions must start at 0, increase strictly, and stay below 1.
    pub fn fixed(smoothness: f64, horizon: f64, fractions: &[f64]) -> Result<Self> {
        if !(smoothness > 0.0) {
            return Err(RtkError::param("L", "must be positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(RtkError::param("horizon", "must be positive"));
        }
        if fractions.first() != Some(&0.0) {
            return Err(RtkError::param("fractions", "must start at 0"));
        }
        if fractions.windows(2).any(|w| w[1] <= w[0]) || fractions.iter().any(|f| *f >= 1.0) {
            return Err(RtkError::param("fractions", "must increase strictly within [0, 1)"));
        }
        let k = fractions.len();
        let segments = (0..k)
            .map(|i| {
                let start = fractions[i];
                let end = if i + 1 < k { fractions[i + 1] } else { 1.0 };
                Segment {
                    t_base: horizon * (1.0 - end),
                    eta: horizon * (end - start),
                }
            })
            .collect();
        Ok(Self {
            smoothness,
            horizon,
            segments,
        })
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn outer_steps(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, k: usize) -> Result<Segment> {
        self.segments.get(k).copied().ok_or(RtkError::OuterIndex {
            k,
            steps: self.segments.len(),
        })
    }
}

/// Energy of one RTK subproblem.
pub struct RtkTarget<'a> {
    model: &'a dyn ScoreModel,
    t_base: f64,
    eta: f64,
    k: usize,
    x_prev: Array1<f64>,
    decay: f64,
    noise: f64,
}

pub fn make_target<'a>(
    model: &'a dyn ScoreModel,
    schedule: &RtkSchedule,
    k: usize,
    x_prev: Array1<f64>,
) -> Result<RtkTarget<'a>> {
    let seg = schedule.segment(k)?;
    RtkTarget::new(model, seg.t_base, seg.eta, k, x_prev)
}

impl<'a> RtkTarget<'a> {
    pub fn new(
        model: &'a dyn ScoreModel,
        t_base: f64,
        eta: f64,
        k: usize,
        x_prev: Array1<f64>,
    ) -> Result<Self> {
        if x_prev.len() != model.dim() {
            return Err(RtkError::DimensionMismatch {
                expected: model.dim(),
                found: x_prev.len(),
            });
        }
        if !(eta > 0.0) {
            return Err(RtkError::param("eta", "must be positive"));
        }
        Ok(Self {
            model,
            t_base,
            eta,
            k,
            x_prev,
            decay: (-eta).exp(),
            noise: noise_fraction(eta),
        })
    }

    pub fn dim(&self) -> usize {
        self.x_prev.len()
    }

    pub fn t_base(&self) -> f64 {
        self.t_base
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn outer_index(&self) -> usize {
        self.k
    }

    pub fn x_prev(&self) -> ArrayView1<'_, f64> {
        self.x_prev.view()
    }

    pub fn model(&self) -> &'a dyn ScoreModel {
        self.model
    }

    /// Curvature `e^{-2 eta} / (1 - e^{-2 eta})` of the quadratic tilt.
    pub fn tilt_curvature(&self) -> f64 {
        self.decay * self.decay / self.noise
    }

    /// Hessian upper bound of `g`, when the model knows its own.
    pub fn smoothness_bound(&self) -> Option<f64> {
        self.model
            .smoothness_bound(self.t_base)
            .map(|l| l + self.tilt_curvature())
    }

    /// One score query at `t_base`.
    pub fn score(&self, z: ArrayView1<f64>) -> Array1<f64> {
        self.model.score(self.t_base, z)
    }

    /// Gradient of the quadratic tilt.
    pub fn tilt_gradient(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let a = self.decay * self.decay / self.noise;
        let b = self.decay / self.noise;
        z.iter()
            .zip(self.x_prev.iter())
            .map(|(zi, xi)| a * zi - b * xi)
            .collect()
    }

    pub fn tilt_energy(&self, z: ArrayView1<f64>) -> f64 {
        let sq: f64 = self
            .x_prev
            .iter()
            .zip(z.iter())
            .map(|(x, zi)| {
                let r = x - self.decay * zi;
                r * r
            })
            .sum();
        sq / (2.0 * self.noise)
    }

    /// `grad g(z)` from a given score at `z`.
    pub fn grad_from_score(&self, z: ArrayView1<f64>, score: &Array1<f64>) -> Array1<f64> {
        self.tilt_gradient(z) - score
    }

    /// `grad g(z)`; costs one score query.
    pub fn grad_energy(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let s = self.score(z);
        self.grad_from_score(z, &s)
    }

    /// `g(z2) - g(z)` with the model's energy difference; the tilt is exact.
    pub fn energy_diff(&self, z: ArrayView1<f64>, z2: ArrayView1<f64>) -> f64 {
        self.model.energy_difference(self.t_base, z, z2) + self.tilt_energy(z2) - self.tilt_energy(z)
    }

    /// Alg.-2-style Gaussian initialization (see [`GaussianInit::for_segment`]).
    pub fn mala_init(&self, smoothness: f64) -> GaussianInit {
        GaussianInit::for_segment(smoothness, self.eta, self.x_prev.view())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianInit {
    pub mean: Array1<f64>,
    pub variance: f64,
}

impl GaussianInit {
    /// Normalized Gaussian proportional to
    /// `exp(-L ||z||^2 - ||x_prev - e^{-eta} z||^2 / (2 (1 - e^{-2 eta})))`.
    ///
    /// With `eta = eta_for(L)` the variance is `1 / (4L)` and the mean is
    /// `(2L + 1) e^{-eta} x_prev / (4L)`.
    pub fn for_segment(smoothness: f64, eta: f64, x_prev: ArrayView1<f64>) -> Self {
        let decay = (-eta).exp();
        let noise = noise_fraction(eta);
        let precision = 2.0 * smoothness + decay * decay / noise;
        Self {
            mean: x_prev.mapv(|x| decay * x / noise / precision),
            variance: 1.0 / precision,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let sd = self.variance.sqrt();
        self.mean
            .iter()
            .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn log_density(&self, z: ArrayView1<f64>) -> f64 {
        let d = z.len() as f64;
        let sq: f64 = z.iter().zip(self.mean.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * d * (2.0 * std::f64::consts::PI * self.variance).ln() - 0.5 * sq / self.variance
    }
}

/// Position and velocity draws from `N(0, (e^{2 eta} - 1) I) x N(0, I)`.
pub fn uld_init<R: Rng + ?Sized>(eta: f64, dim: usize, rng: &mut R) -> (Array1<f64>, Array1<f64>) {
    let sd = (2.0 * eta).exp_m1().sqrt();
    let z = (0..dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let v = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    (z, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::IsotropicGaussianMixture;
    use crate::oracle::ScoreOracle;
    use crate::rng::stream_rng;
    use crate::smoothness::{fd_hessian, symmetric_eigenvalues};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eta_examples() {
        assert_abs_diff_eq!(eta_for(0.5).unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(eta_for(0.5).unwrap(), 0.34657, epsilon = 1e-5);
        assert_abs_diff_eq!(eta_for(1.0).unwrap(), 0.5 * 1.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(eta_for(1.0).unwrap(), 0.20273, epsilon = 1e-5);
        for l in [1e-3, 0.1, 1.0, 7.5, 143.0, 1e4] {
            let eta = eta_for(l).unwrap();
            let c = (-2.0 * eta).exp() / -(-2.0 * eta).exp_m1();
            assert!((c / (2.0 * l) - 1.0).abs() < 1e-12, "L = {l}");
        }
        assert!(eta_for(0.0).is_err());
        assert!(eta_for(-1.0).is_err());
    }

    #[test]
    fn outer_step_examples() {
        assert_eq!(outer_steps(1.0, 1, 0.0, 1.0).unwrap(), 3);
        assert_eq!(outer_steps(1.0, 10, 0.0, 0.1).unwrap(), 31);
        let mut prev = 0;
        let mut eps = 1.0;
        for _ in 0..12 {
            let k = outer_steps(2.0, 5, 0.3, eps).unwrap();
            assert!(k >= prev);
            prev = k;
            eps *= 0.5;
        }
        assert_eq!(outer_steps(0.01, 1, 0.0, 100.0).unwrap(), 1);
    }

    #[test]
    fn theory_schedule_is_capped() {
        let s = RtkSchedule::theory(100.0, 10, 0.0, 0.1, 64).unwrap();
        assert_eq!(s.outer_steps(), 64);
        assert_abs_diff_eq!(s.horizon(), 64.0 * eta_for(100.0).unwrap(), epsilon = 1e-15);
        let seg = s.segment(0).unwrap();
        assert_abs_diff_eq!(seg.t_base, 63.0 * seg.eta, epsilon = 1e-15);
        assert_eq!(s.segment(63).unwrap().t_base, 0.0);
    }

    #[test]
    fn fixed_schedule_layout() {
        let s = RtkSchedule::fixed(1.0, 6.0, &[0.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
        let t: Vec<f64> = s.segments().iter().map(|g| g.t_base).collect();
        let expected = [4.8, 3.6, 2.4, 1.2, 0.0];
        for (a, b) in t.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(s.segments().iter().all(|g| (g.eta - 1.2).abs() < 1e-12));
        assert!(RtkSchedule::fixed(1.0, 6.0, &[0.1, 0.5]).is_err());
        assert!(RtkSchedule::fixed(1.0, 6.0, &[0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn out_of_range_segment_is_rejected() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::standard_normal(1));
        let s = RtkSchedule::uniform(1.0, 0.2, 3).unwrap();
        assert!(make_target(&o, &s, 3, array![0.0]).is_err());
        assert!(make_target(&o, &s, 2, array![0.0]).is_ok());
        assert!(make_target(&o, &s, 0, array![0.0, 1.0]).is_err());
    }

    #[test]
    fn standard_normal_target_stationary_point_and_hessian() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::standard_normal(3));
        let l = 0.8;
        let s = RtkSchedule::uniform(l, eta_for(l).unwrap(), 4).unwrap();
        let x = array![0.7, -1.1, 2.0];
        let target = make_target(&o, &s, 1, x.clone()).unwrap();
        let z_star = x.mapv(|v| v * (-target.eta()).exp());
        let g = target.grad_energy(z_star.view());
        assert!(g.iter().all(|v| v.abs() < 1e-12));

        let h = fd_hessian(|z| target.grad_energy(z), array![0.1, 0.2, -0.3].view(), 1e-4);
        for ev in symmetric_eigenvalues(&h) {
            assert_abs_diff_eq!(ev, 1.0 + 2.0 * l, epsilon = 1e-6);
        }
    }

    #[test]
    fn energy_diff_on_diagonal_is_zero() {
        let o = ScoreOracle::with_errors(IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap(), 0.0, 0.3, 5).unwrap();
        let s = RtkSchedule::fixed(1.0, 6.0, &[0.0, 0.5]).unwrap();
        let mut rng = stream_rng(0, 0);
        for k in 0..2 {
            let x: Array1<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let t = make_target(&o, &s, k, x.clone()).unwrap();
            assert_eq!(t.energy_diff(x.view(), x.view()), 0.0);
        }
    }

    #[test]
    fn grad_energy_matches_fd_of_energy() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap());
        let s = RtkSchedule::fixed(1.0, 6.0, &[0.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
        let mut rng = stream_rng(4, 0);
        let step = 1e-5;
        for k in 0..5 {
            let x: Array1<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let t = make_target(&o, &s, k, x).unwrap();
            let z: Array1<f64> = (0..10).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let energy = |p: &Array1<f64>| -o.log_density(t.t_base(), p.view()) + t.tilt_energy(p.view());
            let g = t.grad_energy(z.view());
            let mut fd = Array1::zeros(10);
            for i in 0..10 {
                let mut up = z.clone();
                up[i] += step;
                let mut dn = z.clone();
                dn[i] -= step;
                fd[i] = (energy(&up) - energy(&dn)) / (2.0 * step);
            }
            let err = (&g - &fd).mapv(f64::abs).sum();
            assert!(err <= 1e-5 * (1.0 + g.mapv(f64::abs).sum()), "k = {k}: {err}");
        }
    }

    #[test]
    fn mala_init_examples() {
        let l = 0.5;
        let eta = eta_for(l).unwrap();
        let zero = GaussianInit::for_segment(l, eta, array![0.0, 0.0].view());
        assert!(zero.mean.iter().all(|m| *m == 0.0));
        assert_abs_diff_eq!(zero.variance, 1.0 / (4.0 * l), epsilon = 1e-12);

        let x = array![1.5, -0.4];
        let init = GaussianInit::for_segment(l, eta, x.view());
        for (m, xi) in init.mean.iter().zip(x.iter()) {
            assert_abs_diff_eq!(*m, (-eta).exp() * xi, epsilon = 1e-12);
        }

        let l = 3.0;
        let eta = eta_for(l).unwrap();
        let init = GaussianInit::for_segment(l, eta, x.view());
        assert_abs_diff_eq!(init.variance, 1.0 / (4.0 * l), epsilon = 1e-13);
        for (m, xi) in init.mean.iter().zip(x.iter()) {
            assert_abs_diff_eq!(*m, (2.0 * l + 1.0) * (-eta).exp() * xi / (4.0 * l), epsilon = 1e-12);
        }
    }

    #[test]
    fn mala_init_density_matches_exponent() {
        let l = 1.7;
        let eta = eta_for(l).unwrap();
        let x = array![0.3, -2.0, 1.0];
        let init = GaussianInit::for_segment(l, eta, x.view());
        let exponent = |z: &Array1<f64>| {
            let r = &x - &z.mapv(|v| v * (-eta).exp());
            -l * z.dot(z) - r.dot(&r) / (2.0 * (1.0 - (-2.0 * eta).exp()))
        };
        let mut rng = stream_rng(9, 9);
        let mut reference = None;
        for _ in 0..100 {
            let z: Array1<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let diff = init.log_density(z.view()) - exponent(&z);
            let r = *reference.get_or_insert(diff);
            assert!((diff - r).abs() < 1e-10);
        }
    }

    #[test]
    fn uld_init_variance_and_independence() {
        let eta = eta_for(0.5).unwrap();
        assert_abs_diff_eq!((2.0 * eta).exp() - 1.0, 1.0, epsilon = 1e-10);
        let n = 100_000;
        let mut rng = stream_rng(3, 3);
        let (mut szz, mut svv, mut szv) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (z, v) = uld_init(eta, 1, &mut rng);
            szz += z[0] * z[0];
            svv += v[0] * v[0];
            szv += z[0] * v[0];
        }
        let nz = n as f64;
        let var_z = szz / nz;
        // Var of a chi-square(1) estimate is 2 sigma^4 / n.
        assert!((var_z - 1.0).abs() <= 3.0 * (2.0 / nz).sqrt(), "{var_z}");
        let corr = szv / nz / ((szz / nz) * (svv / nz)).sqrt();
        assert!(corr.abs() <= 0.02, "{corr}");
    }
}
