use super::{gaussian_vector, ChainState};
use crate::schedule::RtkTarget;

/// `z <- z - step * grad g(z) + sqrt(2 step) xi`, always accepted.
pub fn ula_step(target: &RtkTarget<'_>, state: &mut ChainState, step: f64) {
    let grad = target.grad_energy(state.position.view());
    state.nfe += 1;
    let xi = gaussian_vector(state.position.len(), &mut state.rng);
    state.position = &state.position - &(grad * step) + xi * (2.0 * step).sqrt();
}

pub fn ula_run(target: &RtkTarget<'_>, iterations: usize, step: f64, state: &mut ChainState) {
    for _ in 0..iterations {
        ula_step(target, state, step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::IsotropicGaussianMixture;
    use crate::oracle::{ScoreModel, ScoreOracle};
    use crate::rng::stream_rng;
    use ndarray::{array, Array1, ArrayView1};

    /// Energy `c z^2 / 2` after the tilt; `-score` supplies all of it.
    struct Quadratic(f64);

    impl ScoreModel for Quadratic {
        fn dim(&self) -> usize {
            1
        }
        fn score(&self, _t: f64, x: ArrayView1<f64>) -> Array1<f64> {
            x.mapv(|v| -self.0 * v)
        }
        fn energy_difference(&self, _t: f64, z: ArrayView1<f64>, z2: ArrayView1<f64>) -> f64 {
            0.5 * self.0 * (z2[0] * z2[0] - z[0] * z[0])
        }
    }

    /// Target whose tilt contributes `c_tilt z^2/2` around zero; with
    /// a huge eta the tilt vanishes.
    fn target(model: &dyn ScoreModel) -> RtkTarget<'_> {
        RtkTarget::new(model, 0.0, 40.0, 0, array![0.0]).unwrap()
    }

    #[test]
    fn flat_energy_is_brownian() {
        let flat = Quadratic(0.0);
        let t = target(&flat);
        let tau = 0.05;
        let n = 100_000;
        let mut s = ChainState::new(array![0.0], stream_rng(1, 0));
        let mut sum2 = 0.0;
        for _ in 0..n {
            s.position = array![0.0];
            ula_step(&t, &mut s, tau);
            sum2 += s.position[0] * s.position[0];
        }
        let v = sum2 / n as f64;
        assert!((v / (2.0 * tau) - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
        assert_eq!(s.nfe, n as u64);
    }

    #[test]
    fn quadratic_stationary_variance() {
        let c = 2.0;
        let tau = 0.1;
        let q = Quadratic(c);
        let t = target(&q);
        let expected = 2.0 * tau / (1.0 - (1.0 - tau * c).powi(2));
        let chains = 4000;
        let mut sum2 = 0.0;
        for k in 0..chains {
            let mut s = ChainState::new(array![0.0], stream_rng(2, k));
            ula_run(&t, 200, tau, &mut s);
            sum2 += s.position[0] * s.position[0];
        }
        let v = sum2 / chains as f64;
        assert!((v / expected - 1.0).abs() < 3.0 * (2.0 / chains as f64).sqrt(), "{v} vs {expected}");
    }

    #[test]
    fn small_step_approaches_inverse_curvature() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::gaussian(vec![0.0], 0.25).unwrap());
        let t = target(&o);
        let tau = 0.002;
        let chains = 4000u64;
        let mut sum2 = 0.0;
        for k in 0..chains {
            let mut s = ChainState::new(array![0.0], stream_rng(3, k));
            ula_run(&t, 2000, tau, &mut s);
            sum2 += s.position[0] * s.position[0];
        }
        let v = sum2 / chains as f64;
        // ULA bias at this step is about tau * c / 2 = 0.4%.
        assert!((v / 0.25 - 1.0).abs() < 3.0 * (2.0 / chains as f64).sqrt() + 0.005, "{v}");
    }
}
