//! MALA and projected MALA for one RTK subproblem.
//!
//! `r_g(z, z')` denotes an estimate of `g(z) - g(z')`. With the exact
//! estimator the log acceptance
//!
//! ```text
//! r_g(z, z') + (||z' - z + tau grad g(z)||^2 - ||z - z' + tau grad g(z')||^2) / (4 tau)
//! ```
//!
//! is the Metropolis–Hastings log ratio for the proposal
//! `N(z - tau grad g(z), 2 tau I)`, so the kernel is reversible.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use super::{gaussian_vector, ChainState, EnergyEstimator, MalaSpec};
use super::taylor::taylor_energy_diff;
use crate::error::{Result, RtkError};
use crate::schedule::RtkTarget;

/// `2^-4 * 3^-8 * 7^-2`.
pub const STEP_CONSTANT: f64 = 1.0 / (16.0 * 6561.0 * 49.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionParams {
    pub outer_radius: f64,
    pub inner_radius: f64,
    pub step: f64,
}

/// Conservative `(R, r, tau)` for projected MALA.
///
/// `R = 63 sqrt(B ln(16S/eps))`, `tau = C / (L^2 B ln(16S/eps))` and
/// `r = 3 sqrt(tau d ln(8S/eps))` with `B = d + m2^2 + ||x0||^2`.
pub fn default_projection_params(
    smoothness: f64,
    dim: usize,
    m2: f64,
    x0_norm: f64,
    iterations: usize,
    eps: f64,
) -> Result<ProjectionParams> {
    if !(smoothness > 0.0) {
        return Err(RtkError::param("L", "must be positive"));
    }
    if dim == 0 {
        return Err(RtkError::param("d", "must be at least 1"));
    }
    if !(m2 >= 0.0) || !(x0_norm >= 0.0) {
        return Err(RtkError::param("m2", "moments and norms must be nonnegative"));
    }
    if iterations == 0 {
        return Err(RtkError::param("S", "must be at least 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(RtkError::param("eps", format!("must lie in (0, 1), got {eps}")));
    }
    let d = dim as f64;
    let s = iterations as f64;
    let spread = d + m2 * m2 + x0_norm * x0_norm;
    let log16 = (16.0 * s / eps).ln();
    let step = STEP_CONSTANT / (smoothness * smoothness * spread * log16);
    Ok(ProjectionParams {
        outer_radius: 63.0 * (spread * log16).sqrt(),
        inner_radius: 3.0 * (step * d * (8.0 * s / eps).ln()).sqrt(),
        step,
    })
}

/// True iff `z_prop` lies in the closed balls `B(z, r)` and `B(0, R)`.
pub fn projected_gate(z: ArrayView1<f64>, z_prop: ArrayView1<f64>, inner_radius: f64, outer_radius: f64) -> bool {
    let jump: f64 = z.iter().zip(z_prop.iter()).map(|(a, b)| (b - a) * (b - a)).sum();
    let norm: f64 = z_prop.iter().map(|v| v * v).sum();
    jump.sqrt() <= inner_radius && norm.sqrt() <= outer_radius
}

fn proposal_log_term(
    r_g: f64,
    z: ArrayView1<f64>,
    z_prop: ArrayView1<f64>,
    grad_z: &Array1<f64>,
    grad_prop: &Array1<f64>,
    step: f64,
) -> f64 {
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    for i in 0..z.len() {
        let a = z_prop[i] - z[i] + step * grad_z[i];
        let b = z[i] - z_prop[i] + step * grad_prop[i];
        fwd += a * a;
        bwd += b * b;
    }
    r_g + (fwd - bwd) / (4.0 * step)
}

/// `r_g(z, z')` and the score queries it needed beyond `score_z`.
fn energy_gap(
    target: &RtkTarget<'_>,
    z: ArrayView1<f64>,
    z_prop: ArrayView1<f64>,
    score_z: &Array1<f64>,
    estimator: EnergyEstimator,
) -> (f64, u64) {
    match estimator {
        EnergyEstimator::Exact => (-target.energy_diff(z, z_prop), 0),
        EnergyEstimator::Taylor { order, delta_t } => {
            let est = taylor_energy_diff(
                |p| target.score(p),
                z,
                z_prop,
                order,
                delta_t,
                Some(score_z.view()),
            );
            let tilt = target.tilt_energy(z_prop) - target.tilt_energy(z);
            (-(est.value + tilt), est.score_calls)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcceptLog {
    /// Log acceptance before clipping at zero.
    pub log_ratio: f64,
    pub score_calls: u64,
}

/// Log acceptance of `z -> z_prop`, evaluated from scratch.
pub fn mala_accept_log(
    target: &RtkTarget<'_>,
    z: ArrayView1<f64>,
    z_prop: ArrayView1<f64>,
    step: f64,
    estimator: EnergyEstimator,
) -> AcceptLog {
    let score_z = target.score(z);
    let score_p = target.score(z_prop);
    let grad_z = target.grad_from_score(z, &score_z);
    let grad_p = target.grad_from_score(z_prop, &score_p);
    let (r_g, extra) = energy_gap(target, z, z_prop, &score_z, estimator);
    AcceptLog {
        log_ratio: proposal_log_term(r_g, z, z_prop, &grad_z, &grad_p, step),
        score_calls: 2 + extra,
    }
}

/// `spec.iterations` MALA transitions from `state`.
pub fn mala_run(target: &RtkTarget<'_>, spec: &MalaSpec, state: &mut ChainState) {
    if spec.iterations == 0 {
        return;
    }
    let step = spec.step;
    let noise_sd = (2.0 * step).sqrt();
    let d = state.position.len();
    let mut score_z = target.score(state.position.view());
    state.nfe += 1;
    let mut grad_z = target.grad_from_score(state.position.view(), &score_z);

    for _ in 0..spec.iterations {
        if spec.lazy && state.rng.random_bool(0.5) {
            continue;
        }
        let xi = gaussian_vector(d, &mut state.rng);
        let z_prop = &state.position - &(&grad_z * step) + xi * noise_sd;
        state.proposed += 1;
        if let Some(p) = spec.projection {
            if !projected_gate(state.position.view(), z_prop.view(), p.inner_radius, p.outer_radius) {
                continue;
            }
        }
        let score_p = target.score(z_prop.view());
        state.nfe += 1;
        let grad_p = target.grad_from_score(z_prop.view(), &score_p);
        let (r_g, extra) = energy_gap(target, state.position.view(), z_prop.view(), &score_z, spec.estimator);
        state.nfe += extra;
        let log_a = proposal_log_term(r_g, state.position.view(), z_prop.view(), &grad_z, &grad_p, step);
        let u: f64 = state.rng.random();
        if log_a >= 0.0 || u.ln() < log_a {
            state.position = z_prop;
            score_z = score_p;
            grad_z = grad_p;
            state.accepted += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::IsotropicGaussianMixture;
    use crate::oracle::ScoreOracle;
    use crate::rng::stream_rng;
    use crate::samplers::Projection;
    use ndarray::array;
    use rand_distr::StandardNormal;

    fn gaussian_log_q(to: ArrayView1<f64>, from: ArrayView1<f64>, grad_from: &Array1<f64>, step: f64) -> f64 {
        let d = to.len() as f64;
        let sq: f64 = (0..to.len())
            .map(|i| {
                let r = to[i] - (from[i] - step * grad_from[i]);
                r * r
            })
            .sum();
        -0.5 * d * (4.0 * std::f64::consts::PI * step).ln() - sq / (4.0 * step)
    }

    #[test]
    fn projection_defaults_examples() {
        let p = default_projection_params(1.0, 1, 1.0, 0.0, 100, 0.1).unwrap();
        assert!((p.outer_radius - 63.0 * (2.0 * 16000f64.ln()).sqrt()).abs() < 1e-9);
        assert!((p.outer_radius - 277.2).abs() < 0.05, "{}", p.outer_radius);
        assert!((STEP_CONSTANT - 1.944e-7).abs() < 1e-10);
        for l in [0.5, 2.0, 40.0] {
            let p = default_projection_params(l, 3, 1.0, 2.0, 50, 0.2).unwrap();
            let ratio = p.inner_radius / p.step.sqrt();
            assert!((ratio - 3.0 * (3.0 * (8.0 * 50.0 / 0.2f64).ln()).sqrt()).abs() < 1e-9);
        }
        assert!(default_projection_params(1.0, 1, 1.0, 0.0, 100, 1.0).is_err());
        assert!(default_projection_params(1.0, 1, 1.0, 0.0, 0, 0.5).is_err());
    }

    #[test]
    fn gate_boundaries() {
        let z = array![0.0, 0.0];
        assert!(projected_gate(z.view(), z.view(), 0.1, 1.0));
        let far = array![1.0 + 1e-9, 0.0];
        assert!(!projected_gate(far.view(), far.view(), 10.0, 1.0));
        let edge = array![0.5, 0.0];
        assert!(projected_gate(z.view(), edge.view(), 0.5, 1.0));
        assert!(!projected_gate(z.view(), array![0.6, 0.0].view(), 0.5, 1.0));
    }

    #[test]
    fn identity_proposal_accepts() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap());
        let t = RtkTarget::new(&o, 0.3, 0.2, 0, Array1::from_elem(10, 0.3)).unwrap();
        let z = Array1::from_elem(10, 0.1);
        let a = mala_accept_log(&t, z.view(), z.view(), 0.01, EnergyEstimator::Exact);
        assert_eq!(a.log_ratio, 0.0);
    }

    #[test]
    fn exact_estimator_matches_independent_mh_ratio() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap());
        let mut rng = stream_rng(8, 0);
        let x: Array1<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let t = RtkTarget::new(&o, 0.4, 0.3, 2, x).unwrap();
        let log_pi = |z: ArrayView1<f64>| o.log_density(0.4, z) - t.tilt_energy(z);
        for _ in 0..200 {
            let step = rng.random_range(1e-4..1e-2);
            let z: Array1<f64> = (0..10).map(|_| 0.6 * rng.sample::<f64, _>(StandardNormal)).collect();
            let zp: Array1<f64> = (0..10).map(|i| z[i] + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
            let a = mala_accept_log(&t, z.view(), zp.view(), step, EnergyEstimator::Exact);
            let gz = t.grad_energy(z.view());
            let gp = t.grad_energy(zp.view());
            let independent = log_pi(zp.view()) + gaussian_log_q(z.view(), zp.view(), &gp, step)
                - log_pi(z.view())
                - gaussian_log_q(zp.view(), z.view(), &gz, step);
            assert!((a.log_ratio - independent).abs() <= 1e-10 * (1.0 + independent.abs()), "{} vs {}", a.log_ratio, independent);
        }
    }

    #[test]
    fn zero_iterations_leave_state() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::standard_normal(1));
        let t = RtkTarget::new(&o, 0.0, 40.0, 0, array![0.0]).unwrap();
        let mut s = ChainState::new(array![0.25], stream_rng(0, 0));
        let spec = MalaSpec { iterations: 0, step: 0.05, projection: None, estimator: EnergyEstimator::Exact, lazy: false };
        mala_run(&t, &spec, &mut s);
        assert_eq!(s.position, array![0.25]);
        assert_eq!(s.nfe, 0);
    }

    #[test]
    fn long_run_on_standard_normal() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::standard_normal(1));
        let t = RtkTarget::new(&o, 0.0, 40.0, 0, array![0.0]).unwrap();
        let spec = MalaSpec { iterations: 1, step: 0.05, projection: None, estimator: EnergyEstimator::Exact, lazy: false };
        let mut s = ChainState::new(array![0.0], stream_rng(12, 0));
        let (burn, total) = (10_000, 100_000);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for i in 0..total {
            mala_run(&t, &spec, &mut s);
            if i >= burn {
                sum += s.position[0];
                sum2 += s.position[0] * s.position[0];
            }
        }
        let n = (total - burn) as f64;
        let m = sum / n;
        let v = sum2 / n - m * m;
        assert!(m.abs() <= 0.03, "mean {m}");
        assert!((0.94..=1.06).contains(&v), "var {v}");
        let rate = s.accepted as f64 / s.proposed as f64;
        assert!(rate > 0.5 && rate < 1.0, "{rate}");
    }

    #[test]
    fn lazy_chain_proposes_about_half_the_time() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::standard_normal(1));
        let t = RtkTarget::new(&o, 0.0, 40.0, 0, array![0.0]).unwrap();
        let spec = MalaSpec { iterations: 20_000, step: 0.05, projection: None, estimator: EnergyEstimator::Exact, lazy: true };
        let mut s = ChainState::new(array![0.0], stream_rng(1, 2));
        mala_run(&t, &spec, &mut s);
        let frac = s.proposed as f64 / 20_000.0;
        assert!((frac - 0.5).abs() < 0.02);
        assert_eq!(s.nfe, 1 + s.proposed);
    }

    #[test]
    fn projection_that_never_binds_replays_standard_chain() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap());
        let t = RtkTarget::new(&o, 1.2, 1.2, 3, Array1::from_elem(10, 0.2)).unwrap();
        let plain = MalaSpec { iterations: 300, step: 0.01, projection: None, estimator: EnergyEstimator::Exact, lazy: false };
        let proj = MalaSpec { projection: Some(Projection { outer_radius: 1e3, inner_radius: 1e2 }), ..plain.clone() };
        let mut a = ChainState::new(Array1::zeros(10), stream_rng(4, 4));
        let mut b = a.clone();
        mala_run(&t, &plain, &mut a);
        mala_run(&t, &proj, &mut b);
        assert_eq!(a.position, b.position);
        assert_eq!((a.nfe, a.accepted), (b.nfe, b.accepted));
    }

    #[test]
    fn binding_projection_rejects_without_scoring() {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::standard_normal(2));
        let t = RtkTarget::new(&o, 0.0, 40.0, 0, array![0.0, 0.0]).unwrap();
        let spec = MalaSpec {
            iterations: 50,
            step: 0.5,
            projection: Some(Projection { outer_radius: 10.0, inner_radius: 1e-6 }),
            estimator: EnergyEstimator::Exact,
            lazy: false,
        };
        let mut s = ChainState::new(array![0.5, 0.5], stream_rng(0, 9));
        mala_run(&t, &spec, &mut s);
        assert_eq!(s.position, array![0.5, 0.5]);
        assert_eq!(s.nfe, 1);
        assert_eq!(s.proposed, 50);
        assert_eq!(s.accepted, 0);
    }
}
