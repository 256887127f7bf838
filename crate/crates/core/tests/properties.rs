use ndarray::{array, Array1, ArrayView1};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use rtk_core::mixture::IsotropicGaussianMixture;
use rtk_core::oracle::{ScoreModel, ScoreOracle};
use rtk_core::rng::stream_rng;
use rtk_core::samplers::{
    ddpm_run, mala_accept_log, rtk_run, taylor_energy_diff, EnergyEstimator, InnerKind, ProjectionRule, RtkMethod,
    StepRule,
};
use rtk_core::schedule::{RtkSchedule, RtkTarget};

fn benchmark() -> ScoreOracle {
    ScoreOracle::exact(IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap())
}

fn log_q(to: f64, from: f64, grad_from: f64, step: f64) -> f64 {
    let r = to - (from - step * grad_from);
    -0.5 * (4.0 * std::f64::consts::PI * step).ln() - r * r / (4.0 * step)
}

#[test]
fn one_dimensional_detailed_balance() {
    // Target density N(0.2, 0.8) tilted by x_prev = -0.5 over eta = 0.6.
    let o = ScoreOracle::exact(IsotropicGaussianMixture::gaussian(vec![0.2], 0.8).unwrap());
    let t = RtkTarget::new(&o, 0.0, 0.6, 0, array![-0.5]).unwrap();
    let (decay, noise) = ((-0.6f64).exp(), -(-1.2f64).exp_m1());
    let log_pi = |z: f64| -(z - 0.2).powi(2) / 1.6 - (-0.5 - decay * z).powi(2) / (2.0 * noise);
    let grad = |z: f64| (z - 0.2) / 0.8 + decay * (decay * z + 0.5) / noise;
    let mut rng = stream_rng(8, 0);
    let step = 0.01;
    for _ in 0..10_000 {
        let z: f64 = rng.sample::<f64, _>(StandardNormal) * 1.5;
        let zp = z + 0.2 * rng.sample::<f64, _>(StandardNormal);
        let a = mala_accept_log(&t, array![z].view(), array![zp].view(), step, EnergyEstimator::Exact)
            .log_ratio
            .min(0.0);
        let b = mala_accept_log(&t, array![zp].view(), array![z].view(), step, EnergyEstimator::Exact)
            .log_ratio
            .min(0.0);
        let lhs = log_pi(z) + log_q(zp, z, grad(z), step) + a;
        let rhs = log_pi(zp) + log_q(z, zp, grad(zp), step) + b;
        assert!((lhs - rhs).exp_m1().abs() <= 1e-10, "{z} {zp}: {lhs} vs {rhs}");
    }
}

fn all_methods() -> Vec<InnerKind> {
    vec![
        InnerKind::Ula,
        InnerKind::Mala { projection: None, estimator: EnergyEstimator::Exact, lazy: false },
        InnerKind::Mala {
            projection: None,
            estimator: EnergyEstimator::Taylor { order: 2, delta_t: 1e-3 },
            lazy: true,
        },
        InnerKind::Mala {
            projection: Some(ProjectionRule::Default { eps: 0.1 }),
            estimator: EnergyEstimator::Exact,
            lazy: false,
        },
        InnerKind::Uld { friction: None },
    ]
}

#[test]
fn every_sampler_is_deterministic_per_seed() {
    let o = benchmark();
    let schedule = RtkSchedule::fixed(150.0, 6.0, &[0.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
    for kind in all_methods() {
        let m = RtkMethod::new(kind, vec![8], StepRule::Smoothness { scale: 0.5 });
        let a = rtk_run(&o, &schedule, &m, 40, 5).unwrap();
        let b = rtk_run(&o, &schedule, &m, 40, 5).unwrap();
        assert_eq!(a.samples, b.samples, "{kind:?}");
        assert_eq!(a.nfe, b.nfe);
        let c = rtk_run(&o, &schedule, &m, 40, 6).unwrap();
        assert_ne!(a.samples, c.samples);
    }
    let a = ddpm_run(&o, 6.0, 30, 40, 5).unwrap();
    let b = ddpm_run(&o, 6.0, 30, 40, 5).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.nfe, b.nfe);
}

#[test]
fn projected_mala_replays_standard_mala_when_the_gate_never_binds() {
    let o = benchmark();
    let schedule = RtkSchedule::fixed(150.0, 6.0, &[0.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
    let plain = RtkMethod::new(
        InnerKind::Mala { projection: None, estimator: EnergyEstimator::Exact, lazy: false },
        vec![20],
        StepRule::Smoothness { scale: 0.5 },
    );
    let wide = RtkMethod {
        kind: InnerKind::Mala {
            projection: Some(ProjectionRule::Explicit { outer_radius: 1e6, inner_radius: 1e5 }),
            estimator: EnergyEstimator::Exact,
            lazy: false,
        },
        ..plain.clone()
    };
    let a = rtk_run(&o, &schedule, &plain, 64, 12).unwrap();
    let b = rtk_run(&o, &schedule, &wide, 64, 12).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.nfe, b.nfe);
    assert_eq!(a.segments, b.segments);
}

#[test]
fn score_error_stays_within_bound() {
    let mix = IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap();
    let o = ScoreOracle::with_errors(mix.clone(), 0.05, 0.02, 3).unwrap();
    let mut rng = stream_rng(1, 1);
    for _ in 0..2000 {
        let t: f64 = rng.random_range(0.0..6.0);
        let x: Array1<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Array1<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let err = o.score(t, x.view()) - mix.score(t, x.view());
        assert!(err.dot(&err).sqrt() <= 0.05);
        let exact = mix.log_density(t, x.view()) - mix.log_density(t, y.view());
        assert!((o.energy_difference(t, x.view(), y.view()) - exact).abs() <= 0.02);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_score_is_gradient_of_log_density(
        t in 0.0f64..3.0,
        x in prop::collection::vec(-1.5f64..1.5, 10),
    ) {
        let mix = IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).unwrap();
        let x = Array1::from(x);
        let s = mix.score(t, x.view());
        let h = 1e-6;
        for i in 0..10 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (mix.log_density(t, xp.view()) - mix.log_density(t, xm.view())) / (2.0 * h);
            prop_assert!((fd - s[i]).abs() <= 1e-4 * (1.0 + s[i].abs()), "{} vs {}", fd, s[i]);
        }
    }

    #[test]
    fn taylor_first_order_gap_is_half_squared_step(
        z in prop::collection::vec(-3.0f64..3.0, 3),
        z2 in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let score = |x: ArrayView1<f64>| x.mapv(|v| -v);
        let (z, z2) = (Array1::from(z), Array1::from(z2));
        let exact = 0.5 * (z2.dot(&z2) - z.dot(&z));
        let first = taylor_energy_diff(score, z.view(), z2.view(), 1, 1e-3, None).value;
        let d = &z2 - &z;
        prop_assert!((exact - first - 0.5 * d.dot(&d)).abs() <= 1e-9 * (1.0 + exact.abs()));
    }

    #[test]
    fn exact_accept_log_is_antisymmetric(
        z in prop::collection::vec(-1.0f64..1.0, 2),
        zp in prop::collection::vec(-1.0f64..1.0, 2),
        step in 1e-3f64..0.1,
    ) {
        let o = ScoreOracle::exact(IsotropicGaussianMixture::circle(4, 2, 1.0, 0.2).unwrap());
        let t = RtkTarget::new(&o, 0.3, 0.5, 0, array![0.1, -0.4]).unwrap();
        let (z, zp) = (Array1::from(z), Array1::from(zp));
        let a = mala_accept_log(&t, z.view(), zp.view(), step, EnergyEstimator::Exact).log_ratio;
        let b = mala_accept_log(&t, zp.view(), z.view(), step, EnergyEstimator::Exact).log_ratio;
        prop_assert!((a + b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}
