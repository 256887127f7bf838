//! Quick invariant checks runnable from the CLI.

use ndarray::{array, Array1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::mixture::IsotropicGaussianMixture;
use crate::oracle::ScoreOracle;
use crate::rng::stream_rng;
use crate::samplers::{mala_accept_log, rtk_run, taylor_energy_diff, EnergyEstimator, InnerKind, RtkMethod, StepRule, UldKernel};
use crate::schedule::{RtkSchedule, RtkTarget};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn log_proposal(to: &Array1<f64>, from: &Array1<f64>, grad: &Array1<f64>, step: f64) -> f64 {
    let r = to - &(from - &(grad * step));
    let d = to.len() as f64;
    -0.5 * d * (4.0 * std::f64::consts::PI * step).ln() - r.dot(&r) / (4.0 * step)
}

fn detailed_balance() -> Check {
    let base = IsotropicGaussianMixture::gaussian(vec![0.3, -0.2], 0.7).expect("valid gaussian");
    let o = ScoreOracle::exact(base);
    let t = RtkTarget::new(&o, 0.2, 0.5, 0, array![0.4, 0.1]).expect("valid target");
    let log_pi = |z: &Array1<f64>| o.log_density(0.2, z.view()) - t.tilt_energy(z.view());
    let mut rng = stream_rng(1, 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let step: f64 = rng.random_range(1e-3..0.5);
        let z: Array1<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let zp: Array1<f64> = (0..2).map(|i| z[i] + rng.sample::<f64, _>(StandardNormal)).collect();
        let fwd = mala_accept_log(&t, z.view(), zp.view(), step, EnergyEstimator::Exact).log_ratio.min(0.0);
        let bwd = mala_accept_log(&t, zp.view(), z.view(), step, EnergyEstimator::Exact).log_ratio.min(0.0);
        let lhs = log_pi(&z) + log_proposal(&zp, &z, &t.grad_energy(z.view()), step) + fwd;
        let rhs = log_pi(&zp) + log_proposal(&z, &zp, &t.grad_energy(zp.view()), step) + bwd;
        worst = worst.max((lhs - rhs).abs());
    }
    Check {
        name: "mala detailed balance",
        passed: worst <= 1e-10,
        detail: format!("max |log flux difference| = {worst:.2e}"),
    }
}

fn uld_covariance() -> Check {
    let mut rng = stream_rng(2, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let gamma: f64 = rng.random_range(0.1..10.0);
        let tau: f64 = rng.random_range(1e-3..1.0);
        let k = UldKernel::new(gamma, tau).expect("positive parameters");
        let n = 4000;
        let h = tau / n as f64;
        let (mut vz, mut c, mut vv) = (0.0, 0.0, 0.0);
        for i in 0..n {
            // Midpoint rule in the lag u.
            let u = (i as f64 + 0.5) * h;
            let e = (-gamma * u).exp();
            vz += 2.0 / gamma * (1.0 - e).powi(2) * h;
            c += 2.0 * (1.0 - e) * e * h;
            vv += 2.0 * gamma * e * e * h;
        }
        worst = worst
            .max((k.var_z() - vz).abs())
            .max((k.cov_zv() - c).abs())
            .max((k.var_v() - vv).abs());
    }
    Check {
        name: "uld noise covariance",
        passed: worst <= 1e-6,
        detail: format!("max deviation from midpoint quadrature = {worst:.2e}"),
    }
}

fn taylor_quadratic() -> Check {
    let score = |x: ndarray::ArrayView1<f64>| x.mapv(|v| -v);
    let mut rng = stream_rng(3, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z: Array1<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let z2: Array1<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let exact = 0.5 * (z2.dot(&z2) - z.dot(&z));
        let est = taylor_energy_diff(score, z.view(), z2.view(), 2, 1e-3, None);
        worst = worst.max((est.value - exact).abs());
    }
    Check {
        name: "taylor estimator on a quadratic",
        passed: worst <= 1e-8,
        detail: format!("max error = {worst:.2e}"),
    }
}

fn determinism() -> Check {
    let o = ScoreOracle::exact(IsotropicGaussianMixture::circle(12, 10, 1.0, 0.007).expect("valid preset"));
    let schedule = RtkSchedule::fixed(150.0, 6.0, &[0.0, 0.2, 0.4, 0.6, 0.8]).expect("valid schedule");
    let method = RtkMethod::new(
        InnerKind::Mala { projection: None, estimator: EnergyEstimator::Exact, lazy: false },
        vec![6],
        StepRule::Smoothness { scale: 0.5 },
    );
    let a = rtk_run(&o, &schedule, &method, 64, 9);
    let b = rtk_run(&o, &schedule, &method, 64, 9);
    let passed = match (a, b) {
        (Ok(a), Ok(b)) => a.samples == b.samples && a.nfe == b.nfe && a.max_nfe() <= 5 * 7,
        _ => false,
    };
    Check {
        name: "seeded determinism and NFE bound",
        passed,
        detail: String::new(),
    }
}

pub fn run_selftest() -> Vec<Check> {
    vec![detailed_balance(), uld_covariance(), taylor_quadratic(), determinism()]
}
