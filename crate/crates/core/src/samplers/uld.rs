//! Underdamped Langevin with the exact OU-integrator discretization.
//!
//! Between gradient refreshes the pair `(z, v)` follows
//! `dz = v dt`, `dv = -gamma v dt - grad g dt + sqrt(2 gamma) dB`.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use super::ChainState;
use crate::error::{Result, RtkError};
use crate::rng::ChainRng;
use crate::schedule::RtkTarget;

/// `x - 2 (1 - e^{-x}) + (1 - e^{-2x}) / 2`, accurate near zero.
fn position_variance_kernel(x: f64) -> f64 {
    if x < 0.1 {
        // sum_{n >= 3} (-1)^n (2 - 2^{n-1}) x^n / n!
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        for n in 3..=24 {
            term *= x / n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (2.0 - 2f64.powi(n - 1)) * term;
        }
        sum
    } else {
        x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1()
    }
}

/// Per-coordinate noise law and drift coefficients for fixed `(gamma, tau)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UldKernel {
    friction: f64,
    step: f64,
    var_z: f64,
    cov: f64,
    var_v: f64,
    // Lower Cholesky factor: xi_z = a n1, xi_v = b n1 + c n2.
    a: f64,
    b: f64,
    c: f64,
    clamped: bool,
}

impl UldKernel {
    pub fn new(friction: f64, step: f64) -> Result<Self> {
        if !(friction > 0.0 && friction.is_finite()) {
            return Err(RtkError::param("friction", format!("must be positive, got {friction}")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(RtkError::param("step", format!("must be positive, got {step}")));
        }
        let x = friction * step;
        let var_z = 2.0 / (friction * friction) * position_variance_kernel(x);
        let cov = (-x).exp_m1().powi(2) / friction;
        let var_v = -(-2.0 * x).exp_m1();

        let (a, b, c, clamped) = if var_z > 0.0 {
            let a = var_z.sqrt();
            let b = cov / a;
            let rest = var_v - b * b;
            if rest >= 0.0 {
                (a, b, rest.sqrt(), false)
            } else {
                (a, var_v.sqrt(), 0.0, true)
            }
        } else {
            (0.0, 0.0, var_v.max(0.0).sqrt(), var_z < 0.0)
        };
        Ok(Self {
            friction,
            step,
            var_z,
            cov,
            var_v,
            a,
            b,
            c,
            clamped,
        })
    }

    pub fn friction(&self) -> f64 {
        self.friction
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn var_z(&self) -> f64 {
        self.var_z
    }

    pub fn cov_zv(&self) -> f64 {
        self.cov
    }

    pub fn var_v(&self) -> f64 {
        self.var_v
    }

    /// True when rounding made the 2x2 block indefinite and the factor
    /// was projected to the PSD boundary.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    pub fn noise_pair(&self, dim: usize, rng: &mut ChainRng) -> (Array1<f64>, Array1<f64>) {
        let mut xz = Array1::zeros(dim);
        let mut xv = Array1::zeros(dim);
        for i in 0..dim {
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            xz[i] = self.a * n1;
            xv[i] = self.b * n1 + self.c * n2;
        }
        (xz, xv)
    }
}

/// One `dim`-coordinate draw of `(xi_z, xi_v)`.
pub fn uld_noise_pair(friction: f64, step: f64, dim: usize, rng: &mut ChainRng) -> Result<(Array1<f64>, Array1<f64>)> {
    Ok(UldKernel::new(friction, step)?.noise_pair(dim, rng))
}

/// One update; the state must carry a velocity.
pub fn uld_step(target: &RtkTarget<'_>, state: &mut ChainState, kernel: &UldKernel) {
    let gamma = kernel.friction;
    let decay = (-gamma * kernel.step).exp();
    let lag = -(-gamma * kernel.step).exp_m1() / gamma;
    let drift_z = (kernel.step - lag) / gamma;

    let grad = target.grad_energy(state.position.view());
    state.nfe += 1;
    let (xz, xv) = kernel.noise_pair(state.position.len(), &mut state.rng);
    let v = state.velocity.as_ref().expect("ULD state needs a velocity");
    let z_new = &state.position + &(v * lag) - &(&grad * drift_z) + xz;
    let v_new = v * decay - &(&grad * lag) + xv;
    state.position = z_new;
    state.velocity = Some(v_new);
}

pub fn uld_run(target: &RtkTarget<'_>, iterations: usize, kernel: &UldKernel, state: &mut ChainState) {
    if kernel.clamped && iterations > 0 {
        state.psd_clamps += 1;
    }
    for _ in 0..iterations {
        uld_step(target, state, kernel);
    }
}
