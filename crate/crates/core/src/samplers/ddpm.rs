use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use super::{gaussian_vector, SampleRun};
use crate::error::{Result, RtkError};
use crate::oracle::ScoreModel;
use crate::rng::{stream_rng, ChainRng};

/// One closed-form update over a segment of length `eta`, using the score
/// at forward time `t`:
/// `x' = e^eta x - 2 (1 - e^eta) s_t(x) + sqrt(e^{2 eta} - 1) xi`.
pub fn ddpm_step(x: &Array1<f64>, score: &Array1<f64>, eta: f64, rng: &mut ChainRng) -> Array1<f64> {
    let grow = eta.exp();
    let drift = 2.0 * eta.exp_m1();
    let sd = (2.0 * eta).exp_m1().sqrt();
    let xi = gaussian_vector(x.len(), rng);
    x * grow + score * drift + xi * sd
}

/// DDPM over `[0, horizon]` in `steps` equal segments, from `N(0, I)`.
pub fn ddpm_run(
    model: &dyn ScoreModel,
    horizon: f64,
    steps: usize,
    n_chains: usize,
    seed: u64,
) -> Result<SampleRun> {
    if steps == 0 {
        return Err(RtkError::param("steps", "must be at least 1"));
    }
    if !(horizon > 0.0) {
        return Err(RtkError::param("horizon", "must be positive"));
    }
    let d = model.dim();
    let eta = horizon / steps as f64;
    let chains: Vec<(Array1<f64>, u64)> = (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let mut x = gaussian_vector(d, &mut rng);
            for k in 0..steps {
                let t = horizon - k as f64 * eta;
                let s = model.score(t, x.view());
                x = ddpm_step(&x, &s, eta, &mut rng);
            }
            (x, steps as u64)
        })
        .collect();
    let mut samples = Array2::zeros((n_chains, d));
    for (mut row, (x, _)) in samples.axis_iter_mut(Axis(0)).zip(&chains) {
        row.assign(x);
    }
    Ok(SampleRun {
        samples,
        nfe: chains.iter().map(|c| c.1).collect(),
        segments: Vec::new(),
        psd_clamps: 0,
    })
}
