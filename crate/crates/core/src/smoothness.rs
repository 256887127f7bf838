//! Numeric estimate of the score's Lipschitz constant.
//!
//! The estimate is the largest spectral norm of a central-difference Hessian
//! of `ln p_t` found over a probe set. It is a lower estimate of the true
//! constant; the probe set is returned so a value can be reproduced.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, RtkError};
use crate::oracle::ScoreOracle;

pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const DEFAULT_PROBES: usize = 64;

/// Central-difference Jacobian of `grad` at `x`, symmetrized.
pub fn fd_hessian<F>(grad: F, x: ArrayView1<f64>, step: f64) -> Array2<f64>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    let d = x.len();
    let mut h = Array2::zeros((d, d));
    let mut probe = x.to_owned();
    for i in 0..d {
        probe[i] = x[i] + step;
        let up = grad(probe.view());
        probe[i] = x[i] - step;
        let down = grad(probe.view());
        probe[i] = x[i];
        let col = (up - down) / (2.0 * step);
        h.column_mut(i).assign(&col);
    }
    let ht = h.t().to_owned();
    (h + ht) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let d = m.nrows();
    let dm = DMatrix::from_fn(d, d, |i, j| m[[i, j]]);
    let mut ev: Vec<f64> = SymmetricEigen::new(dm).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn spectral_norm(m: &Array2<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessProbe {
    pub t: f64,
    pub x: Vec<f64>,
    pub spectral_norm: f64,
}

#[derive(Clone, Debug)]
pub struct SmoothnessEstimate {
    pub value: f64,
    pub argmax: SmoothnessProbe,
    pub probes: Vec<SmoothnessProbe>,
}

const REFINE_STARTS: usize = 3;
const REFINE_ITERS: usize = 40;

/// Largest probed Hessian norm of `ln p_t` over `times`.
///
/// Per time, the probe set holds the diffused component means, their
/// centroid, midpoints to each mean's nearest neighbours, `probes` random
/// points (half from `p_t`, half from `N(0, I)`), and a short random-search
/// refinement around the best few of those.
pub fn estimate_smoothness<R: Rng + ?Sized>(
    oracle: &ScoreOracle,
    times: &[f64],
    probes: usize,
    rng: &mut R,
) -> Result<SmoothnessEstimate> {
    if probes == 0 {
        return Err(RtkError::param("probes", "at least one probe is required"));
    }
    if times.is_empty() {
        return Err(RtkError::param("times", "at least one time is required"));
    }
    let base = oracle.base();
    let d = base.dim();
    let mut all = Vec::new();
    for &t in times {
        let pt = base.forward_marginal(t);
        let grad = |x: ArrayView1<f64>| base.score(t, x);
        let eval = |x: &Array1<f64>| -> SmoothnessProbe {
            let h = fd_hessian(grad, x.view(), DEFAULT_FD_STEP);
            SmoothnessProbe {
                t,
                x: x.to_vec(),
                spectral_norm: spectral_norm(&h),
            }
        };

        let means = pt.means();
        let mut points: Vec<Array1<f64>> = means.axis_iter(Axis(0)).map(|r| r.to_owned()).collect();
        let centroid = means.t().dot(&ArrayView1::from(pt.weights()));
        points.push(centroid);
        for (i, mi) in means.axis_iter(Axis(0)).enumerate() {
            let mut dists: Vec<(f64, usize)> = means
                .axis_iter(Axis(0))
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, mj)| ((&mi - &mj).mapv(|v| v * v).sum(), j))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0));
            for &(_, j) in dists.iter().take(3) {
                points.push((&mi + &means.row(j)) * 0.5);
            }
        }
        let from_pt = probes.div_ceil(2);
        points.extend(pt.sample(from_pt, rng).axis_iter(Axis(0)).map(|r| r.to_owned()));
        for _ in from_pt..probes {
            points.push((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        }

        let mut local: Vec<SmoothnessProbe> = points.iter().map(eval).collect();
        let mut order: Vec<usize> = (0..local.len()).collect();
        order.sort_by(|&a, &b| local[b].spectral_norm.total_cmp(&local[a].spectral_norm));
        let radius0 = pt.min_variance(0.0).sqrt();
        let starts: Vec<usize> = order.into_iter().take(REFINE_STARTS).collect();
        for s in starts {
            let mut best_x: Array1<f64> = Array1::from(local[s].x.clone());
            let mut best = local[s].spectral_norm;
            let mut radius = radius0;
            for _ in 0..REFINE_ITERS {
                let step: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let cand = &best_x + &(step * (radius / (d as f64).sqrt()));
                let p = eval(&cand);
                if p.spectral_norm > best {
                    best = p.spectral_norm;
                    best_x = cand;
                    radius *= 1.5;
                } else {
                    radius *= 0.7;
                }
                local.push(p);
            }
        }
        all.extend(local);
    }
    let argmax = all
        .iter()
        .max_by(|a, b| a.spectral_norm.total_cmp(&b.spectral_norm))
        .cloned()
        .expect("nonempty probe set");
    Ok(SmoothnessEstimate {
        value: argmax.spectral_norm,
        argmax,
        probes: all,
    })
}
