//! Score-only estimate of an energy difference.
//!
//! With `f = -ln p` and `h(s) = f(z + s (z2 - z))`, the difference
//! `f(z2) - f(z) = h(1) - h(0)` is approximated by the order-`u` Taylor sum
//! `sum_{i=1}^u h^(i)(0) / i!`. The first derivative along the segment is
//! `h'(s) = -score(z + s (z2 - z)) . (z2 - z)`; higher derivatives come from
//! forward differences of `h'` on the grid `0, dt, ..., (u-1) dt`.

use ndarray::{Array1, ArrayView1};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorEstimate {
    /// Approximation of `f(z2) - f(z)`.
    pub value: f64,
    /// Score queries made by this call.
    pub score_calls: u64,
}

/// Order-`order` estimate of `f(z2) - f(z)` from scores only.
///
/// `score_at_z` reuses an already known score at `z` for the first grid point.
pub fn taylor_energy_diff<F>(
    mut score: F,
    z: ArrayView1<f64>,
    z2: ArrayView1<f64>,
    order: u32,
    delta_t: f64,
    score_at_z: Option<ArrayView1<f64>>,
) -> TaylorEstimate
where
    F: FnMut(ArrayView1<f64>) -> Array1<f64>,
{
    assert!(order >= 1, "Taylor order must be at least 1");
    let dir = &z2 - &z;
    let mut calls = 0;
    let mut row: Vec<f64> = (0..order as usize)
        .map(|j| {
            if j == 0 {
                if let Some(s) = score_at_z {
                    return -s.dot(&dir);
                }
            }
            let point = &z + &(&dir * (j as f64 * delta_t));
            calls += 1;
            -score(point.view()).dot(&dir)
        })
        .collect();

    let mut value = 0.0;
    let mut factorial = 1.0;
    for i in 1..=order as usize {
        factorial *= i as f64;
        value += row[0] / factorial;
        row = row.windows(2).map(|w| (w[1] - w[0]) / delta_t).collect();
    }
    TaylorEstimate {
        value,
        score_calls: calls,
    }
}
