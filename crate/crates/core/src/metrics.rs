//! Sample-quality metrics: per-dimension histogram TV, marginal accuracy,
//! second moments, conditional histograms and mode masses.

use ndarray::{ArrayView1, ArrayView2, Axis};

use crate::error::{Result, RtkError};
use crate::mixture::IsotropicGaussianMixture;

/// Default number of bins per dimension.
pub const DEFAULT_BINS: usize = 100;

/// Normalized histogram over fixed edges, with the out-of-range mass kept
/// separately. Bins are half-open except the last, which includes its
/// right edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram1D {
    edges: Vec<f64>,
    mass: Vec<f64>,
    out_of_range: f64,
    count: usize,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(RtkError::param("edges", "need at least two edges"));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RtkError::param("edges", "must be strictly increasing"));
    }
    Ok(())
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[last]) {
        return None;
    }
    let i = edges.partition_point(|e| *e <= v);
    Some((i - 1).min(last - 1))
}

impl Histogram1D {
    /// Histogram of `values`; an empty input is rejected.
    pub fn from_samples<I>(values: I, edges: &[f64]) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        let h = Self::accumulate(values, edges)?;
        if h.count == 0 {
            return Err(RtkError::EmptySamples);
        }
        Ok(h)
    }

    fn accumulate<I>(values: I, edges: &[f64]) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        check_edges(edges)?;
        let mut counts = vec![0u64; edges.len() - 1];
        let mut outside = 0u64;
        let mut n = 0usize;
        for v in values {
            n += 1;
            match bin_of(edges, v) {
                Some(i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        let denom = n.max(1) as f64;
        Ok(Self {
            edges: edges.to_vec(),
            mass: counts.iter().map(|c| *c as f64 / denom).collect(),
            out_of_range: outside as f64 / denom,
            count: n,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn out_of_range(&self) -> f64 {
        self.out_of_range
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// `0.5 sum |m_a - m_b| + 0.5 |oor_a - oor_b|` with shared edges.
    pub fn tv(&self, other: &Self) -> Result<f64> {
        if self.edges != other.edges {
            return Err(RtkError::param("edges", "histograms must share edges"));
        }
        let inside: f64 = self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum();
        Ok(0.5 * inside + 0.5 * (self.out_of_range - other.out_of_range).abs())
    }
}

/// `bins` uniform bins over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(RtkError::param("bins", "must be at least 1"));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(RtkError::param("range", format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    Ok(edges)
}

/// Uniform edges over the pooled range of `a` and `b`. A degenerate range
/// is widened by 0.5 on each side.
pub fn shared_edges(a: ArrayView1<f64>, b: ArrayView1<f64>, bins: usize) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(RtkError::EmptySamples);
    }
    let (lo, hi) = a
        .iter()
        .chain(b.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if hi > lo {
        uniform_edges(lo, hi, bins)
    } else {
        uniform_edges(lo - 0.5, hi + 0.5, bins)
    }
}

/// Histogram TV distance between two 1-D samples over shared edges.
pub fn histogram_tv(a: ArrayView1<f64>, b: ArrayView1<f64>, edges: &[f64]) -> Result<f64> {
    let ha = Histogram1D::from_samples(a.iter().copied(), edges)?;
    let hb = Histogram1D::from_samples(b.iter().copied(), edges)?;
    ha.tv(&hb)
}

/// Per-dimension histogram TV with pooled-range edges.
pub fn marginal_tvs(samples: ArrayView2<f64>, reference: ArrayView2<f64>, bins: usize) -> Result<Vec<f64>> {
    if samples.ncols() != reference.ncols() {
        return Err(RtkError::DimensionMismatch {
            expected: reference.ncols(),
            found: samples.ncols(),
        });
    }
    if samples.nrows() == 0 || reference.nrows() == 0 {
        return Err(RtkError::EmptySamples);
    }
    samples
        .axis_iter(Axis(1))
        .zip(reference.axis_iter(Axis(1)))
        .map(|(a, b)| {
            let edges = shared_edges(a, b, bins)?;
            histogram_tv(a, b, &edges)
        })
        .collect()
}

/// `1 - 0.5 * mean_i TV_i`.
pub fn marginal_accuracy(samples: ArrayView2<f64>, reference: ArrayView2<f64>, bins: usize) -> Result<f64> {
    let tvs = marginal_tvs(samples, reference, bins)?;
    Ok(1.0 - 0.5 * tvs.iter().sum::<f64>() / tvs.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalHistogram {
    pub histogram: Histogram1D,
    /// Fraction of rows inside the conditioning window.
    pub retained_fraction: f64,
}

impl ConditionalHistogram {
    pub fn is_empty(&self) -> bool {
        self.histogram.is_empty()
    }
}

/// Histogram of column `target_dim` over rows with `low < x[cond_dim] < high`.
pub fn conditional_histogram(
    samples: ArrayView2<f64>,
    cond_dim: usize,
    low: f64,
    high: f64,
    target_dim: usize,
    edges: &[f64],
) -> Result<ConditionalHistogram> {
    if !(low < high) {
        return Err(RtkError::param("low", "must be below high"));
    }
    let d = samples.ncols();
    if cond_dim >= d || target_dim >= d {
        return Err(RtkError::DimensionMismatch {
            expected: d,
            found: cond_dim.max(target_dim) + 1,
        });
    }
    let kept = samples
        .axis_iter(Axis(0))
        .filter(|row| row[cond_dim] > low && row[cond_dim] < high)
        .map(|row| row[target_dim]);
    let histogram = Histogram1D::accumulate(kept, edges)?;
    let retained_fraction = histogram.count as f64 / samples.nrows().max(1) as f64;
    Ok(ConditionalHistogram {
        histogram,
        retained_fraction,
    })
}

/// Fraction of rows nearest to each component mean.
pub fn mode_mass(samples: ArrayView2<f64>, mixture: &IsotropicGaussianMixture) -> Result<Vec<f64>> {
    if samples.ncols() != mixture.dim() {
        return Err(RtkError::DimensionMismatch {
            expected: mixture.dim(),
            found: samples.ncols(),
        });
    }
    let mut counts = vec![0u64; mixture.n_components()];
    for row in samples.axis_iter(Axis(0)) {
        counts[mixture.nearest_component(row)] += 1;
    }
    let n = samples.nrows().max(1) as f64;
    Ok(counts.iter().map(|c| *c as f64 / n).collect())
}

/// Mean of `||x||^2` over rows.
pub fn second_moment(samples: ArrayView2<f64>) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(RtkError::EmptySamples);
    }
    let total: f64 = samples.axis_iter(Axis(0)).map(|r| r.dot(&r)).sum();
    Ok(total / samples.nrows() as f64)
}

/// One result line of a benchmark sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    /// Configured budget.
    pub nfe: u64,
    /// Largest per-chain score-call count actually spent.
    pub realized_nfe: u64,
    pub seed: u64,
    pub marginal_accuracy: f64,
    pub second_moment: f64,
    pub accept_rate: Option<f64>,
    pub per_mode_mass: Vec<f64>,
    pub wall_ms: u64,
}
