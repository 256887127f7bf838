//! Isotropic Gaussian mixtures and their Ornstein–Uhlenbeck marginals.
//!
//! The forward process is `dx = -x dt + sqrt(2) dB`, so a component
//! `N(mu, s2 I)` diffuses to `N(mu e^{-t}, (s2 e^{-2t} + 1 - e^{-2t}) I)`.
//! Densities are evaluated in log space with log-sum-exp over components;
//! with variances around 1e-2 the raw exponents leave the f64 range quickly.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtkError};

/// One isotropic component `weight * N(mean, variance * I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// On-disk layout of a mixture definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub dim: usize,
    #[serde(rename = "component")]
    pub components: Vec<Component>,
}

#[derive(Clone, Debug)]
pub struct IsotropicGaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Array2<f64>,
    variances: Vec<f64>,
}

/// Nonnegative diffusion time, bounded by a horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionTime {
    t: f64,
    horizon: f64,
}

impl DiffusionTime {
    pub fn new(t: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(RtkError::param("horizon", format!("must be positive, got {horizon}")));
        }
        if !(0.0..=horizon).contains(&t) {
            return Err(RtkError::param("t", format!("{t} is outside [0, {horizon}]")));
        }
        Ok(Self { t, horizon })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// `1 - e^{-2t}` without cancellation at small `t`.
#[inline]
pub(crate) fn noise_fraction(t: f64) -> f64 {
    -(-2.0 * t).exp_m1()
}

impl IsotropicGaussianMixture {
    pub fn new(dim: usize, components: Vec<Component>) -> Result<Self> {
        if dim == 0 {
            return Err(RtkError::InvalidMixture("dim must be positive".into()));
        }
        if components.is_empty() {
            return Err(RtkError::InvalidMixture("at least one component is required".into()));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(RtkError::InvalidMixture(format!(
                    "component {i}: mean has length {}, expected {dim}",
                    c.mean.len()
                )));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(RtkError::InvalidMixture(format!(
                    "component {i}: weight {} must be nonnegative",
                    c.weight
                )));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(RtkError::InvalidMixture(format!(
                    "component {i}: variance {} must be positive",
                    c.variance
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(RtkError::InvalidMixture(format!("component {i}: non-finite mean")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(RtkError::InvalidMixture(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let mut means = Array2::zeros((components.len(), dim));
        for (mut row, c) in means.axis_iter_mut(Axis(0)).zip(&components) {
            row.assign(&ArrayView1::from(&c.mean[..]));
        }
        let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
        Ok(Self {
            dim,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            means,
            variances: components.iter().map(|c| c.variance).collect(),
        })
    }

    /// `N(0, I)` in `dim` dimensions.
    pub fn standard_normal(dim: usize) -> Self {
        Self::gaussian(vec![0.0; dim], 1.0).expect("standard normal is valid")
    }

    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let dim = mean.len();
        Self::new(
            dim,
            vec![Component {
                weight: 1.0,
                mean,
                variance,
            }],
        )
    }

    /// Equal-weight components with means evenly spaced on a circle of
    /// `radius` in the first two coordinates; remaining coordinates are zero.
    pub fn circle(n_components: usize, dim: usize, radius: f64, variance: f64) -> Result<Self> {
        if dim < 2 {
            return Err(RtkError::InvalidMixture("circle mixture needs dim >= 2".into()));
        }
        let components = (0..n_components)
            .map(|j| {
                let angle = 2.0 * PI * j as f64 / n_components as f64;
                let mut mean = vec![0.0; dim];
                mean[0] = radius * angle.cos();
                mean[1] = radius * angle.sin();
                Component {
                    weight: 1.0 / n_components as f64,
                    mean,
                    variance,
                }
            })
            .collect();
        Self::new(dim, components)
    }

    pub fn from_spec(spec: MixtureSpec) -> Result<Self> {
        Self::new(spec.dim, spec.components)
    }

    /// Parse the TOML mixture schema; parse errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: MixtureSpec =
            toml::from_str(text).map_err(|e| RtkError::InvalidMixture(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RtkError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| RtkError::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn to_spec(&self) -> MixtureSpec {
        MixtureSpec {
            dim: self.dim,
            components: self.components(),
        }
    }

    pub fn components(&self) -> Vec<Component> {
        (0..self.n_components())
            .map(|i| Component {
                weight: self.weights[i],
                mean: self.means.row(i).to_vec(),
                variance: self.variances[i],
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    /// The OU marginal at time `t`; weights are unchanged.
    pub fn forward_marginal(&self, t: f64) -> Self {
        let decay = (-t).exp();
        let added = noise_fraction(t);
        let shrink = (-2.0 * t).exp();
        Self {
            dim: self.dim,
            weights: self.weights.clone(),
            log_weights: self.log_weights.clone(),
            means: &self.means * decay,
            variances: self.variances.iter().map(|v| v * shrink + added).collect(),
        }
    }

    #[inline]
    fn diffused(&self, i: usize, t: f64) -> (f64, f64) {
        if t == 0.0 {
            (1.0, self.variances[i])
        } else {
            ((-t).exp(), self.variances[i] * (-2.0 * t).exp() + noise_fraction(t))
        }
    }

    /// Per-component log joint `ln w_i + ln N(x; m_i(t), v_i(t) I)`.
    fn component_log_terms(&self, t: f64, x: ArrayView1<f64>, out: &mut Vec<f64>) {
        out.clear();
        let half_d = 0.5 * self.dim as f64;
        for (i, mean) in self.means.axis_iter(Axis(0)).enumerate() {
            let (decay, var) = self.diffused(i, t);
            let sq: f64 = x
                .iter()
                .zip(mean.iter())
                .map(|(xi, mi)| {
                    let r = xi - mi * decay;
                    r * r
                })
                .sum();
            out.push(self.log_weights[i] - half_d * (2.0 * PI * var).ln() - 0.5 * sq / var);
        }
    }

    pub fn log_density(&self, t: f64, x: ArrayView1<f64>) -> f64 {
        let mut terms = Vec::with_capacity(self.n_components());
        self.component_log_terms(t, x, &mut terms);
        log_sum_exp(&terms)
    }

    /// `grad ln p_t(x)`.
    pub fn score(&self, t: f64, x: ArrayView1<f64>) -> Array1<f64> {
        let mut terms = Vec::with_capacity(self.n_components());
        self.component_log_terms(t, x, &mut terms);
        let lse = log_sum_exp(&terms);
        let mut out = Array1::zeros(self.dim);
        for (i, mean) in self.means.axis_iter(Axis(0)).enumerate() {
            let resp = (terms[i] - lse).exp();
            if resp == 0.0 {
                continue;
            }
            let (decay, var) = self.diffused(i, t);
            let scale = resp / var;
            for ((o, xi), mi) in out.iter_mut().zip(x.iter()).zip(mean.iter()) {
                *o -= scale * (xi - mi * decay);
            }
        }
        out
    }

    /// Posterior component probabilities at `x` under `p_t`.
    pub fn responsibilities(&self, t: f64, x: ArrayView1<f64>) -> Vec<f64> {
        let mut terms = Vec::with_capacity(self.n_components());
        self.component_log_terms(t, x, &mut terms);
        let lse = log_sum_exp(&terms);
        terms.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Smallest diffused variance; `1 / min_var` bounds the Hessian of `-ln p_t` from above.
    pub fn min_variance(&self, t: f64) -> f64 {
        (0..self.n_components())
            .map(|i| self.diffused(i, t).1)
            .fold(f64::INFINITY, f64::min)
    }

    /// `E ||x||^2` under the mixture at time zero.
    pub fn second_moment(&self) -> f64 {
        self.means
            .axis_iter(Axis(0))
            .zip(&self.weights)
            .zip(&self.variances)
            .map(|((m, w), v)| w * (m.dot(&m) + self.dim as f64 * v))
            .sum()
    }

    /// I.i.d. draws: component by weight, then an isotropic Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let picker = WeightedIndex::new(&self.weights).expect("validated weights");
        let mut out = Array2::zeros((n, self.dim));
        for mut row in out.axis_iter_mut(Axis(0)) {
            let i = picker.sample(rng);
            let sd = self.variances[i].sqrt();
            for (o, m) in row.iter_mut().zip(self.means.row(i)) {
                let z: f64 = rng.sample(StandardNormal);
                *o = m + sd * z;
            }
        }
        out
    }

    /// Index of the nearest component mean (Euclidean, time zero).
    pub fn nearest_component(&self, x: ArrayView1<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, mean) in self.means.axis_iter(Axis(0)).enumerate() {
            let d: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}
