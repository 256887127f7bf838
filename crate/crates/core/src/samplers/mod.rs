//! Inner samplers and the two end-to-end drivers (DDPM baseline, RTK).
//!
//! Every score query made by a sampler is counted in [`ChainState::nfe`].
//! Exact energy differences are analytic and cost nothing; the score-only
//! Taylor estimator pays for the scores it evaluates.

mod ddpm;
mod mala;
mod rtk;
mod taylor;
mod ula;
mod uld;

pub use ddpm::{ddpm_run, ddpm_step};
pub use mala::{
    default_projection_params, mala_accept_log, mala_run, projected_gate, AcceptLog, ProjectionParams,
};
pub use rtk::{rtk_run, EnergyEstimator, InnerKind, ProjectionRule, RtkMethod, StepRule};
pub use taylor::{taylor_energy_diff, TaylorEstimate};
pub use ula::{ula_run, ula_step};
pub use uld::{uld_noise_pair, uld_run, uld_step, UldKernel};

use ndarray::{Array1, Array2};

use crate::error::{Result, RtkError};
use crate::rng::ChainRng;

/// Ball constraint applied to MALA proposals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// `R`: proposals must satisfy `||z'|| <= R`.
    pub outer_radius: f64,
    /// `r`: proposals must satisfy `||z' - z|| <= r`.
    pub inner_radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MalaSpec {
    pub iterations: usize,
    pub step: f64,
    pub projection: Option<Projection>,
    pub estimator: EnergyEstimator,
    pub lazy: bool,
}

/// A fully resolved inner kernel for one segment.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplerSpec {
    Ddpm { steps: usize },
    Ula { iterations: usize, step: f64 },
    Mala(MalaSpec),
    Uld { iterations: usize, step: f64, friction: f64 },
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RtkError::param(name, format!("must be positive, got {v}")))
    }
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Ddpm { steps } => {
                if *steps == 0 {
                    return Err(RtkError::param("steps", "must be at least 1"));
                }
            }
            Self::Ula { step, .. } => check_positive("step", *step)?,
            Self::Mala(m) => {
                check_positive("step", m.step)?;
                if let Some(p) = m.projection {
                    check_positive("inner_radius", p.inner_radius)?;
                    if !(p.outer_radius > p.inner_radius) {
                        return Err(RtkError::param("outer_radius", "must exceed inner_radius"));
                    }
                }
                m.estimator.validate()?;
            }
            Self::Uld { step, friction, .. } => {
                check_positive("step", *step)?;
                check_positive("friction", *friction)?;
            }
        }
        Ok(())
    }
}

/// Evolving state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub position: Array1<f64>,
    pub velocity: Option<Array1<f64>>,
    pub nfe: u64,
    pub rng: ChainRng,
    pub accepted: u64,
    pub proposed: u64,
    /// ULD kernels whose noise covariance had to be clamped to PSD.
    pub psd_clamps: u64,
}

impl ChainState {
    pub fn new(position: Array1<f64>, rng: ChainRng) -> Self {
        Self {
            position,
            velocity: None,
            nfe: 0,
            rng,
            accepted: 0,
            proposed: 0,
            psd_clamps: 0,
        }
    }

    pub fn with_velocity(mut self, velocity: Array1<f64>) -> Self {
        self.velocity = Some(velocity);
        self
    }
}

/// Acceptance bookkeeping for one outer segment, summed over chains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SegmentStats {
    pub accepted: u64,
    pub proposed: u64,
}

impl SegmentStats {
    pub fn accept_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Output of a multi-chain run.
#[derive(Clone, Debug)]
pub struct SampleRun {
    pub samples: Array2<f64>,
    /// Score queries per chain.
    pub nfe: Vec<u64>,
    pub segments: Vec<SegmentStats>,
    pub psd_clamps: u64,
}

impl SampleRun {
    pub fn accept_rate(&self) -> Option<f64> {
        let total = self.segments.iter().fold(SegmentStats::default(), |a, s| SegmentStats {
            accepted: a.accepted + s.accepted,
            proposed: a.proposed + s.proposed,
        });
        total.accept_rate()
    }

    pub fn max_nfe(&self) -> u64 {
        self.nfe.iter().copied().max().unwrap_or(0)
    }
}

pub(crate) fn gaussian_vector(dim: usize, rng: &mut ChainRng) -> Array1<f64> {
    use rand::Rng;
    (0..dim)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}
