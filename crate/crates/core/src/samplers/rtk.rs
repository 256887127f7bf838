//! The outer RTK loop: one inner sampler per schedule segment.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use super::mala::{default_projection_params, mala_run};
use super::ula::ula_run;
use super::uld::{uld_run, UldKernel};
use super::{gaussian_vector, ChainState, MalaSpec, Projection, SampleRun, SamplerSpec, SegmentStats};
use crate::error::{Result, RtkError};
use crate::oracle::ScoreModel;
use crate::rng::stream_rng;
use crate::schedule::{make_target, uld_init, RtkSchedule, RtkTarget};

/// How MALA evaluates `r_g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyEstimator {
    /// Energy differences from the model.
    Exact,
    /// Score-only Taylor estimate of the given order.
    Taylor { order: u32, delta_t: f64 },
}

impl EnergyEstimator {
    /// Order 2 with `delta_t = sqrt(score_error)`, or `1e-3` for exact scores.
    pub fn taylor_default(score_error: f64) -> Self {
        let delta_t = if score_error > 0.0 { score_error.sqrt() } else { 1e-3 };
        Self::Taylor { order: 2, delta_t }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Taylor { order, delta_t } = *self {
            if order == 0 {
                return Err(RtkError::param("order", "must be at least 1"));
            }
            if !(delta_t > 0.0 && delta_t.is_finite()) {
                return Err(RtkError::param("delta_t", format!("must be positive, got {delta_t}")));
            }
        }
        Ok(())
    }

    /// Score queries per scored proposal, including `s(z')`.
    pub fn cost_per_proposal(&self) -> u64 {
        match *self {
            Self::Exact => 1,
            Self::Taylor { order, .. } => order.max(1) as u64,
        }
    }
}

/// How the inner step size is chosen on each segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Fixed { step: f64 },
    /// `scale / L_g` for ULA and MALA, `scale / sqrt(L_g)` for ULD, where
    /// `L_g` bounds the Hessian of the segment energy.
    Smoothness { scale: f64 },
    /// The conservative defaults: the projected-MALA step for ULA and MALA,
    /// `eps / sqrt(d L_g)` for ULD, each times `multiplier`.
    Theory { multiplier: f64, eps: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProjectionRule {
    Explicit { outer_radius: f64, inner_radius: f64 },
    /// `R` from the default formula and `r = 3 sqrt(tau d ln(8S/eps))` for
    /// the step actually used.
    Default { eps: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerKind {
    Ula,
    Mala {
        projection: Option<ProjectionRule>,
        estimator: EnergyEstimator,
        lazy: bool,
    },
    /// `None` selects `2 sqrt(2 L_g)`.
    Uld { friction: Option<f64> },
}

/// An inner sampler plus per-segment iteration counts.
#[derive(Clone, Debug, PartialEq)]
pub struct RtkMethod {
    pub kind: InnerKind,
    /// One entry per segment, or a single entry used for all of them.
    pub iterations: Vec<usize>,
    pub step: StepRule,
}

impl RtkMethod {
    pub fn new(kind: InnerKind, iterations: Vec<usize>, step: StepRule) -> Self {
        Self { kind, iterations, step }
    }

    fn iterations_for(&self, k: usize) -> usize {
        if self.iterations.len() == 1 {
            self.iterations[0]
        } else {
            self.iterations[k]
        }
    }

    fn check(&self, segments: usize) -> Result<()> {
        if self.iterations.len() != 1 && self.iterations.len() != segments {
            return Err(RtkError::param(
                "iterations",
                format!("need 1 or {segments} entries, got {}", self.iterations.len()),
            ));
        }
        match self.step {
            StepRule::Fixed { step } if !(step > 0.0) => Err(RtkError::param("step", "must be positive")),
            StepRule::Smoothness { scale } if !(scale > 0.0) => Err(RtkError::param("scale", "must be positive")),
            StepRule::Theory { multiplier, eps } if !(multiplier > 0.0) || !(eps > 0.0 && eps < 1.0) => {
                Err(RtkError::param("eps", "multiplier must be positive and eps in (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// Concrete sampler for segment `target.outer_index()`.
    pub fn resolve(&self, target: &RtkTarget<'_>, schedule: &RtkSchedule) -> Result<SamplerSpec> {
        let k = target.outer_index();
        let iterations = self.iterations_for(k);
        let smooth = target
            .smoothness_bound()
            .unwrap_or(schedule.smoothness() + target.tilt_curvature());
        let d = target.dim();
        let m2 = target.model().second_moment().unwrap_or(d as f64).sqrt();
        let x0_norm = target.x_prev().dot(&target.x_prev()).sqrt();
        let langevin_step = |rule: StepRule| -> Result<f64> {
            Ok(match rule {
                StepRule::Fixed { step } => step,
                StepRule::Smoothness { scale } => scale / smooth,
                StepRule::Theory { multiplier, eps } => {
                    multiplier * default_projection_params(smooth, d, m2, x0_norm, iterations.max(1), eps)?.step
                }
            })
        };
        let spec = match self.kind {
            InnerKind::Ula => SamplerSpec::Ula { iterations, step: langevin_step(self.step)? },
            InnerKind::Mala { projection, estimator, lazy } => {
                let step = langevin_step(self.step)?;
                let projection = match projection {
                    None => None,
                    Some(ProjectionRule::Explicit { outer_radius, inner_radius }) => {
                        Some(Projection { outer_radius, inner_radius })
                    }
                    Some(ProjectionRule::Default { eps }) => {
                        let s = iterations.max(1);
                        let p = default_projection_params(smooth, d, m2, x0_norm, s, eps)?;
                        Some(Projection {
                            outer_radius: p.outer_radius,
                            inner_radius: 3.0 * (step * d as f64 * (8.0 * s as f64 / eps).ln()).sqrt(),
                        })
                    }
                };
                SamplerSpec::Mala(MalaSpec { iterations, step, projection, estimator, lazy })
            }
            InnerKind::Uld { friction } => {
                let step = match self.step {
                    StepRule::Fixed { step } => step,
                    StepRule::Smoothness { scale } => scale / smooth.sqrt(),
                    StepRule::Theory { multiplier, eps } => multiplier * eps / (d as f64 * smooth).sqrt(),
                };
                SamplerSpec::Uld {
                    iterations,
                    step,
                    friction: friction.unwrap_or_else(|| 2.0 * (2.0 * smooth).sqrt()),
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

struct ChainOutput {
    position: Array1<f64>,
    nfe: u64,
    segments: Vec<SegmentStats>,
    psd_clamps: u64,
}

fn run_chain(
    model: &dyn ScoreModel,
    schedule: &RtkSchedule,
    method: &RtkMethod,
    seed: u64,
    chain: u64,
) -> Result<ChainOutput> {
    let d = model.dim();
    let mut rng = stream_rng(seed, chain);
    let x0 = gaussian_vector(d, &mut rng);
    let mut state = ChainState::new(x0, rng);
    let mut segments = Vec::with_capacity(schedule.outer_steps());
    for k in 0..schedule.outer_steps() {
        let x_prev = state.position.clone();
        let target = make_target(model, schedule, k, x_prev)?;
        let spec = method.resolve(&target, schedule)?;
        let (acc0, prop0) = (state.accepted, state.proposed);
        match &spec {
            SamplerSpec::Ula { iterations, step } => {
                if k == 0 {
                    state.position = target.mala_init(schedule.smoothness()).sample(&mut state.rng);
                }
                ula_run(&target, *iterations, *step, &mut state);
            }
            SamplerSpec::Mala(m) => {
                state.position = target.mala_init(schedule.smoothness()).sample(&mut state.rng);
                mala_run(&target, m, &mut state);
            }
            SamplerSpec::Uld { iterations, step, friction } => {
                let (z, v) = uld_init(target.eta(), d, &mut state.rng);
                state.position = z;
                state.velocity = Some(v);
                let kernel = UldKernel::new(*friction, *step)?;
                uld_run(&target, *iterations, &kernel, &mut state);
            }
            SamplerSpec::Ddpm { .. } => {
                return Err(RtkError::param("kind", "DDPM is not an RTK inner sampler"));
            }
        }
        segments.push(SegmentStats {
            accepted: state.accepted - acc0,
            proposed: state.proposed - prop0,
        });
    }
    Ok(ChainOutput {
        position: state.position,
        nfe: state.nfe,
        segments,
        psd_clamps: state.psd_clamps,
    })
}

/// RTK inference from `N(0, I)`; chain `c` uses RNG stream `c` of `seed`.
pub fn rtk_run(
    model: &dyn ScoreModel,
    schedule: &RtkSchedule,
    method: &RtkMethod,
    n_chains: usize,
    seed: u64,
) -> Result<SampleRun> {
    method.check(schedule.outer_steps())?;
    let outputs: Vec<ChainOutput> = (0..n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, schedule, method, seed, c as u64))
        .collect::<Result<_>>()?;

    let d = model.dim();
    let mut samples = Array2::zeros((n_chains, d));
    for (mut row, out) in samples.axis_iter_mut(Axis(0)).zip(&outputs) {
        row.assign(&out.position);
    }
    let mut segments = vec![SegmentStats::default(); schedule.outer_steps()];
    for out in &outputs {
        for (total, s) in segments.iter_mut().zip(&out.segments) {
            total.accepted += s.accepted;
            total.proposed += s.proposed;
        }
    }
    Ok(SampleRun {
        samples,
        nfe: outputs.iter().map(|o| o.nfe).collect(),
        segments,
        psd_clamps: outputs.iter().map(|o| o.psd_clamps).sum(),
    })
}
