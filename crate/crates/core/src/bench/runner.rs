//! Sweep orchestration: every method at every budget and seed.

use std::time::Instant;

use ndarray::{Array1, Array2};

use super::config::{ExperimentConfig, MethodConfig, ScheduleMode};
use crate::error::{Result, RtkError};
use crate::metrics::{marginal_accuracy, mode_mass, second_moment, MetricsRow};
use crate::mixture::IsotropicGaussianMixture;
use crate::oracle::{ScoreModel, ScoreOracle};
use crate::rng::stream_rng;
use crate::samplers::{ddpm_run, rtk_run, InnerKind, RtkMethod, SampleRun};
use crate::schedule::RtkSchedule;
use crate::smoothness::estimate_smoothness;

/// Per-segment inner iteration counts for a total score-call budget.
///
/// The budget is split evenly with the remainder going to the earliest
/// segments. MALA reserves one call per segment for the score at its
/// initial point, then gets `floor((b - 1) / c)` proposals at `c` calls each.
pub fn allocate_nfe(budget: u64, kind: &InnerKind, segments: usize) -> Result<Vec<usize>> {
    if segments == 0 {
        return Ok(Vec::new());
    }
    if budget < segments as u64 {
        return Err(RtkError::BudgetTooSmall { budget, segments });
    }
    let share = budget / segments as u64;
    let rem = budget % segments as u64;
    Ok((0..segments as u64)
        .map(|k| {
            let b = share + u64::from(k < rem);
            let n = match kind {
                InnerKind::Ula | InnerKind::Uld { .. } => b,
                InnerKind::Mala { estimator, .. } => (b - 1) / estimator.cost_per_proposal(),
            };
            n as usize
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct MethodSamples {
    pub method: String,
    pub nfe: u64,
    pub seed: u64,
    pub samples: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// Smoothness used to build the schedule.
    pub smoothness: f64,
    pub rows: Vec<MetricsRow>,
    pub samples: Vec<MethodSamples>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn row(&self, method: &str, nfe: u64) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.nfe == nfe)
    }

    pub fn samples_for(&self, method: &str, nfe: u64) -> Option<&Array2<f64>> {
        self.samples
            .iter()
            .find(|s| s.method == method && s.nfe == nfe)
            .map(|s| &s.samples)
    }
}

/// Shared pieces every run of an experiment needs.
pub struct Setup {
    pub mixture: IsotropicGaussianMixture,
    pub oracle: ScoreOracle,
    pub schedule: RtkSchedule,
    pub reference: Array2<f64>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let mixture = config.mixture()?;
    let oracle = ScoreOracle::with_errors(
        mixture.clone(),
        config.error.score,
        config.error.energy,
        config.error.seed,
    )?;
    let schedule = build_schedule(config, &oracle)?;
    let reference = mixture.sample(config.reference_size, &mut stream_rng(config.metric_seed, 0));
    Ok(Setup {
        mixture,
        oracle,
        schedule,
        reference,
    })
}

fn build_schedule(config: &ExperimentConfig, oracle: &ScoreOracle) -> Result<RtkSchedule> {
    let sc = &config.schedule;
    let smoothness = match sc.smoothness {
        Some(l) => l,
        None => {
            let times: Vec<f64> = match sc.mode {
                ScheduleMode::Fixed => RtkSchedule::fixed(1.0, config.horizon, &sc.fractions)?
                    .segments()
                    .iter()
                    .map(|s| s.t_base)
                    .collect(),
                ScheduleMode::Theory => vec![0.0],
            };
            let mut rng = stream_rng(config.smoothness.seed, 0);
            estimate_smoothness(oracle, &times, config.smoothness.probes, &mut rng)?.value
        }
    };
    match sc.mode {
        ScheduleMode::Fixed => RtkSchedule::fixed(smoothness, config.horizon, &sc.fractions),
        ScheduleMode::Theory => {
            let d = oracle.dim();
            let g0 = oracle.exact_score(0.0, Array1::zeros(d).view());
            RtkSchedule::theory(smoothness, d, g0.dot(&g0).sqrt(), sc.eps, config.max_outer_steps)
        }
    }
}

/// One method at one budget and seed.
pub fn run_method(
    setup: &Setup,
    config: &ExperimentConfig,
    method: &MethodConfig,
    budget: u64,
    seed: u64,
) -> Result<SampleRun> {
    match method.inner_kind(config.error.score) {
        None => {
            let steps = usize::try_from(budget).map_err(|_| RtkError::param("nfe", "budget too large"))?;
            ddpm_run(&setup.oracle, config.horizon, steps, config.n_samples, seed)
        }
        Some(kind) => {
            let iterations = allocate_nfe(budget, &kind, setup.schedule.outer_steps())?;
            let rtk = RtkMethod::new(kind, iterations, method.step_rule());
            rtk_run(&setup.oracle, &setup.schedule, &rtk, config.n_samples, seed)
        }
    }
}

/// Runs the sweep. Rows come out ordered by method, then budget, then seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let setup = prepare(config)?;
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for method in &config.methods {
        for &budget in &config.nfe_budgets {
            for seed in config.seeds() {
                let start = Instant::now();
                let run = run_method(&setup, config, method, budget, seed)?;
                let elapsed = start.elapsed().as_millis() as u64;
                let realized = run.max_nfe();
                if realized > budget {
                    warnings.push(format!("{} at budget {budget}: realized NFE {realized}", method.name));
                }
                if run.psd_clamps > 0 {
                    warnings.push(format!(
                        "{} at budget {budget}: {} ULD noise blocks clamped to PSD",
                        method.name, run.psd_clamps
                    ));
                }
                rows.push(MetricsRow {
                    method: method.name.clone(),
                    nfe: budget,
                    realized_nfe: realized,
                    seed,
                    marginal_accuracy: marginal_accuracy(
                        run.samples.view(),
                        setup.reference.view(),
                        config.bins_per_dim,
                    )?,
                    second_moment: second_moment(run.samples.view())?,
                    accept_rate: run.accept_rate(),
                    per_mode_mass: mode_mass(run.samples.view(), &setup.mixture)?,
                    wall_ms: if config.record_wall_time { elapsed } else { 0 },
                });
                samples.push(MethodSamples {
                    method: method.name.clone(),
                    nfe: budget,
                    seed,
                    samples: run.samples,
                });
            }
        }
    }
    Ok(RunReport {
        config: config.clone(),
        smoothness: setup.schedule.smoothness(),
        rows,
        samples,
        warnings,
    })
}
