//! Synthetic testbeds generated from known laws, and the experiments that
//! use them as ground truth: parameter recovery and the compute-vs-
//! reliability sweep.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{cm_points, fit_loss_cm, FitConfig};
use crate::lawform::{ErrLaw, Law, LossLawCM};
use crate::model::{resolve_run_geometry, DatasetBudget, RunRecord, TaskResult, TaskSpec};
use crate::stats::{median, quantile_sorted, relative_error};
use crate::testbed::{total_compute, NOMINAL_RTOL};

/// Name of the single downstream pseudo-task carrying the average error.
pub const AGGREGATE_TASK: &str = "synthetic-aggregate";

/// Runs drawn per reliability-sweep window, endpoints included.
pub const SWEEP_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Additive Gaussian noise on loss, in nats.
    pub loss_sigma: f64,
    /// Additive Gaussian noise on average top-1 error.
    pub err_sigma: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            loss_sigma: 0.0,
            err_sigma: 0.0,
        }
    }

    pub fn loss(sigma: f64) -> Self {
        NoiseModel {
            loss_sigma: sigma,
            err_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss_sigma >= 0.0 && self.err_sigma >= 0.0 && self.loss_sigma.is_finite() && self.err_sigma.is_finite()
        {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "noise sigmas must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            loss_sigma: 0.005,
            err_sigma: 0.0,
        }
    }
}

/// Everything needed to draw a synthetic testbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub loss_law: LossLawCM,
    pub err_law: Option<ErrLaw>,
    /// `(N, M)` pairs; tokens are `round(N * M)`.
    pub grid: Vec<(u64, f64)>,
    pub budget: Option<DatasetBudget>,
    pub noise: NoiseModel,
    pub dataset: String,
    pub eval_set: String,
}

impl SynthSpec {
    pub fn new(loss_law: LossLawCM, grid: Vec<(u64, f64)>) -> Self {
        SynthSpec {
            loss_law,
            err_law: None,
            grid,
            budget: None,
            noise: NoiseModel::none(),
            dataset: "synthetic".into(),
            eval_set: "val".into(),
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
}

/// Draws one run per feasible grid pair. Noise for grid pair `i` comes from
/// stream `i` of a ChaCha generator keyed by `seed`.
pub fn generate_runs(spec: &SynthSpec, seed: u64) -> Result<Vec<RunRecord>> {
    if spec.grid.is_empty() {
        return Err(Error::invalid("synthetic grid is empty"));
    }
    spec.noise.validate()?;
    spec.loss_law.validate()?;
    if let Some(err) = &spec.err_law {
        err.validate()?;
    }

    let mut runs = Vec::new();
    for (i, &(n, m)) in spec.grid.iter().enumerate() {
        if let Some(budget) = &spec.budget {
            if !budget.admits(n, m) {
                continue;
            }
        }
        let d = (n as f64 * m).round() as u64;
        let g = resolve_run_geometry(n, d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);

        let clean = spec.loss_law.eval(g.compute_c, g.multiplier_m)?;
        let loss = (clean + gaussian(&mut rng, spec.noise.loss_sigma)).max(0.0);
        let tasks = match &spec.err_law {
            Some(err) => {
                let avg = (err.eval(clean)? + gaussian(&mut rng, spec.noise.err_sigma)).clamp(0.0, 1.0);
                vec![TaskResult {
                    task: TaskSpec {
                        name: AGGREGATE_TASK.into(),
                        baseline: 0.0,
                        samples: None,
                    },
                    accuracy: 1.0 - avg,
                }]
            }
            None => Vec::new(),
        };
        runs.push(RunRecord {
            id: format!("{}-n{}-m{}", spec.dataset, n, m),
            dataset: spec.dataset.clone(),
            params_n: n,
            tokens_d: d,
            losses: [(spec.eval_set.clone(), loss)].into(),
            tasks,
            seed: Some(seed as i64),
            extra: BTreeMap::new(),
        });
    }
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecovery {
    pub name: String,
    pub truth: f64,
    pub median_rel_error: f64,
    pub p10_rel_error: f64,
    pub p90_rel_error: f64,
    pub median_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub n_seeds: usize,
    pub n_failed: usize,
    pub n_unconverged: usize,
    pub params: Vec<ParamRecovery>,
}

impl RecoverySummary {
    pub fn param(&self, name: &str) -> Option<&ParamRecovery> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Generates, fits and compares for seeds `0..n_seeds`.
pub fn recovery_experiment(
    truth: &LossLawCM,
    grid: &[(u64, f64)],
    noise: NoiseModel,
    n_seeds: usize,
    cfg: &FitConfig,
) -> Result<RecoverySummary> {
    if n_seeds == 0 {
        return Err(Error::invalid("n_seeds must be positive"));
    }
    let spec = SynthSpec {
        noise,
        ..SynthSpec::new(*truth, grid.to_vec())
    };
    // fail fast on bad grids rather than counting every seed as a failure
    let (probe, _) = cm_points(&generate_runs(&spec, 0)?, &spec.eval_set)?;
    fit_loss_cm(&probe, cfg)?;

    let outcomes: Vec<Option<(LossLawCM, bool)>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let runs = generate_runs(&spec, seed).ok()?;
            let (points, _) = cm_points(&runs, &spec.eval_set).ok()?;
            let fit = fit_loss_cm(&points, cfg).ok()?;
            match fit.law {
                Law::Cm(law) => Some((law, fit.converged)),
                _ => None,
            }
        })
        .collect();

    let fitted: Vec<(LossLawCM, bool)> = outcomes.into_iter().flatten().collect();
    let n_failed = n_seeds - fitted.len();
    if fitted.is_empty() {
        return Err(Error::NumericalFailure("every recovery fit failed".into()));
    }
    let n_unconverged = fitted.iter().filter(|(_, c)| !c).count();

    let truth_params = Law::Cm(*truth).params();
    let params = truth_params
        .iter()
        .enumerate()
        .map(|(k, &(name, true_value))| {
            let estimates: Vec<f64> = fitted.iter().map(|(law, _)| Law::Cm(*law).params()[k].1).collect();
            let mut rel: Vec<f64> = estimates
                .iter()
                .map(|e| (e - true_value).abs() / true_value.abs())
                .collect();
            rel.sort_by(f64::total_cmp);
            let abs: Vec<f64> = estimates.iter().map(|e| (e - true_value).abs()).collect();
            ParamRecovery {
                name: name.to_string(),
                truth: true_value,
                median_rel_error: quantile_sorted(&rel, 0.5),
                p10_rel_error: quantile_sorted(&rel, 0.1),
                p90_rel_error: quantile_sorted(&rel, 0.9),
                median_abs_error: median(&abs),
            }
        })
        .collect();
    Ok(RecoverySummary {
        n_seeds,
        n_failed,
        n_unconverged,
        params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub window: usize,
    pub n_fit: usize,
    pub compute_used: f64,
    pub predicted: f64,
    pub ground_truth: f64,
    pub rel_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub notices: Vec<String>,
}

/// Indices of up to [`SWEEP_SAMPLES`] runs spread evenly over `0..window`,
/// always including both ends.
pub fn window_sample(window: usize) -> Vec<usize> {
    if window <= SWEEP_SAMPLES {
        return (0..window).collect();
    }
    let mut idx: Vec<usize> = (0..SWEEP_SAMPLES)
        .map(|k| ((k * (window - 1)) as f64 / (SWEEP_SAMPLES - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Fits the `(C, M)` law to runs sampled from growing compute-ordered
/// windows and scores each fit by its relative error at the target run.
pub fn reliability_sweep(
    runs: &[RunRecord],
    target: (u64, f64),
    eval_set: &str,
    windows: &[usize],
    cfg: &FitConfig,
) -> Result<SweepReport> {
    let is_target = |r: &RunRecord| {
        (r.params_n as f64 - target.0 as f64).abs() <= NOMINAL_RTOL * target.0 as f64
            && (r.multiplier() - target.1).abs() <= NOMINAL_RTOL * target.1
    };
    let target_run = runs
        .iter()
        .find(|r| is_target(r))
        .ok_or_else(|| Error::invalid(format!("no run matches target (N={}, M={})", target.0, target.1)))?;
    let target_geom = target_run.geometry();
    let truth = target_run.loss(eval_set)?;

    let mut pool: Vec<&RunRecord> = runs.iter().filter(|r| !is_target(r)).collect();
    pool.sort_by(|a, b| a.compute().total_cmp(&b.compute()));

    let mut report = SweepReport::default();
    for &window in windows {
        if window > pool.len() {
            report
                .notices
                .push(format!("window {window} skipped: only {} candidate runs", pool.len()));
            continue;
        }
        if window < cfg.min_points_loss {
            report.notices.push(format!(
                "window {window} skipped: fewer than {} runs to fit",
                cfg.min_points_loss
            ));
            continue;
        }
        let subset: Vec<RunRecord> = window_sample(window).into_iter().map(|i| pool[i].clone()).collect();
        let (points, _) = cm_points(&subset, eval_set)?;
        let fit = match fit_loss_cm(&points, cfg) {
            Ok(fit) => fit,
            Err(e) => {
                report.notices.push(format!("window {window} skipped: {e}"));
                continue;
            }
        };
        let Law::Cm(law) = fit.law else { unreachable!("cm fit") };
        let predicted = law.eval(target_geom.compute_c, target_geom.multiplier_m)?;
        report.points.push(SweepPoint {
            window,
            n_fit: subset.len(),
            compute_used: total_compute(&subset),
            predicted,
            ground_truth: truth,
            rel_error: relative_error(predicted, truth)?,
            converged: fit.converged,
        });
    }
    Ok(report)
}
