//! Validation metrics: relative prediction error, per-run error grids,
//! percentile-bootstrap intervals and Spearman rank correlation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{
    fit_err, fit_loss_cm, fit_power_law, CmPoint, ErrPoint, FitConfig, FitReport, Interval, PowerPoint,
};
use crate::lawform::{chain_predict, ErrLaw, Law, LossLawCM};
use crate::model::{RunRecord, TaskSpec};
use crate::testbed::average_top1_error;

/// Share of resample fits allowed to fail before the bootstrap is rejected.
pub const MAX_FAILED_RESAMPLE_FRACTION: f64 = 0.2;

pub fn relative_error(predicted: f64, ground_truth: f64) -> Result<f64> {
    if ground_truth == 0.0 || !ground_truth.is_finite() {
        return Err(Error::invalid(format!(
            "ground truth must be finite and nonzero, got {ground_truth}"
        )));
    }
    Ok((predicted - ground_truth).abs() / ground_truth.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGridCell {
    pub params_n: u64,
    pub multiplier_m: f64,
    pub predicted: f64,
    pub ground_truth: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Loss(LossLawCM),
    Chained { loss: LossLawCM, err: ErrLaw },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridTarget {
    Loss { eval_set: String },
    AvgErr { tasks: Vec<TaskSpec> },
}

/// One cell per run comparing the law's prediction at the run's `(C, M)`
/// with the measured value, ordered by `(N, M)`.
pub fn error_grid(predictor: &Predictor, runs: &[RunRecord], target: &GridTarget) -> Result<Vec<ErrorGridCell>> {
    let mut cells = Vec::with_capacity(runs.len());
    for run in runs {
        let g = run.geometry();
        let (predicted, ground_truth) = match (predictor, target) {
            (Predictor::Loss(law), GridTarget::Loss { eval_set }) => {
                (law.eval(g.compute_c, g.multiplier_m)?, run.loss(eval_set)?)
            }
            (Predictor::Chained { loss, err }, GridTarget::AvgErr { tasks }) => (
                chain_predict(loss, err, g.compute_c, g.multiplier_m)?,
                average_top1_error(run, tasks)?,
            ),
            _ => {
                return Err(Error::invalid(
                    "loss predictions need a loss target and chained predictions an error target",
                ))
            }
        };
        cells.push(ErrorGridCell {
            params_n: run.params_n,
            multiplier_m: g.multiplier_m,
            predicted,
            ground_truth,
            rel_error: relative_error(predicted, ground_truth)?,
        });
    }
    cells.sort_by(|a, b| {
        a.params_n
            .cmp(&b.params_n)
            .then(a.multiplier_m.total_cmp(&b.multiplier_m))
    });
    Ok(cells)
}

/// CSV with header `params_n,multiplier_m,predicted,ground_truth,rel_error`.
pub fn write_grid_csv<W: Write>(writer: W, cells: &[ErrorGridCell]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for cell in cells {
        out.serialize(cell)?;
    }
    if cells.is_empty() {
        out.write_record(["params_n", "multiplier_m", "predicted", "ground_truth", "rel_error"])?;
    }
    out.flush()?;
    Ok(())
}

/// Data a law can be refit to, and the coordinates its predictions take.
pub trait FitPoint: Copy + Send + Sync {
    fn fit(points: &[Self], cfg: &FitConfig) -> Result<FitReport>;
}

impl FitPoint for CmPoint {
    fn fit(points: &[Self], cfg: &FitConfig) -> Result<FitReport> {
        fit_loss_cm(points, cfg)
    }
}

impl FitPoint for ErrPoint {
    fn fit(points: &[Self], cfg: &FitConfig) -> Result<FitReport> {
        fit_err(points, cfg)
    }
}

impl FitPoint for PowerPoint {
    fn fit(points: &[Self], cfg: &FitConfig) -> Result<FitReport> {
        fit_power_law(points, cfg)
    }
}

/// Evaluates a fitted law at `[c, m]` (cm), `[c]` (power) or `[loss]` (err).
pub fn predict(law: &Law, at: &[f64]) -> Result<f64> {
    match (law, at) {
        (Law::Cm(l), [c, m]) => l.eval(*c, *m),
        (Law::Chinchilla(l), [n, d]) => l.eval(*n, *d),
        (Law::Power(l), [c]) => l.eval(*c),
        (Law::Err(l), [loss]) => l.eval(*loss),
        _ => Err(Error::invalid(format!(
            "`{}` laws cannot be evaluated at {} coordinates",
            law.form(),
            at.len()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            n_resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub at: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub n_failed: usize,
    pub per_param_intervals: BTreeMap<String, Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_intervals: Option<Vec<PredictionInterval>>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

fn percentile_interval(mut samples: Vec<f64>, level: f64) -> Interval {
    samples.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        lo: quantile_sorted(&samples, tail),
        hi: quantile_sorted(&samples, 1.0 - tail),
    }
}

/// Resample indices for draw `index`; independent of evaluation order.
pub fn resample_indices(seed: u64, index: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Named parameters and predictions of one resample refit.
type Draw = (Vec<(&'static str, f64)>, Vec<f64>);

/// Percentile bootstrap over refits of `points`.
pub fn bootstrap_fit<P: FitPoint>(
    points: &[P],
    cfg: &FitConfig,
    opts: &BootstrapOptions,
    predict_at: &[Vec<f64>],
) -> Result<BootstrapReport> {
    if opts.n_resamples < 100 {
        return Err(Error::invalid(format!(
            "at least 100 resamples required, got {}",
            opts.n_resamples
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::invalid(format!("level must lie in (0, 1), got {}", opts.level)));
    }
    if points.is_empty() {
        return Err(Error::InsufficientData("no points to resample".into()));
    }

    let draws: Vec<Option<Draw>> = (0..opts.n_resamples)
        .into_par_iter()
        .map(|i| {
            let sample: Vec<P> = resample_indices(opts.seed, i as u64, points.len())
                .into_iter()
                .map(|j| points[j])
                .collect();
            let fit = P::fit(&sample, cfg).ok().filter(|f| f.converged)?;
            let preds = predict_at
                .iter()
                .map(|at| predict(&fit.law, at))
                .collect::<Result<Vec<f64>>>()
                .ok()?;
            Some((fit.law.params(), preds))
        })
        .collect();

    let ok: Vec<_> = draws.into_iter().flatten().collect();
    let n_failed = opts.n_resamples - ok.len();
    if n_failed as f64 > MAX_FAILED_RESAMPLE_FRACTION * opts.n_resamples as f64 {
        return Err(Error::BootstrapUnstable {
            failed: n_failed,
            total: opts.n_resamples,
        });
    }

    let names: Vec<&str> = ok[0].0.iter().map(|(n, _)| *n).collect();
    let per_param_intervals = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let samples = ok.iter().map(|(params, _)| params[k].1).collect();
            (name.to_string(), percentile_interval(samples, opts.level))
        })
        .collect();
    let prediction_intervals = (!predict_at.is_empty()).then(|| {
        predict_at
            .iter()
            .enumerate()
            .map(|(k, at)| {
                let iv = percentile_interval(ok.iter().map(|(_, p)| p[k]).collect(), opts.level);
                PredictionInterval {
                    at: at.clone(),
                    lo: iv.lo,
                    hi: iv.hi,
                }
            })
            .collect()
    });

    Ok(BootstrapReport {
        n_resamples: opts.n_resamples,
        level: opts.level,
        seed: opts.seed,
        n_failed,
        per_param_intervals,
        prediction_intervals,
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation between predictions and ground truth.
pub fn rank_correlation(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::invalid("rank correlation needs at least two pairs"));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::invalid("rank correlation over non-finite values"));
    }
    let rx = average_ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let ry = average_ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let n = pairs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in rx.iter().zip(&ry) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid(
            "rank correlation is undefined when one coordinate is constant",
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
