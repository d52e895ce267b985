//! Fitting front-ends for the loss, error and power-law forms.
//!
//! Every law is fit in an unconstrained internal space: positive parameters
//! through `ln`, and the error asymptote `eps` through a logit so it stays in
//! `(0, 1)`. The objectives below carry analytic Jacobians in that space.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lawform::{ErrLaw, Law, LossLawCM, PowerLaw};
use crate::lmfit::{multi_start, LmOptions, Objective};
use crate::model::RunRecord;
use crate::model::TaskSpec;
use crate::stats::{bootstrap_fit, BootstrapOptions};
use crate::testbed::average_top1_error;

/// Smallest value any positive parameter is initialized to.
const INIT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub init_eta_grid: Vec<f64>,
    pub init_gamma_grid: Vec<f64>,
    pub lm_options: LmOptions,
    pub min_points_loss: usize,
    pub min_points_err: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            init_eta_grid: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.5],
            init_gamma_grid: vec![0.25, 0.5, 0.75, 1.0, 1.5],
            lm_options: LmOptions::default(),
            min_points_loss: 5,
            min_points_err: 4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("init_eta_grid", &self.init_eta_grid),
            ("init_gamma_grid", &self.init_gamma_grid),
        ] {
            if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return Err(Error::validation(name, "grid must be nonempty with positive entries"));
            }
        }
        self.lm_options.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmPoint {
    pub c: f64,
    pub m: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrPoint {
    pub loss: f64,
    pub err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub c: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// A fitted law with its residual statistics. Serializes as the law's
/// `{"form", "params"}` object plus the remaining fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub law: Law,
    pub residual_rms: f64,
    pub n_points: usize,
    pub point_ids: Vec<String>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<BTreeMap<String, Interval>>,
}

impl FitReport {
    fn new(law: Law, residual_rms: f64, n_points: usize, converged: bool) -> Self {
        FitReport {
            law,
            residual_rms,
            n_points,
            point_ids: (0..n_points).map(|i| i.to_string()).collect(),
            converged,
            ci: None,
        }
    }

    /// Replaces the positional ids with run ids.
    pub fn with_point_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_points {
            return Err(Error::invalid(format!(
                "{} ids for a fit over {} points",
                ids.len(),
                self.n_points
            )));
        }
        self.point_ids = ids;
        Ok(self)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    values.map(f64::to_bits).collect::<BTreeSet<_>>().len()
}

fn require_finite(name: &str, v: f64, positive: bool) -> Result<()> {
    if v.is_finite() && (!positive || v > 0.0) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} is not a valid data value")))
    }
}

/// Squared-loss objective for `L(C, M)` over internal parameters
/// `[ln E, ln a, ln b, ln eta]`.
pub struct LossCmObjective<'a> {
    pub points: &'a [CmPoint],
}

impl LossCmObjective<'_> {
    pub fn to_internal(law: &LossLawCM) -> Vec<f64> {
        vec![law.e_irr.ln(), law.a.ln(), law.b.ln(), law.eta.ln()]
    }

    pub fn from_internal(p: &[f64]) -> LossLawCM {
        LossLawCM {
            e_irr: p[0].exp(),
            a: p[1].exp(),
            b: p[2].exp(),
            eta: p[3].exp(),
        }
    }
}

impl Objective for LossCmObjective<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        let law = Self::from_internal(p);
        self.points
            .iter()
            .map(|pt| {
                let (ln_c, ln_m) = (pt.c.ln(), pt.m.ln());
                let up = law.a * (law.eta * ln_m).exp();
                let down = law.b * (-law.eta * ln_m).exp();
                law.e_irr + (up + down) * (-law.eta * ln_c).exp() - pt.loss
            })
            .collect()
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let law = Self::from_internal(p);
        let mut jac = DMatrix::zeros(self.points.len(), 4);
        for (i, pt) in self.points.iter().enumerate() {
            let (ln_c, ln_m) = (pt.c.ln(), pt.m.ln());
            let decay = (-law.eta * ln_c).exp();
            let up = law.a * (law.eta * ln_m).exp();
            let down = law.b * (-law.eta * ln_m).exp();
            jac[(i, 0)] = law.e_irr;
            jac[(i, 1)] = up * decay;
            jac[(i, 2)] = down * decay;
            jac[(i, 3)] = law.eta * decay * (ln_m * (up - down) - ln_c * (up + down));
        }
        Some(jac)
    }
}

/// Squared-loss objective for `Err(L)` over `[logit eps, ln k, ln gamma]`.
pub struct ErrObjective<'a> {
    pub points: &'a [ErrPoint],
}

impl ErrObjective<'_> {
    pub fn to_internal(law: &ErrLaw) -> Vec<f64> {
        vec![logit(law.eps), law.k.ln(), law.gamma.ln()]
    }

    pub fn from_internal(p: &[f64]) -> ErrLaw {
        ErrLaw {
            eps: logistic(p[0]),
            k: p[1].exp(),
            gamma: p[2].exp(),
        }
    }
}

impl Objective for ErrObjective<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        let law = Self::from_internal(p);
        self.points
            .iter()
            .map(|pt| law.eps - law.k * (-law.gamma * pt.loss).exp() - pt.err)
            .collect()
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let law = Self::from_internal(p);
        let mut jac = DMatrix::zeros(self.points.len(), 3);
        for (i, pt) in self.points.iter().enumerate() {
            let tail = law.k * (-law.gamma * pt.loss).exp();
            jac[(i, 0)] = law.eps * (1.0 - law.eps);
            jac[(i, 1)] = -tail;
            jac[(i, 2)] = law.gamma * pt.loss * tail;
        }
        Some(jac)
    }
}

/// Squared-loss objective for `L(C)` over `[ln E, ln lambda, ln eta]`.
pub struct PowerObjective<'a> {
    pub points: &'a [PowerPoint],
}

impl PowerObjective<'_> {
    pub fn to_internal(law: &PowerLaw) -> Vec<f64> {
        vec![law.e_irr.ln(), law.lambda.ln(), law.eta.ln()]
    }

    pub fn from_internal(p: &[f64]) -> PowerLaw {
        PowerLaw {
            e_irr: p[0].exp(),
            lambda: p[1].exp(),
            eta: p[2].exp(),
        }
    }
}

impl Objective for PowerObjective<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        let eta = p[2].exp();
        self.points
            .iter()
            .map(|pt| p[0].exp() + (p[1] - eta * pt.c.ln()).exp() - pt.loss)
            .collect()
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let eta = p[2].exp();
        let mut jac = DMatrix::zeros(self.points.len(), 3);
        for (i, pt) in self.points.iter().enumerate() {
            let ln_c = pt.c.ln();
            let reducible = (p[1] - eta * ln_c).exp();
            jac[(i, 0)] = p[0].exp();
            jac[(i, 1)] = reducible;
            jac[(i, 2)] = -eta * ln_c * reducible;
        }
        Some(jac)
    }
}

pub fn fit_loss_cm(points: &[CmPoint], cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    if points.len() < cfg.min_points_loss {
        return Err(Error::InsufficientData(format!(
            "{} points, the (C, M) loss law needs at least {}",
            points.len(),
            cfg.min_points_loss
        )));
    }
    for pt in points {
        require_finite("compute", pt.c, true)?;
        require_finite("multiplier", pt.m, true)?;
        require_finite("loss", pt.loss, false)?;
    }
    let n_c = distinct(points.iter().map(|p| p.c));
    let n_m = distinct(points.iter().map(|p| p.m));
    if n_c < 2 || n_m < 2 {
        return Err(Error::UnidentifiableBracket(format!(
            "need two distinct compute values and two distinct multipliers, got {n_c} and {n_m}"
        )));
    }

    let min_loss = points.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
    let e0 = (0.9 * min_loss).max(INIT_FLOOR);
    let top = points.iter().max_by(|x, y| x.c.total_cmp(&y.c)).expect("nonempty");
    let gap = (top.loss - e0).max(INIT_FLOOR);
    let inits: Vec<Vec<f64>> = cfg
        .init_eta_grid
        .iter()
        .map(|&eta| {
            let bracket = top.m.powf(eta) + top.m.powf(-eta);
            let scale = (gap / (bracket * (-eta * top.c.ln()).exp())).max(INIT_FLOOR);
            LossCmObjective::to_internal(&LossLawCM {
                e_irr: e0,
                a: scale,
                b: scale,
                eta,
            })
        })
        .collect();

    let obj = LossCmObjective { points };
    let res = multi_start(&obj, &inits, &cfg.lm_options)?;
    let law = LossCmObjective::from_internal(&res.params);
    Ok(FitReport::new(
        Law::Cm(law),
        res.residual_rms,
        points.len(),
        res.converged,
    ))
}

pub fn fit_err(points: &[ErrPoint], cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    if points.len() < cfg.min_points_err {
        return Err(Error::InsufficientData(format!(
            "{} points, the error law needs at least {}",
            points.len(),
            cfg.min_points_err
        )));
    }
    for pt in points {
        require_finite("loss", pt.loss, false)?;
        if !(0.0..=1.0).contains(&pt.err) {
            return Err(Error::invalid(format!("error {} is outside [0, 1]", pt.err)));
        }
    }
    let (lo_err, hi_err) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.err), hi.max(p.err))
    });
    if lo_err == hi_err {
        return Err(Error::DegenerateData(format!("every error equals {lo_err}")));
    }
    let n_loss = distinct(points.iter().map(|p| p.loss));
    if n_loss < 3 {
        return Err(Error::DegenerateData(format!(
            "need at least three distinct losses, got {n_loss}"
        )));
    }

    let (lo_loss, hi_loss) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.loss), hi.max(p.loss))
    });
    let eps0 = (hi_err + 0.01).min(1.0 - 1e-6);
    let spread = hi_err - lo_err;
    let inits: Vec<Vec<f64>> = cfg
        .init_gamma_grid
        .iter()
        .map(|&gamma| {
            let span = ((-gamma * lo_loss).exp() - (-gamma * hi_loss).exp()).abs();
            let k = if span > 0.0 { spread / span } else { 1.0 };
            ErrObjective::to_internal(&ErrLaw {
                eps: eps0,
                k: k.max(INIT_FLOOR),
                gamma,
            })
        })
        .collect();

    let obj = ErrObjective { points };
    let res = multi_start(&obj, &inits, &cfg.lm_options)?;
    let law = ErrObjective::from_internal(&res.params);
    Ok(FitReport::new(
        Law::Err(law),
        res.residual_rms,
        points.len(),
        res.converged,
    ))
}

pub fn fit_power_law(points: &[PowerPoint], cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    for pt in points {
        require_finite("compute", pt.c, true)?;
        require_finite("loss", pt.loss, false)?;
    }
    let n_c = distinct(points.iter().map(|p| p.c));
    if n_c < 4 {
        return Err(Error::InsufficientData(format!(
            "{n_c} distinct compute values, a power law needs at least 4"
        )));
    }

    let min_loss = points.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
    let e0 = (0.9 * min_loss).max(INIT_FLOOR);
    let top = points.iter().max_by(|x, y| x.c.total_cmp(&y.c)).expect("nonempty");
    let gap = (top.loss - e0).max(INIT_FLOOR);
    let inits: Vec<Vec<f64>> = cfg
        .init_eta_grid
        .iter()
        .map(|&eta| vec![e0.ln(), gap.ln() + eta * top.c.ln(), eta.ln()])
        .collect();

    let obj = PowerObjective { points };
    let res = multi_start(&obj, &inits, &cfg.lm_options)?;
    let law = PowerObjective::from_internal(&res.params);
    Ok(FitReport::new(
        Law::Power(law),
        res.residual_rms,
        points.len(),
        res.converged,
    ))
}

/// `(C, M, loss)` for every run, with the run ids in the same order.
pub fn cm_points(runs: &[RunRecord], eval_set: &str) -> Result<(Vec<CmPoint>, Vec<String>)> {
    let mut points = Vec::with_capacity(runs.len());
    for r in runs {
        let g = r.geometry();
        points.push(CmPoint {
            c: g.compute_c,
            m: g.multiplier_m,
            loss: r.loss(eval_set)?,
        });
    }
    Ok((points, runs.iter().map(|r| r.id.clone()).collect()))
}

pub fn power_points(runs: &[RunRecord], eval_set: &str) -> Result<(Vec<PowerPoint>, Vec<String>)> {
    let (cm, ids) = cm_points(runs, eval_set)?;
    Ok((
        cm.into_iter().map(|p| PowerPoint { c: p.c, loss: p.loss }).collect(),
        ids,
    ))
}

/// `(loss, average top-1 error over tasks)` for every run.
pub fn err_points(runs: &[RunRecord], eval_set: &str, tasks: &[TaskSpec]) -> Result<(Vec<ErrPoint>, Vec<String>)> {
    let mut points = Vec::with_capacity(runs.len());
    for r in runs {
        points.push(ErrPoint {
            loss: r.loss(eval_set)?,
            err: average_top1_error(r, tasks)?,
        });
    }
    Ok((points, runs.iter().map(|r| r.id.clone()).collect()))
}

/// Rounds to `digits` significant figures.
pub fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - magnitude);
    (x * scale).round() / scale
}

/// Minimum runs per multiplier group for a slope fit.
pub const MIN_GROUP_RUNS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeGroup {
    pub multiplier_m: f64,
    pub n_runs: usize,
    pub eta: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub multiplier_m: f64,
    pub n_runs: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub groups: Vec<SlopeGroup>,
    pub skipped: Vec<SkippedGroup>,
}

/// Fits a power law in compute to each token-multiplier group and reports
/// the exponents, optionally with bootstrap intervals.
pub fn slope_by_multiplier(
    runs: &[RunRecord],
    eval_set: &str,
    cfg: &FitConfig,
    bootstrap: Option<&BootstrapOptions>,
) -> Result<SlopeReport> {
    let mut groups: BTreeMap<u64, (f64, Vec<RunRecord>)> = BTreeMap::new();
    for r in runs {
        let m = round_significant(r.multiplier(), 6);
        groups
            .entry(m.to_bits())
            .or_insert_with(|| (m, Vec::new()))
            .1
            .push(r.clone());
    }
    let mut ordered: Vec<(f64, Vec<RunRecord>)> = groups.into_values().collect();
    ordered.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut report = SlopeReport::default();
    for (m, members) in ordered {
        if members.len() < MIN_GROUP_RUNS {
            report.skipped.push(SkippedGroup {
                multiplier_m: m,
                n_runs: members.len(),
                reason: format!("fewer than {MIN_GROUP_RUNS} runs"),
            });
            continue;
        }
        let (points, _) = power_points(&members, eval_set)?;
        let fit = match fit_power_law(&points, cfg) {
            Ok(fit) => fit,
            Err(e @ (Error::InsufficientData(_) | Error::NumericalFailure(_) | Error::InvalidStart(_))) => {
                report.skipped.push(SkippedGroup {
                    multiplier_m: m,
                    n_runs: members.len(),
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let Law::Power(law) = fit.law else {
            unreachable!("power fit")
        };
        let ci = match bootstrap {
            Some(opts) => {
                let boot = bootstrap_fit(&points, cfg, opts, &[])?;
                boot.per_param_intervals.get("eta").copied()
            }
            None => None,
        };
        report.groups.push(SlopeGroup {
            multiplier_m: m,
            n_runs: members.len(),
            eta: law.eta,
            converged: fit.converged,
            ci,
        });
    }
    Ok(report)
}
