use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use overscale::fitting::{
    cm_points, err_points, fit_err, fit_loss_cm, fit_power_law, power_points, FitConfig, FitReport,
};
use overscale::lawform::{ErrLaw, Law, LossLawCM};
use overscale::model::{RunRecord, TaskSpec, FLOPS_PER_PARAM_TOKEN};
use overscale::stats::{bootstrap_fit, error_grid, write_grid_csv, BootstrapOptions, GridTarget, Predictor};
use overscale::synth::{generate_runs, reliability_sweep, NoiseModel, SynthSpec};
use overscale::testbed::{
    apply_exclusions, load_runs, pareto_frontier, select_fit_subset, select_tasks, total_compute, write_runs,
    TestbedConfig, NOMINAL_RTOL,
};
use serde_json::json;

use crate::args::{
    FitArgs, FitForm, GridArgs, OptimalArgs, PredictArgs, SelectArgs, SimulateArgs, SweepArgs, TaskArgs, TotalArgs,
};
use crate::output::{Failure, Output};

fn load_config(path: Option<&Path>) -> Result<TestbedConfig> {
    match path {
        Some(p) => TestbedConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(TestbedConfig::default()),
    }
}

fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    load_runs(path).with_context(|| format!("reading runs from {}", path.display()))
}

/// Reads a bare law or a fit report; both carry `form` and `params`.
fn load_law(path: &Path) -> Result<Law> {
    let text = fs::read_to_string(path).with_context(|| format!("reading law from {}", path.display()))?;
    let law: Law = serde_json::from_str(&text).with_context(|| format!("parsing law in {}", path.display()))?;
    law.validate()?;
    Ok(law)
}

fn loss_law(path: &Path) -> Result<LossLawCM> {
    let law = load_law(path)?;
    law.as_loss_cm()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())).into())
}

fn err_law(path: &Path) -> Result<ErrLaw> {
    match load_law(path)? {
        Law::Err(l) => Ok(l),
        other => Err(Failure::Usage(format!(
            "{}: expected an err law, got `{}`",
            path.display(),
            other.form()
        ))
        .into()),
    }
}

fn builtin_loss_law(name: &str) -> Result<LossLawCM> {
    match name {
        "c4" => Ok(LossLawCM::c4()),
        "redpajama" => Ok(LossLawCM::redpajama()),
        "refinedweb" => Ok(LossLawCM::refinedweb()),
        _ => Err(Failure::Usage(format!("unknown law `{name}`; expected c4, redpajama or refinedweb")).into()),
    }
}

fn builtin_err_law(name: &str) -> Result<ErrLaw> {
    match name {
        "c4" => Ok(ErrLaw::c4()),
        "redpajama" => Ok(ErrLaw::redpajama()),
        "refinedweb" => Ok(ErrLaw::refinedweb()),
        _ => Err(Failure::Usage(format!(
            "unknown err law `{name}`; expected c4, redpajama or refinedweb"
        ))
        .into()),
    }
}

fn resolve_tasks(runs: &[RunRecord], args: &TaskArgs, out: &Output) -> Result<Vec<TaskSpec>> {
    if args.tasks.is_empty() {
        let tasks = select_tasks(runs, args.reference_n, args.threshold)?;
        out.note(format!(
            "selected {} tasks at N={} with threshold {} points",
            tasks.len(),
            args.reference_n,
            args.threshold
        ));
        return Ok(tasks);
    }
    args.tasks
        .iter()
        .map(|name| {
            runs.iter()
                .find_map(|r| r.task(name))
                .map(|t| t.task.clone())
                .ok_or_else(|| Failure::Usage(format!("no run reports task `{name}`")).into())
        })
        .collect()
}

fn bootstrap_options(b: usize, level: f64, seed: u64) -> BootstrapOptions {
    BootstrapOptions {
        n_resamples: b,
        level,
        seed,
    }
}

pub fn fit(args: &FitArgs, out: &Output) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let mut runs = read_runs(&args.runs)?;
    out.note(format!("loaded {} runs", runs.len()));

    for name in &args.exclude {
        let windows = config
            .exclusion(name)
            .ok_or_else(|| Failure::Usage(format!("unknown exclusion window set `{name}`")))?;
        let before = runs.len();
        runs = apply_exclusions(&runs, &windows);
        out.note(format!("exclusion `{name}` dropped {} runs", before - runs.len()));
    }
    if let Some(name) = &args.subset {
        let preset = config
            .preset(name)
            .ok_or_else(|| Failure::Usage(format!("unknown fit subset `{name}`")))?;
        let selection = select_fit_subset(&runs, &preset);
        for (n, m) in &selection.missing {
            out.note(format!("warning: no run matches preset pair (N={n}, M={m})"));
        }
        runs = selection.runs;
    }
    if let Some(m) = args.multiplier {
        runs.retain(|r| (r.multiplier() - m).abs() <= NOMINAL_RTOL * m);
    }

    let cfg = FitConfig::default();
    let boot = args.bootstrap.map(|b| bootstrap_options(b, args.level, out.seed));
    let (report, ids) = match args.form {
        FitForm::Cm => {
            let (points, ids) = cm_points(&runs, &args.eval_set)?;
            let mut report = fit_loss_cm(&points, &cfg)?;
            if let Some(opts) = &boot {
                report.ci = Some(bootstrap_fit(&points, &cfg, opts, &[])?.per_param_intervals);
            }
            (report, ids)
        }
        FitForm::Power => {
            let (points, ids) = power_points(&runs, &args.eval_set)?;
            let mut report = fit_power_law(&points, &cfg)?;
            if let Some(opts) = &boot {
                report.ci = Some(bootstrap_fit(&points, &cfg, opts, &[])?.per_param_intervals);
            }
            (report, ids)
        }
        FitForm::Err => {
            let tasks = resolve_tasks(&runs, &args.tasks, out)?;
            let (points, ids) = err_points(&runs, &args.eval_set, &tasks)?;
            let mut report = fit_err(&points, &cfg)?;
            if let Some(opts) = &boot {
                report.ci = Some(bootstrap_fit(&points, &cfg, opts, &[])?.per_param_intervals);
            }
            (report, ids)
        }
    };
    let report: FitReport = report.with_point_ids(ids)?;
    if !report.converged {
        return Err(Failure::NotConverged(format!(
            "{} fit over {} points did not converge (residual rms {:.3e})",
            report.law.form(),
            report.n_points,
            report.residual_rms
        ))
        .into());
    }
    out.note(format!(
        "fit {} law to {} points, residual rms {:.3e}",
        report.law.form(),
        report.n_points,
        report.residual_rms
    ));
    let value = serde_json::to_value(&report)?;
    out.artifact(serde_json::to_string_pretty(&value)? + "\n")?;
    out.json(&value)
}

struct Point {
    n: Option<f64>,
    d: Option<f64>,
    c: f64,
    m: f64,
}

fn geometry(g: &crate::args::Geometry) -> Result<Point> {
    let usage = |msg: &str| -> anyhow::Error { Failure::Usage(msg.to_string()).into() };
    for v in [g.params, g.tokens, g.multiplier, g.compute].into_iter().flatten() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(usage("geometry values must be positive and finite"));
        }
    }
    match (g.params, g.tokens, g.multiplier, g.compute) {
        (Some(n), Some(d), None, None) => Ok(Point {
            n: Some(n),
            d: Some(d),
            c: FLOPS_PER_PARAM_TOKEN * n * d,
            m: d / n,
        }),
        (Some(n), None, Some(m), None) => Ok(Point {
            n: Some(n),
            d: Some(n * m),
            c: FLOPS_PER_PARAM_TOKEN * n * n * m,
            m,
        }),
        (None, None, Some(m), Some(c)) => {
            let n = (c / (FLOPS_PER_PARAM_TOKEN * m)).sqrt();
            Ok(Point {
                n: Some(n),
                d: Some(n * m),
                c,
                m,
            })
        }
        (None, None, None, Some(c)) => Ok(Point {
            n: None,
            d: None,
            c,
            m: f64::NAN,
        }),
        _ => Err(usage(
            "give the geometry as --params with --tokens or --multiplier, or --compute with --multiplier",
        )),
    }
}

pub fn predict(args: &PredictArgs, out: &Output) -> Result<()> {
    let law = load_law(&args.fit)?;
    let p = geometry(&args.geometry)?;
    let needs_m = || -> Result<()> {
        if p.m.is_nan() {
            return Err(Failure::Usage(format!("a `{}` law needs a multiplier or token count", law.form())).into());
        }
        Ok(())
    };
    let loss = match &law {
        Law::Power(l) => l.eval(p.c)?,
        Law::Chinchilla(l) => {
            needs_m()?;
            l.eval(p.n.unwrap_or(f64::NAN), p.d.unwrap_or(f64::NAN))?
        }
        Law::Cm(l) => {
            needs_m()?;
            l.eval(p.c, p.m)?
        }
        Law::Err(_) => {
            return Err(Failure::Usage(format!("{} holds an err law; pass it with --chain", args.fit.display())).into())
        }
    };
    let mut result = json!({ "compute": p.c, "loss": loss });
    if let (Some(n), Some(d)) = (p.n, p.d) {
        result["params_n"] = json!(n);
        result["tokens_d"] = json!(d);
        result["multiplier"] = json!(p.m);
    }
    if let Some(path) = &args.chain {
        let err = err_law(path)?;
        result["avg_top1_error"] = json!(err.eval(loss)?);
    }
    out.note(format!("predicted loss {loss:.4} at C={:.3e}", p.c));
    out.artifact(serde_json::to_string_pretty(&result)? + "\n")?;
    out.json(&result)
}

pub fn pareto(runs_path: &Path, eval_set: &str, out: &Output) -> Result<()> {
    let runs = read_runs(runs_path)?;
    let frontier = pareto_frontier(&runs, eval_set)?;
    out.note(format!("{} of {} runs on the frontier", frontier.len(), runs.len()));
    let mut buf = Vec::new();
    write_runs(&mut buf, &frontier)?;
    out.artifact(String::from_utf8(buf)?)?;
    out.json(&json!({
        "n_runs": runs.len(),
        "n_frontier": frontier.len(),
        "frontier": frontier.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
    }))
}

pub fn grid(args: &GridArgs, out: &Output) -> Result<()> {
    let runs = read_runs(&args.runs)?;
    let loss = loss_law(&args.fit)?;
    let (predictor, target) = match &args.chain {
        Some(path) => {
            let err = err_law(path)?;
            let tasks = resolve_tasks(&runs, &args.tasks, out)?;
            (Predictor::Chained { loss, err }, GridTarget::AvgErr { tasks })
        }
        None => (
            Predictor::Loss(loss),
            GridTarget::Loss {
                eval_set: args.eval_set.clone(),
            },
        ),
    };
    let cells = error_grid(&predictor, &runs, &target)?;
    let mut csv = Vec::new();
    write_grid_csv(&mut csv, &cells)?;
    out.artifact(String::from_utf8(csv)?)?;
    let max = cells.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    out.note(format!("{} cells, max relative error {max:.4}", cells.len()));
    out.json(&json!({ "n_cells": cells.len(), "max_rel_error": max, "cells": cells }))
}

pub fn optimal_m(args: &OptimalArgs, out: &Output) -> Result<()> {
    let law = loss_law(&args.fit)?;
    let m_star = law.optimal_multiplier();
    let mut result = json!({ "optimal_multiplier": m_star });
    if let Some(c) = args.compute {
        let (n, d) = law.optimal_allocation(c)?;
        result["compute"] = json!(c);
        result["params_n"] = json!(n);
        result["tokens_d"] = json!(d);
    }
    out.note(format!("compute-optimal multiplier {m_star:.3}"));
    out.artifact(serde_json::to_string_pretty(&result)? + "\n")?;
    out.json(&result)
}

pub fn select(args: &SelectArgs, out: &Output) -> Result<()> {
    let runs = read_runs(&args.runs)?;
    let tasks = select_tasks(&runs, args.reference_n, args.threshold)?;
    out.note(format!("{} tasks selected", tasks.len()));
    let value = serde_json::to_value(&tasks)?;
    out.artifact(serde_json::to_string_pretty(&value)? + "\n")?;
    out.json(&value)
}

pub fn total(args: &TotalArgs, out: &Output) -> Result<()> {
    let (total, count) = match (&args.subset, &args.runs) {
        (Some(name), _) => {
            let config = load_config(args.config.as_deref())?;
            let preset = config
                .preset(name)
                .ok_or_else(|| Failure::Usage(format!("unknown fit subset `{name}`")))?;
            (preset.total_compute(), preset.pairs.len())
        }
        (None, Some(path)) => {
            let runs = read_runs(path)?;
            (total_compute(&runs), runs.len())
        }
        (None, None) => return Err(Failure::Usage("give --subset or --runs".into()).into()),
    };
    out.note(format!("total compute {total:.3e} FLOPs over {count} runs"));
    let result = json!({ "total_compute": total, "n_runs": count });
    out.artifact(serde_json::to_string_pretty(&result)? + "\n")?;
    out.json(&result)
}

pub fn sweep(args: &SweepArgs, out: &Output) -> Result<()> {
    let runs = read_runs(&args.runs)?;
    let windows = match &args.windows {
        Some(w) => w.0.clone(),
        None => (FitConfig::default().min_points_loss..runs.len()).collect(),
    };
    let report = reliability_sweep(
        &runs,
        (args.target_n, args.target_m),
        &args.eval_set,
        &windows,
        &FitConfig::default(),
    )?;
    for notice in &report.notices {
        out.note(notice.clone());
    }
    let mut csv = String::from("window,n_fit,compute_used,predicted,ground_truth,rel_error\n");
    for p in &report.points {
        writeln!(
            csv,
            "{},{},{:e},{},{},{}",
            p.window, p.n_fit, p.compute_used, p.predicted, p.ground_truth, p.rel_error
        )?;
    }
    out.artifact(csv)?;
    out.json(&serde_json::to_value(&report)?)
}

pub fn simulate(args: &SimulateArgs, out: &Output) -> Result<()> {
    let loss_law = match (&args.law, &args.fit) {
        (Some(name), _) => builtin_loss_law(name)?,
        (None, Some(path)) => loss_law(path)?,
        (None, None) => return Err(Failure::Usage("give --law or --fit".into()).into()),
    };
    let err_law = match (&args.err_law, &args.err_fit) {
        (Some(name), _) => Some(builtin_err_law(name)?),
        (None, Some(path)) => Some(err_law(path)?),
        (None, None) => None,
    };
    let config = load_config(args.config.as_deref())?;
    let grid: Vec<(u64, f64)> = match &args.subset {
        Some(name) => {
            config
                .preset(name)
                .ok_or_else(|| Failure::Usage(format!("unknown fit subset `{name}`")))?
                .pairs
        }
        None => args
            .n_set
            .iter()
            .flat_map(|&n| args.m_set.iter().map(move |&m| (n, m)))
            .collect(),
    };
    let budget = match &args.budget {
        Some(name) => Some(
            config
                .budget(name)
                .ok_or_else(|| Failure::Usage(format!("unknown dataset budget `{name}`")))?,
        ),
        None => None,
    };
    let noise = NoiseModel {
        loss_sigma: args.loss_sigma,
        err_sigma: args.err_sigma,
    };
    noise.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let spec = SynthSpec {
        loss_law,
        err_law,
        grid,
        budget,
        noise,
        dataset: args.dataset.clone(),
        eval_set: args.eval_set.clone(),
    };
    let runs = generate_runs(&spec, out.seed)?;
    out.note(format!("generated {} of {} grid runs", runs.len(), spec.grid.len()));
    let mut buf = Vec::new();
    write_runs(&mut buf, &runs)?;
    let text = String::from_utf8(buf)?;
    if out.has_artifact_path() {
        out.artifact(text)?;
        out.json(&json!({ "n_runs": runs.len(), "seed": out.seed }))
    } else {
        // without --out the testbed itself is the JSON output
        out.raw(&text)
    }
}
