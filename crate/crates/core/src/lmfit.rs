//! Damped least squares (Levenberg-Marquardt) with Marquardt diagonal
//! scaling, plus central-difference Jacobians and multi-start.
//!
//! The solver minimizes `0.5 * sum r_i(p)^2`. Box constraints are not handled
//! here; callers fit unconstrained internal parameters and map them through
//! `exp` or a logistic (see [`crate::fitting`]).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping at which the solver gives up looking for a descent step.
const MAX_DAMPING: f64 = 1e16;

/// A least-squares problem. `jacobian` may return `None`, in which case the
/// solver differentiates numerically.
pub trait Objective: Sync {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64]) -> Vec<f64>;
    fn jacobian(&self, _params: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Closure-backed [`Objective`].
pub struct FnObjective<R, J = fn(&[f64]) -> DMatrix<f64>> {
    residual_fn: R,
    jacobian_fn: Option<J>,
    n_params: usize,
    n_residuals: usize,
}

impl<R> FnObjective<R>
where
    R: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(n_params: usize, n_residuals: usize, residual_fn: R) -> Self {
        FnObjective {
            residual_fn,
            jacobian_fn: None,
            n_params,
            n_residuals,
        }
    }
}

impl<R, J> FnObjective<R, J>
where
    R: Fn(&[f64]) -> Vec<f64> + Sync,
    J: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    pub fn with_jacobian(n_params: usize, n_residuals: usize, residual_fn: R, jacobian_fn: J) -> Self {
        FnObjective {
            residual_fn,
            jacobian_fn: Some(jacobian_fn),
            n_params,
            n_residuals,
        }
    }
}

impl<R, J> Objective for FnObjective<R, J>
where
    R: Fn(&[f64]) -> Vec<f64> + Sync,
    J: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn n_residuals(&self) -> usize {
        self.n_residuals
    }
    fn residuals(&self, params: &[f64]) -> Vec<f64> {
        (self.residual_fn)(params)
    }
    fn jacobian(&self, params: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian_fn.as_ref().map(|j| j(params))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Bound on the max-norm of `J^T r`.
    pub gradient_tolerance: f64,
    /// Bound on the relative parameter change of an accepted step.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.gradient_tolerance > 0.0
            && self.step_tolerance > 0.0
            && self.initial_damping > 0.0
            && self.damping_increase > 1.0
            && self.damping_decrease > 0.0
            && self.damping_decrease < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent LM options: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn rms(r: &[f64]) -> f64 {
    (sum_sq(r) / r.len() as f64).sqrt()
}

fn eval_residuals(obj: &dyn Objective, p: &[f64]) -> Option<Vec<f64>> {
    let r = obj.residuals(p);
    (r.len() == obj.n_residuals() && r.iter().all(|x| x.is_finite())).then_some(r)
}

/// Central-difference Jacobian with per-parameter step `rel_step * max(|p_j|, 1)`.
pub fn numeric_jacobian(obj: &dyn Objective, at: &[f64], rel_step: f64) -> Result<DMatrix<f64>> {
    if rel_step.is_nan() || rel_step <= 0.0 {
        return Err(Error::invalid(format!("rel_step must be positive, got {rel_step}")));
    }
    let n = obj.n_params();
    if at.len() != n {
        return Err(Error::invalid(format!("expected {n} parameters, got {}", at.len())));
    }
    let m = obj.n_residuals();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = at.to_vec();
    for j in 0..n {
        let h = rel_step * at[j].abs().max(1.0);
        probe[j] = at[j] + h;
        let hi = eval_residuals(obj, &probe);
        probe[j] = at[j] - h;
        let lo = eval_residuals(obj, &probe);
        probe[j] = at[j];
        let (hi, lo) = match (hi, lo) {
            (Some(hi), Some(lo)) => (hi, lo),
            _ => {
                return Err(Error::NumericalFailure(format!(
                    "non-finite residuals within the difference stencil of parameter {j}"
                )))
            }
        };
        // the actual spacing, not 2h, after rounding of p +- h
        let span = (at[j] + h) - (at[j] - h);
        for i in 0..m {
            jac[(i, j)] = (hi[i] - lo[i]) / span;
        }
    }
    Ok(jac)
}

/// Largest elementwise disagreement between two Jacobians, relative to the
/// larger magnitude of each entry pair (floored at `1e-8`).
pub fn jacobian_discrepancy(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn jacobian_at(obj: &dyn Objective, p: &[f64]) -> Result<DMatrix<f64>> {
    match obj.jacobian(p) {
        Some(j) => {
            if j.shape() != (obj.n_residuals(), obj.n_params()) {
                return Err(Error::NumericalFailure(format!(
                    "jacobian has shape {:?}, expected {:?}",
                    j.shape(),
                    (obj.n_residuals(), obj.n_params())
                )));
            }
            if j.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalFailure("non-finite jacobian entry".into()));
            }
            Ok(j)
        }
        None => numeric_jacobian(obj, p, 1e-6),
    }
}

pub fn solve_least_squares(obj: &dyn Objective, init: &[f64], opts: &LmOptions) -> Result<LmResult> {
    opts.validate()?;
    let n = obj.n_params();
    if init.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} initial parameters, got {}",
            init.len()
        )));
    }
    if obj.n_residuals() < n {
        return Err(Error::invalid(format!(
            "{} residuals cannot determine {n} parameters",
            obj.n_residuals()
        )));
    }
    let mut params = init.to_vec();
    let mut resid = eval_residuals(obj, &params)
        .ok_or_else(|| Error::InvalidStart(format!("residuals are not finite at {init:?}")))?;
    let mut cost = sum_sq(&resid);
    let mut damping = opts.initial_damping;
    let mut iterations = 0;

    let finish = |params: Vec<f64>, resid: &[f64], iterations, termination| LmResult {
        params,
        residual_rms: rms(resid),
        iterations,
        converged: termination != Termination::MaxIter,
        termination,
    };

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian_at(obj, &params)?;
        let r = DVector::from_column_slice(&resid);
        let grad = jac.tr_mul(&r);
        if grad.amax() <= opts.gradient_tolerance {
            return Ok(finish(params, &resid, iterations, Termination::Gradient));
        }
        let jtj = jac.tr_mul(&jac);
        let scale: Vec<f64> = {
            let diag = jtj.diagonal();
            let floor = diag.amax().max(1.0) * 1e-12;
            diag.iter().map(|d| d.max(floor)).collect()
        };

        // Grow the damping until a step lowers the cost or the step vanishes.
        let mut factored_once = false;
        loop {
            let mut lhs = jtj.clone();
            for j in 0..n {
                lhs[(j, j)] += damping * scale[j];
            }
            let step = lhs.cholesky().map(|ch| ch.solve(&(-&grad)));
            if let Some(step) = step {
                factored_once = true;
                let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
                let p_norm = params.iter().map(|p| p * p).sum::<f64>().sqrt();
                let small_step = step.norm() <= opts.step_tolerance * (p_norm + opts.step_tolerance);
                if let Some(trial_resid) = eval_residuals(obj, &trial) {
                    let trial_cost = sum_sq(&trial_resid);
                    if trial_cost < cost {
                        params = trial;
                        resid = trial_resid;
                        cost = trial_cost;
                        damping = (damping * opts.damping_decrease).max(1e-15);
                        if small_step {
                            return Ok(finish(params, &resid, iterations, Termination::Step));
                        }
                        break;
                    }
                }
                if small_step {
                    return Ok(finish(params, &resid, iterations, Termination::Step));
                }
            }
            damping *= opts.damping_increase;
            if damping > MAX_DAMPING {
                if !factored_once {
                    return Err(Error::NumericalFailure(
                        "normal equations are singular at every damping level".into(),
                    ));
                }
                return Ok(finish(params, &resid, iterations, Termination::Step));
            }
        }
    }
    Ok(finish(params, &resid, iterations, Termination::MaxIter))
}

/// Runs the solver from every start and keeps the lowest-residual converged
/// result, or the lowest-residual result overall if none converged. Ties go
/// to the earlier start, so the outcome does not depend on scheduling.
pub fn multi_start(obj: &dyn Objective, inits: &[Vec<f64>], opts: &LmOptions) -> Result<LmResult> {
    if inits.is_empty() {
        return Err(Error::invalid("multi_start needs at least one initial point"));
    }
    let outcomes: Vec<Result<LmResult>> = inits
        .par_iter()
        .map(|init| solve_least_squares(obj, init, opts))
        .collect();

    let mut best: Option<LmResult> = None;
    let mut first_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(res) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (res.converged && !b.converged)
                            || (res.converged == b.converged && res.residual_rms < b.residual_rms)
                    }
                };
                if better {
                    best = Some(res);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("inits is nonempty"),
    }
}
