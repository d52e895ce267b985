//! Run records and the arithmetic tying model geometry `(N, D)` to compute
//! `C = 6ND` and token multiplier `M = D/N`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// FLOPs per parameter per training token.
pub const FLOPS_PER_PARAM_TOKEN: f64 = 6.0;

/// One trained model: geometry, evaluation losses (nats/token) and downstream
/// task accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub dataset: String,
    #[serde(deserialize_with = "de_count")]
    pub params_n: u64,
    #[serde(deserialize_with = "de_count")]
    pub tokens_d: u64,
    #[serde(default)]
    pub losses: BTreeMap<String, f64>,
    #[serde(default)]
    pub tasks: Vec<TaskResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
    /// Keys this crate does not interpret, carried through untouched.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Accepts `1400000000` as well as `1.4e9`, provided the value is integral.
fn de_count<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<u64, D::Error> {
    use serde::de::Error as _;
    match Value::deserialize(de)? {
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                return Ok(u);
            }
            match n.as_f64() {
                Some(f) if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 => Ok(f as u64),
                _ => Err(D::Error::custom(format!(
                    "expected a nonnegative integer count, got {n}"
                ))),
            }
        }
        other => Err(D::Error::custom(format!(
            "expected a nonnegative integer count, got {other}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    /// Random-chance accuracy.
    pub baseline: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, baseline: f64) -> Result<Self> {
        let spec = TaskSpec {
            name: name.into(),
            baseline,
            samples: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.baseline) {
            return Err(Error::validation(
                "baseline",
                format!("task `{}`: baseline {} not in [0, 1)", self.name, self.baseline),
            ));
        }
        if self.samples == Some(0) {
            return Err(Error::validation(
                "samples",
                format!("task `{}`: samples must be positive", self.name),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    #[serde(flatten)]
    pub task: TaskSpec,
    pub accuracy: f64,
}

impl TaskResult {
    pub fn top1_error(&self) -> f64 {
        1.0 - self.accuracy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBudget {
    pub dataset: String,
    pub token_budget: u64,
}

impl DatasetBudget {
    pub fn new(dataset: impl Into<String>, token_budget: u64) -> Result<Self> {
        if token_budget == 0 {
            return Err(Error::validation("token_budget", "must be positive"));
        }
        Ok(DatasetBudget {
            dataset: dataset.into(),
            token_budget,
        })
    }

    /// A budget no grid pair can exceed.
    pub fn unlimited() -> Self {
        DatasetBudget {
            dataset: "unlimited".into(),
            token_budget: u64::MAX,
        }
    }

    pub fn c4() -> Self {
        DatasetBudget {
            dataset: "c4".into(),
            token_budget: 138_000_000_000,
        }
    }

    pub fn redpajama() -> Self {
        DatasetBudget {
            dataset: "redpajama".into(),
            token_budget: 1_150_000_000_000,
        }
    }

    pub fn refinedweb() -> Self {
        DatasetBudget {
            dataset: "refinedweb".into(),
            token_budget: 600_000_000_000,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "c4" => Some(Self::c4()),
            "redpajama" | "rpj" => Some(Self::redpajama()),
            "refinedweb" | "rw" => Some(Self::refinedweb()),
            "unlimited" => Some(Self::unlimited()),
            _ => None,
        }
    }

    /// Single-epoch feasibility: a model of `n` parameters trained at
    /// multiplier `m` needs `n * m` unique tokens.
    pub fn admits(&self, n: u64, m: f64) -> bool {
        n as f64 * m <= self.token_budget as f64
    }
}

/// Compute and token multiplier derived from a `(N, D)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunGeometry {
    pub compute_c: f64,
    pub multiplier_m: f64,
}

impl RunGeometry {
    /// Parameter count implied by `(C, M)`: `sqrt(C / 6M)`.
    pub fn params(&self) -> f64 {
        (self.compute_c / (FLOPS_PER_PARAM_TOKEN * self.multiplier_m)).sqrt()
    }

    /// Token count implied by `(C, M)`: `sqrt(CM / 6)`.
    pub fn tokens(&self) -> f64 {
        (self.compute_c * self.multiplier_m / FLOPS_PER_PARAM_TOKEN).sqrt()
    }

    /// Geometry for parameters `n` trained at multiplier `m`.
    pub fn from_params_multiplier(n: f64, m: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) || !(m > 0.0 && m.is_finite()) {
            return Err(Error::invalid(format!(
                "params and multiplier must be positive and finite, got ({n}, {m})"
            )));
        }
        Ok(RunGeometry {
            compute_c: FLOPS_PER_PARAM_TOKEN * n * n * m,
            multiplier_m: m,
        })
    }
}

pub fn resolve_run_geometry(params_n: u64, tokens_d: u64) -> Result<RunGeometry> {
    if params_n == 0 {
        return Err(Error::invalid("params_n must be at least 1"));
    }
    if tokens_d == 0 {
        return Err(Error::invalid("tokens_d must be at least 1"));
    }
    let n = params_n as f64;
    let d = tokens_d as f64;
    Ok(RunGeometry {
        compute_c: FLOPS_PER_PARAM_TOKEN * n * d,
        multiplier_m: d / n,
    })
}

pub fn perplexity(loss: f64) -> f64 {
    loss.exp()
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        if self.params_n < 1 {
            return Err(Error::validation("params_n", "must be at least 1"));
        }
        if self.tokens_d < 1 {
            return Err(Error::validation("tokens_d", "must be at least 1"));
        }
        for (name, loss) in &self.losses {
            if !loss.is_finite() || *loss < 0.0 {
                return Err(Error::validation(
                    "losses",
                    format!("loss `{name}` = {loss} is not a finite nonnegative value"),
                ));
            }
        }
        let mut seen = HashSet::new();
        for t in &self.tasks {
            t.task.validate()?;
            if !(0.0..=1.0).contains(&t.accuracy) {
                return Err(Error::validation(
                    "tasks",
                    format!("task `{}`: accuracy {} not in [0, 1]", t.task.name, t.accuracy),
                ));
            }
            if !seen.insert(t.task.name.as_str()) {
                return Err(Error::validation(
                    "tasks",
                    format!("duplicate task name `{}`", t.task.name),
                ));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> RunGeometry {
        // validated records never have zero counts
        resolve_run_geometry(self.params_n.max(1), self.tokens_d.max(1)).expect("counts clamped to >= 1")
    }

    pub fn compute(&self) -> f64 {
        self.geometry().compute_c
    }

    pub fn multiplier(&self) -> f64 {
        self.geometry().multiplier_m
    }

    pub fn loss(&self, eval_set: &str) -> Result<f64> {
        self.losses.get(eval_set).copied().ok_or_else(|| {
            Error::validation(
                "losses",
                format!("run `{}` has no loss for eval set `{eval_set}`", self.id),
            )
        })
    }

    pub fn task(&self, name: &str) -> Option<&TaskResult> {
        self.tasks.iter().find(|t| t.task.name == name)
    }
}
