//! Run ingestion and the selection machinery applied before fitting:
//! Pareto filtering, FLOP exclusion windows, fit-subset presets, token-budget
//! feasibility and downstream task selection.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DatasetBudget, RunRecord, TaskSpec, FLOPS_PER_PARAM_TOKEN};

/// Relative tolerance when matching nominal parameter counts ("1.4B") and
/// multipliers against actual runs.
pub const NOMINAL_RTOL: f64 = 0.02;

fn within_rel(actual: f64, nominal: f64, rtol: f64) -> bool {
    (actual - nominal).abs() <= rtol * nominal.abs()
}

/// Reads JSON Lines run records. Blank lines are ignored.
pub fn parse_runs<R: Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut runs = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|e| e.at_line(line_no))?;
        runs.push(rec);
    }
    Ok(runs)
}

pub fn load_runs(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    parse_runs(File::open(path)?)
}

pub fn write_runs<W: Write>(mut writer: W, runs: &[RunRecord]) -> Result<()> {
    for run in runs {
        serde_json::to_writer(&mut writer, run)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Runs not dominated in (compute, loss), sorted by compute.
///
/// `q` dominates `r` when `C(q) <= C(r)` and `L(q) < L(r)`; runs tied on
/// both axes are all kept.
pub fn pareto_frontier(runs: &[RunRecord], eval_set: &str) -> Result<Vec<RunRecord>> {
    let mut keyed = Vec::with_capacity(runs.len());
    for run in runs {
        keyed.push((run.compute(), run.loss(eval_set)?, run));
    }
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut frontier = Vec::new();
    let mut best_before = f64::INFINITY;
    let mut i = 0;
    while i < keyed.len() {
        // equal-compute runs compete with each other as well as with cheaper runs
        let mut j = i;
        while j < keyed.len() && keyed[j].0 == keyed[i].0 {
            j += 1;
        }
        let group_min = keyed[i..j].iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
        let threshold = best_before.min(group_min);
        frontier.extend(keyed[i..j].iter().filter(|k| k.1 <= threshold).map(|k| k.2.clone()));
        best_before = threshold;
        i = j;
    }
    Ok(frontier)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionWindow {
    pub flop_min: f64,
    pub flop_max: f64,
}

impl ExclusionWindow {
    pub fn new(flop_min: f64, flop_max: f64) -> Result<Self> {
        let w = ExclusionWindow { flop_min, flop_max };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.flop_min > 0.0 && self.flop_min < self.flop_max && self.flop_max.is_finite() {
            Ok(())
        } else {
            Err(Error::validation(
                "exclusions",
                format!(
                    "window [{}, {}] must satisfy 0 < min < max",
                    self.flop_min, self.flop_max
                ),
            ))
        }
    }

    /// The near-compute-optimal range whose small models over-perform the
    /// trend of the rest of the grid search.
    pub fn grid_bump() -> Self {
        ExclusionWindow {
            flop_min: 5.2e16,
            flop_max: 5.2e17,
        }
    }

    pub fn contains(&self, c: f64) -> bool {
        self.flop_min <= c && c <= self.flop_max
    }
}

pub fn apply_exclusions(runs: &[RunRecord], windows: &[ExclusionWindow]) -> Vec<RunRecord> {
    runs.iter()
        .filter(|r| {
            let c = r.compute();
            !windows.iter().any(|w| w.contains(c))
        })
        .cloned()
        .collect()
}

/// A named list of `(nominal N, M)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSubsetPreset {
    pub name: String,
    pub pairs: Vec<(u64, f64)>,
}

impl FitSubsetPreset {
    pub fn new(name: impl Into<String>, pairs: Vec<(u64, f64)>) -> Result<Self> {
        let preset = FitSubsetPreset {
            name: name.into(),
            pairs,
        };
        preset.validate()?;
        Ok(preset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::validation("pairs", format!("preset `{}` is empty", self.name)));
        }
        for (i, a) in self.pairs.iter().enumerate() {
            if a.0 == 0 || a.1.is_nan() || a.1 <= 0.0 {
                return Err(Error::validation(
                    "pairs",
                    format!("preset `{}`: invalid pair {a:?}", self.name),
                ));
            }
            if self.pairs[..i].contains(a) {
                return Err(Error::validation(
                    "pairs",
                    format!("preset `{}`: duplicate pair {a:?}", self.name),
                ));
            }
        }
        Ok(())
    }

    /// Pairs used to fit the loss law.
    pub fn table2_loss() -> Self {
        FitSubsetPreset {
            name: "table2-loss".into(),
            pairs: vec![
                (11_000_000, 20.0),
                (79_000_000, 20.0),
                (154_000_000, 20.0),
                (411_000_000, 20.0),
                (11_000_000, 320.0),
            ],
        }
    }

    /// Pairs used to fit the error law: the loss pairs plus `(1.4B, 20)`.
    pub fn table2_err() -> Self {
        let mut preset = Self::table2_loss();
        preset.name = "table2-err".into();
        preset.pairs.push((1_400_000_000, 20.0));
        preset
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "table2-loss" => Some(Self::table2_loss()),
            "table2-err" => Some(Self::table2_err()),
            _ => None,
        }
    }

    /// Sum of `6 N D` with `D = M N`.
    pub fn total_compute(&self) -> f64 {
        total_compute_pairs(&self.pairs)
    }
}

pub fn total_compute_pairs(pairs: &[(u64, f64)]) -> f64 {
    pairs
        .iter()
        .map(|&(n, m)| {
            let n = n as f64;
            FLOPS_PER_PARAM_TOKEN * n * n * m
        })
        .sum()
}

pub fn total_compute(runs: &[RunRecord]) -> f64 {
    runs.iter().map(RunRecord::compute).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSelection {
    pub runs: Vec<RunRecord>,
    /// Preset pairs no run matched.
    pub missing: Vec<(u64, f64)>,
}

/// Runs whose `(N, M)` matches some preset pair within [`NOMINAL_RTOL`], in
/// input order.
pub fn select_fit_subset(runs: &[RunRecord], preset: &FitSubsetPreset) -> SubsetSelection {
    let matches = |run: &RunRecord, &(n, m): &(u64, f64)| {
        within_rel(run.params_n as f64, n as f64, NOMINAL_RTOL) && within_rel(run.multiplier(), m, NOMINAL_RTOL)
    };
    let selected = runs
        .iter()
        .filter(|r| preset.pairs.iter().any(|p| matches(r, p)))
        .cloned()
        .collect();
    let missing = preset
        .pairs
        .iter()
        .filter(|p| !runs.iter().any(|r| matches(r, p)))
        .copied()
        .collect();
    SubsetSelection {
        runs: selected,
        missing,
    }
}

/// The `(n, m)` cross product restricted to pairs that fit in one epoch of
/// the dataset.
pub fn feasible_grid(n_set: &[u64], m_set: &[f64], budget: &DatasetBudget) -> Vec<(u64, f64)> {
    n_set
        .iter()
        .flat_map(|&n| m_set.iter().map(move |&m| (n, m)))
        .filter(|&(n, m)| budget.admits(n, m))
        .collect()
}

/// Tasks on which some reference-scale run beats chance by at least
/// `threshold_points` percentage points. Tasks appear in first-seen order.
pub fn select_tasks(runs: &[RunRecord], reference_n: u64, threshold_points: f64) -> Result<Vec<TaskSpec>> {
    let reference: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| within_rel(r.params_n as f64, reference_n as f64, NOMINAL_RTOL))
        .collect();
    if reference.is_empty() {
        return Err(Error::invalid(format!(
            "no runs with params_n within 2% of {reference_n}"
        )));
    }
    let mut order: Vec<TaskSpec> = Vec::new();
    let mut best_margin: BTreeMap<String, f64> = BTreeMap::new();
    for run in reference {
        for t in &run.tasks {
            let margin = t.accuracy - t.task.baseline;
            match best_margin.get_mut(&t.task.name) {
                Some(m) => *m = m.max(margin),
                None => {
                    best_margin.insert(t.task.name.clone(), margin);
                    order.push(t.task.clone());
                }
            }
        }
    }
    // absorb rounding in e.g. 0.35 - 0.25
    let cutoff = threshold_points / 100.0 - 1e-12;
    Ok(order.into_iter().filter(|t| best_margin[&t.name] >= cutoff).collect())
}

/// Uniform average of `1 - accuracy` over `tasks`.
pub fn average_top1_error(run: &RunRecord, tasks: &[TaskSpec]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::invalid("average over an empty task list"));
    }
    let mut total = 0.0;
    for spec in tasks {
        let result = run.task(&spec.name).ok_or_else(|| {
            Error::validation(
                "tasks",
                format!("run `{}` has no result for task `{}`", run.id, spec.name),
            )
        })?;
        total += result.top1_error();
    }
    Ok(total / tasks.len() as f64)
}

/// Presets, exclusion windows and budgets loaded from a JSON file, layered
/// over the built-ins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    #[serde(default)]
    pub presets: Vec<FitSubsetPreset>,
    #[serde(default)]
    pub exclusions: BTreeMap<String, Vec<ExclusionWindow>>,
    #[serde(default)]
    pub budgets: Vec<DatasetBudget>,
}

impl TestbedConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: TestbedConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.presets.iter().try_for_each(FitSubsetPreset::validate)?;
        self.exclusions
            .values()
            .flatten()
            .try_for_each(ExclusionWindow::validate)?;
        for b in &self.budgets {
            DatasetBudget::new(b.dataset.clone(), b.token_budget)?;
        }
        Ok(())
    }

    pub fn preset(&self, name: &str) -> Option<FitSubsetPreset> {
        self.presets
            .iter()
            .find(|p| p.name == name)
            .cloned()
            .or_else(|| FitSubsetPreset::builtin(name))
    }

    /// Named exclusion window set; `grid-bump` is built in.
    pub fn exclusion(&self, name: &str) -> Option<Vec<ExclusionWindow>> {
        self.exclusions
            .get(name)
            .cloned()
            .or_else(|| (name == "grid-bump").then(|| vec![ExclusionWindow::grid_bump()]))
    }

    pub fn budget(&self, name: &str) -> Option<DatasetBudget> {
        self.budgets
            .iter()
            .find(|b| b.dataset == name)
            .cloned()
            .or_else(|| DatasetBudget::builtin(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskResult;

    fn run(id: &str, n: u64, d: u64, loss: f64) -> RunRecord {
        RunRecord {
            id: id.into(),
            dataset: "test".into(),
            params_n: n,
            tokens_d: d,
            losses: [("val".to_string(), loss)].into(),
            tasks: vec![],
            seed: None,
            extra: BTreeMap::new(),
        }
    }

    fn with_tasks(mut r: RunRecord, tasks: &[(&str, f64, f64)]) -> RunRecord {
        r.tasks = tasks
            .iter()
            .map(|&(name, baseline, accuracy)| TaskResult {
                task: TaskSpec {
                    name: name.into(),
                    baseline,
                    samples: None,
                },
                accuracy,
            })
            .collect();
        r
    }

    // compute is 6 * n * d, so n=1 and d=k gives C = 6k
    fn at_compute(id: &str, c_units: u64, loss: f64) -> RunRecord {
        run(id, 1, c_units, loss)
    }

    #[test]
    fn load_two_lines() {
        let text = "{\"id\":\"a\",\"dataset\":\"c4\",\"params_n\":10,\"tokens_d\":200,\"losses\":{\"val\":3.0},\"tasks\":[]}\n\
                    \n\
                    {\"id\":\"b\",\"dataset\":\"c4\",\"params_n\":20,\"tokens_d\":400,\"losses\":{\"val\":2.9},\"tasks\":[]}\n";
        let runs = parse_runs(text.as_bytes()).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].id, "b");
    }

    #[test]
    fn load_reports_line_and_field() {
        let text = "{\"id\":\"a\",\"dataset\":\"c4\",\"params_n\":0,\"tokens_d\":200,\"losses\":{}}\n";
        match parse_runs(text.as_bytes()) {
            Err(Error::Validation { line, field, .. }) => {
                assert_eq!(line, Some(1));
                assert_eq!(field, "params_n");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\"id\":\"a\",\"dataset\":\"c4\",\"params_n\":1,\"tokens_d\":200,\"losses\":{}}\nnot json\n";
        assert!(matches!(parse_runs(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn load_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_runs(&path).unwrap().is_empty());
    }

    #[test]
    fn write_then_parse() {
        let runs = vec![with_tasks(run("x", 5, 100, 2.5), &[("arc", 0.25, 0.5)])];
        let mut buf = Vec::new();
        write_runs(&mut buf, &runs).unwrap();
        assert_eq!(parse_runs(buf.as_slice()).unwrap(), runs);
    }

    #[test]
    fn frontier_example() {
        let runs = vec![
            at_compute("a", 1, 3.0),
            at_compute("b", 2, 2.5),
            at_compute("c", 2, 2.6),
            at_compute("d", 3, 2.7),
        ];
        let ids: Vec<_> = pareto_frontier(&runs, "val")
            .unwrap()
            .into_iter()
            .map(|r| r.id)
            .collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn frontier_small_cases() {
        let single = vec![at_compute("a", 4, 3.0)];
        assert_eq!(pareto_frontier(&single, "val").unwrap(), single);

        let descending: Vec<_> = (1..6)
            .map(|i| at_compute(&i.to_string(), i, 4.0 - i as f64 * 0.1))
            .collect();
        assert_eq!(pareto_frontier(&descending, "val").unwrap().len(), 5);

        let tied = vec![at_compute("a", 2, 3.0), at_compute("b", 2, 3.0)];
        assert_eq!(pareto_frontier(&tied, "val").unwrap().len(), 2);
    }

    #[test]
    fn frontier_requires_loss() {
        let runs = vec![at_compute("a", 1, 3.0)];
        match pareto_frontier(&runs, "other") {
            Err(Error::Validation { message, .. }) => assert!(message.contains("`a`")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exclusions_are_inclusive() {
        let w = ExclusionWindow::grid_bump();
        // C = 6 * n * d
        let inside = run("in", 1_000_000, 16_666_666_667, 3.0);
        assert!((inside.compute() - 1e17).abs() < 1e7);
        let at_min = run("edge", 1, 0, 3.0);
        let at_min = RunRecord {
            tokens_d: (5.2e16 / 6.0) as u64,
            ..at_min
        };
        assert_eq!(at_min.compute(), 5.2e16);
        let outside = run("out", 1_000_000, 1_000_000, 3.0);

        let runs = vec![inside, at_min, outside];
        let kept = apply_exclusions(&runs, &[w]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "out");
        assert_eq!(apply_exclusions(&runs, &[]), runs);
        assert!(ExclusionWindow::new(5.0, 1.0).is_err());
    }

    #[test]
    fn presets_and_compute() {
        let loss = FitSubsetPreset::table2_loss();
        let err = FitSubsetPreset::table2_err();
        assert_eq!(loss.pairs.len(), 5);
        assert_eq!(err.pairs.len(), 6);
        // 6 * (0.011e9^2*20 + 0.079e9^2*20 + 0.154e9^2*20 + 0.411e9^2*20 + 0.011e9^2*320)
        assert!((loss.total_compute() - 2.41122e19).abs() < 1e13);
        assert!((err.total_compute() - 2.593122e20).abs() < 1e14);
        assert!((total_compute_pairs(&[(1_000_000_000, 20.0)]) - 1.2e20).abs() < 1.0);
        assert!(FitSubsetPreset::new("dup", vec![(1, 2.0), (1, 2.0)]).is_err());
    }

    #[test]
    fn subset_selection_matches_nominal_sizes() {
        let runs = vec![
            run("small", 11_200_000, 224_000_000, 4.0),
            run("over", 11_000_000, 3_520_000_000, 3.7),
            run("big", 1_412_000_000, 28_240_000_000, 2.6),
            run("off", 79_000_000, 79_000_000 * 40, 3.3),
        ];
        let sel = select_fit_subset(&runs, &FitSubsetPreset::table2_err());
        let ids: Vec<_> = sel.runs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["small", "over", "big"]);
        assert_eq!(sel.missing.len(), 3);

        let empty = select_fit_subset(&[], &FitSubsetPreset::table2_loss());
        assert!(empty.runs.is_empty());
        assert_eq!(empty.missing.len(), 5);
        assert_eq!(select_fit_subset(&[], &FitSubsetPreset::table2_err()).missing.len(), 6);
    }

    #[test]
    fn token_budget_grid() {
        let ns = [11_000_000, 79_000_000, 154_000_000, 411_000_000];
        let ms = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0];
        let c4 = feasible_grid(&ns, &ms, &DatasetBudget::c4());
        assert_eq!(c4.len(), 31);
        assert!(!c4.contains(&(411_000_000, 640.0)));
        assert_eq!(feasible_grid(&ns, &ms, &DatasetBudget::unlimited()).len(), 32);
        let exact = DatasetBudget::new("x", 2000).unwrap();
        assert_eq!(feasible_grid(&[100], &[20.0], &exact), vec![(100, 20.0)]);
    }

    #[test]
    fn task_selection_thresholds() {
        let reference = with_tasks(
            run("ref", 154_000_000, 154_000_000 * 20, 3.0),
            &[("easy", 0.25, 0.40), ("hard", 0.5, 0.55), ("worse", 0.5, 0.47)],
        );
        let other = with_tasks(run("small", 11_000_000, 220_000_000, 4.0), &[("hard", 0.5, 0.9)]);
        let runs = vec![reference, other];
        let names = |t: f64| -> Vec<String> {
            select_tasks(&runs, 154_000_000, t)
                .unwrap()
                .into_iter()
                .map(|s| s.name)
                .collect()
        };
        assert_eq!(names(10.0), ["easy"]);
        assert_eq!(names(-5.0), ["easy", "hard", "worse"]);
        assert!(select_tasks(&runs, 6_900_000_000, 10.0).is_err());
    }

    #[test]
    fn top1_average() {
        let r = with_tasks(run("r", 10, 100, 3.0), &[("a", 0.25, 0.6), ("b", 0.25, 0.4)]);
        let tasks: Vec<_> = r.tasks.iter().map(|t| t.task.clone()).collect();
        assert!((average_top1_error(&r, &tasks).unwrap() - 0.5).abs() < 1e-15);

        let perfect = with_tasks(run("p", 10, 100, 3.0), &[("a", 0.25, 1.0)]);
        assert_eq!(average_top1_error(&perfect, &tasks[..1]).unwrap(), 0.0);

        assert!(matches!(average_top1_error(&r, &[]), Err(Error::InvalidArgument(_))));
        let missing = TaskSpec::new("zzz", 0.1).unwrap();
        assert!(matches!(
            average_top1_error(&r, &[missing]),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn config_layers_over_builtins() {
        let json = r#"{"presets":[{"name":"mine","pairs":[[1000,20.0]]}],"exclusions":{"none":[]},"budgets":[{"dataset":"tiny","token_budget":5}]}"#;
        let cfg: TestbedConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.preset("mine").unwrap().pairs, vec![(1000, 20.0)]);
        assert_eq!(cfg.preset("table2-loss").unwrap().pairs.len(), 5);
        assert_eq!(cfg.exclusion("grid-bump").unwrap(), vec![ExclusionWindow::grid_bump()]);
        assert!(cfg.exclusion("none").unwrap().is_empty());
        assert_eq!(cfg.budget("tiny").unwrap().token_budget, 5);
        assert_eq!(cfg.budget("c4").unwrap().token_budget, 138_000_000_000);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn brute_force(runs: &[RunRecord]) -> Vec<String> {
            let mut kept: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| {
                    !runs
                        .iter()
                        .any(|q| q.compute() <= r.compute() && q.losses["val"] < r.losses["val"])
                })
                .collect();
            kept.sort_by(|a, b| a.compute().total_cmp(&b.compute()));
            kept.into_iter().map(|r| r.id.clone()).collect()
        }

        fn instance() -> impl Strategy<Value = Vec<RunRecord>> {
            prop::collection::vec((1u64..30, 0u32..20), 1..80).prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (c, l))| at_compute(&i.to_string(), c, 2.0 + l as f64 * 0.05))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn frontier_matches_brute_force(runs in instance()) {
                let fast: Vec<String> = pareto_frontier(&runs, "val").unwrap().into_iter().map(|r| r.id).collect();
                prop_assert_eq!(fast, brute_force(&runs));
            }

            #[test]
            fn frontier_losses_nonincreasing(runs in instance()) {
                let f = pareto_frontier(&runs, "val").unwrap();
                for w in f.windows(2) {
                    prop_assert!(w[0].compute() <= w[1].compute());
                    prop_assert!(w[0].losses["val"] >= w[1].losses["val"]);
                }
            }

            #[test]
            fn task_selection_monotone(accs in prop::collection::vec((0.0..0.9f64, 0.0..1.0f64), 1..12), t1 in -10.0..40.0f64, dt in 0.0..30.0f64) {
                let tasks: Vec<(String, f64, f64)> = accs.iter().enumerate().map(|(i, (b, a))| (format!("t{i}"), *b, *a)).collect();
                let refs: Vec<(&str, f64, f64)> = tasks.iter().map(|(n, b, a)| (n.as_str(), *b, *a)).collect();
                let runs = vec![with_tasks(run("r", 154_000_000, 1_000_000_000, 3.0), &refs)];
                let loose = select_tasks(&runs, 154_000_000, t1).unwrap();
                let strict = select_tasks(&runs, 154_000_000, t1 + dt).unwrap();
                prop_assert!(strict.iter().all(|s| loose.contains(s)));
            }

            #[test]
            fn total_compute_permutation_invariant(mut pairs in prop::collection::vec((1u64..1_000_000_000, 1.0..640.0f64), 0..20), seed in any::<u64>()) {
                let a = total_compute_pairs(&pairs);
                let split = pairs.len() / 2;
                let parts = total_compute_pairs(&pairs[..split]) + total_compute_pairs(&pairs[split..]);
                prop_assert!((a - parts).abs() <= 1e-12 * a.max(1.0));
                let len = pairs.len().max(1);
                pairs.rotate_left(seed as usize % len);
                prop_assert!((total_compute_pairs(&pairs) - a).abs() <= 1e-12 * a.max(1.0));
            }
        }
    }
}
