//! Seed-by-mode experiment jobs and the files they produce.
//!
//! Layout of a results directory:
//!
//! - `runs/<problem>_<mode>_seed<k>.csv`: one trace per job
//! - `problems/<problem>_seed<k>.toml` and `.sidecar.toml`: the instance
//! - `aggregate.csv`: median and quartiles per step over seeds
//! - `summary.csv`: one line per job
//! - `plot.py`: draws the aggregate curves with matplotlib

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::benchmarks::Sidecar;
use crate::config::{problem_to_toml, sidecar_to_toml, Experiment};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, median, metrics_from_table, quartiles, MetricSeries};
use crate::optimizer::{run, Mode, Outcome, RunTrace, TraceTable};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Job {
    pub problem: usize,
    pub label: String,
    pub seed: u64,
    pub mode: Mode,
}

impl Job {
    pub fn file_stem(&self) -> String {
        format!("{}_{}_seed{}", self.label, self.mode.as_str(), self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct JobResult {
    pub job: Job,
    pub trace: RunTrace,
    pub sidecar: Sidecar,
    pub problem_toml: Option<String>,
    pub metrics: Option<MetricSeries>,
}

/// Every (problem, seed, mode) combination, in output order.
pub fn plan(experiment: &Experiment) -> Vec<Job> {
    let mut jobs = Vec::new();
    for (p, (label, _)) in experiment.problems.iter().enumerate() {
        for &seed in &experiment.seeds {
            for &mode in &experiment.modes {
                jobs.push(Job {
                    problem: p,
                    label: label.clone(),
                    seed,
                    mode,
                });
            }
        }
    }
    jobs
}

/// Draws the instance for the job's seed and runs it.
pub fn run_job(experiment: &Experiment, job: &Job) -> Result<JobResult> {
    let (_, source) = &experiment.problems[job.problem];
    let bench = source.instantiate(job.seed)?;
    let cfg = experiment.run_config(job.seed, job.mode);
    let trace = run(&bench.problem, &cfg)?;
    let metrics = match bench.problem.ground_truth() {
        Some(gt) => Some(compute_metrics(&trace, Some(gt))?),
        None => None,
    };
    Ok(JobResult {
        job: job.clone(),
        problem_toml: problem_to_toml(&bench.problem).ok(),
        trace,
        sidecar: bench.sidecar,
        metrics,
    })
}

/// `(metric, per-step values)` of one run. Regret-based series are omitted
/// when the instance has no known optimum.
fn named_series(result: &JobResult) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    if let Some(m) = &result.metrics {
        out.push(("cr".to_string(), m.constrained_regret.clone()));
        out.push((
            "cumulative_positive_regret".to_string(),
            m.cumulative_positive_regret.clone(),
        ));
        out.push(("cumulative_regret".to_string(), m.cumulative_regret.clone()));
        out.push(("best_regret".to_string(), m.best_regret.clone()));
    }
    for k in 0..result.trace.constraint_count {
        let mut acc = 0.0;
        let v = result
            .trace
            .records
            .iter()
            .map(|r| {
                acc += r.g[k].max(0.0);
                acc
            })
            .collect();
        out.push((format!("violation{k}"), v));
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn create(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Writes every output file below `out`; results may arrive in any order.
pub fn write_results(out: &Path, results: &[JobResult]) -> Result<Vec<PathBuf>> {
    let mut sorted: Vec<&JobResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.job.cmp(&b.job));
    let runs = out.join("runs");
    let problems = out.join("problems");
    fs::create_dir_all(&runs)?;
    fs::create_dir_all(&problems)?;
    let mut written = Vec::new();

    let mut seen_instances = BTreeSet::new();
    for r in &sorted {
        let path = runs.join(format!("{}.csv", r.job.file_stem()));
        create(&path, &r.trace.to_csv_string()?)?;
        written.push(path);
        if seen_instances.insert((r.job.label.clone(), r.job.seed)) {
            let stem = format!("{}_seed{}", r.job.label, r.job.seed);
            if let Some(text) = &r.problem_toml {
                let path = problems.join(format!("{stem}.toml"));
                create(&path, text)?;
                written.push(path);
            }
            let path = problems.join(format!("{stem}.sidecar.toml"));
            create(&path, &sidecar_to_toml(&r.sidecar)?)?;
            written.push(path);
        }
    }

    let path = out.join("aggregate.csv");
    create(&path, &aggregate_csv(&sorted))?;
    written.push(path);
    let path = out.join("summary.csv");
    create(&path, &summary_csv(&sorted))?;
    written.push(path);
    let path = out.join("plot.py");
    create(&path, PLOT_SCRIPT)?;
    written.push(path);
    Ok(written)
}

fn aggregate_csv(sorted: &[&JobResult]) -> String {
    // (problem, mode, metric) -> one series per seed
    let mut groups: BTreeMap<(String, Mode, String), Vec<Vec<f64>>> = BTreeMap::new();
    let mut order: Vec<(String, Mode, String)> = Vec::new();
    for r in sorted {
        for (name, series) in named_series(r) {
            let key = (r.job.label.clone(), r.job.mode, name);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(series);
        }
    }
    let mut s = String::from("problem,mode,metric,t,runs,q25,median,q75\n");
    for key in order {
        let runs = &groups[&key];
        let len = runs.iter().map(Vec::len).max().unwrap_or(0);
        for t in 0..len {
            let vals: Vec<f64> = runs.iter().filter_map(|v| v.get(t).copied()).collect();
            if let Some((q1, m, q3)) = quartiles(&vals) {
                s.push_str(&format!(
                    "{},{},{},{},{},{q1},{m},{q3}\n",
                    key.0,
                    key.1.as_str(),
                    key.2,
                    t + 1,
                    vals.len()
                ));
            }
        }
    }
    s
}

fn summary_csv(sorted: &[&JobResult]) -> String {
    let mut s = String::from(
        "problem,mode,seed,steps,outcome,declared_at,rejections,final_cr,final_cumulative_regret,final_best_regret,final_violation\n",
    );
    for r in sorted {
        let (outcome, at) = match r.trace.outcome {
            Outcome::Completed => ("completed", String::new()),
            Outcome::InfeasibilityDeclared(t) => ("infeasible", t.to_string()),
        };
        let last = |v: &Vec<f64>| v.last().copied();
        let m = r.metrics.as_ref();
        let violation: f64 = r
            .trace
            .records
            .iter()
            .flat_map(|rec| rec.g.iter().map(|g| g.max(0.0)))
            .sum();
        s.push_str(&format!(
            "{},{},{},{},{outcome},{at},{},{},{},{},{violation}\n",
            r.job.label,
            r.job.mode.as_str(),
            r.job.seed,
            r.trace.records.len(),
            r.sidecar.rejections,
            fmt_opt(m.and_then(|m| last(&m.constrained_regret))),
            fmt_opt(m.and_then(|m| last(&m.cumulative_regret))),
            fmt_opt(m.and_then(|m| last(&m.best_regret))),
        ));
    }
    s
}

/// Grey-box against black-box on the final constrained regret of one problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub problem: String,
    pub greybox_median: Option<f64>,
    pub blackbox_median: Option<f64>,
    /// Seeds run in both modes with a finite final value.
    pub paired_seeds: usize,
    /// Paired seeds where grey-box ends strictly lower.
    pub greybox_wins: usize,
}

impl Comparison {
    pub fn win_rate(&self) -> Option<f64> {
        (self.paired_seeds > 0).then(|| self.greybox_wins as f64 / self.paired_seeds as f64)
    }
}

/// Splits `<problem>_<mode>_seed<k>` into its parts.
pub fn parse_run_stem(stem: &str) -> Option<(String, Mode, u64)> {
    let (rest, seed) = stem.rsplit_once("_seed")?;
    let seed = seed.parse().ok()?;
    let (problem, mode) = rest.rsplit_once('_')?;
    Some((problem.to_string(), mode.parse().ok()?, seed))
}

/// Compares modes from the run CSVs in `dir/runs` (or `dir` itself).
pub fn compare(dir: &Path) -> Result<Vec<Comparison>> {
    let runs = if dir.join("runs").is_dir() {
        dir.join("runs")
    } else {
        dir.to_path_buf()
    };
    let mut finals: BTreeMap<String, BTreeMap<(Mode, u64), f64>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&runs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    for path in entries {
        let Some((problem, mode, seed)) = path.file_stem().and_then(|s| s.to_str()).and_then(parse_run_stem) else {
            continue;
        };
        let table = TraceTable::from_path(&path)?;
        let value = match metrics_from_table(&table) {
            Ok(m) => m.constrained_regret.last().copied().unwrap_or(f64::NAN),
            Err(Error::MissingGroundTruth(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        finals.entry(problem).or_default().insert((mode, seed), value);
    }
    Ok(finals
        .into_iter()
        .map(|(problem, runs)| {
            let of =
                |mode: Mode| -> Vec<f64> { runs.iter().filter(|((m, _), _)| *m == mode).map(|(_, v)| *v).collect() };
            let mut paired = 0;
            let mut wins = 0;
            for ((m, seed), g) in &runs {
                if *m != Mode::Greybox {
                    continue;
                }
                if let Some(b) = runs.get(&(Mode::Blackbox, *seed)) {
                    if g.is_finite() && b.is_finite() {
                        paired += 1;
                        wins += usize::from(g < b);
                    }
                }
            }
            Comparison {
                problem,
                greybox_median: median(&of(Mode::Greybox)),
                blackbox_median: median(&of(Mode::Blackbox)),
                paired_seeds: paired,
                greybox_wins: wins,
            }
        })
        .collect())
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Median and interquartile band of each aggregate metric, one figure per problem."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
PANELS = [
    ("cr", "constrained regret"),
    ("cumulative_positive_regret", "cumulative positive regret"),
    ("violation0", "cumulative violation, constraint 1"),
    ("violation1", "cumulative violation, constraint 2"),
]


def load(path):
    data = defaultdict(lambda: defaultdict(lambda: ([], [], [], [])))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t, lo, med, hi = data[row["problem"]][(row["metric"], row["mode"])]
            t.append(int(row["t"]))
            lo.append(float(row["q25"]))
            med.append(float(row["median"]))
            hi.append(float(row["q75"]))
    return data


def main():
    data = load(HERE / "aggregate.csv")
    for problem, series in sorted(data.items()):
        fig, axes = plt.subplots(1, len(PANELS), figsize=(4 * len(PANELS), 3.2))
        for ax, (metric, title) in zip(axes, PANELS):
            for mode in ("greybox", "blackbox"):
                if (metric, mode) not in series:
                    continue
                t, lo, med, hi = series[(metric, mode)]
                ax.plot(t, med, label=mode)
                ax.fill_between(t, lo, hi, alpha=0.25)
            ax.set_title(title)
            ax.set_xlabel("t")
        axes[0].legend()
        fig.suptitle(problem)
        fig.tight_layout()
        out = HERE / f"{problem}.png"
        fig.savefig(out, dpi=120)
        print(out, file=sys.stderr)


if __name__ == "__main__":
    main()
"#;
