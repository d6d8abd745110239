use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use greybox::config::{load_problem, Experiment, Registry};
use greybox::harness::{self, JobResult};
use greybox::metrics::metrics_from_table;
use greybox::optimizer::{Mode, Outcome, TraceTable};
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] greybox::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "greybox",
    version,
    about = "Optimistic Bayesian optimization of grey-box functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a problem file, then print its structure.
    Validate { problem: PathBuf },
    /// Run every (problem, seed, mode) job of an experiment config.
    Run(RunArgs),
    /// Recompute regret and violation metrics from one trace CSV.
    Metrics {
        trace: PathBuf,
        /// Print the full per-step series as CSV instead of the final values.
        #[arg(long)]
        per_step: bool,
    },
    /// Compare grey-box and black-box runs in a results directory.
    Compare { dir: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Seed count (`5`), list (`1,4,9`) or half-open range (`10..20`).
    #[arg(long)]
    seeds: Option<String>,
    /// Horizon override.
    #[arg(long = "T", value_name = "T")]
    horizon: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Results directory; nothing is written outside it.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Greybox,
    Blackbox,
    Both,
}

fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let bad = || {
        CliError::Usage(format!(
            "--seeds `{text}`: expected a count, a list like 1,4,9 or a range like 10..20"
        ))
    };
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else if text.contains(',') {
        text.split(',').map(num).collect::<CliResult<_>>()?
    } else {
        (0..num(text)?).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn validate(path: &Path) -> CliResult<()> {
    let problem = load_problem(path, &Registry::builtin())?;
    let d = problem.domain();
    println!("problem {}: {} inputs", problem.name(), problem.input_dim());
    for (i, (lo, hi)) in d.lower().iter().zip(d.upper()).enumerate() {
        println!("  x{i} in [{lo}, {hi}]");
    }
    for (k, g) in problem.functions().enumerate() {
        let label = if k == 0 {
            "objective".to_string()
        } else {
            format!("constraint {}", k - 1)
        };
        let constants = g.discrepancy_constants();
        println!(
            "  {label}: {} nodes, {} black-box, {} white-box",
            g.len(),
            g.black_set().len(),
            g.white_set().len()
        );
        for (i, a) in constants {
            println!("    z{i}: discrepancy constant {a:.4}");
        }
    }
    match problem.ground_truth() {
        Some(gt) => println!("  optimum {} at {:?}", gt.f, gt.x),
        None => println!("  no ground truth"),
    }
    Ok(())
}

fn run(args: &RunArgs) -> CliResult<()> {
    let mut exp = Experiment::from_path(&args.config, &Registry::builtin())?;
    if let Some(s) = &args.seeds {
        exp.seeds = parse_seeds(s)?;
    }
    if let Some(t) = args.horizon {
        exp.base.horizon = t;
        exp.base.validate()?;
    }
    match args.mode {
        Some(ModeArg::Greybox) => exp.modes = vec![Mode::Greybox],
        Some(ModeArg::Blackbox) => exp.modes = vec![Mode::Blackbox],
        Some(ModeArg::Both) => exp.modes = vec![Mode::Greybox, Mode::Blackbox],
        None => {}
    }
    let jobs = harness::plan(&exp);
    eprintln!(
        "{}: {} jobs ({} problems x {} seeds x {} modes), T = {}",
        exp.name,
        jobs.len(),
        exp.problems.len(),
        exp.seeds.len(),
        exp.modes.len(),
        exp.base.horizon
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let start = Instant::now();
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let r = harness::run_job(&exp, job);
                if let Ok(r) = &r {
                    let note = match r.trace.outcome {
                        Outcome::Completed => format!("{} steps", r.trace.records.len()),
                        Outcome::InfeasibilityDeclared(t) => format!("infeasibility declared at t = {t}"),
                    };
                    eprintln!("  {}: {note}", job.file_stem());
                }
                r
            })
            .collect::<greybox::Result<_>>()
    })?;
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        path: args.out.clone(),
        source,
    })?;
    let written = harness::write_results(&args.out, &results)?;
    eprintln!(
        "wrote {} files to {} in {:.1}s",
        written.len(),
        args.out.display(),
        start.elapsed().as_secs_f64()
    );
    if exp.modes.len() > 1 {
        print_comparison(&args.out)?;
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn metrics(path: &Path, per_step: bool) -> CliResult<()> {
    let table = TraceTable::from_path(path)?;
    let m = metrics_from_table(&table)?;
    if per_step {
        let mut header = vec![
            "t",
            "regret",
            "cumulative_regret",
            "cumulative_positive_regret",
            "best_regret",
            "cr",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        header.extend((0..m.violations.len()).map(|k| format!("violation{k}")));
        println!("{}", header.join(","));
        for t in 0..m.len() {
            let mut row = vec![
                (t + 1).to_string(),
                m.regret[t].to_string(),
                m.cumulative_regret[t].to_string(),
                m.cumulative_positive_regret[t].to_string(),
                m.best_regret[t].to_string(),
                m.constrained_regret[t].to_string(),
            ];
            row.extend(m.violations.iter().map(|v| v[t].to_string()));
            println!("{}", row.join(","));
        }
        return Ok(());
    }
    println!("steps                       {}", m.len());
    println!(
        "constrained regret          {}",
        fmt(m.constrained_regret.last().copied())
    );
    println!(
        "cumulative regret           {}",
        fmt(m.cumulative_regret.last().copied())
    );
    println!(
        "cumulative positive regret  {}",
        fmt(m.cumulative_positive_regret.last().copied())
    );
    println!("best regret                 {}", fmt(m.best_regret.last().copied()));
    for (k, v) in m.violations.iter().enumerate() {
        println!("violation {k:<17} {}", fmt(v.last().copied()));
    }
    Ok(())
}

fn print_comparison(dir: &Path) -> CliResult<()> {
    let rows = harness::compare(dir)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!("no run CSVs found under {}", dir.display())));
    }
    println!(
        "{:<24} {:>14} {:>14} {:>12}",
        "problem", "greybox CR", "blackbox CR", "grey wins"
    );
    for c in rows {
        println!(
            "{:<24} {:>14} {:>14} {:>12}",
            c.problem,
            fmt(c.greybox_median),
            fmt(c.blackbox_median),
            format!("{}/{}", c.greybox_wins, c.paired_seeds)
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { problem } => validate(problem),
        Command::Run(args) => run(args),
        Command::Metrics { trace, per_step } => metrics(trace, *per_step),
        Command::Compare { dir } => print_comparison(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9,1").unwrap(), vec![4, 9, 1]);
        assert_eq!(parse_seeds("10..13").unwrap(), vec![10, 11, 12]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("a,b").is_err());
        assert!(parse_seeds("5..5").is_err());
    }
}
