use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use greybox::metrics::metrics_from_table;
use greybox::optimizer::TraceTable;

const CONFIG: &str = r#"
[experiment]
name = "smoke"
seeds = 2
T = 6

[solver]
phase1_points = 128
refine_starts = 2
refine_iters = 40

[[problem]]
family = "hybrid_chain"
"#;

fn greybox(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greybox"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("smoke.toml");
    fs::write(&config, CONFIG).unwrap();
    (dir, config)
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn run_writes_one_trace_per_seed_and_mode() {
    let (dir, _) = setup();
    let out = greybox(&["run", "smoke.toml", "--out", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = files(&dir.path().join("out"));
    let runs: Vec<_> = written.keys().filter(|k| k.starts_with("runs")).collect();
    assert_eq!(runs.len(), 4, "{runs:?}");
    for name in [
        "runs/hybrid_chain_greybox_seed0.csv",
        "runs/hybrid_chain_blackbox_seed1.csv",
        "problems/hybrid_chain_seed0.toml",
        "problems/hybrid_chain_seed1.sidecar.toml",
        "aggregate.csv",
        "summary.csv",
        "plot.py",
    ] {
        assert!(
            written.contains_key(&name.replace('/', std::path::MAIN_SEPARATOR_STR)),
            "missing {name}"
        );
    }
    let top: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(top.len(), 2, "files appeared outside --out: {top:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("hybrid_chain"), "{stdout}");
}

#[test]
fn reruns_are_byte_identical() {
    let (dir, _) = setup();
    for target in ["a", "b"] {
        let out = greybox(&["run", "smoke.toml", "--out", target, "--jobs", "2"], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (files(&dir.path().join("a")), files(&dir.path().join("b")));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(b[k] == *v, "{k} differs");
    }
}

#[test]
fn aggregate_medians_match_the_run_files() {
    let (dir, _) = setup();
    let out = greybox(
        &["run", "smoke.toml", "--out", "out", "--seeds", "3", "--mode", "greybox"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    let mut per_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for seed in 0..3 {
        let table = TraceTable::from_path(&root.join(format!("runs/hybrid_chain_greybox_seed{seed}.csv"))).unwrap();
        let m = metrics_from_table(&table).unwrap();
        for (t, v) in m.constrained_regret.iter().enumerate() {
            per_step.entry(t + 1).or_default().push(*v);
        }
    }
    let mut reader = csv::Reader::from_path(root.join("aggregate.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut checked = 0;
    for row in reader.records() {
        let row = row.unwrap();
        if &row[col("metric")] != "cr" {
            continue;
        }
        let t: usize = row[col("t")].parse().unwrap();
        let got: f64 = row[col("median")].parse().unwrap();
        let expect = median(per_step[&t].clone());
        assert!(
            (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
            "t={t}: {got} vs {expect}"
        );
        assert_eq!(&row[col("runs")], "3");
        checked += 1;
    }
    assert_eq!(checked, 6);
}

#[test]
fn horizon_override_sets_row_count() {
    let (dir, _) = setup();
    let out = greybox(
        &["run", "smoke.toml", "--out", "out", "--seeds", "1", "--T", "3"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = TraceTable::from_path(&dir.path().join("out/runs/hybrid_chain_blackbox_seed0.csv")).unwrap();
    assert_eq!(table.len(), 3);
}

#[test]
fn validate_metrics_and_compare_commands() {
    let (dir, _) = setup();
    assert!(
        greybox(&["run", "smoke.toml", "--out", "out", "--seeds", "1"], dir.path())
            .status
            .success()
    );

    let ok = greybox(&["validate", "out/problems/hybrid_chain_seed0.toml"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("discrepancy constant"));

    let m = greybox(&["metrics", "out/runs/hybrid_chain_greybox_seed0.csv"], dir.path());
    assert!(m.status.success());
    assert!(String::from_utf8_lossy(&m.stdout).contains("constrained regret"));
    let steps = greybox(
        &["metrics", "--per-step", "out/runs/hybrid_chain_greybox_seed0.csv"],
        dir.path(),
    );
    assert_eq!(String::from_utf8_lossy(&steps.stdout).lines().count(), 7);

    let c = greybox(&["compare", "out"], dir.path());
    assert!(c.status.success());
    assert!(String::from_utf8_lossy(&c.stdout).contains("1/1") || String::from_utf8_lossy(&c.stdout).contains("0/1"));
}

#[test]
fn config_errors_name_the_location() {
    let (dir, _) = setup();
    fs::write(dir.path().join("bad.toml"), CONFIG.replace("T = 6", "T = \"six\"")).unwrap();
    let out = greybox(&["run", "bad.toml", "--out", "out"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:5:"), "{err}");
    assert!(!dir.path().join("out").exists());

    fs::write(
        dir.path().join("p.toml"),
        "name = \"p\"\nlower = [0.0]\nupper = [1.0]\n[[function]]\n[[function.node]]\nkind = \"grey\"\n",
    )
    .unwrap();
    let out = greybox(&["validate", "p.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("p.toml"));
}
