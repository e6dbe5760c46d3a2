mod common;

use common::{cohort, population};
use ppcm::cli::write_schema;
use ppcm::data::{write_cohort, write_population};
use ppcm::simgen::{gen_aging_panel, AgingSpec};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ppcm");
const FAST: [&str; 6] = ["--trees", "10", "--burn", "60", "--keep", "60"];

fn ppcm(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PPCM_SEED").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = ppcm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// `(setting/estimator, target, statistic) -> value` from a long CSV.
fn long_table(p: &Path) -> HashMap<(String, String, String), f64> {
    read(p)
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let v = f[3].parse().ok()?;
            Some(((f[0].into(), f[1].into(), f[2].into()), v))
        })
        .collect()
}

struct Fixture {
    _dir: TempDir,
    root: PathBuf,
}

impl Fixture {
    fn data_args(&self) -> Vec<String> {
        ["population.csv", "cohort.csv", "schema.json"]
            .iter()
            .zip(["--population", "--cohort", "--schema"])
            .flat_map(|(f, flag)| [flag.to_string(), s(&self.root.join(f)).to_string()])
            .collect()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn run(&self, cmd: &str, out: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec![cmd.into()];
        args.extend(self.data_args());
        args.extend(["--out".into(), s(&self.path(out)).into(), "--seed".into(), "5".into()]);
        args.extend(FAST.iter().map(|a| a.to_string()));
        args.extend(extra.iter().map(|a| a.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ppcm(&refs)
    }

    fn run_ok(&self, cmd: &str, out: &str, extra: &[&str]) {
        let o = self.run(cmd, out, extra);
        assert!(o.status.success(), "{cmd} {extra:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn write_frames(pop: &ppcm::data::PopulationFrame, coh: &ppcm::data::CohortFrame) -> Fixture {
    let dir = TempDir::new().unwrap();
    let root = dir.path().to_path_buf();
    write_population(&root.join("population.csv"), pop).unwrap();
    write_cohort(&root.join("cohort.csv"), coh).unwrap();
    write_schema(&root.join("schema.json"), &pop.panel.schema).unwrap();
    Fixture { _dir: dir, root }
}

/// Small aging panel whose dropouts decline, plus a sensitivity file with
/// constant priors.
fn aging() -> Fixture {
    let spec = AgingSpec {
        pop_size: 500,
        sample_size: 150,
        waves: 3,
        ..AgingSpec::default()
    };
    let rep = gen_aging_panel(&spec).unwrap();
    let f = write_frames(&rep.population, &rep.cohort);
    std::fs::write(
        f.path("sens.json"),
        r#"{"dropout_offset": [[-1.0, -1.0, 0.0]], "practice_effect": [[0.0, 0.5, 0.5]]}"#,
    )
    .unwrap();
    f
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "simulate", "--scenario", "1", "--reps", "2", "--estimators", "sample", "--seed", "7", "--out", s(&out),
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let results = read(&a.join("results.csv"));
    assert_eq!(results.lines().count(), 3);
    assert!(results.starts_with("replicate,estimator,point,lo95,hi95,truth,error"));
    for f in ["results.csv", "summary.csv", "manifest.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
}

#[test]
fn simulate_can_write_replicate_data() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "simulate", "--scenario", "5", "--reps", "1", "--estimators", "sample", "--pop-size", "800",
        "--sample-size", "100", "--write-data", "--out", s(dir.path()),
    ]);
    let sub = dir.path().join("replicate_0000");
    for f in ["population.csv", "cohort.csv", "schema.json"] {
        assert!(sub.join(f).exists(), "{f}");
    }
    // The written files load back through the estimation commands.
    let out = dir.path().join("fit");
    ok(&[
        "ppcm", "--population", s(&sub.join("population.csv")), "--cohort", s(&sub.join("cohort.csv")),
        "--schema", s(&sub.join("schema.json")), "--out", s(&out), "--trees", "5", "--burn", "20", "--keep", "20",
    ]);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(name);
        let mut c = Command::new(BIN);
        c.args(["simulate", "--scenario", "1", "--reps", "1", "--estimators", "sample", "--out", s(&out)]);
        c.env_remove("PPCM_SEED");
        if let Some(v) = env {
            c.env("PPCM_SEED", v);
        }
        if let Some(v) = flag {
            c.args(["--seed", v]);
        }
        assert!(c.output().unwrap().status.success());
        read(&out.join("results.csv"))
    };
    let env = run("env", Some("9"), None);
    assert_eq!(env, run("flag", None, Some("9")));
    assert_eq!(run("both", Some("4"), Some("9")), env);
    assert_ne!(run("none", None, None), env);
}

#[test]
fn bad_invocations_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = ppcm(&["simulate", "--scenario", "9", "--reps", "1", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = ppcm(&["simulate", "--scenario", "1", "--estimators", "bogus", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mb-lm"));
    assert_eq!(code(&ppcm(&["simulate", "--no-such-flag"])), 2);
    assert_eq!(code(&ppcm(&["ppcm", "--out", s(dir.path())])), 2);
}

#[test]
fn ppcm_runs_are_byte_identical_and_need_a_cohort() {
    let f = aging();
    f.run_ok("ppcm", "a", &["--age-grid", "40:90:5"]);
    f.run_ok("ppcm", "b", &["--age-grid", "40:90:5"]);
    for file in ["posterior.csv", "summary.csv", "age_curve.csv", "manifest.json"] {
        assert_eq!(read(&f.path("a").join(file)), read(&f.path("b").join(file)), "{file}");
    }
    let summary = read(&f.path("a").join("summary.csv"));
    assert!(summary.starts_with("target,point,lo95,hi95\nwave:1,"));
    assert!(summary.contains("\noverall,"));

    let out = ppcm(&[
        "ppcm", "--population", s(&f.path("population.csv")), "--cohort", s(&f.path("missing.csv")),
        "--schema", s(&f.path("schema.json")), "--out", s(&f.path("c")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn sensitivity_settings() {
    let f = aging();
    let sens = s(&f.path("sens.json")).to_string();
    f.run_ok("sensitivity", "sens", &["--sensitivity", &sens]);
    let dir = f.path("sens");
    let curves: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("curve_"))
        .collect();
    assert_eq!(curves.len(), 5);

    // Setting iv is the plain analysis.
    f.run_ok("ppcm", "plain", &[]);
    assert_eq!(read(&dir.join("curve_iv_mars_no_pe.csv")), read(&f.path("plain").join("summary.csv")));

    // Doubling the bounds from the command line reproduces setting iii.
    f.run_ok("ppcm", "double", &["--sensitivity", &sens, "--scale-k", "2"]);
    assert_eq!(read(&dir.join("curve_iii_scaled_x2.csv")), read(&f.path("double").join("summary.csv")));

    // Dropouts are assumed to do worse: setting ii never exceeds iv.
    let t = long_table(&dir.join("sensitivity.csv"));
    let mut compared = 0;
    for ((setting, target, stat), v) in &t {
        if setting == "ii_mnars_no_pe" {
            let iv = t[&("iv_mars_no_pe".to_string(), target.clone(), stat.clone())];
            assert!(*v <= iv + 1e-12, "{target} {stat}: {v} > {iv}");
            compared += 1;
        }
    }
    assert!(compared > 0);
    // Observed scores carry the practice gain, so removing it lowers setting i.
    let key = |s: &str| (s.to_string(), "wave:2".to_string(), "point".to_string());
    assert!(t[&key("i_mars_pe")] < t[&key("iv_mars_no_pe")]);

    let out = f.run("sensitivity", "x", &["--sensitivity", &sens, "--mode", "immortal"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&f.run("sensitivity", "y", &[])), 2);
}

#[test]
fn compare_rejects_unknown_estimators() {
    let f = aging();
    let out = f.run("compare", "c", &["--estimators", "ht,nonsense"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nonsense") && err.contains("greg"), "{err}");
}

/// Balanced three-level covariate, linear outcomes, full response, no deaths.
fn linear_fixture() -> Fixture {
    let n = 1200;
    let xs: Vec<f64> = (0..n).map(|i| (i % 3) as f64 - 1.0).collect();
    let pop = population(&xs, &vec![true; n], None);
    let idx: Vec<usize> = (0..n).step_by(4).collect();
    let jit = |i: usize| ((i * 7919 % 41) as f64 - 20.0) / 200.0;
    let y0: Vec<f64> = idx.iter().map(|&i| xs[i] + jit(i)).collect();
    let y1: Vec<f64> = idx.iter().zip(&y0).map(|(&i, &y)| 1.0 + xs[i] + 0.5 * y + jit(i + 3)).collect();
    let coh = cohort(&pop, &idx, &vec![true; idx.len()], &y0, &y1);
    let f = write_frames(&pop, &coh);
    std::fs::write(f.path("cfg.json"), r#"{"cell_columns": ["x"], "min_cell": 5}"#).unwrap();
    f
}

#[test]
fn estimators_agree_on_a_linear_fully_observed_cohort() {
    let f = linear_fixture();
    let cfg = s(&f.path("cfg.json")).to_string();
    f.run_ok("compare", "c", &["--config", &cfg]);
    let t = long_table(&f.path("c").join("compare.csv"));
    let points: Vec<(String, f64)> = ["mb-sp", "mb-lm", "ht", "greg", "mrp"]
        .iter()
        .map(|e| (e.to_string(), t[&(e.to_string(), "wave:1".into(), "point".into())]))
        .collect();
    // Population mean of the outcome is 1 up to the jitter.
    for (e, v) in &points {
        assert!((v - 1.0).abs() < 0.06, "{e}: {v}");
    }
}

#[test]
fn linear_prediction_on_ten_units_matches_hand_value() {
    // x on an even grid, y0 = x^2, y1 = 1 + x + 2 y0 +/- 0.01.
    let xs = common::grid(10);
    let pop = population(&xs, &[true; 10], None);
    let idx: Vec<usize> = (0..10).collect();
    let y0: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let y1: Vec<f64> = (0..10).map(|i| 1.0 + xs[i] + 2.0 * y0[i] + if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
    let coh = cohort(&pop, &idx, &[true; 10], &y0, &y1);
    let f = write_frames(&pop, &coh);
    std::fs::write(f.path("cfg.json"), r#"{"linear_draws": 4000}"#).unwrap();
    let cfg = s(&f.path("cfg.json")).to_string();
    f.run_ok("compare", "c", &["--config", &cfg, "--estimators", "mb-lm"]);
    let t = long_table(&f.path("c").join("compare.csv"));
    let point = t[&("mb-lm".to_string(), "wave:1".into(), "point".into())];
    // Grid mean of x is 0 and of x^2 is 330/810, so 1 + 2 * 0.40741 = 1.81481.
    assert!((point - 1.81481).abs() < 0.05, "{point}");
}
