//! Command-line front end: `simulate`, `ppcm`, `sensitivity` and `compare`.
//!
//! Every command writes its files into `--out` together with a
//! `manifest.json` holding the resolved configuration. Values come from
//! flags, then the optional `--config` JSON file, then built-in defaults;
//! the seed additionally falls back to `PPCM_SEED`.
//!
//! Exit codes: 0 success, 1 estimation or runtime failure, 2 usage or
//! configuration error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::alt::{
    greg_by_age, greg_estimate, ht_by_age, ht_estimate, CellTable, Estimate, LinearLearner, MrpConfig, MrpLearner,
    ParticipationModels, DEFAULT_MIN_CELL, DEFAULT_WEIGHT_CAP,
};
use crate::bart::BartConfig;
use crate::data::{load_cohort, load_population, write_cohort, write_population, CohortFrame, PopulationFrame, WaveSchema};
use crate::error::{Error, Result};
use crate::metrics::{run_study, summarize, write_results_csv, write_summary_csv, StudySettings};
use crate::ppcm::{
    age_label, wave_label, write_file, write_summaries, AgeGrid, BartLearner, CohortMode, FittedPpcm, OutcomeLearner,
    PpcmOptions, PpcmPosterior, SensitivityConfig, TargetSummary,
};
use crate::simgen::{gen_replicate, ScenarioSpec};

pub const SEED_ENV: &str = "PPCM_SEED";

#[derive(Debug, Parser)]
#[command(name = "ppcm", version, about = "Population partly conditional means for longitudinal cohorts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replication study on a synthetic scenario.
    Simulate(SimulateArgs),
    /// Estimate the PPCM from population and cohort files.
    Ppcm(PpcmArgs),
    /// Sensitivity settings plus the immortal-cohort analysis.
    Sensitivity(PpcmArgs),
    /// Compare estimators on the same data.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON file with default values for any option.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trees in outcome models.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Burn-in sweeps for every tree model.
    #[arg(long)]
    pub burn: Option<usize>,
    /// Retained sweeps for every tree model.
    #[arg(long)]
    pub keep: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated estimator names.
    #[arg(long)]
    pub estimators: Option<String>,
    /// Population size.
    #[arg(long)]
    pub pop_size: Option<usize>,
    /// Expected sample size.
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Also write every replicate's population and cohort files.
    #[arg(long)]
    pub write_data: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Age curve grid as `lo:hi:step`, or `observed`.
    #[arg(long)]
    pub age_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct PpcmArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Sensitivity prior file (JSON).
    #[arg(long)]
    pub sensitivity: Option<PathBuf>,
    /// Multiplier applied to every sensitivity bound.
    #[arg(long)]
    pub scale_k: Option<f64>,
    #[arg(long, value_parser = ["mortal", "immortal"])]
    pub mode: Option<String>,
    /// Posterior draws (default: retained outcome-model draws).
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated subset of mb-sp, mb-lm, ht, greg, mrp.
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub draws: Option<usize>,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub scenario: Option<u8>,
    pub reps: Option<usize>,
    pub estimators: Option<String>,
    pub pop_size: Option<usize>,
    pub sample_size: Option<usize>,
    pub population: Option<PathBuf>,
    pub cohort: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub sensitivity: Option<PathBuf>,
    pub scale_k: Option<f64>,
    pub mode: Option<String>,
    pub age_grid: Option<String>,
    pub draws: Option<usize>,
    pub outcome_bart: Option<BartConfig>,
    pub response_bart: Option<BartConfig>,
    pub linear_draws: Option<usize>,
    pub mrp: Option<MrpConfig>,
    pub cell_columns: Option<Vec<String>>,
    pub min_cell: Option<usize>,
    pub weight_cap: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse { .. } | Error::Schema(_) | Error::Config(_) | Error::Invariant { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> std::result::Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Ppcm(a) => cmd_ppcm(&a),
        Command::Sensitivity(a) => cmd_sensitivity(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
    .map_err(CliError::from)
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        // A pool may already exist when running in-process; the cap only
        // affects speed, never results.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn out_dir(flag: &Option<PathBuf>, file: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.clone().or_else(|| file.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn bart_sizes(base: BartConfig, c: &CommonArgs, trees: bool) -> Result<BartConfig> {
    let mut cfg = base;
    if trees {
        if let Some(t) = c.trees {
            cfg.n_trees = t;
        }
    }
    if let Some(b) = c.burn {
        cfg.n_burn = b;
    }
    if let Some(k) = c.keep {
        cfg.n_keep = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: C,
    outputs: Vec<String>,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, seed: u64, config: C, outputs: &[&str]) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Other(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[derive(Serialize)]
struct SimulateResolved {
    scenario: ScenarioSpec,
    reps: usize,
    estimators: Vec<String>,
    settings: StudySettings,
    write_data: bool,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    let seed = resolve_seed(a.common.seed, file.seed)?;
    init_threads(a.common.threads.or(file.threads))?;
    let id = a
        .scenario
        .or(file.scenario)
        .ok_or_else(|| Error::config("--scenario is required"))?;
    let mut spec = ScenarioSpec::new(id, seed)?;
    spec.pop_size = a.pop_size.or(file.pop_size).unwrap_or(spec.pop_size);
    spec.sample_size = a.sample_size.or(file.sample_size).unwrap_or(spec.sample_size);
    spec.validate()?;
    let reps = a.reps.or(file.reps).unwrap_or(200);
    let list = a
        .estimators
        .clone()
        .or(file.estimators.clone())
        .ok_or_else(|| Error::config("--estimators is required"))?;
    let estimators = crate::metrics::parse_estimators(&list)?;
    let defaults = StudySettings::default();
    let settings = StudySettings {
        outcome_bart: bart_sizes(file.outcome_bart.clone().unwrap_or(defaults.outcome_bart), &a.common, true)?,
        linear_draws: file.linear_draws.unwrap_or(defaults.linear_draws),
        mrp: file.mrp.clone().unwrap_or(defaults.mrp),
        cell_columns: file.cell_columns.clone().unwrap_or(defaults.cell_columns),
        min_cell: file.min_cell.unwrap_or(defaults.min_cell),
        weight_cap: file.weight_cap.unwrap_or(defaults.weight_cap),
    };
    let dir = out_dir(&a.common.out, &file.out)?;

    let results = run_study(&spec, &estimators, reps, seed, &settings)?;
    let table = summarize(&results);
    write_file(&dir.join("results.csv"), |w| write_results_csv(w, &results))?;
    write_file(&dir.join("summary.csv"), |w| write_summary_csv(w, id, &table))?;
    let mut outputs = vec!["results.csv", "summary.csv"];
    let mut data_files = Vec::new();
    if a.write_data {
        for r in 0..reps {
            let rep = gen_replicate(&spec.clone().with_seed(crate::metrics::replicate_seed(seed, r)))?;
            let sub = dir.join(format!("replicate_{r:04}"));
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            write_population(&sub.join("population.csv"), &rep.population)?;
            write_cohort(&sub.join("cohort.csv"), &rep.cohort)?;
            write_schema(&sub.join("schema.json"), &rep.population.panel.schema)?;
            data_files.push(format!("replicate_{r:04}/"));
        }
    }
    let data_refs: Vec<&str> = data_files.iter().map(String::as_str).collect();
    outputs.extend(data_refs);
    let failures = results.iter().filter(|r| r.error.is_some()).count();
    let resolved = SimulateResolved {
        scenario: spec,
        reps,
        estimators: estimators.iter().map(ToString::to_string).collect(),
        settings,
        write_data: a.write_data,
    };
    write_manifest(&dir, "simulate", seed, resolved, &outputs)?;
    for row in &table {
        eprintln!(
            "{}: bias {} sd {} cp {} ({} ok, {} failed)",
            row.estimator,
            fmt(row.bias),
            fmt(row.sd),
            fmt(row.cp),
            row.n_ok,
            row.n_failed
        );
    }
    if failures > 0 {
        eprintln!("{failures} estimator runs failed; see results.csv");
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn write_schema(path: &Path, schema: &WaveSchema) -> Result<()> {
    let text = serde_json::to_string_pretty(schema).map_err(|e| Error::Other(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Parses `lo:hi:step` (inclusive of `hi` up to rounding) or `observed`.
pub fn parse_age_grid(s: &str) -> Result<Vec<f64>> {
    if s.trim() == "observed" {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::config(format!("--age-grid '{s}': expected lo:hi:step or 'observed'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + step * k as f64).collect())
}

struct Inputs {
    population: PopulationFrame,
    cohort: CohortFrame,
    paths: [PathBuf; 3],
}

fn load_inputs(d: &DataArgs, file: &ConfigFile) -> Result<Inputs> {
    let need = |flag: &Option<PathBuf>, f: &Option<PathBuf>, name: &str| {
        flag.clone()
            .or_else(|| f.clone())
            .ok_or_else(|| Error::config(format!("--{name} is required")))
    };
    let pop = need(&d.population, &file.population, "population")?;
    let coh = need(&d.cohort, &file.cohort, "cohort")?;
    let sch = need(&d.schema, &file.schema, "schema")?;
    let schema = WaveSchema::from_json_file(&sch)?;
    Ok(Inputs {
        population: load_population(&pop, &schema)?,
        cohort: load_cohort(&coh, &schema)?,
        paths: [pop, coh, sch],
    })
}

#[derive(Serialize)]
struct PpcmResolved {
    population: PathBuf,
    cohort: PathBuf,
    schema: PathBuf,
    sensitivity_file: Option<PathBuf>,
    sensitivity: SensitivityConfig,
    options: PpcmOptions,
    outcome_bart: BartConfig,
    response_bart: BartConfig,
}

struct PpcmSetup {
    inputs: Inputs,
    sens: SensitivityConfig,
    options: PpcmOptions,
    outcome_cfg: BartConfig,
    response_cfg: BartConfig,
    dir: PathBuf,
    seed: u64,
    sens_path: Option<PathBuf>,
}

impl PpcmSetup {
    fn resolved(&self) -> PpcmResolved {
        let [p, c, s] = self.inputs.paths.clone();
        PpcmResolved {
            population: p,
            cohort: c,
            schema: s,
            sensitivity_file: self.sens_path.clone(),
            sensitivity: self.sens.clone(),
            options: self.options.clone(),
            outcome_bart: self.outcome_cfg.clone(),
            response_bart: self.response_cfg.clone(),
        }
    }
}

fn ppcm_setup(a: &PpcmArgs) -> Result<PpcmSetup> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    let seed = resolve_seed(a.common.seed, file.seed)?;
    init_threads(a.common.threads.or(file.threads))?;
    let sens_path = a.sensitivity.clone().or(file.sensitivity.clone());
    let mut sens = match &sens_path {
        Some(p) => SensitivityConfig::from_json_file(p)?,
        None => SensitivityConfig::zero(),
    };
    if let Some(k) = a.scale_k.or(file.scale_k) {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::config("--scale-k must be a non-negative number"));
        }
        sens = sens.with_scale(k);
    }
    let mode = match a.mode.clone().or(file.mode.clone()).as_deref() {
        None | Some("mortal") => CohortMode::Mortal,
        Some("immortal") => CohortMode::Immortal,
        Some(m) => return Err(Error::config(format!("unknown mode '{m}' (mortal|immortal)"))),
    };
    let age_grid = match a.data.age_grid.clone().or(file.age_grid.clone()) {
        Some(s) => Some(parse_age_grid(&s)?),
        None => None,
    };
    let options = PpcmOptions {
        mode,
        n_posterior: a.draws.or(file.draws),
        age_grid,
        seed,
    };
    let outcome_cfg = bart_sizes(file.outcome_bart.clone().unwrap_or_default(), &a.common, true)?;
    let response_cfg = bart_sizes(
        file.response_bart.clone().unwrap_or_else(BartConfig::probit_default),
        &a.common,
        false,
    )?;
    let inputs = load_inputs(&a.data, &file)?;
    sens.validate(inputs.population.panel.waves().saturating_sub(1))?;
    let dir = out_dir(&a.common.out, &file.out)?;
    Ok(PpcmSetup {
        inputs,
        sens,
        options,
        outcome_cfg,
        response_cfg,
        dir,
        seed,
        sens_path,
    })
}

fn write_posterior_files(dir: &Path, prefix: &str, post: &PpcmPosterior, outputs: &mut Vec<String>) -> Result<()> {
    let name = |s: &str| format!("{prefix}{s}");
    write_file(&dir.join(name("posterior.csv")), |w| post.write_posterior_csv(w))?;
    write_file(&dir.join(name("summary.csv")), |w| post.write_summary_csv(w))?;
    outputs.push(name("posterior.csv"));
    outputs.push(name("summary.csv"));
    if !post.age_grid.is_empty() {
        write_file(&dir.join(name("age_curve.csv")), |w| post.write_age_curve_csv(w))?;
        outputs.push(name("age_curve.csv"));
    }
    Ok(())
}

pub fn cmd_ppcm(a: &PpcmArgs) -> Result<()> {
    let s = ppcm_setup(a)?;
    let post = crate::ppcm::estimate_ppcm(
        &s.inputs.population,
        &s.inputs.cohort,
        &s.outcome_cfg,
        &s.response_cfg,
        &s.sens,
        &s.options,
    )?;
    let mut outputs = Vec::new();
    write_posterior_files(&s.dir, "", &post, &mut outputs)?;
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(&s.dir, "ppcm", s.seed, s.resolved(), &refs)?;
    for row in post.summary().iter().filter(|r| !r.target.starts_with("age:")) {
        eprintln!("{}: {} [{}, {}]", row.target, fmt(row.point), fmt(row.lo95), fmt(row.hi95));
    }
    Ok(())
}

/// Names of the sensitivity settings, in output order.
pub const SENSITIVITY_SETTINGS: [&str; 5] = ["i_mars_pe", "ii_mnars_no_pe", "iii_scaled_x2", "iv_mars_no_pe", "immortal"];

fn long_rows(label: &str, rows: &[TargetSummary], out: &mut Vec<[String; 4]>) {
    for r in rows {
        for (stat, v) in [("point", r.point), ("lo95", r.lo95), ("hi95", r.hi95)] {
            out.push([
                label.to_string(),
                r.target.clone(),
                stat.to_string(),
                v.map(|x| x.to_string()).unwrap_or_default(),
            ]);
        }
    }
}

fn write_long(path: &Path, first: &str, rows: &[[String; 4]]) -> Result<()> {
    write_file(path, |w| {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Other(format!("write {}: {e}", path.display()));
        wr.write_record([first, "target", "statistic", "value"]).map_err(err)?;
        for r in rows {
            wr.write_record(r).map_err(err)?;
        }
        wr.flush().map_err(|e| Error::io(path, e))
    })
}

pub fn cmd_sensitivity(a: &PpcmArgs) -> Result<()> {
    let s = ppcm_setup(a)?;
    if s.sens_path.is_none() {
        return Err(Error::config("sensitivity needs --sensitivity with the main-analysis priors"));
    }
    if s.options.mode == CohortMode::Immortal {
        return Err(Error::config("sensitivity always runs both modes; drop --mode"));
    }
    let (pop, coh) = (&s.inputs.population, &s.inputs.cohort);
    let main = &s.sens;
    let mortal = FittedPpcm::fit(
        pop,
        coh,
        &BartLearner(s.outcome_cfg.clone()),
        &s.response_cfg,
        main.has_dropout_offset(),
        CohortMode::Mortal,
        s.seed,
    )?;
    let immortal = FittedPpcm::fit(
        pop,
        coh,
        &BartLearner(s.outcome_cfg.clone()),
        &s.response_cfg,
        false,
        CohortMode::Immortal,
        s.seed,
    )?;
    let settings = [
        main.without_dropout(),
        main.without_practice(),
        main.clone().with_scale(2.0 * main.scale_k),
        SensitivityConfig::zero(),
    ];
    let mut long = Vec::new();
    let mut outputs = Vec::new();
    let opts_immortal = PpcmOptions {
        mode: CohortMode::Immortal,
        ..s.options.clone()
    };
    for (k, name) in SENSITIVITY_SETTINGS.iter().enumerate() {
        let post = if k < 4 {
            mortal.posterior(&settings[k], &s.options)?
        } else {
            immortal.posterior(&SensitivityConfig::zero(), &opts_immortal)?
        };
        let rows = post.summary();
        let file = format!("curve_{name}.csv");
        write_file(&s.dir.join(&file), |w| write_summaries(w, &rows))?;
        outputs.push(file);
        long_rows(name, &rows, &mut long);
    }
    write_long(&s.dir.join("sensitivity.csv"), "setting", &long)?;
    outputs.push("sensitivity.csv".into());
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(&s.dir, "sensitivity", s.seed, s.resolved(), &refs)?;
    Ok(())
}

#[derive(Serialize)]
struct CompareResolved {
    population: PathBuf,
    cohort: PathBuf,
    schema: PathBuf,
    estimators: Vec<String>,
    options: PpcmOptions,
    outcome_bart: BartConfig,
    linear_draws: usize,
    mrp: MrpConfig,
    cell_columns: Vec<String>,
    min_cell: usize,
    weight_cap: f64,
}

pub const COMPARE_ESTIMATORS: [&str; 5] = ["mb-sp", "mb-lm", "ht", "greg", "mrp"];

fn estimate_rows(by_wave: Vec<(usize, Estimate)>, grid: &[f64], by_age: Vec<Option<Estimate>>) -> Vec<TargetSummary> {
    let mut rows: Vec<TargetSummary> = by_wave
        .into_iter()
        .map(|(t, e)| TargetSummary {
            target: wave_label(t),
            point: Some(e.point),
            lo95: Some(e.lo),
            hi95: Some(e.hi),
        })
        .collect();
    for (a, e) in grid.iter().zip(by_age) {
        rows.push(TargetSummary {
            target: age_label(*a),
            point: e.map(|e| e.point),
            lo95: e.map(|e| e.lo),
            hi95: e.map(|e| e.hi),
        });
    }
    rows
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    let seed = resolve_seed(a.common.seed, file.seed)?;
    init_threads(a.common.threads.or(file.threads))?;
    let list = a
        .estimators
        .clone()
        .or(file.estimators.clone())
        .unwrap_or_else(|| COMPARE_ESTIMATORS.join(","));
    let mut names = Vec::new();
    for n in list.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        if !COMPARE_ESTIMATORS.contains(&n) {
            return Err(Error::config(format!(
                "unknown estimator '{n}' (valid: {})",
                COMPARE_ESTIMATORS.join(", ")
            )));
        }
        if !names.contains(&n.to_string()) {
            names.push(n.to_string());
        }
    }
    if names.is_empty() {
        return Err(Error::config("no estimators given"));
    }
    let age_grid = match a.data.age_grid.clone().or(file.age_grid.clone()) {
        Some(s) => Some(parse_age_grid(&s)?),
        None => None,
    };
    let options = PpcmOptions {
        mode: CohortMode::Mortal,
        n_posterior: a.draws.or(file.draws),
        age_grid,
        seed,
    };
    let outcome_bart = bart_sizes(file.outcome_bart.clone().unwrap_or_default(), &a.common, true)?;
    let linear_draws = file.linear_draws.unwrap_or(1000);
    let mrp = file.mrp.clone().unwrap_or_default();
    let inputs = load_inputs(&a.data, &file)?;
    let (pop, coh) = (&inputs.population, &inputs.cohort);
    let cell_columns = file
        .cell_columns
        .clone()
        .unwrap_or_else(|| pop.panel.schema.covariates[0].clone());
    let min_cell = file.min_cell.unwrap_or(DEFAULT_MIN_CELL);
    let weight_cap = file.weight_cap.unwrap_or(DEFAULT_WEIGHT_CAP);
    let dir = out_dir(&a.common.out, &file.out)?;

    let waves = pop.panel.waves();
    let mut long = Vec::new();
    let mut weighting: Option<(CellTable, ParticipationModels)> = None;
    for name in &names {
        let rows = match name.as_str() {
            "mb-sp" | "mb-lm" | "mrp" => {
                let learner: Box<dyn OutcomeLearner> = match name.as_str() {
                    "mb-sp" => Box::new(BartLearner(outcome_bart.clone())),
                    "mb-lm" => Box::new(LinearLearner { draws: linear_draws }),
                    _ => Box::new(MrpLearner(mrp.clone())),
                };
                let fitted = FittedPpcm::fit(
                    pop,
                    coh,
                    learner.as_ref(),
                    &BartConfig::probit_default(),
                    false,
                    CohortMode::Mortal,
                    seed,
                )?;
                fitted.posterior(&SensitivityConfig::zero(), &options)?.summary()
            }
            _ => {
                if weighting.is_none() {
                    let cells = CellTable::build(&pop.panel, coh, &cell_columns, min_cell, weight_cap)?;
                    weighting = Some((cells, ParticipationModels::fit(coh)?));
                }
                let (cells, models) = weighting.as_ref().unwrap();
                let grid = AgeGrid::new(match &options.age_grid {
                    Some(g) if g.is_empty() => crate::ppcm::default_age_grid(&pop.panel),
                    Some(g) => g.clone(),
                    None => Vec::new(),
                });
                let mut by_wave = Vec::new();
                for t in 1..waves {
                    let e = if name == "ht" {
                        ht_estimate(coh, cells, models, t)?
                    } else {
                        greg_estimate(&pop.panel, coh, cells, models, t)?.estimate
                    };
                    by_wave.push((t, e));
                }
                let by_age = if grid.values().is_empty() {
                    Vec::new()
                } else if name == "ht" {
                    ht_by_age(coh, cells, models, &grid)?
                } else {
                    greg_by_age(&pop.panel, coh, cells, models, &grid)?
                };
                estimate_rows(by_wave, grid.values(), by_age)
            }
        };
        long_rows(name, &rows, &mut long);
    }
    write_long(&dir.join("compare.csv"), "estimator", &long)?;
    let [p, c, s] = inputs.paths.clone();
    let resolved = CompareResolved {
        population: p,
        cohort: c,
        schema: s,
        estimators: names,
        options,
        outcome_bart,
        linear_draws,
        mrp,
        cell_columns,
        min_cell,
        weight_cap,
    };
    write_manifest(&dir, "compare", seed, resolved, &["compare.csv"])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_grid_forms() {
        assert_eq!(parse_age_grid("35:50:5").unwrap(), vec![35.0, 40.0, 45.0, 50.0]);
        assert_eq!(parse_age_grid("observed").unwrap(), Vec::<f64>::new());
        assert!(parse_age_grid("50:35:5").is_err());
        assert!(parse_age_grid("1:2").is_err());
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"sed": 3}"#).unwrap();
        assert!(matches!(ConfigFile::load(Some(&p)), Err(Error::Parse { .. })));
        std::fs::write(&p, r#"{"seed": 3, "reps": 4}"#).unwrap();
        assert_eq!(ConfigFile::load(Some(&p)).unwrap().reps, Some(4));
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(CliError::from(Error::config("x")).code, 2);
        assert_eq!(
            CliError::from(Error::Estimation {
                wave: 1,
                message: "x".into()
            })
            .code,
            1
        );
    }
}
