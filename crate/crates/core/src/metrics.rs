//! Replication studies and their summaries: bias, empirical SD, MSE and
//! interval coverage per estimator.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alt::{
    ht_estimate, greg_estimate, sample_estimate, CellTable, Estimate, LinearLearner, MrpConfig, MrpLearner,
    ParticipationModels, DEFAULT_MIN_CELL, DEFAULT_WEIGHT_CAP,
};
use crate::bart::BartConfig;
use crate::dist::{compensated_sum, quantile_sorted};
use crate::error::{Error, Result};
use crate::ppcm::{BartLearner, CohortMode, FittedPpcm, OutcomeLearner, PpcmOptions, SensitivityConfig, TriangularPrior};
use crate::rng::{derive_seed, purpose};
use crate::simgen::{gen_replicate, ScenarioSpec, SimReplicate};

/// Estimators runnable inside a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EstimatorId {
    /// Responder mean.
    Sample,
    /// Sum-of-trees forward imputation; `pe` puts a `Tri(0, pe, pe)` prior
    /// on the practice effect.
    MbSp { pe: Option<f64> },
    MbLm,
    Ht,
    Greg,
    Mrp,
}

pub const ESTIMATOR_NAMES: &str = "sample, mb-sp, mb-sp:pe=<value>, mb-lm, ht, greg, mrp";

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sample => f.write_str("sample"),
            Self::MbSp { pe: None } => f.write_str("mb-sp"),
            Self::MbSp { pe: Some(v) } => write!(f, "mb-sp:pe={v}"),
            Self::MbLm => f.write_str("mb-lm"),
            Self::Ht => f.write_str("ht"),
            Self::Greg => f.write_str("greg"),
            Self::Mrp => f.write_str("mrp"),
        }
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("unknown estimator '{s}' (valid: {ESTIMATOR_NAMES})"));
        Ok(match s {
            "sample" => Self::Sample,
            "mb-sp" => Self::MbSp { pe: None },
            "mb-lm" => Self::MbLm,
            "ht" => Self::Ht,
            "greg" => Self::Greg,
            "mrp" => Self::Mrp,
            _ => {
                let v = s.strip_prefix("mb-sp:pe=").ok_or_else(bad)?;
                let pe: f64 = v.parse().map_err(|_| bad())?;
                if !(pe.is_finite() && pe >= 0.0) {
                    return Err(bad());
                }
                Self::MbSp { pe: Some(pe) }
            }
        })
    }
}

/// Parses a comma-separated estimator list.
pub fn parse_estimators(list: &str) -> Result<Vec<EstimatorId>> {
    let ids: Vec<EstimatorId> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if ids.is_empty() {
        return Err(Error::config(format!("no estimators given (valid: {ESTIMATOR_NAMES})")));
    }
    Ok(ids)
}

/// Model settings shared by all replicates of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudySettings {
    pub outcome_bart: BartConfig,
    pub linear_draws: usize,
    pub mrp: MrpConfig,
    /// Baseline covariates defining weighting cells.
    pub cell_columns: Vec<String>,
    pub min_cell: usize,
    pub weight_cap: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            outcome_bart: BartConfig::default().with_size(100, 500, 500),
            linear_draws: 500,
            mrp: MrpConfig::default(),
            cell_columns: ["x1", "x2", "x3", "x4"].iter().map(|s| s.to_string()).collect(),
            min_cell: DEFAULT_MIN_CELL,
            weight_cap: DEFAULT_WEIGHT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub estimator: String,
    pub point: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub truth: f64,
    /// Failure reason when the estimator did not produce an estimate.
    pub error: Option<String>,
}

impl ReplicateResult {
    fn new(replicate: usize, estimator: &EstimatorId, truth: f64, est: Result<Estimate>) -> Self {
        let (point, lo, hi, error) = match est {
            Ok(e) => (Some(e.point), Some(e.lo.min(e.hi)), Some(e.hi.max(e.lo)), None),
            Err(e) => (None, None, None, Some(e.to_string())),
        };
        Self {
            replicate,
            estimator: estimator.to_string(),
            point,
            lo,
            hi,
            truth,
            error,
        }
    }
}

fn ppcm_estimate(
    rep: &SimReplicate,
    learner: &dyn OutcomeLearner,
    pe: Option<f64>,
    seed: u64,
    fitted: &mut Option<FittedPpcm>,
) -> Result<Estimate> {
    if fitted.is_none() {
        *fitted = Some(FittedPpcm::fit(
            &rep.population,
            &rep.cohort,
            learner,
            &BartConfig::probit_default(),
            false,
            CohortMode::Mortal,
            seed,
        )?);
    }
    let sens = match pe {
        Some(v) => SensitivityConfig {
            practice_effect: vec![TriangularPrior::constant(0.0, v, v)],
            ..SensitivityConfig::zero()
        },
        None => SensitivityConfig::zero(),
    };
    let options = PpcmOptions {
        seed,
        ..PpcmOptions::default()
    };
    let post = fitted.as_ref().unwrap().posterior(&sens, &options)?;
    let last = *post.waves.last().ok_or_else(|| Error::config("panel has no follow-up wave"))?;
    let s = post
        .wave_summary(last)
        .filter(|s| s.point.is_some())
        .ok_or_else(|| Error::Estimation {
            wave: last,
            message: "no survivors".into(),
        })?;
    Ok(Estimate {
        point: s.point.unwrap(),
        lo: s.lo95.unwrap(),
        hi: s.hi95.unwrap(),
    })
}

type Weighting = std::result::Result<(CellTable, ParticipationModels), String>;

fn weights<'a>(
    rep: &SimReplicate,
    settings: &StudySettings,
    cache: &'a mut Option<Weighting>,
) -> Result<(&'a CellTable, &'a ParticipationModels)> {
    let built = cache.get_or_insert_with(|| {
        let build = || -> Result<(CellTable, ParticipationModels)> {
            let cells = CellTable::build(
                &rep.population.panel,
                &rep.cohort,
                &settings.cell_columns,
                settings.min_cell,
                settings.weight_cap,
            )?;
            Ok((cells, ParticipationModels::fit(&rep.cohort)?))
        };
        build().map_err(|e| e.to_string())
    });
    match built {
        Ok((c, m)) => Ok((c, m)),
        Err(msg) => Err(Error::Other(msg.clone())),
    }
}

/// Runs every estimator on one generated replicate. Models are fitted once
/// and shared between `mb-sp` variants.
pub fn run_estimators(
    rep: &SimReplicate,
    replicate: usize,
    estimators: &[EstimatorId],
    settings: &StudySettings,
    seed: u64,
) -> Vec<ReplicateResult> {
    let t = rep.cohort.panel.waves() - 1;
    let truth = rep.truth();
    let mut bart_fit = None;
    let mut lm_fit = None;
    let mut mrp_fit = None;
    let mut weighting: Option<Weighting> = None;
    estimators
        .iter()
        .map(|est| {
            let res = match est {
                EstimatorId::Sample => sample_estimate(&rep.cohort, t),
                EstimatorId::MbSp { pe } => ppcm_estimate(
                    rep,
                    &BartLearner(settings.outcome_bart.clone()),
                    *pe,
                    seed,
                    &mut bart_fit,
                ),
                EstimatorId::MbLm => ppcm_estimate(
                    rep,
                    &LinearLearner {
                        draws: settings.linear_draws,
                    },
                    None,
                    derive_seed(seed, &[purpose::LINEAR]),
                    &mut lm_fit,
                ),
                EstimatorId::Mrp => ppcm_estimate(
                    rep,
                    &MrpLearner(settings.mrp.clone()),
                    None,
                    derive_seed(seed, &[purpose::MRP]),
                    &mut mrp_fit,
                ),
                EstimatorId::Ht => {
                    weights(rep, settings, &mut weighting).and_then(|(c, m)| ht_estimate(&rep.cohort, c, m, t))
                }
                EstimatorId::Greg => weights(rep, settings, &mut weighting)
                    .and_then(|(c, m)| greg_estimate(&rep.population.panel, &rep.cohort, c, m, t).map(|g| g.estimate)),
            };
            ReplicateResult::new(replicate, est, truth, res)
        })
        .collect()
}

/// Seed of replicate `r` of a study seeded with `seed`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, &[purpose::REPLICATE, r as u64])
}

/// Generates `reps` replicates of `spec` (its seed is replaced per replicate)
/// and runs every estimator on each. Results are ordered by replicate, then
/// by the order of `estimators`.
pub fn run_study(
    spec: &ScenarioSpec,
    estimators: &[EstimatorId],
    reps: usize,
    seed: u64,
    settings: &StudySettings,
) -> Result<Vec<ReplicateResult>> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::config("at least one replicate is required"));
    }
    if estimators.is_empty() {
        return Err(Error::config("no estimators given"));
    }
    let per_rep: Vec<Vec<ReplicateResult>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rs = replicate_seed(seed, r);
            match gen_replicate(&spec.clone().with_seed(rs)) {
                Ok(rep) => run_estimators(&rep, r, estimators, settings, rs),
                Err(e) => estimators
                    .iter()
                    .map(|est| ReplicateResult::new(r, est, f64::NAN, Err(Error::Other(e.to_string()))))
                    .collect(),
            }
        })
        .collect();
    Ok(per_rep.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub bias: Option<f64>,
    pub sd: Option<f64>,
    pub mse: Option<f64>,
    /// Percent of replicates whose interval covers the truth.
    pub cp: Option<f64>,
}

/// Summary rows, one per estimator in order of first appearance.
pub type SummaryTable = Vec<SummaryRow>;

pub fn summarize(results: &[ReplicateResult]) -> SummaryTable {
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.estimator.as_str()) {
            order.push(&r.estimator);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let rows: Vec<&ReplicateResult> = results.iter().filter(|r| r.estimator == name).collect();
            let ok: Vec<&ReplicateResult> = rows.iter().copied().filter(|r| r.point.is_some()).collect();
            let n = ok.len();
            let errs: Vec<f64> = ok.iter().map(|r| r.point.unwrap() - r.truth).collect();
            let points: Vec<f64> = ok.iter().map(|r| r.point.unwrap()).collect();
            let mean_of = |v: &[f64]| compensated_sum(v.iter().copied()) / v.len() as f64;
            let (bias, mse) = if n == 0 {
                (None, None)
            } else {
                let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
                (Some(mean_of(&errs)), Some(mean_of(&sq)))
            };
            let (sd, cp) = if n < 2 {
                (None, None)
            } else {
                let m = mean_of(&points);
                let ss = compensated_sum(points.iter().map(|p| (p - m) * (p - m)));
                let covered = ok
                    .iter()
                    .filter(|r| r.lo.unwrap() <= r.truth && r.truth <= r.hi.unwrap())
                    .count();
                (Some((ss / (n - 1) as f64).sqrt()), Some(100.0 * covered as f64 / n as f64))
            };
            SummaryRow {
                estimator: name.to_string(),
                n_ok: n,
                n_failed: rows.len() - n,
                bias,
                sd,
                mse,
                cp,
            }
        })
        .collect()
}

/// Equal-tailed interval from linear-interpolation quantiles.
pub fn credible_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::config("credible interval of no draws"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::config("level must lie in [0, 1]"));
    }
    if draws.iter().any(|d| d.is_nan()) {
        return Err(Error::config("draws contain NaN"));
    }
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = 0.5 * (1.0 - level);
    Ok((quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail)))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(w: W, scenario: u8, table: &SummaryTable) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::Other(format!("write summary: {e}"));
    wr.write_record(["scenario", "estimator", "bias_x100", "sd_x100", "mse", "cp_pct", "n_ok", "n_failed"])
        .map_err(e)?;
    for row in table {
        wr.write_record([
            scenario.to_string(),
            row.estimator.clone(),
            opt(row.bias.map(|b| 100.0 * b)),
            opt(row.sd.map(|s| 100.0 * s)),
            opt(row.mse),
            opt(row.cp),
            row.n_ok.to_string(),
            row.n_failed.to_string(),
        ])
        .map_err(e)?;
    }
    wr.flush().map_err(|x| Error::Other(format!("write summary: {x}")))
}

pub fn write_results_csv<W: Write>(w: W, results: &[ReplicateResult]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::Other(format!("write results: {e}"));
    wr.write_record(["replicate", "estimator", "point", "lo95", "hi95", "truth", "error"])
        .map_err(e)?;
    for r in results {
        wr.write_record([
            r.replicate.to_string(),
            r.estimator.clone(),
            opt(r.point),
            opt(r.lo),
            opt(r.hi),
            r.truth.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(e)?;
    }
    wr.flush().map_err(|x| Error::Other(format!("write results: {x}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(point: f64, truth: f64, lo: f64, hi: f64) -> ReplicateResult {
        ReplicateResult {
            replicate: 0,
            estimator: "e".into(),
            point: Some(point),
            lo: Some(lo),
            hi: Some(hi),
            truth,
            error: None,
        }
    }

    #[test]
    fn hand_example() {
        let t = summarize(&[res(1.0, 2.0, 0.0, 3.0), res(3.0, 2.0, 1.0, 4.0)]);
        let r = &t[0];
        assert_eq!(r.bias, Some(0.0));
        assert!((r.sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.mse, Some(1.0));
        assert_eq!(r.cp, Some(100.0));
    }

    #[test]
    fn single_replicate_has_no_sd() {
        let t = summarize(&[res(1.0, 2.0, 0.0, 3.0)]);
        assert_eq!(t[0].sd, None);
        assert_eq!(t[0].cp, None);
        assert_eq!(t[0].bias, Some(-1.0));
    }

    #[test]
    fn failures_are_counted() {
        let mut bad = res(0.0, 1.0, 0.0, 0.0);
        bad.point = None;
        bad.error = Some("x".into());
        let t = summarize(&[res(1.0, 1.0, 0.0, 2.0), bad]);
        assert_eq!((t[0].n_ok, t[0].n_failed), (1, 1));
    }

    #[test]
    fn interval_rules() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = credible_interval(&xs, 0.95).unwrap();
        assert!((lo - 3.475).abs() < 1e-12 && (hi - 97.525).abs() < 1e-12);
        assert_eq!(credible_interval(&[2.0; 5], 0.95).unwrap(), (2.0, 2.0));
        assert_eq!(credible_interval(&xs, 0.0).unwrap(), (50.5, 50.5));
        assert!(credible_interval(&[], 0.95).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for s in ["sample", "mb-sp", "mb-sp:pe=0.15", "mb-lm", "ht", "greg", "mrp"] {
            assert_eq!(s.parse::<EstimatorId>().unwrap().to_string(), s);
        }
        let err = "bogus".parse::<EstimatorId>().unwrap_err().to_string();
        assert!(err.contains("mb-lm"));
    }
}
