//! Synthetic populations and cohorts.
//!
//! Five two-wave scenarios (baseline plus one follow-up) with eight
//! auxiliary covariates, Poisson sampling from a finite population, dropout
//! at the follow-up, and optionally practice effects and deaths. Also a
//! multi-wave aging panel with time-varying covariates, deaths, dropout and
//! practice effects, used by the examples.
//!
//! The sampling intercept is solved per replicate so that the expected
//! sample size equals `sample_size`, and the dropout intercept so that the
//! mean response probability among sampled survivors is `response_rate`.
//! The scenario response formulas give the log-odds of *non*-response.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CohortFrame, Panel, PopulationFrame, WaveSchema};
use crate::dist::{normal, skew_normal};
use crate::error::{Error, Result};
use crate::rng::{purpose, StreamFamily};

pub const SKEW_SCALE: f64 = 1.6;
pub const SKEW_SHAPE: f64 = 5.0;

/// Location giving the error distribution mean zero.
pub fn skew_location() -> f64 {
    let d = SKEW_SHAPE / (1.0 + SKEW_SHAPE * SKEW_SHAPE).sqrt();
    -SKEW_SCALE * d * (2.0 / std::f64::consts::PI).sqrt()
}

/// One skew-normal draw; see [`crate::dist::skew_normal`].
pub fn sample_skew_normal<R: Rng + ?Sized>(rng: &mut R, location: f64, scale: f64, shape: f64) -> f64 {
    skew_normal(rng, location, scale, shape)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub pop_size: usize,
    pub sample_size: usize,
    pub response_rate: f64,
    /// Practice effect added to observed follow-up outcomes (scenario 4).
    pub practice_effect: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(id: u8, seed: u64) -> Result<Self> {
        let spec = Self {
            id,
            pop_size: 10_000,
            sample_size: 1_000,
            response_rate: 0.75,
            practice_effect: if id == 4 { 0.1 } else { 0.0 },
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_sizes(mut self, pop_size: usize, sample_size: usize) -> Self {
        self.pop_size = pop_size;
        self.sample_size = sample_size;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.id) {
            return Err(Error::config(format!("unknown scenario {} (expected 1-5)", self.id)));
        }
        if self.sample_size == 0 || self.sample_size > self.pop_size {
            return Err(Error::config("need 1 <= sample_size <= pop_size"));
        }
        if !(self.response_rate > 0.0 && self.response_rate < 1.0) {
            return Err(Error::config("response_rate must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A generated population, its sample and the finite-population target.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReplicate {
    pub population: PopulationFrame,
    pub cohort: CohortFrame,
    /// Survivor mean of the true outcome, per wave `0..=T`.
    pub truth_by_wave: Vec<f64>,
    /// True (practice-free) outcomes `[t][i]`, NaN after death.
    pub outcomes: Vec<Vec<f64>>,
    /// Population indices of the sampled units.
    pub sampled: Vec<usize>,
}

impl SimReplicate {
    /// Target at the last wave.
    pub fn truth(&self) -> f64 {
        *self.truth_by_wave.last().unwrap()
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intercept shift `c` with `Σ logistic(lp + c) = target`.
pub fn calibrate_intercept(lp: &[f64], target: f64) -> f64 {
    let f = |c: f64| lp.iter().map(|&z| logistic(z + c)).sum::<f64>() - target;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const X_NAMES: [&str; 8] = ["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8"];

mod stream_id {
    pub const COVARIATES: u64 = 0;
    pub const ERROR0: u64 = 1;
    pub const ERROR1: u64 = 2;
    pub const SELECTION: u64 = 3;
    pub const RESPONSE: u64 = 4;
    pub const SURVIVAL: u64 = 5;
}

pub fn gen_replicate(spec: &ScenarioSpec) -> Result<SimReplicate> {
    spec.validate()?;
    let n = spec.pop_size;
    let fam = StreamFamily::new(spec.seed, &[purpose::SIMULATE]);
    let mut rng = fam.sub(stream_id::COVARIATES);
    let x: Vec<[f64; 8]> = (0..n)
        .map(|_| {
            let mut v = [0.0; 8];
            v[0] = f64::from(u8::from(rng.random::<f64>() < 0.5));
            v[1] = f64::from(u8::from(rng.random::<f64>() < 0.5));
            for e in v.iter_mut().skip(2) {
                *e = rng.random_range(-1.0..1.0);
            }
            v
        })
        .collect();
    let skewed = spec.id >= 3;
    let loc = skew_location();
    let err = |sid: u64| -> Vec<f64> {
        let mut r = fam.sub(sid);
        (0..n)
            .map(|_| {
                if skewed {
                    sample_skew_normal(&mut r, loc, SKEW_SCALE, SKEW_SHAPE)
                } else {
                    normal(&mut r)
                }
            })
            .collect()
    };
    let e0 = err(stream_id::ERROR0);
    let e1 = err(stream_id::ERROR1);
    let y0: Vec<f64> = (0..n)
        .map(|i| {
            let [x1, x2, x3, x4, ..] = x[i];
            -1.0 - x1 + x2 + x3 + x4 + e0[i]
        })
        .collect();
    let y1: Vec<f64> = (0..n)
        .map(|i| {
            let [x1, x2, x3, x4, ..] = x[i];
            if skewed {
                -0.87 - 0.4 * x3 + 0.8 * x3 * x3 + 0.8 * x3.powi(3) + 0.4 * x4 + 0.8 * x1 + 0.8 * x2 + 0.4 * y0[i]
                    - 0.4 * x1 * y0[i]
                    + e1[i]
            } else {
                -1.0 - x1 + x2 + x3 + x4 - 0.3 * y0[i] + e1[i]
            }
        })
        .collect();

    let mut rng = fam.sub(stream_id::SURVIVAL);
    let alive1: Vec<bool> = (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            if spec.id == 5 {
                let [x1, x2, x3, x4, ..] = x[i];
                u < logistic(1.7 + 0.35 * (x1 + x2 + x3 + x4))
            } else {
                true
            }
        })
        .collect();

    let lp_sel: Vec<f64> = x
        .iter()
        .map(|&[x1, x2, x3, x4, ..]| -2.67 - 0.4 * x1 + 0.4 * x2 + 0.4 * x3 + 0.4 * x4)
        .collect();
    let c_sel = calibrate_intercept(&lp_sel, spec.sample_size as f64);
    let mut rng = fam.sub(stream_id::SELECTION);
    let sampled: Vec<usize> = (0..n)
        .filter(|&i| rng.random::<f64>() < logistic(lp_sel[i] + c_sel))
        .collect();
    if sampled.is_empty() {
        return Err(Error::Other("empty sample".into()));
    }

    // Log-odds of responding: negated non-response formula, re-centred below.
    let lp_resp: Vec<f64> = (0..n)
        .map(|i| {
            let [x1, x2, x3, x4, ..] = x[i];
            let nonresp = if spec.id == 1 {
                -2.7 + 1.2 * (x1 + x2 + x3 + x4) - 1.2 * y0[i]
            } else {
                -2.7 - x1 + x2 + x3 + x4 + y0[i] + x3 * x4 + x3 * x1 + y0[i] * x1
            };
            -nonresp
        })
        .collect();
    let eligible: Vec<f64> = sampled.iter().filter(|&&i| alive1[i]).map(|&i| lp_resp[i]).collect();
    let c_resp = calibrate_intercept(&eligible, spec.response_rate * eligible.len() as f64);
    let mut rng = fam.sub(stream_id::RESPONSE);
    let u_resp: Vec<f64> = (0..n).map(|_| rng.random()).collect();

    let schema = WaveSchema::new(
        vec![X_NAMES.iter().map(|s| s.to_string()).collect(), Vec::new()],
        None,
    )?;
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let pop_panel = Panel {
        schema: schema.clone(),
        unit_ids: ids.clone(),
        alive: alive1.iter().map(|&a| vec![true, a]).collect(),
        age: vec![vec![None; 2]; n],
        covariates: vec![
            x.iter().map(|v| Some(v.to_vec())).collect(),
            alive1.iter().map(|&a| a.then(Vec::new)).collect(),
        ],
    };
    let coh_panel = Panel {
        schema,
        unit_ids: sampled.iter().map(|&i| ids[i].clone()).collect(),
        alive: sampled.iter().map(|&i| pop_panel.alive[i].clone()).collect(),
        age: vec![vec![None; 2]; sampled.len()],
        covariates: (0..2)
            .map(|t| sampled.iter().map(|&i| pop_panel.covariates[t][i].clone()).collect())
            .collect(),
    };
    let mut responded = Vec::with_capacity(sampled.len());
    let mut outcome = Vec::with_capacity(sampled.len());
    for &i in &sampled {
        let r1 = alive1[i] && u_resp[i] < logistic(lp_resp[i] + c_resp);
        responded.push(vec![true, r1]);
        outcome.push(vec![Some(y0[i]), r1.then(|| y1[i] + spec.practice_effect)]);
    }

    let y1_masked: Vec<f64> = (0..n).map(|i| if alive1[i] { y1[i] } else { f64::NAN }).collect();
    let truth1 = survivor_mean(&y1_masked, &alive1);
    let truth0 = y0.iter().sum::<f64>() / n as f64;
    Ok(SimReplicate {
        population: PopulationFrame::new(pop_panel)?,
        cohort: CohortFrame::new(coh_panel, responded, outcome)?,
        truth_by_wave: vec![truth0, truth1],
        outcomes: vec![y0, y1_masked],
        sampled,
    })
}

fn survivor_mean(y: &[f64], alive: &[bool]) -> f64 {
    let v: Vec<f64> = y.iter().zip(alive).filter(|(_, &a)| a).map(|(v, _)| *v).collect();
    crate::dist::mean(&v)
}

/// Multi-wave panel of an ageing population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingSpec {
    pub pop_size: usize,
    pub sample_size: usize,
    /// Number of waves including baseline.
    pub waves: usize,
    /// Years between waves.
    pub spacing: f64,
    /// Practice gain on observed scores from the first follow-up on.
    pub practice_effect: f64,
    /// Extra decline of units after they drop out (part of the truth).
    pub dropout_decline: f64,
    pub seed: u64,
}

impl Default for AgingSpec {
    fn default() -> Self {
        Self {
            pop_size: 4_000,
            sample_size: 800,
            waves: 4,
            spacing: 5.0,
            practice_effect: 0.5,
            dropout_decline: -0.8,
            seed: 1,
        }
    }
}

/// Ageing panel: baseline ages 35-80, sex and education at baseline, a
/// time-varying income index, a mean score falling with age, age-dependent
/// deaths, and dropout that is more likely after low scores.
pub fn gen_aging_panel(spec: &AgingSpec) -> Result<SimReplicate> {
    if spec.waves < 2 || spec.sample_size == 0 || spec.sample_size > spec.pop_size {
        return Err(Error::config("aging panel needs >= 2 waves and 1 <= sample_size <= pop_size"));
    }
    let (n, tw) = (spec.pop_size, spec.waves);
    let fam = StreamFamily::new(spec.seed, &[purpose::SIMULATE, 0xA6]);
    let mut rng = fam.sub(0);
    let age0: Vec<f64> = (0..n).map(|_| rng.random_range(35.0..80.0)).collect();
    let sex: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.5))).collect();
    let edu: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..3u8))).collect();
    let frailty: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();

    let mut alive = vec![vec![true; tw]; n];
    let mut income = vec![vec![f64::NAN; tw]; n];
    let mut y = vec![vec![f64::NAN; tw]; n];
    let mut rng = fam.sub(1);
    for i in 0..n {
        for t in 0..tw {
            if t > 0 {
                let a = age0[i] + spec.spacing * t as f64;
                let hazard = logistic(-9.5 + 0.1 * a + 0.3 * frailty[i]);
                alive[i][t] = alive[i][t - 1] && rng.random::<f64>() >= hazard;
            }
            if !alive[i][t] {
                continue;
            }
            let a = age0[i] + spec.spacing * t as f64;
            let prev = if t == 0 { 0.3 * edu[i] } else { income[i][t - 1] };
            income[i][t] = 0.7 * prev + 0.2 * edu[i] - 0.01 * (a - 60.0) + 0.3 * normal(&mut rng);
            let c = a - 35.0;
            y[i][t] = 12.0 - 0.04 * c - 0.0015 * c * c + 0.6 * edu[i] - 0.4 * sex[i] + 0.8 * income[i][t]
                - 0.5 * frailty[i]
                + 0.8 * normal(&mut rng);
        }
    }

    let mut rng = fam.sub(2);
    let lp: Vec<f64> = (0..n).map(|i| 0.3 * edu[i] - 0.01 * (age0[i] - 57.5)).collect();
    let c = calibrate_intercept(&lp, spec.sample_size as f64);
    let sampled: Vec<usize> = (0..n).filter(|&i| rng.random::<f64>() < logistic(lp[i] + c)).collect();
    if sampled.is_empty() {
        return Err(Error::Other("empty sample".into()));
    }

    // Dropout depends on the previous score; dropouts then decline faster,
    // which the observed-data models cannot see.
    let mut rng = fam.sub(3);
    let mut responded = Vec::with_capacity(sampled.len());
    let mut observed = Vec::with_capacity(sampled.len());
    let mut dropped_at = vec![None; n];
    for &i in &sampled {
        let mut r = vec![false; tw];
        let mut o = vec![None; tw];
        r[0] = true;
        o[0] = Some(y[i][0]);
        for t in 1..tw {
            if !alive[i][t] {
                break;
            }
            if r[t - 1] {
                let p = logistic(2.2 + 0.25 * (y[i][t - 1] - 10.0) - 0.02 * (age0[i] - 57.5));
                r[t] = rng.random::<f64>() < p;
                if !r[t] {
                    dropped_at[i] = Some(t);
                }
            }
            if r[t] {
                o[t] = Some(y[i][t] + spec.practice_effect);
            }
        }
        responded.push(r);
        observed.push(o);
    }
    for i in 0..n {
        if let Some(d) = dropped_at[i] {
            for t in d..tw {
                if alive[i][t] {
                    y[i][t] += spec.dropout_decline;
                }
            }
        }
    }

    let mut names = vec![vec!["sex".to_string(), "edu".to_string(), "income".to_string()]];
    names.extend((1..tw).map(|_| vec!["income".to_string()]));
    let schema = WaveSchema::new(names, Some("age".into()))?;
    let ids: Vec<String> = (0..n).map(|i| format!("p{i:05}")).collect();
    let covariates: Vec<Vec<Option<Vec<f64>>>> = (0..tw)
        .map(|t| {
            (0..n)
                .map(|i| {
                    alive[i][t].then(|| {
                        if t == 0 {
                            vec![sex[i], edu[i], income[i][0]]
                        } else {
                            vec![income[i][t]]
                        }
                    })
                })
                .collect()
        })
        .collect();
    let ages: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            (0..tw)
                .map(|t| alive[i][t].then(|| (age0[i] + spec.spacing * t as f64).floor()))
                .collect()
        })
        .collect();
    let pop_panel = Panel {
        schema: schema.clone(),
        unit_ids: ids.clone(),
        alive: alive.clone(),
        age: ages.clone(),
        covariates: covariates.clone(),
    };
    let coh_panel = Panel {
        schema,
        unit_ids: sampled.iter().map(|&i| ids[i].clone()).collect(),
        alive: sampled.iter().map(|&i| alive[i].clone()).collect(),
        age: sampled.iter().map(|&i| ages[i].clone()).collect(),
        covariates: (0..tw)
            .map(|t| sampled.iter().map(|&i| covariates[t][i].clone()).collect())
            .collect(),
    };
    let truth_by_wave = (0..tw)
        .map(|t| {
            let col: Vec<f64> = (0..n).map(|i| y[i][t]).collect();
            let a: Vec<bool> = (0..n).map(|i| alive[i][t]).collect();
            survivor_mean(&col, &a)
        })
        .collect();
    let outcomes = (0..tw).map(|t| (0..n).map(|i| y[i][t]).collect()).collect();
    Ok(SimReplicate {
        population: PopulationFrame::new(pop_panel)?,
        cohort: CohortFrame::new(coh_panel, responded, observed)?,
        truth_by_wave,
        outcomes,
        sampled,
    })
}
