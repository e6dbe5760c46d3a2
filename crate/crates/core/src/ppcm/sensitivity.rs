//! Priors for the dropout offset and the practice-effect offset.
//!
//! Both offsets are additive on the outcome scale. The dropout offset `γ` is
//! added to the predicted outcome of a (simulated) non-responder, so negative
//! values mean dropouts perform worse than comparable responders. The
//! practice-effect offset `δ` is subtracted from every prediction at waves
//! `t >= 1`. Each prior is triangular with bounds that are constants or
//! quadratics in age; `scale_k` multiplies every bound.
//!
//! JSON layout (per-wave lists cover waves `1..=T`; a single entry applies to
//! every wave, an empty list means "identically zero"):
//!
//! ```json
//! {
//!   "dropout_offset": [{"min": {"quadratic": [-8.0, -0.3, 0.0039]},
//!                       "mode": {"quadratic": [-8.0, -0.3, 0.0039]},
//!                       "max": 0.0}],
//!   "practice_effect": [[0.0, 0.15, 0.15]],
//!   "scale_k": 1.0
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Panel;
use crate::dist::triangular_inverse_cdf;
use crate::error::{Error, Result};
use crate::rng::{purpose, StreamFamily};
use rand::Rng;

/// A bound that is either constant or `c0 + c1 a + c2 a²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Constant(f64),
    Quadratic { quadratic: [f64; 3] },
}

impl Bound {
    pub fn quadratic(c0: f64, c1: f64, c2: f64) -> Self {
        Bound::Quadratic { quadratic: [c0, c1, c2] }
    }

    pub fn eval(&self, age: f64) -> f64 {
        match *self {
            Bound::Constant(c) => c,
            Bound::Quadratic { quadratic: [c0, c1, c2] } => c0 + c1 * age + c2 * age * age,
        }
    }

    pub fn is_age_dependent(&self) -> bool {
        matches!(self, Bound::Quadratic { .. })
    }

    fn is_finite(&self) -> bool {
        match self {
            Bound::Constant(c) => c.is_finite(),
            Bound::Quadratic { quadratic } => quadratic.iter().all(|c| c.is_finite()),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PriorRepr {
    Triple([Bound; 3]),
    Named { min: Bound, mode: Bound, max: Bound },
}

/// Triangular `(min, mode, max)` prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PriorRepr")]
pub struct TriangularPrior {
    pub min: Bound,
    pub mode: Bound,
    pub max: Bound,
}

impl From<PriorRepr> for TriangularPrior {
    fn from(r: PriorRepr) -> Self {
        match r {
            PriorRepr::Triple([min, mode, max]) => Self { min, mode, max },
            PriorRepr::Named { min, mode, max } => Self { min, mode, max },
        }
    }
}

impl TriangularPrior {
    pub fn zero() -> Self {
        Self::constant(0.0, 0.0, 0.0)
    }

    pub fn constant(min: f64, mode: f64, max: f64) -> Self {
        Self {
            min: Bound::Constant(min),
            mode: Bound::Constant(mode),
            max: Bound::Constant(max),
        }
    }

    /// `Tri(0, U, U)`: mass piled at the upper bound.
    pub fn upper_heavy(upper: Bound) -> Self {
        Self {
            min: Bound::Constant(0.0),
            mode: upper,
            max: upper,
        }
    }

    /// `Tri(L, L, 0)`: mass piled at the (negative) lower bound.
    pub fn lower_heavy(lower: Bound) -> Self {
        Self {
            min: lower,
            mode: lower,
            max: Bound::Constant(0.0),
        }
    }

    pub fn is_age_dependent(&self) -> bool {
        self.min.is_age_dependent() || self.mode.is_age_dependent() || self.max.is_age_dependent()
    }

    /// True when the prior is a point mass at zero for every age.
    pub fn is_zero(&self) -> bool {
        [self.min, self.mode, self.max]
            .iter()
            .all(|b| matches!(b, Bound::Constant(c) if *c == 0.0))
    }
}

/// Bounds of `prior` at age `a`, multiplied by `scale_k`.
pub fn eval_bound(prior: &TriangularPrior, a: f64, scale_k: f64) -> Result<(f64, f64, f64)> {
    let lo = prior.min.eval(a) * scale_k;
    let mode = prior.mode.eval(a) * scale_k;
    let hi = prior.max.eval(a) * scale_k;
    if !(lo <= mode && mode <= hi) {
        return Err(Error::config(format!(
            "triangular bounds ({lo}, {mode}, {hi}) at age {a} violate min <= mode <= max"
        )));
    }
    Ok((lo, mode, hi))
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    #[serde(default, alias = "gamma")]
    pub dropout_offset: Vec<TriangularPrior>,
    #[serde(default, alias = "delta")]
    pub practice_effect: Vec<TriangularPrior>,
    #[serde(default = "default_scale")]
    pub scale_k: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offset {
    Dropout,
    Practice,
}

impl SensitivityConfig {
    /// All offsets identically zero.
    pub fn zero() -> Self {
        Self {
            dropout_offset: Vec::new(),
            practice_effect: Vec::new(),
            scale_k: 1.0,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn with_scale(mut self, k: f64) -> Self {
        self.scale_k = k;
        self
    }

    /// Same priors with the dropout offset removed.
    pub fn without_dropout(&self) -> Self {
        Self {
            dropout_offset: Vec::new(),
            ..self.clone()
        }
    }

    /// Same priors with the practice effect removed.
    pub fn without_practice(&self) -> Self {
        Self {
            practice_effect: Vec::new(),
            ..self.clone()
        }
    }

    fn list(&self, which: Offset) -> &[TriangularPrior] {
        match which {
            Offset::Dropout => &self.dropout_offset,
            Offset::Practice => &self.practice_effect,
        }
    }

    /// Prior of the given offset at wave `t >= 1`.
    pub fn prior(&self, which: Offset, t: usize) -> TriangularPrior {
        let list = self.list(which);
        match list.len() {
            0 => TriangularPrior::zero(),
            1 => list[0],
            _ => list[t - 1],
        }
    }

    pub fn has_dropout_offset(&self) -> bool {
        self.scale_k != 0.0 && self.dropout_offset.iter().any(|p| !p.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.scale_k == 0.0
            || (self.dropout_offset.iter().all(TriangularPrior::is_zero)
                && self.practice_effect.iter().all(TriangularPrior::is_zero))
    }

    fn needs_age(&self) -> bool {
        self.dropout_offset
            .iter()
            .chain(&self.practice_effect)
            .any(TriangularPrior::is_age_dependent)
    }

    /// Checks list lengths against the last wave `T`.
    pub fn validate(&self, last_wave: usize) -> Result<()> {
        if !(self.scale_k >= 0.0 && self.scale_k.is_finite()) {
            return Err(Error::config("scale_k must be a finite non-negative number"));
        }
        for (name, list) in [("dropout_offset", &self.dropout_offset), ("practice_effect", &self.practice_effect)] {
            if !(list.len() <= 1 || list.len() == last_wave) {
                return Err(Error::config(format!(
                    "{name} has {} priors; expected 0, 1 or {last_wave} (one per wave 1..={last_wave})",
                    list.len()
                )));
            }
            if list.iter().any(|p| !(p.min.is_finite() && p.mode.is_finite() && p.max.is_finite())) {
                return Err(Error::config(format!("{name} has non-finite coefficients")));
            }
        }
        Ok(())
    }
}

/// Offsets for one posterior iteration, indexed `[t][i]`; row 0 is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityDraws {
    pub gamma: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
}

impl SensitivityDraws {
    pub fn zeros(waves: usize, n: usize) -> Self {
        Self {
            gamma: vec![vec![0.0; n]; waves],
            delta: vec![vec![0.0; n]; waves],
        }
    }
}

/// One draw of `(γ_it, δ_it)` for every unit alive at `t = 1..=T`.
///
/// Each unit owns a substream of `(seed, draw)`, and every `(unit, wave)`
/// consumes exactly two uniforms (γ then δ) whether or not the priors are
/// degenerate, so configurations sharing a seed use identical uniforms.
pub fn sample_sensitivity(cfg: &SensitivityConfig, panel: &Panel, seed: u64, draw: u64) -> Result<SensitivityDraws> {
    let waves = panel.waves();
    let n = panel.n_units();
    cfg.validate(waves - 1)?;
    let mut out = SensitivityDraws::zeros(waves, n);
    if waves < 2 {
        return Ok(out);
    }
    let needs_age = cfg.needs_age();
    let priors: Vec<(TriangularPrior, TriangularPrior)> = (1..waves)
        .map(|t| (cfg.prior(Offset::Dropout, t), cfg.prior(Offset::Practice, t)))
        .collect();
    let family = StreamFamily::new(seed, &[purpose::SENSITIVITY, draw]);
    for i in 0..n {
        let mut rng = family.sub(i as u64);
        for t in 1..waves {
            let ug: f64 = rng.random();
            let ud: f64 = rng.random();
            if !panel.is_alive(i, t) {
                continue;
            }
            let age = match panel.age[i][t] {
                Some(a) => a,
                None if needs_age => {
                    return Err(Error::Invariant {
                        unit_id: panel.unit_ids[i].clone(),
                        wave: t,
                        message: "age missing for an age-dependent sensitivity prior".into(),
                    })
                }
                None => 0.0,
            };
            let (gp, dp) = &priors[t - 1];
            let wave_err = |e: Error| Error::config(format!("wave {t}: {e}"));
            let (a, m, b) = eval_bound(gp, age, cfg.scale_k).map_err(wave_err)?;
            out.gamma[t][i] = triangular_inverse_cdf(a, m, b, ug);
            let (a, m, b) = eval_bound(dp, age, cfg.scale_k).map_err(wave_err)?;
            out.delta[t][i] = triangular_inverse_cdf(a, m, b, ud);
        }
    }
    Ok(out)
}

/// Practice-effect upper bound at the first follow-up wave, quadratic in age.
pub fn practice_bound_first_followup() -> Bound {
    Bound::quadratic(4.8, -0.1, 5.2e-4)
}

/// Practice-effect upper bound at later follow-up waves, quadratic in age.
pub fn practice_bound_later() -> Bound {
    Bound::quadratic(11.0, -0.3, 1.9e-3)
}

/// Dropout-offset lower bound, quadratic in age.
pub fn dropout_bound() -> Bound {
    Bound::quadratic(-8.0, -0.3, 3.9e-3)
}

/// Age-dependent configuration for a panel with waves `0..=last_wave`.
pub fn age_quadratic_config(last_wave: usize) -> SensitivityConfig {
    let delta = (1..=last_wave)
        .map(|t| {
            TriangularPrior::upper_heavy(if t == 1 {
                practice_bound_first_followup()
            } else {
                practice_bound_later()
            })
        })
        .collect();
    SensitivityConfig {
        dropout_offset: vec![TriangularPrior::lower_heavy(dropout_bound())],
        practice_effect: delta,
        scale_k: 1.0,
    }
}
