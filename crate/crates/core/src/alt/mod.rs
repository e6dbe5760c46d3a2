//! Competitor estimators for population means under dropout: parametric
//! model-based prediction (linear and multilevel), inverse-probability
//! weighting with adjustment cells, and GREG.

pub mod cells;
pub mod linear;
pub mod mrp;
pub mod probit_reg;
pub mod weighting;

pub use cells::{CellTable, DEFAULT_MIN_CELL, DEFAULT_WEIGHT_CAP};
pub use linear::{fit_mblm, ols, LinearLearner, LinearPosterior};
pub use mrp::{fit_mrp, MrpConfig, MrpLearner, MrpPosterior, MrpSpec};
pub use probit_reg::ProbitFit;
pub use weighting::{
    greg_by_age, greg_estimate, ht_by_age, ht_estimate, participation_weights, sample_estimate,
    weighted_mean_estimate, Estimate, GregParts, Participation, ParticipationModels, WaveWeights,
};
