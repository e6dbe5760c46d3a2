//! Survivor-restricted (partly conditional) population means under dropout,
//! death and practice effects.
//!
//! Outcome models are fitted per wave on responders who are alive, response
//! models on previous-wave responders who are alive. Each posterior draw then
//! samples the offsets, pushes every population unit forward through the
//! waves once, and averages the predictions over survivors.

mod aggregate;
mod estimate;
mod impute;
mod sensitivity;

pub use aggregate::{default_age_grid, ppcm_at_wave, ppcm_by_age, ppcm_overall, AgeGrid};
pub use estimate::{
    age_label, estimate_ppcm, estimate_ppcm_immortal, feature_names, fit_wave_models, immortal_view, outcome_training,
    posterior_from_models, response_training, summarize_draws, wave_label, write_file, write_summaries, BartLearner,
    CohortMode, FittedPpcm, OutcomeLearner, PpcmOptions, PpcmPosterior, TargetSummary,
};
pub use impute::{
    impute_forward, ConstantOutcome, ConstantResponse, ForwardImputation, OutcomeModel, ResponseModel, WaveModels,
};
pub use sensitivity::{
    age_quadratic_config, dropout_bound, eval_bound, practice_bound_first_followup, practice_bound_later,
    sample_sensitivity, Bound, Offset, SensitivityConfig, SensitivityDraws, TriangularPrior,
};
