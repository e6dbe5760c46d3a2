//! A short replication study: bias, SD, MSE and coverage per estimator.

use ppcm::metrics::{parse_estimators, run_study, summarize, write_summary_csv, StudySettings};
use ppcm::simgen::ScenarioSpec;

fn main() -> ppcm::Result<()> {
    let spec = ScenarioSpec::new(2, 0)?;
    let estimators = parse_estimators("sample,ht,greg,mb-lm")?;
    let settings = StudySettings {
        linear_draws: 200,
        ..StudySettings::default()
    };
    let results = run_study(&spec, &estimators, 8, 2024, &settings)?;
    write_summary_csv(std::io::stdout(), 2, &summarize(&results))?;
    Ok(())
}
