//! Every estimator on one replicate of the skewed scenario.

use ppcm::bart::BartConfig;
use ppcm::metrics::{parse_estimators, run_estimators, StudySettings};
use ppcm::simgen::{gen_replicate, ScenarioSpec};

fn main() -> ppcm::Result<()> {
    let rep = gen_replicate(&ScenarioSpec::new(3, 5)?.with_sizes(4000, 400))?;
    let settings = StudySettings {
        outcome_bart: BartConfig::default().with_size(30, 150, 150),
        linear_draws: 200,
        ..StudySettings::default()
    };
    let estimators = parse_estimators("sample,mb-sp,mb-sp:pe=0.1,mb-lm,ht,greg,mrp")?;
    println!("truth {:.3}", rep.truth());
    for r in run_estimators(&rep, 0, &estimators, &settings, 9) {
        match (r.point, r.lo, r.hi) {
            (Some(p), Some(lo), Some(hi)) => println!("{:14} {p:7.3} [{lo:.3}, {hi:.3}]", r.estimator),
            (Some(p), _, _) => println!("{:14} {p:7.3}", r.estimator),
            _ => println!("{:14} failed: {}", r.estimator, r.error.unwrap_or_default()),
        }
    }
    Ok(())
}
