//! Mean score by age among survivors, next to the immortal-cohort curve.

use ppcm::bart::BartConfig;
use ppcm::ppcm::{estimate_ppcm, estimate_ppcm_immortal, CohortMode, PpcmOptions, SensitivityConfig};
use ppcm::simgen::{gen_aging_panel, AgingSpec};

fn main() -> ppcm::Result<()> {
    let rep = gen_aging_panel(&AgingSpec {
        pop_size: 1500,
        sample_size: 300,
        ..AgingSpec::default()
    })?;
    let bart = BartConfig::default().with_size(30, 150, 150);
    let opts = PpcmOptions {
        mode: CohortMode::Mortal,
        age_grid: Some((8..=19).map(|k| 5.0 * k as f64).collect()),
        seed: 11,
        ..PpcmOptions::default()
    };
    let mortal = estimate_ppcm(
        &rep.population,
        &rep.cohort,
        &bart,
        &BartConfig::probit_default(),
        &SensitivityConfig::zero(),
        &opts,
    )?;
    let immortal = estimate_ppcm_immortal(&rep.population, &rep.cohort, &bart, &opts)?;
    println!("age  survivors  immortal");
    for (m, i) in mortal.age_summaries().iter().zip(immortal.age_summaries()) {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{:7}  {:>9}  {:>8}", m.target.trim_start_matches("age:"), f(m.point), f(i.point));
    }
    Ok(())
}
