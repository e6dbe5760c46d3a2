//! Fit once, then compare a MAR analysis with offsets for practice and
//! for dropouts doing worse than predicted.

use ppcm::bart::BartConfig;
use ppcm::ppcm::{BartLearner, CohortMode, FittedPpcm, PpcmOptions, SensitivityConfig, TriangularPrior};
use ppcm::simgen::{gen_aging_panel, AgingSpec};

fn main() -> ppcm::Result<()> {
    let spec = AgingSpec {
        pop_size: 1500,
        sample_size: 300,
        waves: 3,
        ..AgingSpec::default()
    };
    let rep = gen_aging_panel(&spec)?;
    let outcome = BartLearner(BartConfig::default().with_size(30, 150, 150));
    let response = BartConfig::probit_default().with_size(20, 150, 150);
    let fitted = FittedPpcm::fit(&rep.population, &rep.cohort, &outcome, &response, true, CohortMode::Mortal, 3)?;
    let opts = PpcmOptions {
        seed: 3,
        ..PpcmOptions::default()
    };

    let offsets = SensitivityConfig {
        practice_effect: vec![TriangularPrior::constant(0.0, 0.5, 0.5)],
        dropout_offset: vec![TriangularPrior::constant(-1.0, -1.0, 0.0)],
        ..SensitivityConfig::zero()
    };
    for (name, sens) in [("mar", SensitivityConfig::zero()), ("offsets", offsets)] {
        let post = fitted.posterior(&sens, &opts)?;
        for s in post.summary() {
            println!(
                "{name:8} {:8} {:.3} [{:.3}, {:.3}]",
                s.target,
                s.point.unwrap_or(f64::NAN),
                s.lo95.unwrap_or(f64::NAN),
                s.hi95.unwrap_or(f64::NAN)
            );
        }
    }
    for t in 1..spec.waves {
        println!("true survivor mean at wave {t}: {:.3}", rep.truth_by_wave[t]);
    }
    Ok(())
}
