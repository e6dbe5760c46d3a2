//! Age-dependent triangular priors for the practice and dropout offsets.

use ppcm::dist::triangular_moments;
use ppcm::ppcm::{dropout_bound, eval_bound, practice_bound_first_followup, practice_bound_later, TriangularPrior};

fn main() -> ppcm::Result<()> {
    let practice = TriangularPrior::upper_heavy(practice_bound_first_followup());
    let dropout = TriangularPrior::lower_heavy(dropout_bound());
    println!("age  practice(min,mode,max)    mean     dropout(min,mode,max)        mean");
    for age in [35.0, 45.0, 55.0, 65.0, 75.0, 85.0] {
        let p = eval_bound(&practice, age, 1.0)?;
        let d = eval_bound(&dropout, age, 1.0)?;
        println!(
            "{age:3}  ({:.3}, {:.3}, {:.3})  {:7.3}  ({:.2}, {:.2}, {:.2})  {:7.3}",
            p.0,
            p.1,
            p.2,
            triangular_moments(p.0, p.1, p.2).0,
            d.0,
            d.1,
            d.2,
            triangular_moments(d.0, d.1, d.2).0
        );
    }
    // The later-wave practice bound is only usable where it stays positive.
    let later = TriangularPrior::upper_heavy(practice_bound_later());
    for age in [35.0, 45.0, 55.0, 65.0] {
        match eval_bound(&later, age, 1.0) {
            Ok(b) => println!("later practice bound at {age}: {:.3}", b.2),
            Err(e) => println!("later practice bound at {age}: {e}"),
        }
    }
    Ok(())
}
