//! Centered skew-normal errors: moments and a text histogram.

use ppcm::rng::stream;
use ppcm::simgen::{sample_skew_normal, skew_location, SKEW_SCALE, SKEW_SHAPE};

fn main() {
    let mut rng = stream(3, &[]);
    let n = 50_000;
    let v: Vec<f64> = (0..n)
        .map(|_| sample_skew_normal(&mut rng, skew_location(), SKEW_SCALE, SKEW_SHAPE))
        .collect();
    let m = ppcm::dist::mean(&v);
    let var = ppcm::dist::sample_variance(&v);
    let skew = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n as f64 / var.powf(1.5);
    println!("mean {m:.4}  variance {var:.4}  skewness {skew:.4}");

    let mut bins = [0usize; 16];
    for x in &v {
        let k = ((x + 2.0) / 0.375).floor();
        if (0.0..16.0).contains(&k) {
            bins[k as usize] += 1;
        }
    }
    for (k, c) in bins.iter().enumerate() {
        println!("{:6.2} {}", -2.0 + 0.375 * k as f64, "#".repeat(c / 250));
    }
}
