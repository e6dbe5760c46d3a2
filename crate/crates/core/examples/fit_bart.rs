//! Sum-of-trees regression on a noisy sine, and a probit fit on its sign.

use ppcm::bart::{fit_continuous, fit_probit, BartConfig};
use ppcm::rng::stream;
use rand::Rng;

fn main() -> ppcm::Result<()> {
    let mut rng = stream(1, &[]);
    let n = 400;
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0), rng.random::<f64>()]).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0].sin() + 0.2 * ppcm::dist::normal(&mut rng)).collect();

    let cfg = BartConfig::default().with_size(50, 200, 200).with_seed(7);
    let ens = fit_continuous(&x, &y, &cfg)?;
    println!("x      fit     sin(x)");
    for v in [-2.5, -1.0, 0.0, 1.0, 2.5] {
        println!("{v:5.1}  {:6.3}  {:6.3}", ens.predict_mean(&[v, 0.5])?, f64::sin(v));
    }
    println!("split share (x, noise): {:?}", ens.split_proportions());

    let r: Vec<bool> = y.iter().map(|v| *v > 0.0).collect();
    let probit = fit_probit(&x, &r, &BartConfig::probit_default().with_size(20, 200, 200))?;
    println!("P(y > 0 | x = 1.5) = {:.3}", probit.predict_mean(&[1.5, 0.5])?);
    println!("P(y > 0 | x = -1.5) = {:.3}", probit.predict_mean(&[-1.5, 0.5])?);
    Ok(())
}
