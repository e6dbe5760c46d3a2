//! Sparse Dirichlet prior on split variables.
//!
//! Split probabilities `s ~ Dirichlet(θ/p, ..., θ/p)`; given the split counts
//! of the current forest the full conditional is
//! `Dirichlet(θ/p + c_1, ..., θ/p + c_p)`. The concentration is given the
//! prior `θ / (θ + ρ) ~ Beta(a, b)` with `ρ = p` and is resampled on a fixed
//! grid.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::dist::log_gamma_draw;

const GRID: usize = 1000;

/// Concentration state of the sparsity prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DartState {
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub rho: f64,
}

impl DartState {
    pub fn new(p: usize, a: f64, b: f64) -> Self {
        // Start at the prior median-ish value θ = ρ (λ = 1/2).
        Self {
            theta: p as f64,
            a,
            b,
            rho: p as f64,
        }
    }
}

/// Draw of `log s` from `Dirichlet(θ/p + counts)`.
pub fn draw_log_split_probs<R: Rng + ?Sized>(rng: &mut R, theta: f64, counts: &[usize]) -> Vec<f64> {
    let p = counts.len();
    if p == 1 {
        return vec![0.0];
    }
    let base = theta / p as f64;
    let logs: Vec<f64> = counts
        .iter()
        .map(|&c| log_gamma_draw(rng, base + c as f64))
        .collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| l - lse).collect()
}

/// Grid draw of θ given the current `log s`.
pub fn draw_theta<R: Rng + ?Sized>(rng: &mut R, state: &DartState, log_s: &[f64]) -> f64 {
    let p = log_s.len() as f64;
    let sum_log_s: f64 = log_s.iter().sum();
    let mut thetas = Vec::with_capacity(GRID);
    let mut lp = Vec::with_capacity(GRID);
    for k in 1..=GRID {
        let lambda = k as f64 / (GRID as f64 + 1.0);
        let theta = lambda * state.rho / (1.0 - lambda);
        let ll = ln_gamma(theta) - p * ln_gamma(theta / p) + (theta / p) * sum_log_s;
        let prior = (state.a - 1.0) * lambda.ln() + (state.b - 1.0) * (1.0 - lambda).ln();
        thetas.push(theta);
        lp.push(ll + prior);
    }
    let lse = log_sum_exp(&lp);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (theta, l) in thetas.iter().zip(&lp) {
        acc += (l - lse).exp();
        if u <= acc {
            return *theta;
        }
    }
    *thetas.last().unwrap()
}

/// One DART update: new split probabilities from the Dirichlet full
/// conditional, then a fresh concentration draw. Returns the probabilities.
pub fn update_dart_split_probs<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &[usize],
    state: &mut DartState,
) -> Vec<f64> {
    let log_s = draw_log_split_probs(rng, state.theta, counts);
    if log_s.len() > 1 {
        state.theta = draw_theta(rng, state, &log_s);
    }
    normalize_from_logs(&log_s)
}

pub(crate) fn normalize_from_logs(log_s: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = log_s.iter().map(|l| l.exp()).collect();
    let total: f64 = s.iter().sum();
    s.iter_mut().for_each(|v| *v /= total);
    s
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn single_predictor_gets_all_weight() {
        let mut rng = stream(1, &[]);
        let mut st = DartState::new(1, 0.5, 1.0);
        for _ in 0..10 {
            assert_eq!(update_dart_split_probs(&mut rng, &[7], &mut st), vec![1.0]);
        }
    }

    #[test]
    fn symmetric_prior_has_uniform_mean() {
        let mut rng = stream(2, &[]);
        let p = 5;
        let reps = 20_000;
        let mut acc = vec![0.0; p];
        for _ in 0..reps {
            let s = normalize_from_logs(&draw_log_split_probs(&mut rng, 2.0, &[0; 5]));
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            acc.iter_mut().zip(&s).for_each(|(a, v)| *a += v);
        }
        for a in acc {
            assert!((a / reps as f64 - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn theta_grid_draw_is_in_support() {
        let mut rng = stream(3, &[]);
        let st = DartState::new(4, 0.5, 1.0);
        let log_s = draw_log_split_probs(&mut rng, 1.0, &[3, 0, 0, 1]);
        let th = draw_theta(&mut rng, &st, &log_s);
        assert!(th > 0.0 && th.is_finite());
    }
}
