//! Bayesian linear regression with a flat coefficient prior and
//! `p(σ²) ∝ 1/σ²`, sampled exactly.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dist::{chi_squared, normal};
use crate::error::{Error, Result};
use crate::ppcm::{OutcomeLearner, OutcomeModel};
use crate::rng::{purpose, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPosterior {
    /// `coef[d]` holds the intercept followed by the slopes.
    pub coef: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

/// Names of columns that are linear combinations of earlier ones, by
/// modified Gram-Schmidt on the design `[1, X]`.
pub fn collinear_columns(design: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..design.ncols() {
        let col = design.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        if norm == 0.0 || v.norm() <= 1e-9 * norm.max(1.0) {
            bad.push(if j == 0 { "intercept".to_string() } else { names[j - 1].clone() });
        } else {
            let len = v.norm();
            basis.push(v / len);
        }
    }
    bad
}

pub(crate) fn design_matrix(x: &[Vec<f64>]) -> DMatrix<f64> {
    let p = x.first().map_or(0, Vec::len);
    DMatrix::from_fn(x.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] })
}

/// Least-squares coefficients (intercept first). Errors on rank deficiency.
pub fn ols(x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let design = design_matrix(x);
    let bad = collinear_columns(&design, names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    let qr = design.qr();
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * yv;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Other("singular triangular factor".into()))?;
    Ok(beta.iter().copied().collect())
}

pub fn fit_mblm(x: &[Vec<f64>], y: &[f64], names: &[String], draws: usize, seed: u64) -> Result<LinearPosterior> {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    if n <= p + 1 {
        return Err(Error::config(format!("linear model needs n > p + 1 (n = {n}, p = {p})")));
    }
    if draws == 0 {
        return Err(Error::config("at least one draw is required"));
    }
    let design = design_matrix(x);
    let bad = collinear_columns(&design, names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    let k = p + 1;
    let qr = design.clone().qr();
    let r = qr.r();
    let yv = DVector::from_column_slice(y);
    let beta_hat = r
        .solve_upper_triangular(&(qr.q().transpose() * &yv))
        .ok_or_else(|| Error::Other("singular triangular factor".into()))?;
    let ssr = (&yv - &design * &beta_hat).norm_squared();
    let mut rng = stream(seed, &[purpose::LINEAR]);
    let mut coef = Vec::with_capacity(draws);
    let mut sigma = Vec::with_capacity(draws);
    for _ in 0..draws {
        let s2 = ssr / chi_squared(&mut rng, (n - k) as f64);
        let s = s2.sqrt();
        let z = DVector::from_fn(k, |_, _| normal(&mut rng));
        let dev = r.solve_upper_triangular(&z).expect("non-singular R");
        coef.push((&beta_hat + dev * s).iter().copied().collect());
        sigma.push(s);
    }
    Ok(LinearPosterior { coef, sigma })
}

impl OutcomeModel for LinearPosterior {
    fn n_draws(&self) -> usize {
        self.coef.len()
    }

    fn n_features(&self) -> usize {
        self.coef[0].len() - 1
    }

    fn mean(&self, draw: usize, x: &[f64]) -> f64 {
        let b = &self.coef[draw % self.coef.len()];
        b[0] + b[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    fn sigma(&self, draw: usize) -> f64 {
        self.sigma[draw % self.sigma.len()]
    }
}

/// Linear outcome models for the forward-imputation engine.
#[derive(Debug, Clone)]
pub struct LinearLearner {
    pub draws: usize,
}

impl OutcomeLearner for LinearLearner {
    fn fit(&self, x: &[Vec<f64>], y: &[f64], names: &[String], seed: u64) -> Result<Arc<dyn OutcomeModel>> {
        Ok(Arc::new(fit_mblm(x, y, names, self.draws, seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 4.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let post = fit_mblm(&x, &y, &["x".into()], 200, 1).unwrap();
        for b in &post.coef {
            assert!((b[0] - 1.0).abs() < 1e-6 && (b[1] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn names_collinear_columns() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        match fit_mblm(&x, &y, &names, 10, 0) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
    }
}
