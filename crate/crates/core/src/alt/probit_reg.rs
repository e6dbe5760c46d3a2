//! Maximum-likelihood probit regression by iteratively reweighted least
//! squares with a small ridge to keep separated designs finite.

use nalgebra::{DMatrix, DVector};

use crate::dist::std_normal_cdf;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-6;
const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitFit {
    /// Intercept first.
    pub coef: Vec<f64>,
}

fn density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl ProbitFit {
    pub fn fit(x: &[Vec<f64>], r: &[bool]) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != r.len() {
            return Err(Error::config("probit regression needs matching, non-empty inputs"));
        }
        let p = x[0].len() + 1;
        let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
        let y = DVector::from_iterator(n, r.iter().map(|&v| f64::from(u8::from(v))));
        let mut beta = DVector::zeros(p);
        let rate = y.mean().clamp(1e-6, 1.0 - 1e-6);
        beta[0] = crate::dist::std_normal_quantile(rate);
        for _ in 0..MAX_ITER {
            let eta = &design * &beta;
            let mut w = DVector::zeros(n);
            let mut z = DVector::zeros(n);
            for i in 0..n {
                let mu = std_normal_cdf(eta[i]).clamp(1e-10, 1.0 - 1e-10);
                let d = density(eta[i]).max(1e-10);
                w[i] = d * d / (mu * (1.0 - mu));
                z[i] = eta[i] + (y[i] - mu) / d;
            }
            let mut xtw = design.transpose();
            for i in 0..n {
                xtw.column_mut(i).scale_mut(w[i]);
            }
            let mut a = &xtw * &design;
            for j in 0..p {
                a[(j, j)] += RIDGE;
            }
            let b = &xtw * &z;
            let next = a
                .cholesky()
                .ok_or_else(|| Error::Other("probit regression: singular information matrix".into()))?
                .solve(&b);
            let step = (&next - &beta).amax();
            beta = next;
            if step < 1e-9 {
                break;
            }
        }
        Ok(Self {
            coef: beta.iter().copied().collect(),
        })
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        let eta = self.coef[0] + self.coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        std_normal_cdf(eta)
    }
}
