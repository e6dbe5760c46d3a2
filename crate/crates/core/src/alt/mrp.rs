//! Multilevel regression for poststratification: flat fixed effects for
//! binary covariates and outcome history, exchangeable normal random effects
//! for binned continuous covariates, fitted by Gibbs sampling.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::collinear_columns;
use crate::dist::{chi_squared, normal, quantile_sorted};
use crate::error::{Error, Result};
use crate::ppcm::{OutcomeLearner, OutcomeModel};
use crate::rng::{purpose, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrpConfig {
    pub n_burn: usize,
    pub n_keep: usize,
    /// Share of exact zeros that earns a covariate its own zero level.
    pub zero_share: f64,
    /// Hold every random-effect variance at this value.
    pub fixed_re_var: Option<f64>,
}

impl Default for MrpConfig {
    fn default() -> Self {
        Self {
            n_burn: 500,
            n_keep: 1000,
            zero_share: 0.05,
            fixed_re_var: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    Fixed,
    /// Quartile bins of the non-zero values; level 0 is reserved for exact
    /// zeros when `zero_level` is set.
    Grouped { cuts: [f64; 3], zero_level: bool },
}

impl Role {
    fn n_levels(&self) -> usize {
        match self {
            Role::Fixed => 0,
            Role::Grouped { zero_level, .. } => 4 + usize::from(*zero_level),
        }
    }

    fn level(&self, v: f64) -> usize {
        match self {
            Role::Fixed => 0,
            Role::Grouped { cuts, zero_level } => {
                if *zero_level && v == 0.0 {
                    return 0;
                }
                let q = cuts.iter().filter(|&&c| v > c).count();
                q + usize::from(*zero_level)
            }
        }
    }
}

/// Role of every feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct MrpSpec {
    pub names: Vec<String>,
    pub roles: Vec<Role>,
}

impl MrpSpec {
    /// Binary columns and outcome history are fixed effects; every other
    /// column is binned into a random-effect grouping.
    pub fn infer(x: &[Vec<f64>], names: &[String], zero_share: f64) -> Result<Self> {
        let p = names.len();
        let mut roles = Vec::with_capacity(p);
        for j in 0..p {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            let binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
            if binary || names[j].starts_with("outcome@") {
                roles.push(Role::Fixed);
                continue;
            }
            let zeros = col.iter().filter(|&&v| v == 0.0).count();
            let zero_level = zeros as f64 >= zero_share * col.len() as f64;
            let mut rest: Vec<f64> = col.into_iter().filter(|&v| !(zero_level && v == 0.0)).collect();
            rest.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let cuts = [
                quantile_sorted(&rest, 0.25),
                quantile_sorted(&rest, 0.5),
                quantile_sorted(&rest, 0.75),
            ];
            let role = Role::Grouped { cuts, zero_level };
            let mut used = vec![false; role.n_levels()];
            for r in x {
                used[role.level(r[j])] = true;
            }
            if used.iter().filter(|&&u| u).count() < 2 {
                return Err(Error::config(format!("grouping {:?} has fewer than two levels", names[j])));
            }
            roles.push(role);
        }
        Ok(Self {
            names: names.to_vec(),
            roles,
        })
    }

    fn fixed_columns(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&j| self.roles[j] == Role::Fixed).collect()
    }

    fn grouped_columns(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&j| self.roles[j] != Role::Fixed).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrpPosterior {
    pub spec: MrpSpec,
    fixed: Vec<usize>,
    grouped: Vec<usize>,
    /// `beta[d]`: intercept then fixed effects.
    pub beta: Vec<Vec<f64>>,
    /// `effects[d][g][level]`.
    pub effects: Vec<Vec<Vec<f64>>>,
    pub sigma: Vec<f64>,
    pub re_var: Vec<Vec<f64>>,
}

pub fn fit_mrp(x: &[Vec<f64>], y: &[f64], names: &[String], cfg: &MrpConfig, seed: u64) -> Result<MrpPosterior> {
    let n = y.len();
    if n != x.len() || n < 3 {
        return Err(Error::config("multilevel model needs at least three matching rows"));
    }
    if cfg.n_keep == 0 {
        return Err(Error::config("n_keep must be at least 1"));
    }
    let spec = MrpSpec::infer(x, names, cfg.zero_share)?;
    let fixed = spec.fixed_columns();
    let grouped = spec.grouped_columns();
    let kf = fixed.len() + 1;
    let design = DMatrix::from_fn(n, kf, |i, j| if j == 0 { 1.0 } else { x[i][fixed[j - 1]] });
    let fixed_names: Vec<String> = fixed.iter().map(|&j| names[j].clone()).collect();
    let bad = collinear_columns(&design, &fixed_names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    if n <= kf {
        return Err(Error::config("too few rows for the fixed effects"));
    }
    let levels: Vec<Vec<usize>> = grouped
        .iter()
        .map(|&j| x.iter().map(|r| spec.roles[j].level(r[j])).collect())
        .collect();
    let n_levels: Vec<usize> = grouped.iter().map(|&j| spec.roles[j].n_levels()).collect();

    let qr = design.clone().qr();
    let q_t = qr.q().transpose();
    let r = qr.r();
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s0_sq = (0.5 * (hi - lo)).powi(2).max(1e-12);
    let nu0 = 1.0;

    let mut rng = stream(seed, &[purpose::MRP]);
    let yv = DVector::from_column_slice(y);
    let mut u: Vec<Vec<f64>> = n_levels.iter().map(|&l| vec![0.0; l]).collect();
    let mut tau2: Vec<f64> = vec![cfg.fixed_re_var.unwrap_or(s0_sq); grouped.len()];
    let mut beta = r.solve_upper_triangular(&(&q_t * &yv)).expect("full rank");
    let mut sigma2 = ((&yv - &design * &beta).norm_squared() / (n - kf) as f64).max(1e-12);
    let mut re_sum = vec![0.0; n];

    let mut out = MrpPosterior {
        spec,
        fixed,
        grouped,
        beta: Vec::with_capacity(cfg.n_keep),
        effects: Vec::with_capacity(cfg.n_keep),
        sigma: Vec::with_capacity(cfg.n_keep),
        re_var: Vec::with_capacity(cfg.n_keep),
    };
    for iter in 0..cfg.n_burn + cfg.n_keep {
        for (i, s) in re_sum.iter_mut().enumerate() {
            *s = u.iter().zip(&levels).map(|(ug, lg)| ug[lg[i]]).sum();
        }
        let target = DVector::from_fn(n, |i, _| y[i] - re_sum[i]);
        let bhat = r.solve_upper_triangular(&(&q_t * &target)).expect("full rank");
        let z = DVector::from_fn(kf, |_, _| normal(&mut rng));
        beta = bhat + r.solve_upper_triangular(&z).expect("full rank") * sigma2.sqrt();
        let fit_fixed = &design * &beta;

        for g in 0..u.len() {
            let mut sums = vec![0.0; n_levels[g]];
            let mut counts = vec![0usize; n_levels[g]];
            for i in 0..n {
                let other = re_sum[i] - u[g][levels[g][i]];
                sums[levels[g][i]] += y[i] - fit_fixed[i] - other;
                counts[levels[g][i]] += 1;
            }
            let old = u[g].clone();
            for l in 0..n_levels[g] {
                let prec = counts[l] as f64 / sigma2 + 1.0 / tau2[g];
                u[g][l] = sums[l] / sigma2 / prec + normal(&mut rng) / prec.sqrt();
            }
            for i in 0..n {
                re_sum[i] += u[g][levels[g][i]] - old[levels[g][i]];
            }
            if cfg.fixed_re_var.is_none() {
                let ss: f64 = u[g].iter().map(|v| v * v).sum();
                tau2[g] = (nu0 * s0_sq + ss) / chi_squared(&mut rng, nu0 + n_levels[g] as f64);
            }
        }
        let ssr: f64 = (0..n).map(|i| (y[i] - fit_fixed[i] - re_sum[i]).powi(2)).sum();
        sigma2 = (ssr / chi_squared(&mut rng, n as f64)).max(1e-300);

        if iter >= cfg.n_burn {
            out.beta.push(beta.iter().copied().collect());
            out.effects.push(u.clone());
            out.sigma.push(sigma2.sqrt());
            out.re_var.push(tau2.clone());
        }
    }
    Ok(out)
}

impl OutcomeModel for MrpPosterior {
    fn n_draws(&self) -> usize {
        self.beta.len()
    }

    fn n_features(&self) -> usize {
        self.spec.roles.len()
    }

    fn mean(&self, draw: usize, x: &[f64]) -> f64 {
        let d = draw % self.beta.len();
        let b = &self.beta[d];
        let mut m = b[0];
        for (k, &j) in self.fixed.iter().enumerate() {
            m += b[k + 1] * x[j];
        }
        for (g, &j) in self.grouped.iter().enumerate() {
            m += self.effects[d][g][self.spec.roles[j].level(x[j])];
        }
        m
    }

    fn sigma(&self, draw: usize) -> f64 {
        self.sigma[draw % self.sigma.len()]
    }
}

#[derive(Debug, Clone)]
pub struct MrpLearner(pub MrpConfig);

impl OutcomeLearner for MrpLearner {
    fn fit(&self, x: &[Vec<f64>], y: &[f64], names: &[String], seed: u64) -> Result<Arc<dyn OutcomeModel>> {
        Ok(Arc::new(fit_mrp(x, y, names, &self.0, seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_and_levels() {
        let x: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![f64::from(i % 2), if i < 10 { 0.0 } else { i as f64 }, i as f64])
            .collect();
        let names: Vec<String> = ["b", "z", "outcome@0"].iter().map(|s| s.to_string()).collect();
        let spec = MrpSpec::infer(&x, &names, 0.05).unwrap();
        assert_eq!(spec.roles[0], Role::Fixed);
        assert_eq!(spec.roles[2], Role::Fixed);
        match &spec.roles[1] {
            Role::Grouped { zero_level, .. } => assert!(zero_level),
            r => panic!("{r:?}"),
        }
        assert_eq!(spec.roles[1].level(0.0), 0);
        assert_eq!(spec.roles[1].level(99.0), 4);
    }

    #[test]
    fn intercept_only_recovers_mean() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![f64::from(i % 2 == 0)]).collect();
        let y: Vec<f64> = (0..50).map(|i| 3.0 + (i % 5) as f64 * 0.1).collect();
        let post = fit_mrp(&x, &y, &["b".into()], &MrpConfig::default(), 1).unwrap();
        let m: f64 = (0..post.n_draws()).map(|d| post.mean(d, &[0.0]) * 0.5 + post.mean(d, &[1.0]) * 0.5).sum::<f64>()
            / post.n_draws() as f64;
        assert!((m - 3.2).abs() < 0.03, "{m}");
    }
}
