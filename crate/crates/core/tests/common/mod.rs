#![allow(dead_code)]

use ppcm::data::{CohortFrame, Panel, PopulationFrame, WaveSchema};

/// Two-wave schema with covariate `x` at baseline only.
pub fn schema_x(age: bool) -> WaveSchema {
    WaveSchema::new(vec![vec!["x".into()], vec![]], age.then(|| "age".into())).unwrap()
}

/// Two-wave population over `xs`, with survival to wave 1 given by `alive1`
/// and optional ages `(age0, age1)`.
pub fn population(xs: &[f64], alive1: &[bool], ages: Option<&[(f64, f64)]>) -> PopulationFrame {
    let n = xs.len();
    let panel = Panel {
        schema: schema_x(ages.is_some()),
        unit_ids: (0..n).map(|i| format!("u{i}")).collect(),
        alive: alive1.iter().map(|&a| vec![true, a]).collect(),
        age: (0..n)
            .map(|i| match ages {
                Some(a) => vec![Some(a[i].0), alive1[i].then_some(a[i].1)],
                None => vec![None, None],
            })
            .collect(),
        covariates: vec![
            xs.iter().map(|&x| Some(vec![x])).collect(),
            alive1.iter().map(|&a| a.then(Vec::new)).collect(),
        ],
    };
    PopulationFrame::new(panel).unwrap()
}

/// Cohort made of population units `idx`, responding at wave 1 per
/// `resp1`, with outcomes `y0`, `y1` (the latter only kept for responders).
pub fn cohort(pop: &PopulationFrame, idx: &[usize], resp1: &[bool], y0: &[f64], y1: &[f64]) -> CohortFrame {
    let p = &pop.panel;
    let panel = Panel {
        schema: p.schema.clone(),
        unit_ids: idx.iter().map(|&i| p.unit_ids[i].clone()).collect(),
        alive: idx.iter().map(|&i| p.alive[i].clone()).collect(),
        age: idx.iter().map(|&i| p.age[i].clone()).collect(),
        covariates: (0..2)
            .map(|t| idx.iter().map(|&i| p.covariates[t][i].clone()).collect())
            .collect(),
    };
    let responded = resp1.iter().map(|&r| vec![true, r]).collect();
    let outcome = (0..idx.len())
        .map(|k| vec![Some(y0[k]), resp1[k].then_some(y1[k])])
        .collect();
    CohortFrame::new(panel, responded, outcome).unwrap()
}

/// Evenly spread covariate values in `[-1, 1]`.
pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

pub fn small_bart(seed: u64) -> ppcm::bart::BartConfig {
    ppcm::bart::BartConfig::default().with_size(20, 100, 100).with_seed(seed)
}
