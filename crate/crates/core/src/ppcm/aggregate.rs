//! Survivor-restricted means per wave and per age cohort.

use crate::data::Panel;
use crate::dist::compensated_sum;

/// Mean prediction over units alive at `t`; `None` without survivors.
pub fn ppcm_at_wave(pred: &[f64], panel: &Panel, t: usize) -> Option<f64> {
    let vals: Vec<f64> = (0..panel.n_units())
        .filter(|&i| panel.is_alive(i, t))
        .map(|i| pred[i])
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(compensated_sum(vals.iter().copied()) / vals.len() as f64)
    }
}

/// Mean over all `(i, t)` with `t >= 1` and `s_it = 1`.
pub fn ppcm_overall(pred: &[Vec<f64>], panel: &Panel) -> Option<f64> {
    let mut vals = Vec::new();
    for (t, p) in pred.iter().enumerate().skip(1) {
        vals.extend((0..panel.n_units()).filter(|&i| panel.is_alive(i, t)).map(|i| p[i]));
    }
    if vals.is_empty() {
        None
    } else {
        Some(compensated_sum(vals.iter().copied()) / vals.len() as f64)
    }
}

/// Maps ages to the nearest grid value. Each grid value owns the half-open
/// interval reaching halfway to its neighbours (ties go up); the end values
/// reach outwards by the same half-width as on their inner side, and a
/// single-value grid owns `[g - 0.5, g + 0.5)`.
#[derive(Debug, Clone)]
pub struct AgeGrid {
    values: Vec<f64>,
}

impl AgeGrid {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn half_widths(&self, k: usize) -> (f64, f64) {
        let g = &self.values;
        let n = g.len();
        if n == 1 {
            return (0.5, 0.5);
        }
        let left = if k > 0 { (g[k] - g[k - 1]) / 2.0 } else { (g[1] - g[0]) / 2.0 };
        let right = if k + 1 < n { (g[k + 1] - g[k]) / 2.0 } else { (g[k] - g[k - 1]) / 2.0 };
        (left, right)
    }

    pub fn assign(&self, age: f64) -> Option<usize> {
        if self.values.is_empty() || !age.is_finite() {
            return None;
        }
        let k = self.values.partition_point(|&g| g <= age);
        for cand in [k.checked_sub(1), Some(k)].into_iter().flatten() {
            if cand >= self.values.len() {
                continue;
            }
            let (l, r) = self.half_widths(cand);
            let g = self.values[cand];
            if age >= g - l && age < g + r {
                return Some(cand);
            }
        }
        None
    }
}

/// Rounded ages observed among survivors at waves `1..=T`.
pub fn default_age_grid(panel: &Panel) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..panel.n_units() {
        for t in 1..panel.waves() {
            if panel.is_alive(i, t) {
                if let Some(a) = panel.age[i][t] {
                    out.push(a.round());
                }
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}

/// Age-cohort PPCM: per wave the cohort mean of alive units, then averaged
/// over waves `1..=T` with weights proportional to cohort survivor counts.
pub fn ppcm_by_age(pred: &[Vec<f64>], panel: &Panel, grid: &AgeGrid) -> Vec<Option<f64>> {
    let g = grid.values().len();
    let waves = panel.waves();
    let mut sums = vec![vec![Vec::new(); waves]; g];
    for (t, p) in pred.iter().enumerate().skip(1) {
        for i in 0..panel.n_units() {
            if !panel.is_alive(i, t) {
                continue;
            }
            if let Some(k) = panel.age[i][t].and_then(|a| grid.assign(a)) {
                sums[k][t].push(p[i]);
            }
        }
    }
    sums.iter()
        .map(|per_wave| {
            let total: usize = per_wave.iter().map(Vec::len).sum();
            if total == 0 {
                return None;
            }
            let mut terms = Vec::new();
            for v in per_wave.iter().filter(|v| !v.is_empty()) {
                let cohort_mean = compensated_sum(v.iter().copied()) / v.len() as f64;
                terms.push(v.len() as f64 / total as f64 * cohort_mean);
            }
            Some(compensated_sum(terms))
        })
        .collect()
}
