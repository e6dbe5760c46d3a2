//! Adjustment cells from categorised baseline covariates.

use std::collections::BTreeMap;

use crate::data::{CohortFrame, Panel};
use crate::dist::quantile_sorted;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_CELL: usize = 20;
pub const DEFAULT_WEIGHT_CAP: f64 = 30.0;

pub type CellKey = Vec<u8>;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Keys of the original cells pooled into this one; the first is its own.
    pub keys: Vec<CellKey>,
    pub pop_count: usize,
    pub sample_count: usize,
    pub raw_weight: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeEvent {
    pub from: CellKey,
    pub into: CellKey,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimEvent {
    pub key: CellKey,
    pub raw: f64,
    pub capped: f64,
}

/// How one covariate is categorised.
#[derive(Debug, Clone, PartialEq)]
pub enum Categorizer {
    Binary,
    /// Cut at sample tertiles: `v <= c1 → 0`, `v <= c2 → 1`, else 2.
    Tertiles(f64, f64),
}

impl Categorizer {
    fn code(&self, v: f64) -> u8 {
        match *self {
            Categorizer::Binary => u8::from(v != 0.0),
            Categorizer::Tertiles(c1, c2) => {
                if v <= c1 {
                    0
                } else if v <= c2 {
                    1
                } else {
                    2
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellTable {
    pub columns: Vec<String>,
    pub categorizers: Vec<Categorizer>,
    pub cells: Vec<Cell>,
    pub merge_log: Vec<MergeEvent>,
    pub trim_log: Vec<TrimEvent>,
    lookup: BTreeMap<CellKey, usize>,
}

fn baseline_columns(panel: &Panel, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    columns
        .iter()
        .map(|c| {
            panel
                .baseline_column(c)
                .ok_or_else(|| Error::Schema(format!("baseline covariate {c:?} not found")))
        })
        .collect()
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

impl CellTable {
    pub fn build(
        population: &Panel,
        cohort: &CohortFrame,
        columns: &[String],
        n_min: usize,
        weight_cap: f64,
    ) -> Result<Self> {
        let pop_cols = baseline_columns(population, columns)?;
        let smp_cols = baseline_columns(&cohort.panel, columns)?;
        let categorizers: Vec<Categorizer> = smp_cols
            .iter()
            .map(|col| {
                if col.iter().all(|&v| v == 0.0 || v == 1.0) {
                    Categorizer::Binary
                } else {
                    let mut s = col.clone();
                    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    Categorizer::Tertiles(quantile_sorted(&s, 1.0 / 3.0), quantile_sorted(&s, 2.0 / 3.0))
                }
            })
            .collect();
        let key_of = |cols: &[Vec<f64>], i: usize| -> CellKey {
            categorizers.iter().zip(cols).map(|(c, col)| c.code(col[i])).collect()
        };

        let mut counts: BTreeMap<CellKey, (usize, usize)> = BTreeMap::new();
        for i in 0..population.n_units() {
            counts.entry(key_of(&pop_cols, i)).or_default().0 += 1;
        }
        for i in 0..cohort.n_units() {
            counts.entry(key_of(&smp_cols, i)).or_default().1 += 1;
        }
        let (dense, sparse): (Vec<_>, Vec<_>) = counts.into_iter().partition(|(_, (_, n))| *n >= n_min);
        if dense.is_empty() {
            return Err(Error::Estimation {
                wave: 0,
                message: "cell structure degenerate: every adjustment cell is sparse".into(),
            });
        }
        let mut cells: Vec<Cell> = dense
            .iter()
            .map(|(k, (pop, smp))| Cell {
                keys: vec![k.clone()],
                pop_count: *pop,
                sample_count: *smp,
                raw_weight: 0.0,
                weight: 0.0,
            })
            .collect();
        let mut merge_log = Vec::new();
        for (key, (pop, smp)) in sparse {
            let target = dense
                .iter()
                .enumerate()
                .min_by(|(_, (ka, (_, na))), (_, (kb, (_, nb)))| {
                    hamming(&key, ka)
                        .cmp(&hamming(&key, kb))
                        .then(nb.cmp(na))
                        .then(ka.cmp(kb))
                })
                .map(|(j, _)| j)
                .unwrap();
            cells[target].keys.push(key.clone());
            cells[target].pop_count += pop;
            cells[target].sample_count += smp;
            merge_log.push(MergeEvent {
                from: key,
                into: dense[target].0.clone(),
                sample_count: smp,
            });
        }
        let mut trim_log = Vec::new();
        let mut lookup = BTreeMap::new();
        for (j, c) in cells.iter_mut().enumerate() {
            c.raw_weight = c.pop_count as f64 / c.sample_count as f64;
            c.weight = c.raw_weight.min(weight_cap);
            if c.raw_weight > weight_cap {
                trim_log.push(TrimEvent {
                    key: c.keys[0].clone(),
                    raw: c.raw_weight,
                    capped: c.weight,
                });
            }
            for k in &c.keys {
                lookup.insert(k.clone(), j);
            }
        }
        Ok(Self {
            columns: columns.to_vec(),
            categorizers,
            cells,
            merge_log,
            trim_log,
            lookup,
        })
    }

    /// Cell index of a baseline covariate vector given in `columns` order.
    pub fn cell_of(&self, values: &[f64]) -> Option<usize> {
        let key: CellKey = self.categorizers.iter().zip(values).map(|(c, &v)| c.code(v)).collect();
        self.lookup.get(&key).copied()
    }

    /// Cell weight of every sampled unit.
    pub fn unit_weights(&self, cohort: &CohortFrame) -> Result<Vec<f64>> {
        let cols = baseline_columns(&cohort.panel, &self.columns)?;
        (0..cohort.n_units())
            .map(|i| {
                let v: Vec<f64> = cols.iter().map(|c| c[i]).collect();
                self.cell_of(&v).map(|j| self.cells[j].weight).ok_or_else(|| {
                    Error::Other(format!("unit {} falls in no adjustment cell", cohort.panel.unit_ids[i]))
                })
            })
            .collect()
    }

    pub fn total_pop(&self) -> usize {
        self.cells.iter().map(|c| c.pop_count).sum()
    }

    pub fn total_sample(&self) -> usize {
        self.cells.iter().map(|c| c.sample_count).sum()
    }
}
