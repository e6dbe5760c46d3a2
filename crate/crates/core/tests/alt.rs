mod common;

use common::{cohort, population};
use ppcm::alt::*;
use ppcm::data::{CohortFrame, Panel, PopulationFrame, WaveSchema};
use ppcm::ppcm::OutcomeModel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Population and cohort over baseline columns `a` and `b`.
fn two_column_frames(pop_ab: &[(f64, f64)], sample: &[usize], y1: &[f64], resp: &[bool]) -> (PopulationFrame, CohortFrame) {
    let schema = WaveSchema::new(vec![vec!["a".into(), "b".into()], vec![]], None).unwrap();
    let n = pop_ab.len();
    let panel = Panel {
        schema,
        unit_ids: (0..n).map(|i| format!("u{i}")).collect(),
        alive: vec![vec![true, true]; n],
        age: vec![vec![None, None]; n],
        covariates: vec![
            pop_ab.iter().map(|&(a, b)| Some(vec![a, b])).collect(),
            vec![Some(vec![]); n],
        ],
    };
    let pop = PopulationFrame::new(panel).unwrap();
    let p = &pop.panel;
    let cpanel = Panel {
        schema: p.schema.clone(),
        unit_ids: sample.iter().map(|&i| p.unit_ids[i].clone()).collect(),
        alive: vec![vec![true, true]; sample.len()],
        age: vec![vec![None, None]; sample.len()],
        covariates: (0..2)
            .map(|t| sample.iter().map(|&i| p.covariates[t][i].clone()).collect())
            .collect(),
    };
    let responded = resp.iter().map(|&r| vec![true, r]).collect();
    let outcome = (0..sample.len())
        .map(|k| vec![Some(0.0), resp[k].then_some(y1[k])])
        .collect();
    (pop, CohortFrame::new(cpanel, responded, outcome).unwrap())
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn balanced_binary_cells_weigh_n_over_n() {
    let pop_ab: Vec<(f64, f64)> = (0..400).map(|i| (f64::from(i % 2 == 0), f64::from(i % 4 < 2))).collect();
    let sample: Vec<usize> = (0..100).collect();
    let (pop, coh) = two_column_frames(&pop_ab, &sample, &[0.0; 100], &[true; 100]);
    let t = CellTable::build(&pop.panel, &coh, &cols(&["a", "b"]), 20, 30.0).unwrap();
    assert_eq!(t.cells.len(), 4);
    for c in &t.cells {
        assert_eq!(c.weight, c.pop_count as f64 / c.sample_count as f64);
        assert_eq!(c.weight, 4.0);
    }
}

#[test]
fn sparse_cell_merges_and_counts_add() {
    // Cells by (a, b): (0,0) n=30, (0,1) n=30, (1,0) n=5, (1,1) n=40.
    let mut pop_ab = Vec::new();
    let mut sample = Vec::new();
    for (key, n_pop, n_smp) in [((0.0, 0.0), 100, 30), ((0.0, 1.0), 100, 30), ((1.0, 0.0), 50, 5), ((1.0, 1.0), 200, 40)] {
        for k in 0..n_pop {
            if k < n_smp {
                sample.push(pop_ab.len());
            }
            pop_ab.push(key);
        }
    }
    let n = sample.len();
    let (pop, coh) = two_column_frames(&pop_ab, &sample, &vec![0.0; n], &vec![true; n]);
    let t = CellTable::build(&pop.panel, &coh, &cols(&["a", "b"]), 20, 30.0).unwrap();
    assert_eq!(t.cells.len(), 3);
    assert_eq!(t.merge_log.len(), 1);
    let m = &t.merge_log[0];
    assert_eq!(m.from, vec![1, 0]);
    // Distance one to both (0,0) and (1,1); the larger cell wins.
    assert_eq!(m.into, vec![1, 1]);
    let merged = &t.cells[t.cell_of(&[1.0, 0.0]).unwrap()];
    assert_eq!((merged.pop_count, merged.sample_count), (250, 45));
    assert_eq!((t.total_pop(), t.total_sample()), (450, 105));
}

#[test]
fn heavy_cell_is_trimmed_to_cap() {
    // (1,*) cell: 900 / 20 = 45 -> 30.
    let mut pop_ab = Vec::new();
    let mut sample = Vec::new();
    for (key, n_pop, n_smp) in [((0.0, 0.0), 100, 50), ((1.0, 0.0), 900, 20)] {
        for k in 0..n_pop {
            if k < n_smp {
                sample.push(pop_ab.len());
            }
            pop_ab.push(key);
        }
    }
    let n = sample.len();
    let (pop, coh) = two_column_frames(&pop_ab, &sample, &vec![0.0; n], &vec![true; n]);
    let t = CellTable::build(&pop.panel, &coh, &cols(&["a"]), DEFAULT_MIN_CELL, DEFAULT_WEIGHT_CAP).unwrap();
    let heavy = &t.cells[t.cell_of(&[1.0]).unwrap()];
    assert_eq!(heavy.raw_weight, 45.0);
    assert_eq!(heavy.weight, 30.0);
    assert_eq!(t.trim_log.len(), 1);
    assert_eq!((t.trim_log[0].raw, t.trim_log[0].capped), (45.0, 30.0));
}

#[test]
fn all_sparse_cells_are_degenerate() {
    let pop_ab: Vec<(f64, f64)> = (0..40).map(|i| (f64::from(i % 2 == 0), 0.0)).collect();
    let sample: Vec<usize> = (0..10).collect();
    let (pop, coh) = two_column_frames(&pop_ab, &sample, &[0.0; 10], &[true; 10]);
    let err = CellTable::build(&pop.panel, &coh, &cols(&["a"]), 20, 30.0).unwrap_err();
    assert!(err.to_string().contains("degenerate"));
}

proptest! {
    #[test]
    fn merging_conserves_counts_and_trimming_only_lowers(
        pop_keys in proptest::collection::vec((0u8..2, 0.0f64..1.0), 60..300),
        frac in 0.1f64..0.9,
        cap in 1.0f64..40.0,
    ) {
        let pop_ab: Vec<(f64, f64)> = pop_keys.iter().map(|&(a, b)| (f64::from(a), b)).collect();
        let sample: Vec<usize> = (0..pop_ab.len()).filter(|&i| ((i as f64 * 0.618) % 1.0) < frac).collect();
        prop_assume!(sample.len() >= 20);
        let n = sample.len();
        let (pop, coh) = two_column_frames(&pop_ab, &sample, &vec![0.0; n], &vec![true; n]);
        match CellTable::build(&pop.panel, &coh, &cols(&["a", "b"]), 10, cap) {
            Ok(t) => {
                prop_assert_eq!(t.total_pop(), pop_ab.len());
                prop_assert_eq!(t.total_sample(), n);
                for c in &t.cells {
                    prop_assert!(c.weight <= c.raw_weight && c.weight <= cap);
                }
            }
            Err(e) => prop_assert!(e.to_string().contains("degenerate")),
        }
    }
}

#[test]
fn weighted_mean_by_hand() {
    assert_eq!(weighted_mean_estimate(&[0.0, 4.0], &[1.0, 3.0]).point, 3.0);
}

#[test]
fn ht_with_uniform_weights_and_full_response_is_the_sample_mean() {
    let pop_ab: Vec<(f64, f64)> = (0..200).map(|i| (f64::from(i % 2 == 0), 0.0)).collect();
    let sample: Vec<usize> = (0..80).collect();
    let y1: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
    let (pop, coh) = two_column_frames(&pop_ab, &sample, &y1, &[true; 80]);
    let cells = CellTable::build(&pop.panel, &coh, &cols(&["a"]), 20, 30.0).unwrap();
    let models = ParticipationModels::fit(&coh).unwrap();
    assert!(matches!(models.waves[1], Participation::Always));
    let ht = ht_estimate(&coh, &cells, &models, 1).unwrap();
    let naive = sample_estimate(&coh, 1).unwrap();
    assert!((ht.point - naive.point).abs() < 1e-14);
}

#[test]
fn ht_is_design_unbiased_under_stratified_sampling() {
    // Two strata of 60 and 140 units; SRS of 20 and 20 within strata.
    let pop_ab: Vec<(f64, f64)> = (0..200).map(|i| (f64::from(i >= 60), 0.0)).collect();
    let y: Vec<f64> = (0..200).map(|i| if i < 60 { 1.0 } else { 5.0 } + (i as f64 * 0.91).cos()).collect();
    let truth = y.iter().sum::<f64>() / 200.0;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let reps = 10_000;
    let mut ests = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut sample = Vec::new();
        for (lo, hi) in [(0usize, 60usize), (60, 200)] {
            let mut idx: Vec<usize> = (lo..hi).collect();
            for k in 0..20 {
                let j = rng.random_range(k..idx.len());
                idx.swap(k, j);
            }
            sample.extend_from_slice(&idx[..20]);
        }
        let ys: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
        let (pop, coh) = two_column_frames(&pop_ab, &sample, &ys, &[true; 40]);
        let cells = CellTable::build(&pop.panel, &coh, &cols(&["a"]), 20, 30.0).unwrap();
        ests.push(ht_estimate(&coh, &cells, &ParticipationModels::full_response(2), 1).unwrap().point);
    }
    let m = ests.iter().sum::<f64>() / reps as f64;
    let sd = (ests.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    assert!((m - truth).abs() < 3.0 * sd / (reps as f64).sqrt(), "{m} vs {truth}");
}

#[test]
fn greg_is_prediction_mean_plus_correction() {
    let n = 300;
    let xs = common::grid(n);
    let pop = population(&xs, &vec![true; n], None);
    let idx: Vec<usize> = (0..n).step_by(3).collect();
    let resp: Vec<bool> = idx.iter().map(|&i| i % 4 != 0).collect();
    let y0: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let noisy: Vec<f64> = idx.iter().map(|&i| 1.0 + 2.0 * xs[i] + (i as f64).sin() * 0.3).collect();
    let coh = cohort(&pop, &idx, &resp, &y0, &noisy);
    let cells = CellTable::build(&pop.panel, &coh, &cols(&["x"]), 20, 30.0).unwrap();
    let models = ParticipationModels::full_response(2);
    let g = greg_estimate(&pop.panel, &coh, &cells, &models, 1).unwrap();
    assert_eq!(g.estimate.point, g.prediction_mean + g.correction);

    // Zero residuals: the correction vanishes and GREG is the model prediction mean.
    let exact: Vec<f64> = idx.iter().map(|&i| 1.0 + 2.0 * xs[i]).collect();
    let coh = cohort(&pop, &idx, &resp, &y0, &exact);
    let g = greg_estimate(&pop.panel, &coh, &cells, &models, 1).unwrap();
    let oracle = xs.iter().map(|x| 1.0 + 2.0 * x).sum::<f64>() / n as f64;
    assert!(g.correction.abs() < 1e-12);
    assert!((g.estimate.point - oracle).abs() < 1e-12);
}

#[test]
fn greg_names_collinear_columns() {
    let schema = WaveSchema::new(vec![vec!["a".into(), "b".into()], vec![]], None).unwrap();
    let n = 60;
    let panel = Panel {
        schema,
        unit_ids: (0..n).map(|i| i.to_string()).collect(),
        alive: vec![vec![true, true]; n],
        age: vec![vec![None, None]; n],
        covariates: vec![
            (0..n).map(|i| Some(vec![i as f64, 2.0 * i as f64])).collect(),
            vec![Some(vec![]); n],
        ],
    };
    let pop = PopulationFrame::new(panel.clone()).unwrap();
    let coh = CohortFrame::new(
        panel,
        vec![vec![true, true]; n],
        (0..n).map(|i| vec![Some(0.0), Some(i as f64)]).collect(),
    )
    .unwrap();
    let cells = CellTable::build(&pop.panel, &coh, &cols(&["a"]), 20, 30.0).unwrap();
    let err = greg_estimate(&pop.panel, &coh, &cells, &ParticipationModels::full_response(2), 1).unwrap_err();
    assert!(err.to_string().contains('b'), "{err}");
}

fn posterior_mean(m: &dyn OutcomeModel, x: &[f64]) -> f64 {
    (0..m.n_draws()).map(|d| m.mean(d, x)).sum::<f64>() / m.n_draws() as f64
}

#[test]
fn mrp_without_covariates_is_the_sample_mean() {
    let y: Vec<f64> = (0..200).map(|i| 2.0 + (i as f64 * 0.7).sin()).collect();
    let x = vec![Vec::new(); 200];
    let post = fit_mrp(&x, &y, &[], &MrpConfig::default(), 3).unwrap();
    let mean = y.iter().sum::<f64>() / 200.0;
    assert!((posterior_mean(&post, &[]) - mean).abs() < 0.01);
}

#[test]
fn mrp_with_huge_group_variance_matches_fixed_effects() {
    // Balanced: four levels of z, 50 units each.
    let z: Vec<f64> = (0..200).map(|i| f64::from(1 + (i % 4) as u8)).collect();
    let effect = [3.0, -1.0, 4.0, 0.5];
    let y: Vec<f64> = (0..200).map(|i| 10.0 + effect[i % 4] + 0.5 * (i as f64 * 1.3).sin()).collect();
    let x: Vec<Vec<f64>> = z.iter().map(|&v| vec![v]).collect();
    let cfg = MrpConfig {
        fixed_re_var: Some(1e6),
        ..MrpConfig::default()
    };
    let post = fit_mrp(&x, &y, &["z".into()], &cfg, 8).unwrap();
    for level in 0..4 {
        let ys: Vec<f64> = (0..200).filter(|i| i % 4 == level).map(|i| y[i]).collect();
        let group_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let fitted = posterior_mean(&post, &[f64::from(1 + level as u8)]);
        assert!(((fitted - group_mean) / group_mean).abs() < 0.01, "level {level}: {fitted} vs {group_mean}");
    }
}

#[test]
fn mrp_grouping_needs_two_levels() {
    let x: Vec<Vec<f64>> = vec![vec![2.5]; 30];
    let y = vec![1.0; 30];
    assert!(matches!(fit_mrp(&x, &y, &["z".into()], &MrpConfig::default(), 0), Err(ppcm::Error::Config(_))));
}
