use ppcm::bart::{fit_continuous, fit_probit, BartConfig, PosteriorEnsemble};
use ppcm::dist::{mean, sample_variance, std_normal_cdf};
use ppcm::rng::stream;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn small(n_trees: usize, burn: usize, keep: usize, seed: u64) -> BartConfig {
    BartConfig::default().with_size(n_trees, burn, keep).with_seed(seed)
}

fn stump_only(keep: usize) -> BartConfig {
    let mut cfg = small(1, 0, keep, 11);
    cfg.tree_prior.alpha = 1e-300;
    cfg.dart_enabled = false;
    cfg
}

#[test]
fn constant_outcome_predicts_constant() {
    let x: Vec<Vec<f64>> = (0..100).map(|_| vec![1.0]).collect();
    let y = vec![5.0; 100];
    let ens = fit_continuous(&x, &y, &small(20, 100, 100, 1)).unwrap();
    for v in [-3.0, 1.0, 7.0] {
        let p = ens.predict_mean(&[v]).unwrap();
        assert!((p - 5.0).abs() < 0.1, "{p}");
    }
}

#[test]
fn recovers_quadratic() {
    let mut rng = stream(2, &[]);
    let n = 500;
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] * r[0] + 0.1 * ppcm::dist::normal(&mut rng)).collect();
    let ens = fit_continuous(&x, &y, &small(50, 300, 300, 3)).unwrap();
    assert!(ens.predict_mean(&[0.0]).unwrap().abs() < 0.15);
    assert!((ens.predict_mean(&[0.9]).unwrap() - 0.81).abs() < 0.15);
}

#[test]
fn single_stump_matches_conjugate_posterior() {
    let mut rng = stream(4, &[]);
    let n = 30;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = (0..n).map(|_| 1.0 + ppcm::dist::normal(&mut rng)).collect();
    let keep = 10_000;
    let mut cfg = stump_only(keep);
    cfg.fixed_sigma = Some(1.0);
    let ens = fit_continuous(&x, &y, &cfg).unwrap();
    let info = &ens.info;
    let sigma2 = (1.0 / info.scale).powi(2);
    let tau2 = info.leaf_sd * info.leaf_sd;
    let s: f64 = y.iter().map(|v| (v - info.center) / info.scale).sum();
    let denom = sigma2 + n as f64 * tau2;
    let post_mean = info.center + info.scale * tau2 * s / denom;
    let post_var = info.scale * info.scale * sigma2 * tau2 / denom;

    let draws: Vec<f64> = ens.draws.iter().map(|f| f.predict(&[0.0]).unwrap()).collect();
    assert!(ens.draws.iter().all(|f| f.trees[0].nodes.len() == 1));
    let m = mean(&draws);
    let v = sample_variance(&draws);
    let se_m = (post_var / keep as f64).sqrt();
    let se_v = post_var * (2.0 / (keep as f64 - 1.0)).sqrt();
    assert!((m - post_mean).abs() < 3.0 * se_m, "{m} vs {post_mean}");
    assert!((v - post_var).abs() < 3.0 * se_v, "{v} vs {post_var}");
}

#[test]
fn sigma_draws_follow_scaled_inverse_chi_squared() {
    let mut rng = stream(5, &[]);
    let n = 40;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = (0..n).map(|_| ppcm::dist::normal(&mut rng)).collect();
    let keep = 10_000;
    let mut cfg = stump_only(keep);
    // Leaf prior collapsed at zero: the trees contribute nothing.
    cfg.leaf_scale_k = 1e9;
    let ens = fit_continuous(&x, &y, &cfg).unwrap();
    let info = &ens.info;
    let ssr: f64 = y.iter().map(|v| ((v - info.center) / info.scale).powi(2)).sum();
    let a = info.sigma_df * info.sigma_lambda + ssr;
    let chi = ChiSquared::new(info.sigma_df + n as f64).unwrap();
    let mut s2: Vec<f64> = ens.draws.iter().map(|f| (f.sigma / info.scale).powi(2)).collect();
    s2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = s2.len() as f64;
    let ks = s2
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let f = 1.0 - chi.cdf(a / s);
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "KS {ks}");
}

#[test]
fn probit_stump_matches_exact_posterior() {
    let n = 50;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let r: Vec<bool> = (0..n).map(|i| i % 5 < 2).collect();
    let cfg = stump_only(20_000);
    let ens = fit_probit(&x, &r, &cfg).unwrap();
    let offset = ens.info.center;
    let tau = ens.info.leaf_sd;
    let n1 = r.iter().filter(|&&v| v).count() as f64;
    let n0 = n as f64 - n1;
    // Quadrature over the leaf value.
    let (mut z, mut zm) = (0.0, 0.0);
    let h = 1e-4;
    let mut mu = -8.0 * tau;
    while mu <= 8.0 * tau {
        let p = std_normal_cdf(offset + mu);
        let lw = -0.5 * (mu / tau).powi(2) + n1 * p.ln() + n0 * (1.0 - p).ln();
        let w = lw.exp();
        z += w;
        zm += w * mu;
        mu += h;
    }
    let exact = offset + zm / z;
    let draws: Vec<f64> = ens.draws.iter().map(|f| f.latent(&[0.0])).collect();
    let m = mean(&draws);
    assert!((m - exact).abs() < 0.03, "{m} vs {exact}");
}

#[test]
fn probit_constant_probability() {
    let mut rng = stream(6, &[]);
    let n = 2000;
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random::<f64>()]).collect();
    let r: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
    let ens = fit_probit(&x, &r, &small(50, 200, 200, 7)).unwrap();
    for q in [[-0.9, 0.1], [0.0, 0.5], [0.9, 0.9]] {
        let p = ens.predict_mean(&q).unwrap();
        assert!((0.42..=0.58).contains(&p), "{p}");
    }
}

#[test]
fn probit_separable() {
    let mut rng = stream(8, &[]);
    let n = 2000;
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let r: Vec<bool> = x.iter().map(|v| v[0] > 0.0).collect();
    let ens = fit_probit(&x, &r, &small(50, 200, 200, 9)).unwrap();
    assert!(ens.predict_mean(&[0.8]).unwrap() >= 0.9);
    assert!(ens.predict_mean(&[-0.8]).unwrap() <= 0.1);
}

#[test]
fn single_class_is_degenerate() {
    let x = vec![vec![0.0], vec![1.0]];
    let err = fit_probit(&x, &[true, true], &small(5, 1, 1, 0)).unwrap_err();
    assert!(matches!(err, ppcm::Error::DegenerateOutcome(_)));
}

#[test]
fn zero_keep_is_config_error() {
    let x = vec![vec![0.0], vec![1.0]];
    let err = fit_continuous(&x, &[0.0, 1.0], &small(5, 1, 0, 0)).unwrap_err();
    assert!(matches!(err, ppcm::Error::Config(_)));
}

fn check_tree_invariants(ens: &PosteriorEnsemble, x: &[Vec<f64>]) {
    for f in &ens.draws {
        assert!((f.split_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for t in &f.trees {
            assert_eq!(t.n_leaves(), t.n_internal() + 1);
            let mut hits = vec![0usize; t.nodes.len()];
            for row in x {
                hits[t.leaf_index(row)] += 1;
            }
            for (k, node) in t.nodes.iter().enumerate() {
                if node.is_leaf() {
                    assert!(hits[k] > 0, "empty leaf cell");
                }
            }
        }
    }
}

#[test]
fn fits_are_reproducible_and_keep_tree_invariants() {
    let mut rng = stream(10, &[]);
    let n = 200;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(0.0..1.0), f64::from(rng.random_range(0..3u8))])
        .collect();
    let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + r[1] + 0.3 * ppcm::dist::normal(&mut rng)).collect();
    let cfg = small(20, 50, 50, 12);
    let a = fit_continuous(&x, &y, &cfg).unwrap();
    let b = fit_continuous(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
    check_tree_invariants(&a, &x);
    let r: Vec<bool> = y.iter().map(|v| *v > 1.5).collect();
    let p = fit_probit(&x, &r, &cfg).unwrap();
    check_tree_invariants(&p, &x);
    assert!(a.draws.iter().all(|f| f.sigma > 0.0));
}

#[test]
fn ensemble_json_round_trip() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = (0..20).map(|i| (i % 7) as f64).collect();
    let ens = fit_continuous(&x, &y, &small(5, 10, 5, 1)).unwrap();
    let mut buf = Vec::new();
    ens.write_json(&mut buf).unwrap();
    let back = PosteriorEnsemble::read_json(&buf[..]).unwrap();
    assert_eq!(back.predict_mean(&[3.0]).unwrap(), ens.predict_mean(&[3.0]).unwrap());
}

#[test]
fn sparse_prior_concentrates_on_the_active_predictor() {
    let mut rng = stream(12, &[]);
    let x: Vec<Vec<f64>> = (0..500).map(|_| (0..10).map(|_| rng.random::<f64>()).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] + 0.3 * ppcm::dist::normal(&mut rng)).collect();
    let ens = fit_continuous(&x, &y, &small(30, 300, 300, 13)).unwrap();
    let share = ens.split_proportions();
    assert!(share[0] > 0.5, "{share:?}");
    assert!(share[1..].iter().all(|&s| s < share[0] / 5.0));
}
