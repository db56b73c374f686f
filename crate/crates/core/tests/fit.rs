mod common;

use common::*;
use matfa::aecm::{fit_single, observed_loglik, PreparedData};
use matfa::model::{Scale, Slot};
use matfa::{fit, DataSet, FitOptions, Tolerance};

fn options(seed: u64) -> FitOptions {
    FitOptions { seed, n_starts: 2, ..Default::default() }
}

#[test]
fn likelihood_never_decreases_within_or_across_cycles() {
    let (data, _) = clustered_data(5, 4, 40, 1.5, 1);
    for models in ["UUU-UUU", "CCC-CCC", "CUU-CUC", "UCC-CCU", "CUC-UUC"] {
        let result = fit(&data, &spec(2, 2, 2, models, 5, 4), &options(2)).unwrap();
        let flat: Vec<f64> = result.stage_trace.iter().flatten().copied().collect();
        for w in flat.windows(2) {
            assert!(w[1] >= w[0] - 1e-7 * w[0].abs().max(1.0), "{models}: {} -> {}", w[0], w[1]);
        }
        assert_eq!(result.loglik_trace.len(), result.iterations);
    }
}

#[test]
fn separated_clusters_are_recovered() {
    let (data, labels) = clustered_data(4, 4, 60, 3.0, 3);
    let result = fit(&data, &spec(2, 1, 1, "CCU-CCU", 4, 4), &options(4)).unwrap();
    assert!(result.converged);
    assert!(result.iterations < 200);
    assert!((matfa::metrics::ari(&result.map_labels(), &labels).unwrap() - 1.0).abs() < 1e-12);
    result.params.validate(&result.spec).unwrap();
}

#[test]
fn fits_are_deterministic() {
    let (data, _) = clustered_data(4, 3, 30, 1.0, 5);
    let s = spec(2, 1, 2, "UCU-CUU", 4, 3);
    let a = fit(&data, &s, &options(7)).unwrap();
    let b = fit(&data, &s, &options(7)).unwrap();
    assert_eq!(a.loglik_trace, b.loglik_trace);
    assert_eq!(a.params, b.params);
    assert_eq!(a.bic.to_bits(), b.bic.to_bits());
}

#[test]
fn every_model_keeps_its_structure() {
    let (data, _) = clustered_data(4, 3, 40, 2.0, 6);
    for pair in matfa::model::enumerate_models() {
        let s = matfa::ModelSpec::new(2, 1, 1, pair, 4, 3).unwrap();
        let result = fit(&data, &s, &FitOptions { seed: 1, n_starts: 3, max_iter: 50, ..Default::default() }).unwrap();
        result.params.validate(&s).unwrap();
        assert!(result.bic.is_finite());
    }
}

#[test]
fn known_labels_stay_clamped() {
    let (data, labels) = clustered_data(4, 3, 40, 0.7, 8);
    let known: Vec<Option<usize>> = labels.iter().enumerate().map(|(i, &l)| (i < 20).then_some(l)).collect();
    let data = DataSet::with_labels(data.observations().to_vec(), known).unwrap();
    let result = fit(&data, &spec(2, 1, 1, "UUU-UUU", 4, 3), &options(9)).unwrap();
    for i in 0..20 {
        assert_eq!(result.resp.get(i, labels[i]), 1.0);
    }
    let ll = observed_loglik(&data, &result.params).unwrap();
    assert!((ll - *result.loglik_trace.last().unwrap()).abs() < 1e-9 * ll.abs());
}

#[test]
fn converged_fit_is_a_stationary_point() {
    let s = spec(2, 1, 1, "UUU-UUU", 4, 3);
    let data = factor_data(&s, 150, 10);
    let prepared = PreparedData::new(&data);
    let result = fit_single(&prepared, &s, 3, 20_000, Tolerance::Fixed(1e-11)).unwrap();
    assert!(result.converged);
    let h = 1e-5;
    let ll = |p: &matfa::MixtureParams| observed_loglik(&data, p).unwrap();
    let mut worst: f64 = 0.0;
    for g in 0..2 {
        for (j, k) in [(0, 0), (2, 1), (3, 2)] {
            let mut up = result.params.clone();
            let mut down = result.params.clone();
            up.means[g][(j, k)] += h;
            down.means[g][(j, k)] -= h;
            worst = worst.max(((ll(&up) - ll(&down)) / (2.0 * h)).abs());
        }
        for j in 0..4 {
            let bump = |p: &mut matfa::MixtureParams, d: f64| {
                if let Slot::PerGroup(ls) = &mut p.rows.loadings {
                    ls[g][(j, 0)] += d;
                }
            };
            let (mut up, mut down) = (result.params.clone(), result.params.clone());
            bump(&mut up, h);
            bump(&mut down, -h);
            worst = worst.max(((ll(&up) - ll(&down)) / (2.0 * h)).abs());
        }
        for k in 0..3 {
            let bump = |p: &mut matfa::MixtureParams, d: f64| {
                if let Slot::PerGroup(ss) = &mut p.cols.scales {
                    if let Scale::Diagonal(v) = &mut ss[g] {
                        v[k] += d;
                    }
                }
            };
            let (mut up, mut down) = (result.params.clone(), result.params.clone());
            bump(&mut up, h);
            bump(&mut down, -h);
            worst = worst.max(((ll(&up) - ll(&down)) / (2.0 * h)).abs());
        }
    }
    assert!(worst < 1e-4, "largest partial derivative {worst}");
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let (data, _) = clustered_data(4, 3, 20, 1.0, 11);
    assert!(fit(&data, &spec(2, 1, 1, "UUU-UUU", 3, 4), &options(1)).is_err());
}
