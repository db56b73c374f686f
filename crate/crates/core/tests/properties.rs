mod common;

use common::{random_params, spec};
use matfa::aecm::{estep_responsibilities, estep_row_moments, mstep_row, Responsibilities};
use matfa::matnorm::{log_density, log_density_lowrank, LowRankDiag, MatNormParams, MatrixObservation};
use matfa::model::{count_free_params, ConstraintTriple, ModelPair, ModelSpec, Scale};
use matfa::select::bic_from_count;
use matfa::{fit, rng, DataSet, FitOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, s: &mut rng::Stream) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| s.random_range(lo..hi))
}

fn spd(dim: usize, s: &mut rng::Stream) -> DMatrix<f64> {
    let a = uniform(dim, dim, -1.0, 1.0, s);
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.3
}

/// Log-density of `vec(x)` under `N(vec(m), col ⊗ row)`, by Cholesky of the Kronecker product.
fn vec_mvn(x: &DMatrix<f64>, m: &DMatrix<f64>, row: &DMatrix<f64>, col: &DMatrix<f64>) -> f64 {
    let cov = col.kronecker(row);
    let l = cov.cholesky().unwrap().l();
    let resid = DVector::from_column_slice((x - m).as_slice());
    let u = l.solve_lower_triangular(&resid).unwrap();
    let ln_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (resid.len() as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det + u.norm_squared())
}

fn models() -> impl Strategy<Value = ModelPair> {
    (0..8usize, 0..8usize).prop_map(|(r, c)| ModelPair { row: ConstraintTriple::ALL[r], col: ConstraintTriple::ALL[c] })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_equals_vectorized_normal(seed in any::<u64>(), n in 1usize..5, p in 1usize..5, c in 0.1f64..10.0) {
        let mut s = rng::stream(seed);
        let (row, col) = (spd(n, &mut s), spd(p, &mut s));
        let m = uniform(n, p, -1.0, 1.0, &mut s);
        let x = uniform(n, p, -2.0, 2.0, &mut s);
        let obs = MatrixObservation::new(x.clone()).unwrap();
        let value = log_density(&obs, &MatNormParams::new(m.clone(), row.clone(), col.clone()).unwrap()).unwrap();
        let oracle = vec_mvn(&x, &m, &row, &col);
        prop_assert!(((value - oracle) / oracle).abs() < 1e-8);
        let traded = log_density(&obs, &MatNormParams::new(m, &row * c, &col / c).unwrap()).unwrap();
        prop_assert!((traded - value).abs() < 1e-10);
    }

    #[test]
    fn woodbury_density_equals_dense(seed in any::<u64>(), n in 2usize..7, p in 2usize..7) {
        let mut s = rng::stream(seed);
        let q = s.random_range(1..n);
        let r = s.random_range(1..p);
        let row = LowRankDiag::new(uniform(n, q, -1.0, 1.0, &mut s), DVector::from_fn(n, |_, _| s.random_range(0.2..2.0))).unwrap();
        let col = LowRankDiag::new(uniform(p, r, -1.0, 1.0, &mut s), DVector::from_fn(p, |_, _| s.random_range(0.2..2.0))).unwrap();
        let m = uniform(n, p, -1.0, 1.0, &mut s);
        let obs = MatrixObservation::new(uniform(n, p, -3.0, 3.0, &mut s)).unwrap();
        let fast = log_density_lowrank(&obs, &m, &row, &col).unwrap();
        let dense = log_density(&obs, &MatNormParams::new(m.clone(), row.dense(), col.dense()).unwrap()).unwrap();
        prop_assert!(((fast - dense) / dense).abs() < 1e-8);
    }

    #[test]
    fn relaxing_any_constraint_never_lowers_the_count(
        pair in models(), n in 2usize..30, p in 2usize..30, g in 1usize..6, side in 0usize..2, flag in 0usize..3,
    ) {
        let (q, r) = (1 + n / 3, 1 + p / 4);
        let base = ModelSpec::new(g, q.min(n - 1), r.min(p - 1), pair, n, p).unwrap();
        let mut relaxed = pair;
        let t = if side == 0 { &mut relaxed.row } else { &mut relaxed.col };
        match flag {
            0 => t.shared_loading = false,
            1 => t.shared_scale = false,
            _ => t.isotropic = false,
        }
        let relaxed = ModelSpec::new(g, base.row_rank, base.col_rank, relaxed, n, p).unwrap();
        prop_assert!(count_free_params(&relaxed) >= count_free_params(&base));
    }

    #[test]
    fn bic_strictly_decreases_in_parameter_count(ll in -1e6f64..1e6, k in 0usize..10_000, n_obs in 2usize..100_000) {
        prop_assert!(bic_from_count(ll, k + 1, n_obs) < bic_from_count(ll, k, n_obs));
    }

    #[test]
    fn responsibilities_lie_on_the_simplex(seed in any::<u64>(), pair in models(), g in 1usize..4) {
        let sp = spec(g, 1, 1, &pair.to_string(), 3, 3);
        let params = random_params(&sp, seed);
        let mut s = rng::stream(seed ^ 1);
        let obs: Vec<_> = (0..12).map(|_| MatrixObservation::new(uniform(3, 3, -3.0, 3.0 + g as f64, &mut s)).unwrap()).collect();
        let labels: Vec<Option<usize>> = (0..12).map(|i| (i % 3 == 0).then_some(i % g)).collect();
        let data = DataSet::with_labels(obs, labels.clone()).unwrap();
        let z = estep_responsibilities(&data, &params).unwrap();
        for i in 0..12 {
            let row = z.matrix().row(i);
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            if let Some(k) = labels[i] {
                let indicator = (0..g).all(|c| z.get(i, c) == f64::from(u8::from(c == k)));
                prop_assert!(indicator);
            }
        }
    }

    #[test]
    fn single_component_rules_match_free_counterparts(seed in any::<u64>(), code in 0usize..4) {
        // with G = 1 the shared-loading rules coincide with the unconstrained ones
        let constrained = ConstraintTriple::ALL[code];
        let free = ConstraintTriple { shared_loading: false, ..constrained };
        prop_assume!(constrained.shared_loading);
        let sp = spec(1, 1, 1, &format!("{constrained}-UUU"), 4, 3);
        let params = random_params(&sp, seed);
        let mut s = rng::stream(seed ^ 2);
        let data = DataSet::from_matrices((0..15).map(|_| uniform(4, 3, -2.0, 2.0, &mut s)).collect()).unwrap();
        let resp = Responsibilities::from_matrix(DMatrix::from_element(15, 1, 1.0)).unwrap();
        let m = estep_row_moments(&data, &params).unwrap();
        let a = mstep_row(constrained, &data, &resp, &m, &params).unwrap().side;
        let b = mstep_row(free, &data, &resp, &m, &params).unwrap().side;
        prop_assert_eq!(a.loadings.get(0), b.loadings.get(0));
        prop_assert_eq!(a.scales.get(0), b.scales.get(0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cycles_never_lower_the_likelihood(seed in any::<u64>(), pair in models(), g in 1usize..3) {
        let sp = spec(g, 1, 1, &pair.to_string(), 3, 4);
        let data = common::factor_data(&sp, 20, seed);
        if let Ok(result) = fit(&data, &sp, &FitOptions { seed, max_iter: 60, n_starts: 1, ..Default::default() }) {
            for w in result.loglik_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-6);
            }
            prop_assert!(result.params.rows.loadings.is_shared() == pair.row.shared_loading);
            prop_assert!(result.params.cols.scales.is_shared() == pair.col.shared_scale);
            let isotropic = result.params.rows.scales.iter().all(Scale::is_isotropic);
            prop_assert_eq!(isotropic, pair.row.isotropic);
        }
    }
}
