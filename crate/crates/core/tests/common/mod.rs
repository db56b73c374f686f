#![allow(dead_code)]

use matfa::data::DataSet;
use matfa::model::{ConstraintTriple, FactorSide, MixtureParams, ModelSpec, Scale, Slot};
use matfa::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, stream: &mut rng::Stream) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(stream))
}

/// Two loosely separated clusters of `n x p` standard normal matrices.
pub fn clustered_data(n: usize, p: usize, count: usize, shift: f64, seed: u64) -> (DataSet, Vec<usize>) {
    let mut stream = rng::stream(seed);
    let mut labels = Vec::new();
    let mats = (0..count)
        .map(|i| {
            let g = i % 2;
            labels.push(g);
            let mut x = gaussian(n, p, &mut stream);
            if g == 1 {
                x.add_scalar_mut(shift);
            }
            x
        })
        .collect();
    (DataSet::from_matrices(mats).unwrap(), labels)
}

fn random_side(
    model: ConstraintTriple,
    groups: usize,
    dim: usize,
    rank: usize,
    stream: &mut rng::Stream,
) -> FactorSide {
    let mut loading = || DMatrix::from_fn(dim, rank, |_, _| stream.random_range(-1.0..1.0));
    let loadings = if model.shared_loading {
        Slot::Shared(loading())
    } else {
        Slot::PerGroup((0..groups).map(|_| loading()).collect())
    };
    let mut scale = || {
        if model.isotropic {
            Scale::Isotropic(stream.random_range(0.5..2.0))
        } else {
            Scale::Diagonal(DVector::from_fn(dim, |_, _| stream.random_range(0.5..2.0)))
        }
    };
    let scales = if model.shared_scale {
        Slot::Shared(scale())
    } else {
        Slot::PerGroup((0..groups).map(|_| scale()).collect())
    };
    FactorSide { loadings, scales }
}

/// Parameters respecting `spec`, with equal weights and small random means.
pub fn random_params(spec: &ModelSpec, seed: u64) -> MixtureParams {
    let mut stream = rng::stream(seed);
    let g = spec.groups;
    let means = (0..g).map(|k| gaussian(spec.n, spec.p, &mut stream) * 0.3 + DMatrix::from_element(spec.n, spec.p, k as f64)).collect();
    MixtureParams {
        weights: vec![1.0 / g as f64; g],
        means,
        rows: random_side(spec.row_model, g, spec.n, spec.row_rank, &mut stream),
        cols: random_side(spec.col_model, g, spec.p, spec.col_rank, &mut stream),
    }
}

pub fn spec(groups: usize, q: usize, r: usize, models: &str, n: usize, p: usize) -> ModelSpec {
    ModelSpec::new(groups, q, r, models.parse().unwrap(), n, p).unwrap()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Equal-sized samples from each component of `random_params(spec, seed)`, loadings doubled.
pub fn factor_data(spec: &ModelSpec, per_group: usize, seed: u64) -> DataSet {
    let mut params = random_params(spec, seed);
    for side in [&mut params.rows, &mut params.cols] {
        side.loadings = match &side.loadings {
            Slot::Shared(l) => Slot::Shared(l * 2.0),
            Slot::PerGroup(ls) => Slot::PerGroup(ls.iter().map(|l| l * 2.0).collect()),
        };
    }
    let mut obs = Vec::new();
    for g in 0..spec.groups {
        let theta = matfa::MatNormParams::new(params.means[g].clone() * 3.0, params.row_scale(g), params.col_scale(g)).unwrap();
        obs.extend(matfa::matnorm::sample(&theta, per_group, rng::derive_seed(seed, &[g as u64])).unwrap());
    }
    DataSet::new(obs).unwrap()
}
