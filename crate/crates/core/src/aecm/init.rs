use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::estep::Responsibilities;
use super::mstep::{weighted_mean, SCALE_FLOOR};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::model::{FactorSide, MixtureParams, ModelSpec, Scale, Slot};
use crate::rng;

const INIT_ATTEMPTS: u64 = 10;

/// Soft uniform random start, instantiated as the unconstrained model.
///
/// Unlabeled rows of `ẑ` are `G` independent uniforms normalized to the
/// simplex; labeled rows are indicators. Means and diagonal scales follow
/// from `ẑ`, and loading entries are uniform on `[-1, 1]`. Callers project
/// onto the target constraint structure with [`FactorSide::conform`].
pub fn initialize(data: &DataSet, spec: &ModelSpec, seed: u64) -> Result<(MixtureParams, Responsibilities)> {
    check_dims(data, spec)?;
    data.check_labels(spec.groups)?;
    let min_size = min_component_size(spec);
    let mut last = None;
    for attempt in 0..INIT_ATTEMPTS {
        let mut stream = rng::stream(rng::derive_seed(seed, &[attempt]));
        let z = random_memberships(data, spec.groups, &mut stream);
        let resp = Responsibilities::from_matrix_unchecked(z);
        let sizes = resp.sizes();
        if let Some((g, &w)) = sizes.iter().enumerate().find(|(_, &w)| w < min_size) {
            last = Some(Error::DegenerateComponent { component: g, weight: w });
            continue;
        }
        let params = params_from_memberships(data, spec, &resp, &sizes, &mut stream);
        return Ok((params, resp));
    }
    Err(last.expect("at least one attempt"))
}

/// Components need more effective observations than loading columns.
pub(crate) fn min_component_size(spec: &ModelSpec) -> f64 {
    (spec.row_rank.max(spec.col_rank) + 1) as f64
}

pub(crate) fn check_dims(data: &DataSet, spec: &ModelSpec) -> Result<()> {
    if data.n() != spec.n || data.p() != spec.p {
        return Err(Error::Dimension(format!(
            "data are {}x{}, model expects {}x{}",
            data.n(),
            data.p(),
            spec.n,
            spec.p
        )));
    }
    Ok(())
}

fn random_memberships(data: &DataSet, groups: usize, stream: &mut rng::Stream) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(data.len(), groups);
    for (i, label) in data.known_labels().iter().enumerate() {
        // draw for every row so labeled rows do not shift the stream
        let draws: Vec<f64> = (0..groups).map(|_| stream.random::<f64>()).collect();
        match label {
            Some(l) => z[(i, *l)] = 1.0,
            None => {
                let total: f64 = draws.iter().sum();
                for g in 0..groups {
                    z[(i, g)] = draws[g] / total;
                }
            }
        }
    }
    z
}

fn params_from_memberships(
    data: &DataSet,
    spec: &ModelSpec,
    resp: &Responsibilities,
    sizes: &[f64],
    stream: &mut rng::Stream,
) -> MixtureParams {
    let (n, p) = (spec.n, spec.p);
    let n_obs = data.len() as f64;
    let mut means = Vec::new();
    let mut row_scales = Vec::new();
    let mut col_scales = Vec::new();
    for g in 0..spec.groups {
        let mean = weighted_mean(data.observations().iter().map(|x| x.values()), resp, g, sizes[g]);
        let mut row_acc = DVector::<f64>::zeros(n);
        let mut col_acc = DVector::<f64>::zeros(p);
        for (i, x) in data.observations().iter().enumerate() {
            let z = resp.get(i, g);
            let d = x.values() - &mean;
            for j in 0..n {
                row_acc[j] += z * d.row(j).norm_squared();
            }
            for k in 0..p {
                col_acc[k] += z * d.column(k).norm_squared();
            }
        }
        row_scales.push(Scale::Diagonal(row_acc.map(|v| (v / (p as f64 * sizes[g])).max(SCALE_FLOOR))));
        col_scales.push(Scale::Diagonal(col_acc.map(|v| (v / (n as f64 * sizes[g])).max(SCALE_FLOOR))));
        means.push(mean);
    }
    let mut uniform = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| stream.random_range(-1.0..=1.0));
    let row_loadings = (0..spec.groups).map(|_| uniform(n, spec.row_rank)).collect();
    let col_loadings = (0..spec.groups).map(|_| uniform(p, spec.col_rank)).collect();
    MixtureParams {
        weights: sizes.iter().map(|s| s / n_obs).collect(),
        means,
        rows: FactorSide { loadings: Slot::PerGroup(row_loadings), scales: Slot::PerGroup(row_scales) },
        cols: FactorSide { loadings: Slot::PerGroup(col_loadings), scales: Slot::PerGroup(col_scales) },
    }
}
