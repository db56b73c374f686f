//! Conditional maximization steps.
//!
//! Both sides share one update routine. The column step on `{X_i}` is the row
//! step on `{X_i'}` with `(n, q, Λ, Σ) <-> (p, r, Δ, Ψ)`, so everything below
//! is written for the row side: `d` is the side dimension, `k` the loading
//! rank and `m` the opposite dimension.

use nalgebra::{DMatrix, DVector};

use super::estep::{Responsibilities, SideMoments};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::matnorm::LowRankPrecision;
use crate::model::{ConstraintTriple, FactorSide, MixtureParams, Scale, Slot};

/// Lower bound applied to every updated diagonal scale entry.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Per-component sufficient statistics of one side's CM-step.
///
/// For the row side, with `D = X_i - M_g`:
/// `cross[g] = Σ_i z_ig D Ψ*⁻¹ a_ig'`, `gram[g] = Σ_i z_ig b_ig` and
/// `scatter[g] = diag Σ_i z_ig D Ψ*⁻¹ D'`.
#[derive(Debug, Clone)]
pub struct SideStats {
    pub sizes: Vec<f64>,
    pub cross: Vec<DMatrix<f64>>,
    pub gram: Vec<DMatrix<f64>>,
    pub scatter: Vec<DVector<f64>>,
    pub other_dim: usize,
}

impl SideStats {
    pub fn groups(&self) -> usize {
        self.sizes.len()
    }

    /// Aggregates explicit per-observation row moments.
    pub fn from_row_moments(
        data: &DataSet,
        params: &MixtureParams,
        resp: &Responsibilities,
        moments: &SideMoments,
    ) -> Result<Self> {
        let groups = params.groups();
        let mut stats = Self::empty(groups, data.n(), params.rows.rank(), data.p());
        for g in 0..groups {
            let col_inv = params
                .col_scale(g)
                .try_inverse()
                .ok_or_else(|| Error::SingularSystem("Ψ*".into()))?;
            for (i, x) in data.observations().iter().enumerate() {
                let z = resp.get(i, g);
                let d = x.values() - &params.means[g];
                let whitened = &d * &col_inv;
                stats.sizes[g] += z;
                stats.cross[g] += &whitened * moments.a[g][i].transpose() * z;
                stats.gram[g] += &moments.b[g][i] * z;
                stats.scatter[g] += (&whitened * d.transpose()).diagonal() * z;
            }
        }
        Ok(stats)
    }

    /// Aggregates explicit per-observation column moments.
    pub fn from_col_moments(
        data: &DataSet,
        params: &MixtureParams,
        resp: &Responsibilities,
        moments: &SideMoments,
    ) -> Result<Self> {
        let groups = params.groups();
        let mut stats = Self::empty(groups, data.p(), params.cols.rank(), data.n());
        for g in 0..groups {
            let row_inv = params
                .row_scale(g)
                .try_inverse()
                .ok_or_else(|| Error::SingularSystem("Σ*".into()))?;
            for (i, x) in data.observations().iter().enumerate() {
                let z = resp.get(i, g);
                let d = x.values() - &params.means[g];
                let whitened = d.transpose() * &row_inv;
                stats.sizes[g] += z;
                stats.cross[g] += &whitened * &moments.a[g][i] * z;
                stats.gram[g] += &moments.b[g][i] * z;
                stats.scatter[g] += (&whitened * &d).diagonal() * z;
            }
        }
        Ok(stats)
    }

    fn empty(groups: usize, dim: usize, rank: usize, other_dim: usize) -> Self {
        Self {
            sizes: vec![0.0; groups],
            cross: vec![DMatrix::zeros(dim, rank); groups],
            gram: vec![DMatrix::zeros(rank, rank); groups],
            scatter: vec![DVector::zeros(dim); groups],
            other_dim,
        }
    }
}

/// Builds [`SideStats`] from the whitened scatter `T_g = Σ_i z_ig D Ψ*⁻¹ D'`.
///
/// With `K = W⁻¹Λ'Σ⁻¹` the moments are `a = K D` and
/// `b = m W⁻¹ + K D Ψ*⁻¹ D' K'`, so `cross = T K'`,
/// `gram = m N_g W⁻¹ + K T K'` and `scatter = diag T`. This needs one
/// `d x d` accumulation per component instead of per-observation moments.
///
/// `obs`/`means` are oriented for the side being updated (transposed for the
/// column side), `obs_t`/`means_t` are their transposes.
pub(crate) fn side_stats_from_scatter(
    obs: &[DMatrix<f64>],
    obs_t: &[DMatrix<f64>],
    means: &[DMatrix<f64>],
    means_t: &[DMatrix<f64>],
    this_side: &[LowRankPrecision],
    other_side: &[LowRankPrecision],
    resp: &Responsibilities,
) -> SideStats {
    let groups = means.len();
    let (dim, other_dim) = means[0].shape();
    let rank = this_side[0].rank();
    let mut stats = SideStats::empty(groups, dim, rank, other_dim);
    for g in 0..groups {
        let mut scatter = DMatrix::<f64>::zeros(dim, dim);
        let mut size = 0.0;
        for i in 0..obs.len() {
            let z = resp.get(i, g);
            size += z;
            if z == 0.0 {
                continue;
            }
            let d = &obs[i] - &means[g];
            let dt = &obs_t[i] - &means_t[g];
            let whitened_t = other_side[g].apply_left(&dt);
            scatter.gemm(z, &d, &whitened_t, 1.0);
        }
        let k = this_side[g].projector();
        let cross = &scatter * k.transpose();
        let gram = this_side[g].w_inv() * (other_dim as f64 * size) + k * &cross;
        stats.sizes[g] = size;
        stats.scatter[g] = scatter.diagonal();
        stats.cross[g] = cross;
        stats.gram[g] = gram;
    }
    stats
}

/// Result of a side update.
#[derive(Debug, Clone)]
pub struct SideUpdate {
    pub side: FactorSide,
    /// Number of scale entries raised to [`SCALE_FLOOR`].
    pub floored: usize,
}

/// `Λ = cross · gram⁻¹`, solved through the Cholesky factor of `gram`.
fn solve_loading(cross: &DMatrix<f64>, gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("loading normal equations".into()))?;
    Ok(chol.solve(&cross.transpose()).transpose())
}

fn weighted_sum(mats: &[DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (m, &w) in mats.iter().zip(weights) {
        acc += m * w;
    }
    acc
}

/// Closed-form CM update of one side under `model`.
///
/// Loadings are updated first (using the current scales where the normal
/// equations couple them), then scales are evaluated at the new loadings from
/// `v_g = diag(scatter_g - 2 Λ_g cross_g' + Λ_g gram_g Λ_g')`.
pub fn update_side(model: ConstraintTriple, stats: &SideStats, current: &FactorSide) -> Result<SideUpdate> {
    let groups = stats.groups();
    let dim = stats.scatter[0].len();
    let m = stats.other_dim as f64;
    let ones = vec![1.0; groups];

    let loadings = match (model.shared_loading, model.shared_scale, model.isotropic) {
        (false, _, _) => Slot::PerGroup(
            (0..groups)
                .map(|g| solve_loading(&stats.cross[g], &stats.gram[g]))
                .collect::<Result<_>>()?,
        ),
        (true, true, _) => {
            Slot::Shared(solve_loading(&weighted_sum(&stats.cross, &ones), &weighted_sum(&stats.gram, &ones))?)
        }
        (true, false, true) => {
            // weights σ_1/σ_g, so that a single component reduces to the unweighted system
            let base = current.scales.get(0).entry(0);
            let w: Vec<f64> = (0..groups).map(|g| base / current.scales.get(g).entry(0)).collect();
            Slot::Shared(solve_loading(&weighted_sum(&stats.cross, &w), &weighted_sum(&stats.gram, &w))?)
        }
        (true, false, false) => {
            // row by row: Λ_(j) = (Σ_g R_g(j)/σ_gj)(Σ_g B_g/σ_gj)⁻¹
            let rank = stats.gram[0].nrows();
            let mut lambda = DMatrix::zeros(dim, rank);
            for j in 0..dim {
                let base = current.scales.get(0).entry(j);
                let w: Vec<f64> = (0..groups).map(|g| base / current.scales.get(g).entry(j)).collect();
                let gram = weighted_sum(&stats.gram, &w);
                let mut cross = DMatrix::zeros(1, rank);
                for g in 0..groups {
                    cross += stats.cross[g].rows(j, 1) * w[g];
                }
                lambda.set_row(j, &solve_loading(&cross, &gram)?.row(0));
            }
            Slot::Shared(lambda)
        }
    };

    let residual: Vec<DVector<f64>> = (0..groups)
        .map(|g| {
            let l = loadings.get(g);
            let lb = l * &stats.gram[g];
            DVector::from_fn(dim, |j, _| {
                let mut v = stats.scatter[g][j];
                for c in 0..l.ncols() {
                    v += l[(j, c)] * (lb[(j, c)] - 2.0 * stats.cross[g][(j, c)]);
                }
                v
            })
        })
        .collect();

    let mut floored = 0;
    let mut floor = |v: f64| {
        if v < SCALE_FLOOR || !v.is_finite() {
            floored += 1;
            SCALE_FLOOR
        } else {
            v
        }
    };
    let total_size: f64 = stats.sizes.iter().sum();
    let scales = match (model.shared_scale, model.isotropic) {
        (false, false) => Slot::PerGroup(
            (0..groups)
                .map(|g| Scale::Diagonal(residual[g].map(|v| floor(v / (stats.sizes[g] * m)))))
                .collect(),
        ),
        (false, true) => Slot::PerGroup(
            (0..groups)
                .map(|g| Scale::Isotropic(floor(residual[g].sum() / (stats.sizes[g] * dim as f64 * m))))
                .collect(),
        ),
        (true, false) => {
            let mut acc = DVector::zeros(dim);
            for r in &residual {
                acc += r;
            }
            Slot::Shared(Scale::Diagonal(acc.map(|v| floor(v / (total_size * m)))))
        }
        (true, true) => {
            let acc: f64 = residual.iter().map(|r| r.sum()).sum();
            Slot::Shared(Scale::Isotropic(floor(acc / (total_size * dim as f64 * m))))
        }
    };
    Ok(SideUpdate { side: FactorSide { loadings, scales }, floored })
}

/// `π_g = N_g / N` and `M_g = Σ_i z_ig X_i / N_g`.
pub fn mstep_mean(data: &DataSet, resp: &Responsibilities) -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
    let n_obs = data.len() as f64;
    let sizes = resp.sizes();
    let mut means = Vec::with_capacity(sizes.len());
    for (g, &size) in sizes.iter().enumerate() {
        if size < 1e-8 * n_obs {
            return Err(Error::DegenerateComponent { component: g, weight: size });
        }
        means.push(weighted_mean(data.observations().iter().map(|x| x.values()), resp, g, size));
    }
    Ok((sizes.iter().map(|s| s / n_obs).collect(), means))
}

pub(crate) fn weighted_mean<'a>(
    obs: impl Iterator<Item = &'a DMatrix<f64>>,
    resp: &Responsibilities,
    g: usize,
    size: f64,
) -> DMatrix<f64> {
    let mut acc: Option<DMatrix<f64>> = None;
    for (i, x) in obs.enumerate() {
        let z = resp.get(i, g);
        match acc.as_mut() {
            Some(a) => a.zip_apply(x, |ai, xi| *ai += z * xi),
            None => acc = Some(x * z),
        }
    }
    acc.expect("non-empty data") / size
}

/// Row-side CM-step from explicit moments.
pub fn mstep_row(
    model: ConstraintTriple,
    data: &DataSet,
    resp: &Responsibilities,
    moments: &SideMoments,
    params: &MixtureParams,
) -> Result<SideUpdate> {
    let stats = SideStats::from_row_moments(data, params, resp, moments)?;
    update_side(model, &stats, &params.rows)
}

/// Column-side CM-step from explicit moments.
pub fn mstep_col(
    model: ConstraintTriple,
    data: &DataSet,
    resp: &Responsibilities,
    moments: &SideMoments,
    params: &MixtureParams,
) -> Result<SideUpdate> {
    let stats = SideStats::from_col_moments(data, params, resp, moments)?;
    update_side(model, &stats, &params.cols)
}
