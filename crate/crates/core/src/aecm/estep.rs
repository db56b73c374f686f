//! Expectation steps: memberships and the latent-factor moments of both sides.

use nalgebra::{DMatrix, DVector};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::matnorm::{log_density_precomputed, LowRankPrecision};
use crate::model::{FactorSide, MixtureParams};

/// Posterior membership probabilities, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    zhat: DMatrix<f64>,
}

impl Responsibilities {
    pub fn from_matrix(zhat: DMatrix<f64>) -> Result<Self> {
        for (i, row) in zhat.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 || row.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidArgument(format!("responsibility row {i} is not on the simplex")));
            }
        }
        Ok(Self { zhat })
    }

    pub(crate) fn from_matrix_unchecked(zhat: DMatrix<f64>) -> Self {
        Self { zhat }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.zhat
    }

    pub fn len(&self) -> usize {
        self.zhat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.zhat.nrows() == 0
    }

    pub fn groups(&self) -> usize {
        self.zhat.ncols()
    }

    pub fn get(&self, i: usize, g: usize) -> f64 {
        self.zhat[(i, g)]
    }

    /// Effective component sizes `N_g`.
    pub fn sizes(&self) -> Vec<f64> {
        (0..self.groups()).map(|g| self.zhat.column(g).sum()).collect()
    }

    /// Maximum a posteriori component per observation (first index on ties).
    pub fn map_labels(&self) -> Vec<usize> {
        self.zhat
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for g in 1..row.len() {
                    if row[g] > row[best] {
                        best = g;
                    }
                }
                best
            })
            .collect()
    }
}

/// Woodbury precisions of `Σ*_g` and `Ψ*_g` for every component.
pub(crate) struct Kernels {
    pub rows: Vec<LowRankPrecision>,
    pub cols: Vec<LowRankPrecision>,
}

pub(crate) fn side_precisions(side: &FactorSide, groups: usize) -> Result<Vec<LowRankPrecision>> {
    let dim = side.dim();
    (0..groups)
        .map(|g| LowRankPrecision::new(side.loadings.get(g), &side.scales.get(g).to_diagonal(dim)))
        .collect()
}

impl Kernels {
    pub fn new(params: &MixtureParams) -> Result<Self> {
        let g = params.groups();
        Ok(Self { rows: side_precisions(&params.rows, g)?, cols: side_precisions(&params.cols, g)? })
    }
}

/// `ln φ(X_i | M_g, Σ*_g, Ψ*_g)` as an `N x G` matrix.
pub fn log_densities(data: &DataSet, params: &MixtureParams) -> Result<DMatrix<f64>> {
    let kernels = Kernels::new(params)?;
    Ok(log_densities_with(data, params, &kernels))
}

pub(crate) fn log_densities_with(data: &DataSet, params: &MixtureParams, kernels: &Kernels) -> DMatrix<f64> {
    let groups = params.groups();
    let mut out = DMatrix::zeros(data.len(), groups);
    for g in 0..groups {
        let mean = &params.means[g];
        for (i, x) in data.observations().iter().enumerate() {
            let resid = x.values() - mean;
            out[(i, g)] = log_density_precomputed(&resid, &kernels.rows[g], &kernels.cols[g]);
        }
    }
    out
}

/// Log-space responsibilities with max-shift, clamping labeled rows to
/// indicators. Also returns the observed log-likelihood (labeled
/// observations contribute `ln π_g + ln φ_ig` of their own component).
pub(crate) fn responsibilities_from_log(
    log_dens: &DMatrix<f64>,
    weights: &[f64],
    labels: &[Option<usize>],
) -> Result<(Responsibilities, f64)> {
    let (n_obs, groups) = log_dens.shape();
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut z = DMatrix::zeros(n_obs, groups);
    let mut loglik = 0.0;
    for i in 0..n_obs {
        if let Some(label) = labels[i] {
            let v = log_w[label] + log_dens[(i, label)];
            if !v.is_finite() {
                return Err(Error::Underflow { observation: i });
            }
            z[(i, label)] = 1.0;
            loglik += v;
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for g in 0..groups {
            max = max.max(log_w[g] + log_dens[(i, g)]);
        }
        if !max.is_finite() {
            return Err(Error::Underflow { observation: i });
        }
        let mut total = 0.0;
        for g in 0..groups {
            let e = (log_w[g] + log_dens[(i, g)] - max).exp();
            z[(i, g)] = e;
            total += e;
        }
        for g in 0..groups {
            z[(i, g)] /= total;
        }
        loglik += max + total.ln();
    }
    Ok((Responsibilities { zhat: z }, loglik))
}

/// Posterior memberships at `params`, labeled observations clamped.
pub fn estep_responsibilities(data: &DataSet, params: &MixtureParams) -> Result<Responsibilities> {
    data.check_labels(params.groups())?;
    let log_dens = log_densities(data, params)?;
    Ok(responsibilities_from_log(&log_dens, &params.weights, data.known_labels())?.0)
}

/// Observed-data log-likelihood (semi-supervised form when labels are present).
pub fn observed_loglik(data: &DataSet, params: &MixtureParams) -> Result<f64> {
    data.check_labels(params.groups())?;
    let log_dens = log_densities(data, params)?;
    Ok(responsibilities_from_log(&log_dens, &params.weights, data.known_labels())?.1)
}

/// Conditional moments of the latent factor matrices for one side.
///
/// Row side: `a[g][i] = W_A⁻¹ Λ'Σ⁻¹ (X_i - M_g)` (`q x p`) and
/// `b[g][i] = p W_A⁻¹ + a Ψ*⁻¹ a'`.
/// Column side: `a[g][i] = (X_i - M_g) Ψ⁻¹ Δ W_B⁻¹` (`n x r`) and
/// `b[g][i] = n W_B⁻¹ + a' Σ*⁻¹ a`.
#[derive(Debug, Clone)]
pub struct SideMoments {
    pub a: Vec<Vec<DMatrix<f64>>>,
    pub b: Vec<Vec<DMatrix<f64>>>,
    pub w: Vec<DMatrix<f64>>,
}

fn w_matrix(side: &FactorSide, g: usize) -> DMatrix<f64> {
    let l = side.loadings.get(g);
    let s = side.scales.get(g);
    let mut scaled = l.clone();
    for j in 0..l.nrows() {
        scaled.row_mut(j).scale_mut(1.0 / s.entry(j));
    }
    let mut w = l.transpose() * scaled;
    for k in 0..w.nrows() {
        w[(k, k)] += 1.0;
    }
    w
}

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| Error::SingularSystem(what.into()))
}

fn inv_diag(side: &FactorSide, g: usize) -> DVector<f64> {
    side.scales.get(g).to_diagonal(side.dim()).map(|v| 1.0 / v)
}

pub fn estep_row_moments(data: &DataSet, params: &MixtureParams) -> Result<SideMoments> {
    let groups = params.groups();
    let p = data.p() as f64;
    let mut out = SideMoments { a: Vec::new(), b: Vec::new(), w: Vec::new() };
    for g in 0..groups {
        let w = w_matrix(&params.rows, g);
        let w_inv = inverse(&w, "W_A")?;
        let col_inv = inverse(&params.col_scale(g), "Ψ*")?;
        let sinv = inv_diag(&params.rows, g);
        let lt_sinv = {
            let mut m = params.rows.loadings.get(g).transpose();
            for j in 0..m.ncols() {
                m.column_mut(j).scale_mut(sinv[j]);
            }
            m
        };
        let map = &w_inv * lt_sinv;
        let (mut a_g, mut b_g) = (Vec::new(), Vec::new());
        for x in data.observations() {
            let a = &map * (x.values() - &params.means[g]);
            let b = &w_inv * p + &a * &col_inv * a.transpose();
            a_g.push(a);
            b_g.push(b);
        }
        out.a.push(a_g);
        out.b.push(b_g);
        out.w.push(w);
    }
    Ok(out)
}

pub fn estep_col_moments(data: &DataSet, params: &MixtureParams) -> Result<SideMoments> {
    let groups = params.groups();
    let n = data.n() as f64;
    let mut out = SideMoments { a: Vec::new(), b: Vec::new(), w: Vec::new() };
    for g in 0..groups {
        let w = w_matrix(&params.cols, g);
        let w_inv = inverse(&w, "W_B")?;
        let row_inv = inverse(&params.row_scale(g), "Σ*")?;
        let pinv = inv_diag(&params.cols, g);
        let mut psi_delta = params.cols.loadings.get(g).clone();
        for j in 0..psi_delta.nrows() {
            psi_delta.row_mut(j).scale_mut(pinv[j]);
        }
        let map = psi_delta * &w_inv;
        let (mut a_g, mut b_g) = (Vec::new(), Vec::new());
        for x in data.observations() {
            let a = (x.values() - &params.means[g]) * &map;
            let b = &w_inv * n + a.transpose() * &row_inv * &a;
            a_g.push(a);
            b_g.push(b);
        }
        out.a.push(a_g);
        out.b.push(b_g);
        out.w.push(w);
    }
    Ok(out)
}
