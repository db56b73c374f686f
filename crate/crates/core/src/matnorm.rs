//! Matrix variate normal kernels.
//!
//! `X ~ N_{n x p}(M, Σ*, Ψ*)` has log-density
//! `-(np/2) ln 2π - (p/2) ln|Σ*| - (n/2) ln|Ψ*| - ½ tr(Σ*⁻¹ (X-M) Ψ*⁻¹ (X-M)')`
//! and is equivalent to `vec(X) ~ N_{np}(vec(M), Ψ* ⊗ Σ*)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One observed `n x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixObservation(DMatrix<f64>);

impl MatrixObservation {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument("observation must be at least 1x1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("observation has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl std::ops::Deref for MatrixObservation {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

fn chol_ln_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Location and separable scales of a matrix normal, factorized on construction.
#[derive(Debug, Clone)]
pub struct MatNormParams {
    mean: DMatrix<f64>,
    row_scale: DMatrix<f64>,
    col_scale: DMatrix<f64>,
    row_chol: Cholesky<f64, Dyn>,
    col_chol: Cholesky<f64, Dyn>,
}

impl MatNormParams {
    pub fn new(mean: DMatrix<f64>, row_scale: DMatrix<f64>, col_scale: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&row_scale, "row scale")?;
        check_symmetric(&col_scale, "column scale")?;
        if row_scale.nrows() != mean.nrows() || col_scale.nrows() != mean.ncols() {
            return Err(Error::Dimension(format!(
                "mean is {}x{}, scales are {}x{} and {}x{}",
                mean.nrows(),
                mean.ncols(),
                row_scale.nrows(),
                row_scale.ncols(),
                col_scale.nrows(),
                col_scale.ncols()
            )));
        }
        let row_chol = cholesky(&row_scale, "row scale")?;
        let col_chol = cholesky(&col_scale, "column scale")?;
        Ok(Self { mean, row_scale, col_scale, row_chol, col_chol })
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn row_scale(&self) -> &DMatrix<f64> {
        &self.row_scale
    }

    pub fn col_scale(&self) -> &DMatrix<f64> {
        &self.col_scale
    }

    pub fn n(&self) -> usize {
        self.mean.nrows()
    }

    pub fn p(&self) -> usize {
        self.mean.ncols()
    }
}

fn check_obs_dims(x: &DMatrix<f64>, n: usize, p: usize) -> Result<()> {
    if x.nrows() != n || x.ncols() != p {
        return Err(Error::Dimension(format!(
            "observation is {}x{}, parameters are {n}x{p}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Dense log-density via triangular factors of both scale matrices.
pub fn log_density(x: &MatrixObservation, theta: &MatNormParams) -> Result<f64> {
    let (n, p) = (theta.n(), theta.p());
    check_obs_dims(x, n, p)?;
    let resid = x.values() - &theta.mean;
    // ||L⁻¹ R K⁻ᵀ||² with Σ* = LL', Ψ* = KK'.
    let left = theta
        .row_chol
        .l_dirty()
        .solve_lower_triangular(&resid)
        .ok_or_else(|| Error::NotPositiveDefinite("row scale".into()))?;
    let whitened = theta
        .col_chol
        .l_dirty()
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("column scale".into()))?;
    let quad = whitened.norm_squared();
    let np = (n * p) as f64;
    Ok(-0.5 * np * LN_2PI
        - 0.5 * p as f64 * chol_ln_det(&theta.row_chol)
        - 0.5 * n as f64 * chol_ln_det(&theta.col_chol)
        - 0.5 * quad)
}

/// `ΛΛ' + diag(s)` with `Λ` of shape `d x k`, `k < d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankDiag {
    loading: DMatrix<f64>,
    diag: DVector<f64>,
}

impl LowRankDiag {
    pub fn new(loading: DMatrix<f64>, diag: DVector<f64>) -> Result<Self> {
        if loading.nrows() != diag.len() {
            return Err(Error::Dimension(format!(
                "loading has {} rows, diagonal has {} entries",
                loading.nrows(),
                diag.len()
            )));
        }
        if loading.ncols() >= loading.nrows() {
            return Err(Error::InvalidArgument(format!(
                "loading rank {} must be below dimension {}",
                loading.ncols(),
                loading.nrows()
            )));
        }
        if diag.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("diagonal scale".into()));
        }
        Ok(Self { loading, diag })
    }

    pub fn loading(&self) -> &DMatrix<f64> {
        &self.loading
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn rank(&self) -> usize {
        self.loading.ncols()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = &self.loading * self.loading.transpose();
        for j in 0..self.dim() {
            m[(j, j)] += self.diag[j];
        }
        m
    }

    pub fn precision(&self) -> Result<LowRankPrecision> {
        LowRankPrecision::new(&self.loading, &self.diag)
    }
}

/// Inverse and log-determinant of `ΛΛ' + D` through the `k x k` system
/// `W = I + Λ'D⁻¹Λ`:
/// `(ΛΛ' + D)⁻¹ = D⁻¹ - UU'` with `U = D⁻¹ΛL⁻ᵀ`, `W = LL'`, and
/// `ln|ΛΛ' + D| = ln|W| + Σ ln d_j`.
#[derive(Debug, Clone)]
pub struct LowRankPrecision {
    inv_diag: DVector<f64>,
    u: DMatrix<f64>,
    w_inv: DMatrix<f64>,
    projector: DMatrix<f64>,
    ln_det: f64,
}

impl LowRankPrecision {
    pub fn new(loading: &DMatrix<f64>, diag: &DVector<f64>) -> Result<Self> {
        let (d, k) = loading.shape();
        if diag.len() != d {
            return Err(Error::Dimension("loading and diagonal disagree".into()));
        }
        if diag.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::NotPositiveDefinite("diagonal scale".into()));
        }
        let inv_diag = diag.map(|v| 1.0 / v);
        // D⁻¹Λ
        let mut scaled = loading.clone();
        for j in 0..d {
            scaled.row_mut(j).scale_mut(inv_diag[j]);
        }
        let mut w = loading.transpose() * &scaled;
        for l in 0..k {
            w[(l, l)] += 1.0;
        }
        let chol = Cholesky::new(w).ok_or_else(|| Error::SingularSystem("I + Λ'D⁻¹Λ".into()))?;
        let l = chol.l();
        let u = l
            .solve_lower_triangular(&scaled.transpose())
            .ok_or_else(|| Error::SingularSystem("I + Λ'D⁻¹Λ".into()))?
            .transpose();
        let w_inv = chol.inverse();
        let projector = chol.solve(&scaled.transpose());
        let ln_det = chol_ln_det(&chol) + diag.iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { inv_diag, u, w_inv, projector, ln_det })
    }

    pub fn dim(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn ln_det(&self) -> f64 {
        self.ln_det
    }

    pub fn inv_diag(&self) -> &DVector<f64> {
        &self.inv_diag
    }

    /// `U` with `(ΛΛ' + D)⁻¹ = D⁻¹ - UU'`.
    pub fn low_rank_factor(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `W⁻¹` where `W = I + Λ'D⁻¹Λ`.
    pub fn w_inv(&self) -> &DMatrix<f64> {
        &self.w_inv
    }

    /// `W⁻¹Λ'D⁻¹`, the posterior-mean map of the latent factors.
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    /// `(ΛΛ' + D)⁻¹ X` for `X` with `dim()` rows.
    pub fn apply_left(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for j in 0..self.dim() {
            out.row_mut(j).scale_mut(self.inv_diag[j]);
        }
        let ux = self.u.transpose() * x;
        out.gemm(-1.0, &self.u, &ux, 1.0);
        out
    }

    /// `X (ΛΛ' + D)⁻¹` for `X` with `dim()` columns.
    pub fn apply_right(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for j in 0..self.dim() {
            out.column_mut(j).scale_mut(self.inv_diag[j]);
        }
        let xu = x * &self.u;
        out.gemm(-1.0, &xu, &self.u.transpose(), 1.0);
        out
    }

    /// Explicit inverse, for tests and diagnostics only.
    pub fn dense_inverse(&self) -> DMatrix<f64> {
        let mut m = -(&self.u * self.u.transpose());
        for j in 0..self.dim() {
            m[(j, j)] += self.inv_diag[j];
        }
        m
    }
}

/// `tr(Σ*⁻¹ R Ψ*⁻¹ R')` expanded into the four Woodbury terms; never forms a
/// `d x d` inverse.
pub fn quad_form(row: &LowRankPrecision, col: &LowRankPrecision, resid: &DMatrix<f64>) -> f64 {
    let (n, p) = resid.shape();
    let mut diag_term = 0.0;
    for k in 0..p {
        let ck = col.inv_diag[k];
        let column = resid.column(k);
        for j in 0..n {
            diag_term += column[j] * column[j] * row.inv_diag[j] * ck;
        }
    }
    // U_Σ' R  (q x p)
    let ur = row.u.transpose() * resid;
    let mut row_term = 0.0;
    for k in 0..p {
        let ck = col.inv_diag[k];
        row_term += ur.column(k).norm_squared() * ck;
    }
    // R U_Ψ  (n x r)
    let ru = resid * &col.u;
    let mut col_term = 0.0;
    for m in 0..ru.ncols() {
        let c = ru.column(m);
        for j in 0..n {
            col_term += c[j] * c[j] * row.inv_diag[j];
        }
    }
    let cross = (&ur * &col.u).norm_squared();
    diag_term - row_term - col_term + cross
}

/// Log-density with `Σ* = ΛΛ' + Σ`, `Ψ* = ΔΔ' + Ψ` from precomputed precisions.
pub fn log_density_precomputed(
    resid: &DMatrix<f64>,
    row: &LowRankPrecision,
    col: &LowRankPrecision,
) -> f64 {
    let (n, p) = resid.shape();
    -0.5 * (n * p) as f64 * LN_2PI
        - 0.5 * p as f64 * row.ln_det
        - 0.5 * n as f64 * col.ln_det
        - 0.5 * quad_form(row, col, resid)
}

pub fn log_density_lowrank(
    x: &MatrixObservation,
    mean: &DMatrix<f64>,
    row: &LowRankDiag,
    col: &LowRankDiag,
) -> Result<f64> {
    check_obs_dims(x, row.dim(), col.dim())?;
    check_obs_dims(mean, row.dim(), col.dim())?;
    let row_prec = row.precision()?;
    let col_prec = col.precision()?;
    let resid = x.values() - mean;
    Ok(log_density_precomputed(&resid, &row_prec, &col_prec))
}

/// Draws `M + A Z B'` with `AA' = Σ*`, `BB' = Ψ*` lower-triangular and `Z` standard normal.
pub fn sample(theta: &MatNormParams, count: usize, seed: u64) -> Result<Vec<MatrixObservation>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let (n, p) = (theta.n(), theta.p());
    let a = theta.row_chol.l();
    let bt = theta.col_chol.l().transpose();
    let mut stream = rng::stream(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut stream));
        let x = &theta.mean + &a * z * &bt;
        out.push(MatrixObservation(x));
    }
    Ok(out)
}
