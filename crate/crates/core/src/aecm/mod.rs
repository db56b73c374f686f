//! Three-stage AECM estimation.
//!
//! One cycle runs
//! 1. memberships, then mixing weights and means;
//! 2. memberships and row-factor moments, then `Λ_g`, `Σ_g`;
//! 3. memberships and column-factor moments, then `Δ_g`, `Ψ_g`.
//!
//! Each stage recomputes the memberships at the current parameters, so every
//! stage is a proper EM step for its own complete data and the observed
//! log-likelihood cannot decrease within a cycle.

mod aitken;
mod estep;
mod init;
mod mstep;

use nalgebra::DMatrix;

pub use aitken::{aitken_limit, aitken_should_stop, auto_tolerance};
pub use estep::{
    estep_col_moments, estep_responsibilities, estep_row_moments, log_densities, observed_loglik, Responsibilities,
    SideMoments,
};
pub use init::initialize;
pub use mstep::{mstep_col, mstep_mean, mstep_row, update_side, SideStats, SideUpdate, SCALE_FLOOR};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::model::{MixtureParams, ModelSpec};
use crate::rng;
use crate::select::bic;
use estep::{responsibilities_from_log, Kernels};

/// Stopping tolerance for the Aitken rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// Three orders of magnitude below the log-likelihood after five cycles.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub seed: u64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub tolerance: Tolerance,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { seed: 0, max_iter: 1000, n_starts: 5, tolerance: Tolerance::Auto }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: MixtureParams,
    pub resp: Responsibilities,
    /// Observed log-likelihood after each full cycle.
    pub loglik_trace: Vec<f64>,
    /// Observed log-likelihood after stages 1, 2 and 3 of each cycle.
    pub stage_trace: Vec<[f64; 3]>,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Scale entries raised to the variance floor, summed over all cycles.
    pub floor_hits: usize,
    /// Index of the start that produced this result.
    pub start: usize,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        self.loglik_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map_labels(&self) -> Vec<usize> {
        self.resp.map_labels()
    }
}

/// Data arranged for both sides: observations and their transposes.
pub struct PreparedData<'a> {
    data: &'a DataSet,
    obs: Vec<DMatrix<f64>>,
    obs_t: Vec<DMatrix<f64>>,
}

impl<'a> PreparedData<'a> {
    pub fn new(data: &'a DataSet) -> Self {
        let obs: Vec<_> = data.observations().iter().map(|x| x.values().clone()).collect();
        let obs_t = obs.iter().map(|x| x.transpose()).collect();
        Self { data, obs, obs_t }
    }

    pub fn data(&self) -> &DataSet {
        self.data
    }
}

/// Fits `spec` with `options.n_starts` random starts and keeps the one with the
/// highest final log-likelihood (first on ties).
pub fn fit(data: &DataSet, spec: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    fit_prepared(&PreparedData::new(data), spec, options)
}

pub fn fit_prepared(prepared: &PreparedData<'_>, spec: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    init::check_dims(prepared.data, spec)?;
    prepared.data.check_labels(spec.groups)?;
    let mut best: Option<FitResult> = None;
    let mut first_error = None;
    for start in 0..options.n_starts.max(1) {
        let seed = start_seed(options.seed, start);
        match fit_single(prepared, spec, seed, options.max_iter, options.tolerance) {
            Ok(mut result) => {
                result.start = start;
                let better = best.as_ref().map_or(true, |b| result.loglik() > b.loglik());
                if better {
                    best = Some(result);
                }
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(Error::Start { start, source: Box::new(e) });
                }
            }
        }
    }
    best.ok_or_else(|| first_error.expect("at least one start"))
}

pub(crate) fn start_seed(seed: u64, start: usize) -> u64 {
    rng::derive_seed(seed, &[0x5354_4152_54, start as u64])
}

fn check_sizes(resp: &Responsibilities, min_size: f64) -> Result<()> {
    match resp.sizes().into_iter().enumerate().find(|&(_, s)| !(s >= min_size)) {
        Some((component, weight)) => Err(Error::DegenerateComponent { component, weight }),
        None => Ok(()),
    }
}

/// One AECM run from the start derived from `seed`.
pub fn fit_single(
    prepared: &PreparedData<'_>,
    spec: &ModelSpec,
    seed: u64,
    max_iter: usize,
    tolerance: Tolerance,
) -> Result<FitResult> {
    let data = prepared.data;
    let labels = data.known_labels();
    let groups = spec.groups;
    let min_size = init::min_component_size(spec);
    let (mut params, mut resp) = initialize(data, spec, seed)?;
    params.rows = params.rows.conform(spec.row_model, groups);
    params.cols = params.cols.conform(spec.col_model, groups);

    let mut trace = Vec::new();
    let mut stage_trace = Vec::new();
    let mut floor_hits = 0;
    let mut eps = match tolerance {
        Tolerance::Fixed(e) => Some(e),
        Tolerance::Auto => None,
    };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;

        // Stage 1
        check_sizes(&resp, min_size)?;
        let (weights, means) = mstep_mean(data, &resp)?;
        params.weights = weights;
        params.means = means;

        // Stage 2
        let kernels = Kernels::new(&params)?;
        let log_dens = estep::log_densities_with(data, &params, &kernels);
        let (stage_resp, ll1) = responsibilities_from_log(&log_dens, &params.weights, labels)?;
        check_sizes(&stage_resp, min_size)?;
        let means_t: Vec<_> = params.means.iter().map(|m| m.transpose()).collect();
        let stats = mstep::side_stats_from_scatter(
            &prepared.obs,
            &prepared.obs_t,
            &params.means,
            &means_t,
            &kernels.rows,
            &kernels.cols,
            &stage_resp,
        );
        let update = update_side(spec.row_model, &stats, &params.rows)?;
        floor_hits += update.floored;
        params.rows = update.side;

        // Stage 3
        let kernels = Kernels::new(&params)?;
        let log_dens = estep::log_densities_with(data, &params, &kernels);
        let (stage_resp, ll2) = responsibilities_from_log(&log_dens, &params.weights, labels)?;
        check_sizes(&stage_resp, min_size)?;
        let stats = mstep::side_stats_from_scatter(
            &prepared.obs_t,
            &prepared.obs,
            &means_t,
            &params.means,
            &kernels.cols,
            &kernels.rows,
            &stage_resp,
        );
        let update = update_side(spec.col_model, &stats, &params.cols)?;
        floor_hits += update.floored;
        params.cols = update.side;

        let kernels = Kernels::new(&params)?;
        let log_dens = estep::log_densities_with(data, &params, &kernels);
        let (cycle_resp, ll3) = responsibilities_from_log(&log_dens, &params.weights, labels)?;
        resp = cycle_resp;
        trace.push(ll3);
        stage_trace.push([ll1, ll2, ll3]);

        if eps.is_none() && trace.len() == 5 {
            eps = Some(auto_tolerance(ll3));
        }
        if let (Some(eps), [.., a, b, c]) = (eps, trace.as_slice()) {
            if aitken_should_stop(*a, *b, *c, eps) || aitken::plateau_converged(*a, *b, *c) {
                converged = true;
                break;
            }
        }
    }

    let best_ll = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        spec: *spec,
        bic: bic(best_ll, spec, data.len()),
        params,
        resp,
        loglik_trace: trace,
        stage_trace,
        iterations,
        converged,
        floor_hits,
        start: 0,
    })
}
