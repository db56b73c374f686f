//! BIC model selection over an exhaustive grid.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::aecm::{fit_prepared, FitOptions, FitResult, PreparedData, Tolerance};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::model::{count_free_params, ConstraintTriple, ModelPair, ModelSpec};
use crate::rng;

/// `2 ℓ - ρ ln N`; larger is better.
pub fn bic(loglik: f64, spec: &ModelSpec, n_obs: usize) -> f64 {
    bic_from_count(loglik, count_free_params(spec), n_obs)
}

pub fn bic_from_count(loglik: f64, free_params: usize, n_obs: usize) -> f64 {
    2.0 * loglik - free_params as f64 * (n_obs as f64).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub groups: Vec<usize>,
    pub row_ranks: Vec<usize>,
    pub col_ranks: Vec<usize>,
    pub row_models: Vec<ConstraintTriple>,
    pub col_models: Vec<ConstraintTriple>,
}

impl SearchGrid {
    /// `G ∈ groups`, `q, r ∈ 1..=max_rank`, all 64 models.
    pub fn full(groups: impl IntoIterator<Item = usize>, max_rank: usize) -> Self {
        Self {
            groups: groups.into_iter().collect(),
            row_ranks: (1..=max_rank).collect(),
            col_ranks: (1..=max_rank).collect(),
            row_models: ConstraintTriple::ALL.to_vec(),
            col_models: ConstraintTriple::ALL.to_vec(),
        }
    }

    /// The grid `G ∈ {1..3}`, `q, r ∈ {1..4}`, all 64 models.
    pub fn desk_scale() -> Self {
        Self::full(1..=3, 4)
    }

    /// The grid `G ∈ {1..4}`, `q, r ∈ {1..5}`, all 64 models.
    pub fn extended_scale() -> Self {
        Self::full(1..=4, 5)
    }

    pub fn single(spec: &ModelSpec) -> Self {
        Self {
            groups: vec![spec.groups],
            row_ranks: vec![spec.row_rank],
            col_ranks: vec![spec.col_rank],
            row_models: vec![spec.row_model],
            col_models: vec![spec.col_model],
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len() * self.row_ranks.len() * self.col_ranks.len() * self.row_models.len() * self.col_models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, spec: &ModelSpec) -> bool {
        self.groups.contains(&spec.groups)
            && self.row_ranks.contains(&spec.row_rank)
            && self.col_ranks.contains(&spec.col_rank)
            && self.row_models.contains(&spec.row_model)
            && self.col_models.contains(&spec.col_model)
    }

    /// Every cell, ordered by `G`, `q`, `r`, row model, column model.
    pub fn cells(&self, n: usize, p: usize) -> Result<Vec<ModelSpec>> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("search grid is empty".into()));
        }
        let mut out = Vec::with_capacity(self.len());
        for &g in &self.groups {
            for &q in &self.row_ranks {
                for &r in &self.col_ranks {
                    for &row in &self.row_models {
                        for &col in &self.col_models {
                            out.push(ModelSpec::new(g, q, r, ModelPair { row, col }, n, p)?);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub base_seed: u64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub tolerance: Tolerance,
}

impl Default for SearchOptions {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self { base_seed: 0, max_iter: fit.max_iter, n_starts: fit.n_starts, tolerance: fit.tolerance }
    }
}

/// Seed for one grid cell, a function of the base seed and the cell alone.
pub fn cell_seed(base_seed: u64, spec: &ModelSpec) -> u64 {
    rng::derive_seed(
        base_seed,
        &[
            spec.groups as u64,
            spec.row_rank as u64,
            spec.col_rank as u64,
            spec.row_model.index() as u64,
            spec.col_model.index() as u64,
        ],
    )
}

/// One leaderboard row. Failed cells carry `NaN` likelihood and BIC.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardEntry {
    pub spec: ModelSpec,
    pub loglik: f64,
    pub free_params: usize,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: FitResult,
    pub leaderboard: Vec<LeaderboardEntry>,
    pub failures: Vec<(ModelSpec, Error)>,
}

impl SearchResult {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.best.spec
    }

    /// Tab-separated leaderboard, one row per grid cell.
    pub fn leaderboard_tsv(&self) -> String {
        leaderboard_tsv(&self.leaderboard)
    }
}

pub fn leaderboard_tsv(entries: &[LeaderboardEntry]) -> String {
    let mut out = String::from("model\tG\tq\tr\tloglik\trho\tBIC\tconverged\tseconds\n");
    for e in entries {
        let num = |v: f64| if v.is_finite() { format!("{v:?}") } else { "NA".to_string() };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}",
            e.spec.models(),
            e.spec.groups,
            e.spec.row_rank,
            e.spec.col_rank,
            num(e.loglik),
            e.free_params,
            num(e.bic),
            e.converged,
            e.seconds
        );
    }
    out
}

enum CellOutcome {
    Eligible(Box<FitResult>),
    NotConverged,
    Failed(Error),
}

/// Fits every cell independently and keeps the converged fit with the largest BIC.
///
/// Cell failures are recorded and never abort the search. Ties keep the
/// earliest cell in grid order.
pub fn grid_search(data: &DataSet, grid: &SearchGrid, options: &SearchOptions) -> Result<SearchResult> {
    let cells = grid.cells(data.n(), data.p())?;
    let prepared = PreparedData::new(data);
    let outcomes: Vec<(LeaderboardEntry, CellOutcome)> = cells
        .par_iter()
        .map(|spec| {
            let fit_options = FitOptions {
                seed: cell_seed(options.base_seed, spec),
                max_iter: options.max_iter,
                n_starts: options.n_starts,
                tolerance: options.tolerance,
            };
            let started = Instant::now();
            let outcome = fit_prepared(&prepared, spec, &fit_options);
            let seconds = started.elapsed().as_secs_f64();
            let entry = match &outcome {
                Ok(fit) => LeaderboardEntry {
                    spec: *spec,
                    loglik: fit.loglik(),
                    free_params: count_free_params(spec),
                    bic: fit.bic,
                    converged: fit.converged,
                    iterations: fit.iterations,
                    seconds,
                    error: None,
                },
                Err(e) => LeaderboardEntry {
                    spec: *spec,
                    loglik: f64::NAN,
                    free_params: count_free_params(spec),
                    bic: f64::NAN,
                    converged: false,
                    iterations: 0,
                    seconds,
                    error: Some(e.to_string()),
                },
            };
            // only converged fits are eligible, so only those are kept
            let outcome = match outcome {
                Ok(fit) if fit.converged => CellOutcome::Eligible(Box::new(fit)),
                Ok(_) => CellOutcome::NotConverged,
                Err(e) => CellOutcome::Failed(e),
            };
            (entry, outcome)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut leaderboard = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (entry, outcome) in outcomes {
        match outcome {
            CellOutcome::Eligible(fit) => {
                if best.as_ref().map_or(true, |b| fit.bic > b.bic) {
                    best = Some(*fit);
                }
            }
            CellOutcome::NotConverged => {}
            CellOutcome::Failed(e) => failures.push((entry.spec, e)),
        }
        leaderboard.push(entry);
    }
    match best {
        Some(best) => Ok(SearchResult { best, leaderboard, failures }),
        None => Err(Error::NoConvergedFits { failed: failures.len(), total: leaderboard.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bic_arithmetic() {
        assert_eq!(bic_from_count(0.0, 0, 10), 0.0);
        let v = bic_from_count(-100.0, 10, 100);
        assert!((v - (-200.0 - 10.0 * 100f64.ln())).abs() < 1e-12);
        assert!((v + 246.051_701_859_880_9).abs() < 1e-9);
    }

    #[test]
    fn bic_penalizes_parameters() {
        for rho in 0..50 {
            assert!(bic_from_count(-10.0, rho, 30) > bic_from_count(-10.0, rho + 1, 30));
        }
        let small = ModelSpec::new(2, 1, 1, "CCC-CCC".parse().unwrap(), 4, 4).unwrap();
        let large = ModelSpec::new(2, 1, 1, "UUU-UUU".parse().unwrap(), 4, 4).unwrap();
        assert!(bic(-50.0, &small, 40) > bic(-50.0, &large, 40));
    }

    #[test]
    fn grid_cells_are_ordered_and_validated() {
        let grid = SearchGrid::desk_scale();
        assert_eq!(grid.len(), 3 * 4 * 4 * 64);
        let cells = grid.cells(10, 10).unwrap();
        assert_eq!(cells.len(), grid.len());
        assert_eq!(cells[0].models().to_string(), "CCC-CCC");
        assert_eq!(cells[1].models().to_string(), "CCC-CCU");
        assert!(grid.cells(4, 10).is_err());
    }

    #[test]
    fn cell_seeds_depend_only_on_cell() {
        let a = ModelSpec::new(2, 1, 1, "CCC-CCC".parse().unwrap(), 4, 4).unwrap();
        let b = ModelSpec::new(2, 1, 1, "CCC-CCU".parse().unwrap(), 4, 4).unwrap();
        assert_eq!(cell_seed(3, &a), cell_seed(3, &a));
        assert_ne!(cell_seed(3, &a), cell_seed(3, &b));
    }
}
