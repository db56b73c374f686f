//! Executes a [`RunConfig`] and writes its reports.

use std::path::PathBuf;

use matfa::metrics::{ari, misclassification_rate};
use matfa::model::count_free_params;
use matfa::select::LeaderboardEntry;
use matfa::sim::{self, Design, SimDesign};
use matfa::{fit, grid_search, rng, DataSet, FitOptions, FitResult, ModelPair, ModelSpec, SearchOptions, Tolerance};

use crate::config::{Command, RunConfig};
use crate::io::{labels_text, load_dataset, load_labels, save_dataset};
use crate::reports::{emit_reports, emit_study, OutputLock};
use crate::supervision::{add_jitter, apply_supervision};
use crate::CliError;

fn absolute(p: &Option<PathBuf>) -> Option<PathBuf> {
    p.as_ref().map(|p| std::path::absolute(p).unwrap_or_else(|_| p.clone()))
}

/// The data the fit sees: loaded, jittered, then partially labelled.
pub fn prepare_data(config: &RunConfig) -> Result<DataSet, CliError> {
    let path = config.data.as_ref().ok_or_else(|| CliError::Args("--data is required".into()))?;
    let data = load_dataset(path, config.format)?;
    let labels = config.labels.as_ref().map(|p| load_labels(p)).transpose()?;
    if let Some(l) = &labels {
        if l.len() != data.len() {
            return Err(CliError::Data(format!("{} labels for {} observations", l.len(), data.len())));
        }
    }
    let data = add_jitter(&data, config.jitter, rng::derive_seed(config.seed, &[1]))?;
    apply_supervision(&data, labels.as_deref(), config.supervision, rng::derive_seed(config.seed, &[2]))
}

fn warn_floor(fit: &FitResult) {
    if fit.floor_hits > 0 {
        eprintln!("warning: {} scale entries were raised to the variance floor", fit.floor_hits);
    }
}

/// Runs the command, writes its reports and returns a one-line description.
pub fn run(config: &RunConfig) -> Result<String, CliError> {
    config.validate()?;
    let mut recorded = config.clone();
    recorded.data = absolute(&config.data);
    recorded.labels = absolute(&config.labels);
    recorded.predicted = absolute(&config.predicted);
    match config.command {
        Command::Fit => run_fit(&recorded),
        Command::Search => run_search(&recorded),
        Command::Simulate => run_simulate(&recorded),
        Command::Evaluate => run_evaluate(&recorded),
    }
}

fn describe(fit: &FitResult) -> String {
    format!("{} BIC={:?}", fit.spec, fit.bic)
}

fn run_fit(config: &RunConfig) -> Result<String, CliError> {
    let data = prepare_data(config)?;
    let spec = ModelSpec::new(
        config.grid_g[0],
        config.grid_q[0],
        config.grid_r[0],
        ModelPair { row: config.row_models[0], col: config.col_models[0] },
        data.n(),
        data.p(),
    )?;
    let started = std::time::Instant::now();
    let options =
        FitOptions { seed: config.seed, max_iter: config.max_iter, n_starts: config.starts, tolerance: Tolerance::Auto };
    let result = fit(&data, &spec, &options)?;
    warn_floor(&result);
    let entry = LeaderboardEntry {
        spec,
        loglik: result.loglik(),
        free_params: count_free_params(&spec),
        bic: result.bic,
        converged: result.converged,
        iterations: result.iterations,
        seconds: started.elapsed().as_secs_f64(),
        error: None,
    };
    let lock = OutputLock::acquire(&config.out)?;
    emit_reports(&lock, config, &result, &[entry], data.len(), data.labeled_count())?;
    Ok(describe(&result))
}

fn run_search(config: &RunConfig) -> Result<String, CliError> {
    let data = prepare_data(config)?;
    let options = SearchOptions {
        base_seed: config.seed,
        max_iter: config.max_iter,
        n_starts: config.starts,
        tolerance: Tolerance::Auto,
    };
    let lock = OutputLock::acquire(&config.out)?;
    let result = grid_search(&data, &config.grid(), &options)?;
    warn_floor(&result.best);
    emit_reports(&lock, config, &result.best, &result.leaderboard, data.len(), data.labeled_count())?;
    Ok(describe(&result.best))
}

fn run_simulate(config: &RunConfig) -> Result<String, CliError> {
    let s = &config.sim;
    let design = Design::from_id(s.design)?;
    let lock = OutputLock::acquire(&config.out)?;
    if s.generate_only {
        let (data, truth) = sim::generate(design, s.dim, s.delta, s.n_obs, config.seed)?;
        save_dataset(&lock.dir().join("data.m3a"), &data)?;
        lock.write("labels.txt", labels_text(&truth.labels))?;
        lock.write("truth.txt", format!("{}\n", truth.spec))?;
        lock.write("manifest.txt", config.to_manifest())?;
        return Ok(format!("wrote {} observations of simulation {}", data.len(), s.design));
    }
    let study = SimDesign {
        design,
        dim: s.dim,
        delta: s.delta,
        n_obs: s.n_obs,
        replicates: s.replicates,
        base_seed: config.seed,
    };
    let options = SearchOptions {
        base_seed: config.seed,
        max_iter: config.max_iter,
        n_starts: config.starts,
        tolerance: Tolerance::Auto,
    };
    let table = sim::run_study(&study, &config.grid(), &options)?;
    emit_study(&lock, config, &table)?;
    Ok(table.formatted().trim_end().to_string())
}

fn run_evaluate(config: &RunConfig) -> Result<String, CliError> {
    let truth = load_labels(config.labels.as_ref().expect("validated"))?;
    let predicted = load_labels(config.predicted.as_ref().expect("validated"))?;
    let a = ari(&predicted, &truth).map_err(|e| CliError::Data(e.to_string()))?;
    let m = misclassification_rate(&predicted, &truth).map_err(|e| CliError::Data(e.to_string()))?;
    let text = format!("ari = {a:?}\nmisclassification_rate = {m:?}\n");
    let lock = OutputLock::acquire(&config.out)?;
    lock.write("metrics.txt", &text)?;
    lock.write("manifest.txt", config.to_manifest())?;
    Ok(format!("ARI={a:.4} MCR={m:.4}"))
}
