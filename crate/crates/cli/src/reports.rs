//! Report files written into the output directory.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use matfa::select::{leaderboard_tsv, LeaderboardEntry};
use matfa::sim::ScoreTable;
use matfa::FitResult;
use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::CliError;

pub const LOCK_FILE: &str = ".matfa.lock";

/// Exclusive ownership of an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            CliError::Io(format!("cannot lock {} ({e}); is another run writing there?", dir.display()))
        })?;
        Ok(Self { path, _file: file })
    }

    pub fn dir(&self) -> &Path {
        self.path.parent().expect("lock file lives in a directory")
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.dir().join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn matrix_tsv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", cells.join("\t"));
    }
    out
}

/// `key = value` summary of the selected fit. BIC and log-likelihood are
/// written with round-trip precision.
pub fn summary_text(fit: &FitResult, n_obs: usize, labeled: usize) -> String {
    let s = &fit.spec;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("model", s.models().to_string());
    put("G", s.groups.to_string());
    put("q", s.row_rank.to_string());
    put("r", s.col_rank.to_string());
    put("loglik", format!("{:?}", fit.loglik()));
    put("free_params", s.free_params().to_string());
    put("bic", format!("{:?}", fit.bic));
    put("iterations", fit.iterations.to_string());
    put("converged", fit.converged.to_string());
    put("floor_hits", fit.floor_hits.to_string());
    put("start", fit.start.to_string());
    put("observations", n_obs.to_string());
    put("labeled", labeled.to_string());
    put(
        "weights",
        fit.params.weights.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>().join(","),
    );
    out
}

pub fn responsibilities_tsv(fit: &FitResult) -> String {
    let z = fit.resp.matrix();
    let mut out: String = (1..=z.ncols()).map(|g| format!("z{g}\t")).collect();
    out.push_str("map\n");
    for (row, label) in z.row_iter().zip(fit.map_labels()) {
        for v in row.iter() {
            let _ = write!(out, "{v:?}\t");
        }
        let _ = writeln!(out, "{}", label + 1);
    }
    out
}

/// Leaderboard, summary, one mean matrix per component (`mean_g1.tsv`, ...),
/// responsibilities and the run manifest.
pub fn emit_reports(
    lock: &OutputLock,
    config: &RunConfig,
    fit: &FitResult,
    leaderboard: &[LeaderboardEntry],
    n_obs: usize,
    labeled: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = vec![
        lock.write("leaderboard.tsv", leaderboard_tsv(leaderboard))?,
        lock.write("summary.txt", summary_text(fit, n_obs, labeled))?,
    ];
    for (g, mean) in fit.params.means.iter().enumerate() {
        written.push(lock.write(&format!("mean_g{}.tsv", g + 1), matrix_tsv(mean))?);
    }
    written.push(lock.write("responsibilities.tsv", responsibilities_tsv(fit))?);
    written.push(lock.write("manifest.txt", config.to_manifest())?);
    Ok(written)
}

pub fn replicates_tsv(table: &ScoreTable) -> String {
    let mut out = String::from("replicate\tmodel\tG\tq\tr\tBIC\tARI\n");
    for r in &table.records {
        let s = &r.selected;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:?}\t{:?}",
            r.replicate,
            s.models(),
            s.groups,
            s.row_rank,
            s.col_rank,
            r.bic,
            r.ari
        );
    }
    for (rep, err) in &table.failures {
        let _ = writeln!(out, "{rep}\tfailed: {err}\tNA\tNA\tNA\tNA\tNA");
    }
    out
}

pub fn emit_study(lock: &OutputLock, config: &RunConfig, table: &ScoreTable) -> Result<Vec<PathBuf>, CliError> {
    Ok(vec![
        lock.write("scores.tsv", table.tsv())?,
        lock.write("scores.txt", table.formatted())?,
        lock.write("replicates.tsv", replicates_tsv(table))?,
        lock.write("manifest.txt", config.to_manifest())?,
    ])
}
