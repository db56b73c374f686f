//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_list, parse_models, Command, RunConfig};
use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "matfa", version, about = "Mixtures of matrix variate bilinear factor analyzers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Fit one model.
    Fit(Common),
    /// Fit every cell of a grid and select by BIC.
    Search(Common),
    /// Run a replicated simulation study, or write one simulated dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulation design (1, 2 or 3).
        #[arg(long, default_value_t = 1)]
        sim: u8,
        /// Matrix dimension d (10 or 20).
        #[arg(long, default_value_t = 10)]
        dim: usize,
        /// Separation δ.
        #[arg(long, default_value_t = 4.0)]
        delta: f64,
        /// Observations per replicate.
        #[arg(long = "n-obs", default_value_t = 200)]
        n_obs: usize,
        /// Replicates; 5 by default, 25 with `--extended`.
        #[arg(long)]
        replicates: Option<usize>,
        /// Use the grid G 1-4, q and r 1-5 (unless given explicitly) and 25 replicates.
        #[arg(long)]
        extended: bool,
        /// Write a single dataset with its labels instead of running the study.
        #[arg(long)]
        generate_only: bool,
    },
    /// Compare predicted labels against true labels (ARI and misclassification rate).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predicted: Option<PathBuf>,
    },
    /// Re-run a previous invocation from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; defaults to the one recorded in the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    data: Option<PathBuf>,
    /// m3a or idx.
    #[arg(long, default_value = "m3a")]
    format: String,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Fraction of observations whose labels are given to the fit.
    #[arg(long, default_value_t = 0.0)]
    supervision: f64,
    /// Uniform noise amplitude added to every entry.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    max_iter: usize,
    #[arg(long)]
    starts: Option<usize>,
    /// Component counts, e.g. `1-3` or `2`.
    #[arg(long = "grid-g")]
    grid_g: Option<String>,
    /// Row factor counts q.
    #[arg(long = "grid-q")]
    grid_q: Option<String>,
    /// Column factor counts r.
    #[arg(long = "grid-r")]
    grid_r: Option<String>,
    /// `all` or codes such as `CCU,UUU`.
    #[arg(long = "row-models")]
    row_models: Option<String>,
    #[arg(long = "col-models")]
    col_models: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn into_config(self, command: Command) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::new(command);
        c.data = self.data;
        c.format = self.format.parse()?;
        c.labels = self.labels;
        c.supervision = self.supervision;
        c.jitter = self.jitter;
        c.seed = self.seed;
        c.max_iter = self.max_iter;
        if let Some(s) = self.starts {
            c.starts = s;
        }
        if let Some(v) = self.grid_g {
            c.grid_g = parse_list(&v)?;
        }
        if let Some(v) = self.grid_q {
            c.grid_q = parse_list(&v)?;
        }
        if let Some(v) = self.grid_r {
            c.grid_r = parse_list(&v)?;
        }
        if let Some(v) = self.row_models {
            c.row_models = parse_models(&v)?;
        }
        if let Some(v) = self.col_models {
            c.col_models = parse_models(&v)?;
        }
        if let Some(out) = self.out {
            c.out = out;
        }
        Ok(c)
    }
}

/// `Ok(None)` when clap handled the request itself (help or version).
pub fn parse<I, T>(args: I) -> Result<Option<RunConfig>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(None);
        }
        Err(e) => return Err(CliError::Args(e.to_string().trim_end().to_string())),
    };
    let config = match cli.command {
        Sub::Fit(c) => c.into_config(Command::Fit)?,
        Sub::Search(c) => c.into_config(Command::Search)?,
        Sub::Simulate { common, sim, dim, delta, n_obs, replicates, extended, generate_only } => {
            let explicit = (common.grid_g.is_some(), common.grid_q.is_some(), common.grid_r.is_some());
            let mut c = common.into_config(Command::Simulate)?;
            if extended {
                let grid = matfa::SearchGrid::extended_scale();
                if !explicit.0 {
                    c.grid_g = grid.groups;
                }
                if !explicit.1 {
                    c.grid_q = grid.row_ranks;
                }
                if !explicit.2 {
                    c.grid_r = grid.col_ranks;
                }
            }
            c.sim.design = sim;
            c.sim.dim = dim;
            c.sim.delta = delta;
            c.sim.n_obs = n_obs;
            c.sim.replicates = replicates.unwrap_or(if extended { 25 } else { 5 });
            c.sim.generate_only = generate_only;
            c
        }
        Sub::Evaluate { common, predicted } => {
            let mut c = common.into_config(Command::Evaluate)?;
            c.predicted = predicted;
            c
        }
        Sub::Replay { manifest, out } => {
            let text = std::fs::read_to_string(&manifest)
                .map_err(|e| CliError::Args(format!("cannot read manifest {}: {e}", manifest.display())))?;
            let mut c = RunConfig::from_manifest(&text)?;
            if let Some(out) = out {
                c.out = out;
            }
            c
        }
    };
    config.validate()?;
    Ok(Some(config))
}
