//! Run configuration and its key-value manifest form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use matfa::{ConstraintTriple, SearchGrid};

use crate::io::Format;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Search,
    Simulate,
    Evaluate,
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "fit" => Ok(Command::Fit),
            "search" => Ok(Command::Search),
            "simulate" => Ok(Command::Simulate),
            "evaluate" => Ok(Command::Evaluate),
            other => Err(CliError::Args(format!("unknown command '{other}'"))),
        }
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Command::Fit => "fit",
            Command::Search => "search",
            Command::Simulate => "simulate",
            Command::Evaluate => "evaluate",
        })
    }
}

/// Simulation settings used by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub design: u8,
    pub dim: usize,
    pub delta: f64,
    pub n_obs: usize,
    pub replicates: usize,
    /// Write one generated dataset instead of running the study.
    pub generate_only: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { design: 1, dim: 10, delta: 4.0, n_obs: 200, replicates: 5, generate_only: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub data: Option<PathBuf>,
    pub format: Format,
    pub labels: Option<PathBuf>,
    pub predicted: Option<PathBuf>,
    pub supervision: f64,
    pub jitter: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub starts: usize,
    pub grid_g: Vec<usize>,
    pub grid_q: Vec<usize>,
    pub grid_r: Vec<usize>,
    pub row_models: Vec<ConstraintTriple>,
    pub col_models: Vec<ConstraintTriple>,
    pub out: PathBuf,
    pub sim: SimSettings,
}

impl RunConfig {
    /// Defaults for `command`: a single UUU/UUU cell with `G = 2` for `fit`,
    /// the desk-scale grid otherwise.
    pub fn new(command: Command) -> Self {
        let single = command == Command::Fit;
        let all = ConstraintTriple::ALL.to_vec();
        Self {
            command,
            data: None,
            format: Format::M3a,
            labels: None,
            predicted: None,
            supervision: 0.0,
            jitter: 0.0,
            seed: 0,
            max_iter: 1000,
            starts: if command == Command::Simulate { 1 } else { 5 },
            grid_g: if single { vec![2] } else { (1..=3).collect() },
            grid_q: if single { vec![1] } else { (1..=4).collect() },
            grid_r: if single { vec![1] } else { (1..=4).collect() },
            row_models: if single { vec![ConstraintTriple::UUU] } else { all.clone() },
            col_models: if single { vec![ConstraintTriple::UUU] } else { all },
            out: PathBuf::from("matfa-out"),
            sim: SimSettings::default(),
        }
    }

    pub fn grid(&self) -> SearchGrid {
        SearchGrid {
            groups: self.grid_g.clone(),
            row_ranks: self.grid_q.clone(),
            col_ranks: self.grid_r.clone(),
            row_models: self.row_models.clone(),
            col_models: self.col_models.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.supervision) {
            return Err(CliError::Args(format!("--supervision must lie in [0, 1], got {}", self.supervision)));
        }
        if self.supervision > 0.0 && self.labels.is_none() {
            return Err(CliError::Args("--supervision needs --labels".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(CliError::Args(format!("--jitter must be non-negative, got {}", self.jitter)));
        }
        if self.max_iter == 0 || self.starts == 0 {
            return Err(CliError::Args("--max-iter and --starts must be positive".into()));
        }
        let lists = [&self.grid_g, &self.grid_q, &self.grid_r];
        if lists.iter().any(|l| l.is_empty() || l.contains(&0)) || self.row_models.is_empty() || self.col_models.is_empty()
        {
            return Err(CliError::Args("grid values must be non-empty lists of positive integers".into()));
        }
        if self.command == Command::Fit && self.grid().len() != 1 {
            return Err(CliError::Args("fit takes exactly one value for each grid flag".into()));
        }
        match self.command {
            Command::Fit | Command::Search if self.data.is_none() => Err(CliError::Args("--data is required".into())),
            Command::Evaluate if self.labels.is_none() || self.predicted.is_none() => {
                Err(CliError::Args("evaluate needs --labels and --predicted".into()))
            }
            _ => Ok(()),
        }
    }

    /// `key = value` lines, one per field, in a fixed order.
    pub fn to_manifest(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let models = |v: &[ConstraintTriple]| v.iter().map(|m| m.code()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("version", env!("CARGO_PKG_VERSION").to_string());
        put("library_version", matfa::VERSION.to_string());
        put("command", self.command.to_string());
        put("data", path(&self.data));
        put("format", self.format.to_string());
        put("labels", path(&self.labels));
        put("predicted", path(&self.predicted));
        put("supervision", format!("{:?}", self.supervision));
        put("jitter", format!("{:?}", self.jitter));
        put("seed", self.seed.to_string());
        put("max_iter", self.max_iter.to_string());
        put("starts", self.starts.to_string());
        put("grid_g", list(&self.grid_g));
        put("grid_q", list(&self.grid_q));
        put("grid_r", list(&self.grid_r));
        put("row_models", models(&self.row_models));
        put("col_models", models(&self.col_models));
        put("out", self.out.display().to_string());
        put("sim", self.sim.design.to_string());
        put("sim_dim", self.sim.dim.to_string());
        put("sim_delta", format!("{:?}", self.sim.delta));
        put("sim_n", self.sim.n_obs.to_string());
        put("sim_replicates", self.sim.replicates.to_string());
        put("sim_generate_only", self.sim.generate_only.to_string());
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| CliError::Args(format!("manifest line {}: expected 'key = value'", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).map(String::as_str).ok_or_else(|| CliError::Args(format!("manifest lacks '{k}'")));
        let num = |k: &str| -> Result<f64, CliError> {
            get(k)?.parse().map_err(|_| CliError::Args(format!("manifest '{k}' is not a number")))
        };
        let int = |k: &str| -> Result<usize, CliError> {
            get(k)?.parse().map_err(|_| CliError::Args(format!("manifest '{k}' is not an integer")))
        };
        let path = |k: &str| -> Result<Option<PathBuf>, CliError> {
            Ok(Some(get(k)?).filter(|s| !s.is_empty()).map(PathBuf::from))
        };
        Ok(Self {
            command: get("command")?.parse()?,
            data: path("data")?,
            format: get("format")?.parse()?,
            labels: path("labels")?,
            predicted: path("predicted")?,
            supervision: num("supervision")?,
            jitter: num("jitter")?,
            seed: get("seed")?.parse().map_err(|_| CliError::Args("manifest 'seed' is not an integer".into()))?,
            max_iter: int("max_iter")?,
            starts: int("starts")?,
            grid_g: parse_list(get("grid_g")?)?,
            grid_q: parse_list(get("grid_q")?)?,
            grid_r: parse_list(get("grid_r")?)?,
            row_models: parse_models(get("row_models")?)?,
            col_models: parse_models(get("col_models")?)?,
            out: PathBuf::from(get("out")?),
            sim: SimSettings {
                design: int("sim")? as u8,
                dim: int("sim_dim")?,
                delta: num("sim_delta")?,
                n_obs: int("sim_n")?,
                replicates: int("sim_replicates")?,
                generate_only: get("sim_generate_only")? == "true",
            },
        })
    }
}

/// Comma-separated integers and inclusive ranges, e.g. `1,3-5`.
pub fn parse_list(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Args(format!("'{s}' is not a list of integers (e.g. 1,2 or 1-4)"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// `all` or comma-separated three-letter codes such as `CCU,UUU`.
pub fn parse_models(s: &str) -> Result<Vec<ConstraintTriple>, CliError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ConstraintTriple::ALL.to_vec());
    }
    s.split(',')
        .map(|c| c.trim().parse().map_err(|e: matfa::Error| CliError::Args(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut c = RunConfig::new(Command::Search);
        c.data = Some(PathBuf::from("/tmp/x.m3a"));
        c.supervision = 0.25;
        c.jitter = 0.05;
        c.seed = u64::MAX;
        c.grid_q = vec![1, 3];
        c.row_models = parse_models("CCU,UUC").unwrap();
        c.sim.delta = 0.1;
        let back = RunConfig::from_manifest(&c.to_manifest()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn list_syntax() {
        assert_eq!(parse_list("1-3,5").unwrap(), vec![1, 2, 3, 5]);
        assert!(parse_list("3-1").is_err());
        assert!(parse_list("a").is_err());
        assert_eq!(parse_models("all").unwrap().len(), 8);
        assert!(parse_models("CCX").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::new(Command::Fit);
        assert!(c.validate().is_err());
        c.data = Some(PathBuf::from("d"));
        c.validate().unwrap();
        c.grid_g = vec![1, 2];
        assert!(c.validate().is_err());
        let mut s = RunConfig::new(Command::Search);
        s.data = Some(PathBuf::from("d"));
        s.supervision = 0.5;
        assert!(s.validate().is_err());
    }
}
