//! Simulation designs and replicated model-recovery studies.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::matnorm::MatrixObservation;
use crate::metrics::ari;
use crate::model::{ConstraintTriple, ModelPair, ModelSpec};
use crate::rng;
use crate::select::{grid_search, SearchGrid, SearchOptions};

/// Which of the three designs to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Design {
    /// Lower-triangular mean shift, CCU rows and CCU columns.
    LowerTriangularShift,
    /// Same means, CUC rows and UCU columns.
    MixedConstraints,
    /// Diagonal means, CCU rows and UCC columns.
    DiagonalMeans,
}

impl Design {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Design::LowerTriangularShift),
            2 => Ok(Design::MixedConstraints),
            3 => Ok(Design::DiagonalMeans),
            other => Err(Error::InvalidArgument(format!("unknown simulation design {other}"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Design::LowerTriangularShift => 1,
            Design::MixedConstraints => 2,
            Design::DiagonalMeans => 3,
        }
    }

    pub fn true_models(self) -> ModelPair {
        let code = match self {
            Design::LowerTriangularShift => "CCU-CCU",
            Design::MixedConstraints => "CUC-UCU",
            Design::DiagonalMeans => "CCU-UCC",
        };
        code.parse().expect("static model code")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimDesign {
    pub design: Design,
    pub dim: usize,
    pub delta: f64,
    pub n_obs: usize,
    pub replicates: usize,
    pub base_seed: u64,
}

/// Population parameters of one component, in latent form.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTruth {
    pub mean: DMatrix<f64>,
    pub row_loading: DMatrix<f64>,
    pub row_diag: DVector<f64>,
    pub col_loading: DMatrix<f64>,
    pub col_diag: DVector<f64>,
}

impl ComponentTruth {
    /// `ΛΛ' + Σ`.
    pub fn row_scale(&self) -> DMatrix<f64> {
        &self.row_loading * self.row_loading.transpose() + DMatrix::from_diagonal(&self.row_diag)
    }

    /// `ΔΔ' + Ψ`.
    pub fn col_scale(&self) -> DMatrix<f64> {
        &self.col_loading * self.col_loading.transpose() + DMatrix::from_diagonal(&self.col_diag)
    }

    /// `X = M + Λ U Δ' + Λ E_B + E_A Δ' + E` with independent matrix normal terms.
    pub fn draw(&self, stream: &mut rng::Stream) -> DMatrix<f64> {
        let (n, q) = self.row_loading.shape();
        let (p, r) = self.col_loading.shape();
        let mut normal = |rows: usize, cols: usize| -> DMatrix<f64> {
            DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(stream))
        };
        let row_sd = self.row_diag.map(f64::sqrt);
        let col_sd = self.col_diag.map(f64::sqrt);
        let scale_cols = |mut m: DMatrix<f64>| {
            for k in 0..p {
                m.column_mut(k).scale_mut(col_sd[k]);
            }
            m
        };
        let scale_rows = |mut m: DMatrix<f64>| {
            for j in 0..n {
                m.row_mut(j).scale_mut(row_sd[j]);
            }
            m
        };
        let u = normal(q, r);
        let e_b = scale_cols(normal(q, p));
        let e_a = scale_rows(normal(n, r));
        let e = scale_cols(scale_rows(normal(n, p)));
        let delta_t = self.col_loading.transpose();
        &self.mean + &self.row_loading * (u * &delta_t + e_b) + e_a * &delta_t + e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub labels: Vec<usize>,
    pub spec: ModelSpec,
    pub components: Vec<ComponentTruth>,
}

fn blocks(sizes: &[usize], signs: &[&[f64]]) -> DMatrix<f64> {
    // row block b has entries signs[b][c] in every row
    let rows: usize = sizes.iter().sum();
    let cols = signs[0].len();
    let mut m = DMatrix::zeros(rows, cols);
    let mut start = 0;
    for (b, &len) in sizes.iter().enumerate() {
        for j in start..start + len {
            for c in 0..cols {
                m[(j, c)] = signs[b][c];
            }
        }
        start += len;
    }
    m
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 10 || dim == 20 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("simulation dimension must be 10 or 20, got {dim}")))
    }
}

/// `Λ` for the first two designs (column blocks of ones).
fn shift_row_loading(dim: usize) -> DMatrix<f64> {
    let sizes: &[usize] = if dim == 10 { &[5, 2, 3] } else { &[10, 4, 6] };
    blocks(sizes, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]])
}

fn half_blocks(dim: usize, top: [f64; 2], bottom: [f64; 2]) -> DMatrix<f64> {
    blocks(&[dim / 2, dim / 2], &[&top, &bottom])
}

/// `D` with `d_tt = t/5` (d = 10) or `t/10` (d = 20).
fn graded_diag(dim: usize) -> DVector<f64> {
    let denom = if dim == 10 { 5.0 } else { 10.0 };
    DVector::from_fn(dim, |t, _| (t + 1) as f64 / denom)
}

fn lower_triangular(dim: usize, delta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| if j <= i { delta } else { 0.0 })
}

/// Population parameters of both components for a design.
pub fn components(design: Design, dim: usize, delta: f64) -> Result<Vec<ComponentTruth>> {
    check_dim(dim)?;
    let d = dim;
    let comps = match design {
        Design::LowerTriangularShift => {
            let base = ComponentTruth {
                mean: DMatrix::zeros(d, d),
                row_loading: shift_row_loading(d),
                row_diag: graded_diag(d),
                col_loading: half_blocks(d, [-1.0, 0.0], [1.0, 1.0]),
                col_diag: graded_diag(d),
            };
            let second = ComponentTruth { mean: lower_triangular(d, delta), ..base.clone() };
            vec![base, second]
        }
        Design::MixedConstraints => {
            let base = ComponentTruth {
                mean: DMatrix::zeros(d, d),
                row_loading: shift_row_loading(d),
                row_diag: DVector::from_element(d, 1.0),
                col_loading: half_blocks(d, [-1.0, 0.0], [1.0, 1.0]),
                col_diag: graded_diag(d),
            };
            let second = ComponentTruth {
                mean: lower_triangular(d, delta),
                row_diag: DVector::from_element(d, 2.0),
                col_loading: half_blocks(d, [1.0, -1.0], [1.0, 0.0]),
                ..base.clone()
            };
            vec![base, second]
        }
        Design::DiagonalMeans => {
            let (sizes, spikes): (&[usize], &[(usize, f64)]) = if d == 10 {
                (&[3, 2, 2, 3], &[(2, 2.0), (9, 4.0)])
            } else {
                (&[6, 4, 4, 6], &[(2, 4.0), (9, 2.0), (12, 3.0), (19, 5.0)])
            };
            let row_loading =
                blocks(sizes, &[&[1.0, 0.0, 0.0], &[1.0, 0.0, 1.0], &[-1.0, -1.0, -1.0], &[-1.0, -1.0, 0.0]]);
            let mut row_diag = DVector::from_element(d, 1.0);
            for &(pos, v) in spikes {
                row_diag[pos - 1] = v;
            }
            let base = ComponentTruth {
                mean: DMatrix::from_diagonal_element(d, d, delta),
                row_loading,
                row_diag,
                col_loading: half_blocks(d, [-1.0, 0.0], [1.0, 1.0]),
                col_diag: DVector::from_element(d, 1.0),
            };
            let second = ComponentTruth { col_loading: half_blocks(d, [-1.0, 1.0], [1.0, 0.0]), ..base.clone() };
            vec![base, second]
        }
    };
    Ok(comps)
}

/// Draws `n_obs` observations with equal mixing weights.
pub fn generate(design: Design, dim: usize, delta: f64, n_obs: usize, seed: u64) -> Result<(DataSet, Truth)> {
    if n_obs == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let comps = components(design, dim, delta)?;
    let mut stream = rng::stream(seed);
    let mut labels = Vec::with_capacity(n_obs);
    let mut obs = Vec::with_capacity(n_obs);
    for _ in 0..n_obs {
        let g = usize::from(stream.random_bool(0.5));
        labels.push(g);
        obs.push(MatrixObservation::new(comps[g].draw(&mut stream))?);
    }
    let spec = ModelSpec::new(2, 3, 2, design.true_models(), dim, dim)?;
    Ok((DataSet::new(obs)?, Truth { labels, spec, components: comps }))
}

pub fn generate_sim1(dim: usize, delta: f64, n_obs: usize, seed: u64) -> Result<(DataSet, Truth)> {
    generate(Design::LowerTriangularShift, dim, delta, n_obs, seed)
}

pub fn generate_sim2(dim: usize, delta: f64, n_obs: usize, seed: u64) -> Result<(DataSet, Truth)> {
    generate(Design::MixedConstraints, dim, delta, n_obs, seed)
}

pub fn generate_sim3(dim: usize, delta: f64, n_obs: usize, seed: u64) -> Result<(DataSet, Truth)> {
    generate(Design::DiagonalMeans, dim, delta, n_obs, seed)
}

/// What the search selected on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub selected: ModelSpec,
    pub bic: f64,
    pub ari: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub design: SimDesign,
    pub correct_groups: usize,
    pub correct_row_rank: usize,
    pub correct_col_rank: usize,
    pub correct_row_model: usize,
    pub correct_col_model: usize,
    pub mean_ari: f64,
    pub sd_ari: f64,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<(usize, String)>,
}

impl ScoreTable {
    pub fn scored(&self) -> usize {
        self.records.len()
    }

    /// Tab-separated row: design, d, delta, N, counts, mean ARI, sd.
    pub fn tsv(&self) -> String {
        let d = &self.design;
        format!(
            "sim\td\tdelta\tN\treplicates\tG\tq\tr\tRM\tCM\tmeanARI\tsdARI\tfailures\n{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\n",
            d.design.id(),
            d.dim,
            d.delta,
            d.n_obs,
            d.replicates,
            self.correct_groups,
            self.correct_row_rank,
            self.correct_col_rank,
            self.correct_row_model,
            self.correct_col_model,
            self.mean_ari,
            self.sd_ari,
            self.failures.len()
        )
    }

    /// Fixed-width table with columns `G q r RM CM ARI(sd)`.
    pub fn formatted(&self) -> String {
        let d = &self.design;
        let mut out = String::new();
        let _ = writeln!(out, "Simulation {} (d={}, {} replicates)", d.design.id(), d.dim, d.replicates);
        let _ = writeln!(out, "{:>6} {:>5} {:>3} {:>3} {:>3} {:>3} {:>3}  ARI(sd)", "delta", "N", "G", "q", "r", "RM", "CM");
        let _ = writeln!(
            out,
            "{:>6} {:>5} {:>3} {:>3} {:>3} {:>3} {:>3}  {:.3}({:.2})",
            d.delta,
            d.n_obs,
            self.correct_groups,
            self.correct_row_rank,
            self.correct_col_rank,
            self.correct_row_model,
            self.correct_col_model,
            self.mean_ari,
            self.sd_ari
        );
        out
    }
}

/// Sample mean and sample standard deviation (divisor `R - 1`, 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    rng::derive_seed(base_seed, &[0x5245_504c, replicate as u64])
}

/// Generates each replicate, runs the grid search and scores the selection.
pub fn run_study(design: &SimDesign, grid: &SearchGrid, options: &SearchOptions) -> Result<ScoreTable> {
    let truth_spec = ModelSpec::new(2, 3, 2, design.design.true_models(), design.dim, design.dim)?;
    if !grid.contains(&truth_spec) {
        return Err(Error::InvalidArgument(format!("grid does not contain the true model {truth_spec}")));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for rep in 0..design.replicates {
        let seed = replicate_seed(design.base_seed, rep);
        let outcome = generate(design.design, design.dim, design.delta, design.n_obs, seed).and_then(|(data, truth)| {
            let opts = SearchOptions { base_seed: rng::derive_seed(seed, &[1]), ..*options };
            let result = grid_search(&data, grid, &opts)?;
            let score = ari(&result.best.map_labels(), &truth.labels)?;
            Ok(ReplicateRecord { replicate: rep, selected: result.best.spec, bic: result.best.bic, ari: score })
        });
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    Ok(score_records(*design, &truth_spec, records, failures))
}

pub fn score_records(
    design: SimDesign,
    truth: &ModelSpec,
    records: Vec<ReplicateRecord>,
    failures: Vec<(usize, String)>,
) -> ScoreTable {
    let count = |f: &dyn Fn(&ModelSpec) -> bool| records.iter().filter(|r| f(&r.selected)).count();
    let aris: Vec<f64> = records.iter().map(|r| r.ari).collect();
    let (mean_ari, sd_ari) = mean_sd(&aris);
    ScoreTable {
        design,
        correct_groups: count(&|s| s.groups == truth.groups),
        correct_row_rank: count(&|s| s.row_rank == truth.row_rank),
        correct_col_rank: count(&|s| s.col_rank == truth.col_rank),
        correct_row_model: count(&|s| s.row_model == truth.row_model),
        correct_col_model: count(&|s| s.col_model == truth.col_model),
        mean_ari,
        sd_ari,
        records,
        failures,
    }
}

/// `C` letter for constrained in the reporting tables.
pub fn model_letters(t: ConstraintTriple) -> String {
    t.code()
}
