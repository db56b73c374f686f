//! The 8 x 8 constraint lattice and the parameter containers it governs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One side (rows or columns) of a model: whether the loading matrix is shared
/// across components, whether the diagonal scale is shared, and whether it is
/// isotropic. Written as a three-letter code with `C` for constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintTriple {
    pub shared_loading: bool,
    pub shared_scale: bool,
    pub isotropic: bool,
}

impl ConstraintTriple {
    pub const fn new(shared_loading: bool, shared_scale: bool, isotropic: bool) -> Self {
        Self { shared_loading, shared_scale, isotropic }
    }

    /// Canonical order CCC, CCU, CUC, CUU, UCC, UCU, UUC, UUU.
    pub const ALL: [ConstraintTriple; 8] = [
        Self::new(true, true, true),
        Self::new(true, true, false),
        Self::new(true, false, true),
        Self::new(true, false, false),
        Self::new(false, true, true),
        Self::new(false, true, false),
        Self::new(false, false, true),
        Self::new(false, false, false),
    ];

    pub const UUU: ConstraintTriple = Self::new(false, false, false);

    pub fn index(self) -> usize {
        (usize::from(!self.shared_loading) << 2) | (usize::from(!self.shared_scale) << 1) | usize::from(!self.isotropic)
    }

    pub fn code(self) -> String {
        let c = |b: bool| if b { 'C' } else { 'U' };
        [c(self.shared_loading), c(self.shared_scale), c(self.isotropic)].iter().collect()
    }
}

impl fmt::Display for ConstraintTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for ConstraintTriple {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let flags: Vec<bool> = s
            .trim()
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'C' => Ok(true),
                'U' => Ok(false),
                other => Err(Error::InvalidArgument(format!("bad constraint letter '{other}' in '{s}'"))),
            })
            .collect::<Result<_>>()?;
        match flags.as_slice() {
            &[a, b, c] => Ok(Self::new(a, b, c)),
            _ => Err(Error::InvalidArgument(format!("constraint code '{s}' must have three letters"))),
        }
    }
}

/// A row model and a column model, written `XYZ-XYZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelPair {
    pub row: ConstraintTriple,
    pub col: ConstraintTriple,
}

impl fmt::Display for ModelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.row, self.col)
    }
}

impl FromStr for ModelPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (row, col) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("model code '{s}' must look like CCU-UCC")))?;
        Ok(Self { row: row.parse()?, col: col.parse()? })
    }
}

/// All 64 row/column model pairs, row-major over the canonical code order.
pub fn enumerate_models() -> Vec<ModelPair> {
    ConstraintTriple::ALL
        .iter()
        .flat_map(|&row| ConstraintTriple::ALL.iter().map(move |&col| ModelPair { row, col }))
        .collect()
}

/// One fully specified model: component count, the two loading ranks, the
/// constraint pair, and the data shape it applies to.
///
/// `row_rank` is the number of columns of the `n x q` row-scale loading `Λ`;
/// `col_rank` the number of columns of the `p x r` column-scale loading `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub groups: usize,
    pub row_rank: usize,
    pub col_rank: usize,
    pub row_model: ConstraintTriple,
    pub col_model: ConstraintTriple,
    pub n: usize,
    pub p: usize,
}

impl ModelSpec {
    pub fn new(
        groups: usize,
        row_rank: usize,
        col_rank: usize,
        models: ModelPair,
        n: usize,
        p: usize,
    ) -> Result<Self> {
        if groups == 0 {
            return Err(Error::InvalidArgument("need at least one component".into()));
        }
        if row_rank == 0 || row_rank >= n {
            return Err(Error::InvalidArgument(format!("q = {row_rank} must satisfy 1 <= q < n = {n}")));
        }
        if col_rank == 0 || col_rank >= p {
            return Err(Error::InvalidArgument(format!("r = {col_rank} must satisfy 1 <= r < p = {p}")));
        }
        Ok(Self { groups, row_rank, col_rank, row_model: models.row, col_model: models.col, n, p })
    }

    pub fn models(&self) -> ModelPair {
        ModelPair { row: self.row_model, col: self.col_model }
    }

    pub fn free_params(&self) -> usize {
        count_free_params(self)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} G={} q={} r={}", self.models(), self.groups, self.row_rank, self.col_rank)
    }
}

fn scale_params(model: ConstraintTriple, dim: usize, rank: usize, groups: usize) -> usize {
    let loading_block = dim * rank + dim - rank * (rank.saturating_sub(1)) / 2;
    let loadings = if model.shared_loading { loading_block } else { groups * loading_block };
    let scales = match (model.shared_scale, model.isotropic) {
        (true, true) => 1,
        (true, false) => dim,
        (false, true) => groups,
        (false, false) => dim * groups,
    };
    loadings + scales
}

/// Row-side scale parameter count, e.g. `[nq+n-q(q-1)/2]+1` for CCC.
pub fn count_row_scale_params(model: ConstraintTriple, n: usize, q: usize, groups: usize) -> usize {
    scale_params(model, n, q, groups)
}

/// Column-side count; the row formula with `n -> p`, `q -> r`.
pub fn count_col_scale_params(model: ConstraintTriple, p: usize, r: usize, groups: usize) -> usize {
    scale_params(model, p, r, groups)
}

/// `(G-1) + Gnp` plus both scale counts.
pub fn count_free_params(spec: &ModelSpec) -> usize {
    let g = spec.groups;
    (g - 1)
        + g * spec.n * spec.p
        + count_row_scale_params(spec.row_model, spec.n, spec.row_rank, g)
        + count_col_scale_params(spec.col_model, spec.p, spec.col_rank, g)
}

/// Symbolic scale-count formula with `dim`/`rank` as the dimension and rank
/// symbols, e.g. `G[nq+n-q(q-1)/2]+nG`.
pub fn scale_count_formula(model: ConstraintTriple, dim: &str, rank: &str) -> String {
    let block = format!("[{dim}{rank}+{dim}-{rank}({rank}-1)/2]");
    let loadings = if model.shared_loading { block } else { format!("G{block}") };
    let scales = match (model.shared_scale, model.isotropic) {
        (true, true) => "1".to_string(),
        (true, false) => dim.to_string(),
        (false, true) => "G".to_string(),
        (false, false) => format!("{dim}G"),
    };
    format!("{loadings}+{scales}")
}

/// Storage for a quantity that is either shared by all components or held per component.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot<T> {
    Shared(T),
    PerGroup(Vec<T>),
}

impl<T> Slot<T> {
    pub fn get(&self, g: usize) -> &T {
        match self {
            Slot::Shared(v) => v,
            Slot::PerGroup(vs) => &vs[g],
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, Slot::Shared(_))
    }

    pub fn stored(&self) -> usize {
        match self {
            Slot::Shared(_) => 1,
            Slot::PerGroup(vs) => vs.len(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let slice = match self {
            Slot::Shared(v) => std::slice::from_ref(v),
            Slot::PerGroup(vs) => vs.as_slice(),
        };
        slice.iter()
    }
}

/// A diagonal scale matrix, stored as its diagonal or as a single multiple of the identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Scale {
    Diagonal(DVector<f64>),
    Isotropic(f64),
}

impl Scale {
    pub fn entry(&self, j: usize) -> f64 {
        match self {
            Scale::Diagonal(v) => v[j],
            Scale::Isotropic(s) => *s,
        }
    }

    pub fn to_diagonal(&self, dim: usize) -> DVector<f64> {
        match self {
            Scale::Diagonal(v) => v.clone(),
            Scale::Isotropic(s) => DVector::from_element(dim, *s),
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self, Scale::Isotropic(_))
    }

    fn min_entry(&self) -> f64 {
        match self {
            Scale::Diagonal(v) => v.min(),
            Scale::Isotropic(s) => *s,
        }
    }
}

/// Loadings and diagonal scales for one side of every component.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSide {
    pub loadings: Slot<DMatrix<f64>>,
    pub scales: Slot<Scale>,
}

impl FactorSide {
    pub fn dim(&self) -> usize {
        self.loadings.get(0).nrows()
    }

    pub fn rank(&self) -> usize {
        self.loadings.get(0).ncols()
    }

    /// Projects onto `model` by averaging across components wherever the model shares a slot.
    pub fn conform(&self, model: ConstraintTriple, groups: usize) -> FactorSide {
        let dim = self.dim();
        let loadings = if model.shared_loading {
            let mut acc = DMatrix::zeros(dim, self.rank());
            for g in 0..groups {
                acc += self.loadings.get(g);
            }
            Slot::Shared(acc / groups as f64)
        } else {
            Slot::PerGroup((0..groups).map(|g| self.loadings.get(g).clone()).collect())
        };
        let diag = |g: usize| self.scales.get(g).to_diagonal(dim);
        let make = |v: DVector<f64>| if model.isotropic { Scale::Isotropic(v.mean()) } else { Scale::Diagonal(v) };
        let scales = if model.shared_scale {
            let mut acc = DVector::zeros(dim);
            for g in 0..groups {
                acc += diag(g);
            }
            Slot::Shared(make(acc / groups as f64))
        } else {
            Slot::PerGroup((0..groups).map(|g| make(diag(g))).collect())
        };
        FactorSide { loadings, scales }
    }

    fn validate(&self, model: ConstraintTriple, groups: usize, dim: usize, rank: usize, side: &str) -> Result<()> {
        if self.loadings.is_shared() != model.shared_loading
            || (!model.shared_loading && self.loadings.stored() != groups)
        {
            return Err(Error::InvalidArgument(format!("{side} loadings do not follow {model}")));
        }
        if self.scales.is_shared() != model.shared_scale || (!model.shared_scale && self.scales.stored() != groups) {
            return Err(Error::InvalidArgument(format!("{side} scales do not follow {model}")));
        }
        for l in self.loadings.iter() {
            if l.shape() != (dim, rank) {
                return Err(Error::Dimension(format!(
                    "{side} loading is {}x{}, expected {dim}x{rank}",
                    l.nrows(),
                    l.ncols()
                )));
            }
        }
        for s in self.scales.iter() {
            if s.is_isotropic() != model.isotropic {
                return Err(Error::InvalidArgument(format!("{side} scale isotropy does not follow {model}")));
            }
            if let Scale::Diagonal(v) = s {
                if v.len() != dim {
                    return Err(Error::Dimension(format!("{side} scale has {} entries, expected {dim}", v.len())));
                }
            }
            if !(s.min_entry() > 0.0) {
                return Err(Error::NotPositiveDefinite(format!("{side} scale")));
            }
        }
        Ok(())
    }
}

/// Mixing weights, means, and both factor sides.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<DMatrix<f64>>,
    pub rows: FactorSide,
    pub cols: FactorSide,
}

impl MixtureParams {
    pub fn groups(&self) -> usize {
        self.weights.len()
    }

    /// `Σ*_g = Λ_g Λ_g' + Σ_g`.
    pub fn row_scale(&self, g: usize) -> DMatrix<f64> {
        dense_scale(&self.rows, g)
    }

    /// `Ψ*_g = Δ_g Δ_g' + Ψ_g`.
    pub fn col_scale(&self, g: usize) -> DMatrix<f64> {
        dense_scale(&self.cols, g)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let g = spec.groups;
        if self.weights.len() != g || self.means.len() != g {
            return Err(Error::Dimension(format!("expected {g} components")));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("mixing weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixing weights sum to {total}")));
        }
        if self.means.iter().any(|m| m.shape() != (spec.n, spec.p)) {
            return Err(Error::Dimension("mean matrix shape".into()));
        }
        self.rows.validate(spec.row_model, g, spec.n, spec.row_rank, "row")?;
        self.cols.validate(spec.col_model, g, spec.p, spec.col_rank, "column")
    }
}

fn dense_scale(side: &FactorSide, g: usize) -> DMatrix<f64> {
    let l = side.loadings.get(g);
    let mut m = l * l.transpose();
    let s = side.scales.get(g);
    for j in 0..m.nrows() {
        m[(j, j)] += s.entry(j);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(code: &str) -> ConstraintTriple {
        code.parse().unwrap()
    }

    #[test]
    fn sixty_four_models() {
        let models = enumerate_models();
        assert_eq!(models.len(), 64);
        assert_eq!(models[0].to_string(), "CCC-CCC");
        assert_eq!(models.iter().filter(|m| m.to_string() == "UUU-UUU").count(), 1);
        let mut sorted = models.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 64);
        for (k, tr) in ConstraintTriple::ALL.iter().enumerate() {
            assert_eq!(tr.index(), k);
        }
    }

    #[test]
    fn code_round_trip() {
        let m: ModelPair = "CCU-ucc".parse().unwrap();
        assert_eq!(m.to_string(), "CCU-UCC");
        assert!("CCX-CCC".parse::<ModelPair>().is_err());
        assert!("CC-CCC".parse::<ModelPair>().is_err());
        assert!("CCCCCC".parse::<ModelPair>().is_err());
    }

    #[test]
    fn table_values() {
        assert_eq!(count_row_scale_params(t("CCC"), 10, 3, 2), 38);
        assert_eq!(count_row_scale_params(t("UUU"), 10, 3, 2), 94);
        assert_eq!(count_row_scale_params(t("CCU"), 2, 1, 3), 6);
        assert_eq!(count_col_scale_params(t("CCC"), 10, 2, 2), 30);
        assert_eq!(count_col_scale_params(t("UCU"), 10, 2, 2), 68);
        assert_eq!(count_col_scale_params(t("CUC"), 4, 1, 3), 11);
    }

    #[test]
    fn free_parameter_totals() {
        let s = ModelSpec::new(1, 1, 1, "CCC-CCC".parse().unwrap(), 2, 2).unwrap();
        assert_eq!(count_free_params(&s), 14);
        let s = ModelSpec::new(2, 3, 2, "UUU-UUU".parse().unwrap(), 10, 10).unwrap();
        assert_eq!(count_free_params(&s), 373);
    }

    #[test]
    fn relaxing_a_constraint_never_removes_parameters() {
        for g in 1..=4 {
            for (n, q) in [(2, 1), (5, 2), (10, 3), (20, 5)] {
                for m in enumerate_models() {
                    let base = ModelSpec::new(g, q, 1, m, n, 3).unwrap();
                    for side in 0..2 {
                        for bit in 0..3 {
                            let mut relaxed = base;
                            let tr = if side == 0 { &mut relaxed.row_model } else { &mut relaxed.col_model };
                            let flag = match bit {
                                0 => &mut tr.shared_loading,
                                1 => &mut tr.shared_scale,
                                _ => &mut tr.isotropic,
                            };
                            if *flag {
                                *flag = false;
                                assert!(count_free_params(&relaxed) >= count_free_params(&base));
                            }
                        }
                    }
                    let ccc = ModelSpec::new(g, q, 1, "CCC-CCC".parse().unwrap(), n, 3).unwrap();
                    assert!(count_free_params(&ccc) <= count_free_params(&base));
                }
            }
        }
    }

    #[test]
    fn spec_rejects_bad_ranks() {
        let m = "CCC-CCC".parse().unwrap();
        assert!(ModelSpec::new(1, 2, 1, m, 2, 3).is_err());
        assert!(ModelSpec::new(1, 1, 3, m, 2, 3).is_err());
        assert!(ModelSpec::new(0, 1, 1, m, 2, 3).is_err());
        assert!(ModelSpec::new(1, 0, 1, m, 2, 3).is_err());
    }

    #[test]
    fn conform_shares_and_averages() {
        let side = FactorSide {
            loadings: Slot::PerGroup(vec![DMatrix::from_element(3, 1, 1.0), DMatrix::from_element(3, 1, 3.0)]),
            scales: Slot::PerGroup(vec![
                Scale::Diagonal(DVector::from_vec(vec![1.0, 2.0, 3.0])),
                Scale::Diagonal(DVector::from_vec(vec![3.0, 4.0, 5.0])),
            ]),
        };
        let c = side.conform(t("CCC"), 2);
        assert_eq!(c.loadings, Slot::Shared(DMatrix::from_element(3, 1, 2.0)));
        assert_eq!(c.scales, Slot::Shared(Scale::Isotropic(3.0)));
        let c = side.conform(t("CUC"), 2);
        assert_eq!(c.scales, Slot::PerGroup(vec![Scale::Isotropic(2.0), Scale::Isotropic(4.0)]));
        assert!(c.validate(t("CUC"), 2, 3, 1, "row").is_ok());
        assert!(c.validate(t("CUU"), 2, 3, 1, "row").is_err());
    }
}
