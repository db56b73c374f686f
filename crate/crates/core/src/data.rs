use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matnorm::MatrixObservation;

/// `N` observations of a common `n x p` shape, with optional known labels.
///
/// Labels are zero-based component indices; `None` marks an unlabeled
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    observations: Vec<MatrixObservation>,
    known_labels: Vec<Option<usize>>,
}

impl DataSet {
    pub fn new(observations: Vec<MatrixObservation>) -> Result<Self> {
        let n = observations.len();
        Self::with_labels(observations, vec![None; n])
    }

    pub fn with_labels(observations: Vec<MatrixObservation>, known_labels: Vec<Option<usize>>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::InvalidArgument("data set needs at least one observation".into()))?;
        let (n, p) = (first.n(), first.p());
        if let Some(i) = observations.iter().position(|x| x.n() != n || x.p() != p) {
            return Err(Error::Dimension(format!(
                "observation {i} is {}x{}, expected {n}x{p}",
                observations[i].n(),
                observations[i].p()
            )));
        }
        if known_labels.len() != observations.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} observations",
                known_labels.len(),
                observations.len()
            )));
        }
        Ok(Self { observations, known_labels })
    }

    pub fn from_matrices(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let obs = matrices.into_iter().map(MatrixObservation::new).collect::<Result<Vec<_>>>()?;
        Self::new(obs)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n(&self) -> usize {
        self.observations[0].n()
    }

    pub fn p(&self) -> usize {
        self.observations[0].p()
    }

    pub fn observations(&self) -> &[MatrixObservation] {
        &self.observations
    }

    pub fn known_labels(&self) -> &[Option<usize>] {
        &self.known_labels
    }

    pub fn labeled_count(&self) -> usize {
        self.known_labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn set_known_labels(&mut self, labels: Vec<Option<usize>>) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::Dimension(format!("{} labels for {} observations", labels.len(), self.len())));
        }
        self.known_labels = labels;
        Ok(())
    }

    pub fn without_labels(&self) -> Self {
        Self { observations: self.observations.clone(), known_labels: vec![None; self.len()] }
    }

    pub(crate) fn check_labels(&self, groups: usize) -> Result<()> {
        match self.known_labels.iter().flatten().find(|&&l| l >= groups) {
            Some(l) => Err(Error::InvalidArgument(format!("known label {} exceeds {groups} components", l + 1))),
            None => Ok(()),
        }
    }
}
