//! Jitter and partial labelling of a dataset.

use std::collections::BTreeMap;

use matfa::{rng, DataSet, MatrixObservation};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::CliError;

/// Adds i.i.d. uniform noise on `[-amplitude, amplitude]` to every entry.
pub fn add_jitter(data: &DataSet, amplitude: f64, seed: u64) -> Result<DataSet, CliError> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(CliError::Args(format!("jitter amplitude must be non-negative, got {amplitude}")));
    }
    if amplitude == 0.0 {
        return Ok(data.clone());
    }
    let mut stream = rng::stream(seed);
    let obs = data
        .observations()
        .iter()
        .map(|x| {
            let noisy = x.values().map(|v| v + stream.random_range(-amplitude..=amplitude));
            MatrixObservation::new(noisy)
        })
        .collect::<matfa::Result<Vec<_>>>()
        .map_err(|e| CliError::Data(e.to_string()))?;
    DataSet::with_labels(obs, data.known_labels().to_vec()).map_err(|e| CliError::Data(e.to_string()))
}

/// Class values in ascending order; position is the component index used for clamping.
pub fn class_index(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes.into_iter().enumerate().map(|(i, c)| (c, i)).collect()
}

/// Marks `⌊fraction · N⌋` observations as labelled, stratified by class.
///
/// Each class contributes `⌊fraction · N_c⌋` observations, and any remainder
/// goes to the classes with the largest fractional parts (ties to the smaller
/// class value). Class values map to components in ascending order.
pub fn apply_supervision(
    data: &DataSet,
    labels: Option<&[usize]>,
    fraction: f64,
    seed: u64,
) -> Result<DataSet, CliError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CliError::Args(format!("supervision fraction must lie in [0, 1], got {fraction}")));
    }
    if fraction == 0.0 {
        return Ok(data.without_labels());
    }
    let labels = labels.ok_or_else(|| CliError::Args("supervision requires --labels".into()))?;
    if labels.len() != data.len() {
        return Err(CliError::Data(format!("{} labels for {} observations", labels.len(), data.len())));
    }
    let index = class_index(labels);
    let total = (fraction * data.len() as f64).floor() as usize;

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let mut quota: Vec<(usize, usize, f64)> = members
        .iter()
        .map(|(&c, m)| {
            let exact = fraction * m.len() as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(quota[a].0.cmp(&quota[b].0)));
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        quota[k].1 += 1;
    }

    let mut stream = rng::stream(seed);
    let mut known = vec![None; data.len()];
    for (class, take, _) in quota {
        let mut idx = members[&class].clone();
        idx.shuffle(&mut stream);
        for &i in idx.iter().take(take) {
            known[i] = Some(index[&class]);
        }
    }
    DataSet::with_labels(data.observations().to_vec(), known).map_err(|e| CliError::Data(e.to_string()))
}
