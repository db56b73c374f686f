//! External agreement measures between two labelings.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn contingency(a: &[usize], b: &[usize]) -> (Vec<Vec<u64>>, Vec<u64>, Vec<u64>) {
    let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &l in labels {
            let next = m.len();
            m.entry(l).or_insert(next);
        }
        m
    };
    let (ia, ib) = (index(a), index(b));
    let mut table = vec![vec![0u64; ib.len()]; ia.len()];
    for (x, y) in a.iter().zip(b) {
        table[ia[x]][ib[y]] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..ib.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    (table, rows, cols)
}

fn pairs(k: u64) -> f64 {
    (k * k.saturating_sub(1)) as f64 / 2.0
}

/// Hubert–Arabie adjusted Rand index.
///
/// Returns 1 when both partitions are a single cluster or otherwise agree
/// perfectly (the chance-corrected ratio is 0/0 only in that case).
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("ARI needs at least two observations".into()));
    }
    let (table, rows, cols) = contingency(a, b);
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.iter().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64);
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Smallest misclassified fraction over all one-to-one matchings of predicted
/// labels onto true labels. Exhaustive for up to six labels per side, the
/// Hungarian algorithm above that.
pub fn misclassification_rate(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "label lengths differ: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("no labels".into()));
    }
    let (table, _, _) = contingency(predicted, truth);
    let size = table.len().max(table[0].len());
    let mut square = vec![vec![0i64; size]; size];
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            square[i][j] = c as i64;
        }
    }
    let matched = if size <= 6 { best_matching_exhaustive(&square) } else { best_matching_hungarian(&square) };
    Ok(1.0 - matched as f64 / predicted.len() as f64)
}

fn best_matching_exhaustive(w: &[Vec<i64>]) -> i64 {
    fn go(w: &[Vec<i64>], row: usize, used: &mut Vec<bool>) -> i64 {
        if row == w.len() {
            return 0;
        }
        let mut best = i64::MIN;
        for j in 0..w.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(w[row][j] + go(w, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(w, 0, &mut vec![false; w.len()])
}

/// Maximum-weight perfect matching on a square matrix (Kuhn–Munkres, O(n³)).
fn best_matching_hungarian(w: &[Vec<i64>]) -> i64 {
    let n = w.len();
    let max = w.iter().flatten().copied().max().unwrap_or(0);
    // minimize cost = max - weight; 1-based potentials
    let cost = |i: usize, j: usize| max - w[i - 1][j - 1];
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| w[owner[j] - 1][j - 1]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pair-counting ARI straight from the definition over all `N choose 2` pairs.
    fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                total += 1.0;
                if sa && sb {
                    both += 1.0;
                }
                if sa {
                    only_a += 1.0;
                }
                if sb {
                    only_b += 1.0;
                }
            }
        }
        let expected = only_a * only_b / total;
        (both - expected) / (0.5 * (only_a + only_b) - expected)
    }

    #[test]
    fn documented_examples() {
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[1, 1, 2, 2], &[2, 2, 1, 1]).unwrap(), 1.0);
        let oracle = ari_by_pairs(&[1, 1, 2, 2], &[1, 1, 2, 3]);
        assert!((oracle - 4.0 / 7.0).abs() < 1e-12);
        assert!((ari(&[1, 1, 2, 2], &[1, 1, 2, 3]).unwrap() - 4.0 / 7.0).abs() < 1e-12);
        assert!(ari(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn misclassification_examples() {
        assert_eq!(misclassification_rate(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 0.0);
        assert_eq!(misclassification_rate(&[1, 0, 0, 1], &[0, 1, 1, 0]).unwrap(), 0.0);
        assert!((misclassification_rate(&[1, 1, 1, 2], &[1, 1, 2, 2]).unwrap() - 0.25).abs() < 1e-15);
        // more predicted groups than true groups
        assert!((misclassification_rate(&[0, 0, 1, 2], &[0, 0, 1, 1]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hungarian_agrees_with_enumeration() {
        let mut s = crate::rng::stream(4);
        use rand::Rng;
        for _ in 0..200 {
            let k = s.random_range(1..=6);
            let w: Vec<Vec<i64>> = (0..k).map(|_| (0..k).map(|_| s.random_range(0..20)).collect()).collect();
            assert_eq!(best_matching_exhaustive(&w), best_matching_hungarian(&w));
        }
    }

    proptest! {
        #[test]
        fn ari_matches_pair_oracle_and_is_symmetric(
            a in proptest::collection::vec(0usize..4, 8..40),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut s = crate::rng::stream(seed);
            let b: Vec<usize> = a.iter().map(|_| s.random_range(0..3)).collect();
            let v = ari(&a, &b).unwrap();
            prop_assert!((v - ari(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(v <= 1.0 + 1e-12);
            let oracle = ari_by_pairs(&a, &b);
            if oracle.is_finite() {
                prop_assert!((v - oracle).abs() < 1e-9);
            }
        }

        #[test]
        fn relabeling_is_invisible(a in proptest::collection::vec(0usize..5, 4..30)) {
            let b: Vec<usize> = a.iter().map(|l| 10 - l).collect();
            prop_assert!((ari(&a, &b).unwrap() - 1.0).abs() < 1e-12);
            prop_assert_eq!(misclassification_rate(&b, &a).unwrap(), 0.0);
        }
    }
}
