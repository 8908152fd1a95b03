use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How child impurities are combined when scoring a split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitCriterion {
    /// `G(left) + G(right)`, children not weighted by size.
    #[default]
    Unweighted,
    /// `(n_l G(left) + n_r G(right)) / n`.
    Weighted,
}

/// `2 p (1 - p)` for `pos` positives out of `n`.
#[inline]
pub(crate) fn gini_counts(pos: usize, n: usize) -> f64 {
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

fn positives(data: &[Vec<bool>], k: usize) -> usize {
    data.iter().filter(|v| v[k]).count()
}

/// Binary Gini impurity of class `k` over presence vectors.
pub fn gini_k(data: &[Vec<bool>], k: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::param("gini of an empty set"));
    }
    Ok(gini_counts(positives(data, k), data.len()))
}

/// Impurity of class `k` after a split: the plain sum of both children.
pub fn split_gini_k(left: &[Vec<bool>], right: &[Vec<bool>], k: usize) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::param("split with an empty side"));
    }
    Ok(gini_k(left, k)? + gini_k(right, k)?)
}

/// Mean over classes of the per-class impurity decrease.
pub fn score_split(parent: &[Vec<bool>], left: &[Vec<bool>], right: &[Vec<bool>]) -> Result<f64> {
    score_split_with(SplitCriterion::Unweighted, parent, left, right)
}

pub fn score_split_with(
    criterion: SplitCriterion,
    parent: &[Vec<bool>],
    left: &[Vec<bool>],
    right: &[Vec<bool>],
) -> Result<f64> {
    if parent.is_empty() || left.is_empty() || right.is_empty() {
        return Err(Error::param(
            "split scoring needs non-empty parent and children",
        ));
    }
    let c = parent[0].len();
    if left.iter().chain(right).any(|v| v.len() != c) {
        return Err(Error::DimensionMismatch(
            "presence vectors of different lengths".into(),
        ));
    }
    let pc: Vec<usize> = (0..c).map(|k| positives(parent, k)).collect();
    let lc: Vec<usize> = (0..c).map(|k| positives(left, k)).collect();
    let rc: Vec<usize> = (0..c).map(|k| positives(right, k)).collect();
    Ok(score_counts(
        criterion,
        &pc,
        parent.len(),
        &lc,
        left.len(),
        &rc,
        right.len(),
    ))
}

/// Count-based form used during training.
pub(crate) fn score_counts(
    criterion: SplitCriterion,
    parent: &[usize],
    n: usize,
    left: &[usize],
    nl: usize,
    right: &[usize],
    nr: usize,
) -> f64 {
    let c = parent.len();
    let mut total = 0.0;
    for k in 0..c {
        let (gl, gr) = (gini_counts(left[k], nl), gini_counts(right[k], nr));
        let child = match criterion {
            SplitCriterion::Unweighted => gl + gr,
            SplitCriterion::Weighted => (nl as f64 * gl + nr as f64 * gr) / n as f64,
        };
        total += gini_counts(parent[k], n) - child;
    }
    total / c as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(bits: &[u8]) -> Vec<Vec<bool>> {
        bits.iter().map(|&b| vec![b == 1]).collect()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini_k(&col(&[1, 1, 1]), 0).unwrap(), 0.0);
        assert_eq!(gini_k(&col(&[1, 0, 1, 0]), 0).unwrap(), 0.5);
        assert_eq!(gini_k(&col(&[1, 0, 0, 0, 0, 1, 0, 0]), 0).unwrap(), 0.375);
        assert!(gini_k(&[], 0).is_err());
    }

    #[test]
    fn split_values() {
        assert_eq!(split_gini_k(&col(&[1, 1]), &col(&[0]), 0).unwrap(), 0.0);
        assert_eq!(split_gini_k(&col(&[1, 0]), &col(&[0, 1]), 0).unwrap(), 1.0);
        let v = split_gini_k(&col(&[1, 0, 1, 0]), &col(&[1, 0, 0, 0]), 0).unwrap();
        assert!((v - 0.875).abs() < 1e-15);
        assert!(split_gini_k(&col(&[1]), &[], 0).is_err());
    }

    #[test]
    fn replicated_proportions_score_negative() {
        let parent = col(&[1, 0, 1, 0]);
        let half = col(&[1, 0]);
        let s = score_split(&parent, &half, &half).unwrap();
        assert!((s + 0.5).abs() < 1e-15);
        let w = score_split_with(SplitCriterion::Weighted, &parent, &half, &half).unwrap();
        assert!(w.abs() < 1e-15);
    }
}
