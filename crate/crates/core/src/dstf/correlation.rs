use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stf::TextonForest;

/// Variance below this is treated as zero.
const ZERO_VARIANCE: f64 = 1e-30;

/// C x T matrix whose column `i` is the class distribution of leaf `i`, leaves
/// numbered forest-wide.
pub fn collect_leaf_observations(forest: &TextonForest) -> Result<Matrix> {
    let t = forest.total_leaves();
    if t < 2 {
        return Err(Error::param(format!(
            "need at least 2 leaves to estimate class covariance, forest has {t}"
        )));
    }
    let c = forest.classes;
    let mut obs = Matrix::zeros(c, t);
    for (i, leaf) in forest.leaves().enumerate() {
        for (k, &p) in leaf.probs.iter().enumerate() {
            obs.set(k, i, p);
        }
    }
    Ok(obs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub omega: Matrix,
    /// Classes whose observation row is constant; their off-diagonal
    /// correlations are reported as 0.
    pub zero_variance: Vec<usize>,
}

/// Pearson correlation between the rows of `obs`, accumulated in one pass
/// with Welford-style co-moment updates.
pub fn class_correlation(obs: &Matrix) -> Result<CorrelationReport> {
    let (c, t) = (obs.rows(), obs.cols());
    if t < 2 {
        return Err(Error::param(format!(
            "need at least 2 observations, got {t}"
        )));
    }
    let mut mean = vec![0.0; c];
    let mut delta = vec![0.0; c];
    let mut co = Matrix::zeros(c, c);
    for col in 0..t {
        let n = (col + 1) as f64;
        for k in 0..c {
            delta[k] = obs.get(k, col) - mean[k];
            mean[k] += delta[k] / n;
        }
        for i in 0..c {
            let di = delta[i];
            for j in i..c {
                let after = obs.get(j, col) - mean[j];
                co.set(i, j, co.get(i, j) + di * after);
            }
        }
    }
    let zero_variance: Vec<usize> = (0..c).filter(|&k| co.get(k, k) < ZERO_VARIANCE).collect();
    let mut omega = Matrix::zeros(c, c);
    for i in 0..c {
        omega.set(i, i, 1.0);
        for j in i + 1..c {
            let (vi, vj) = (co.get(i, i), co.get(j, j));
            let r = if vi < ZERO_VARIANCE || vj < ZERO_VARIANCE {
                0.0
            } else {
                (co.get(i, j) / (vi * vj).sqrt()).clamp(-1.0, 1.0)
            };
            omega.set(i, j, r);
            omega.set(j, i, r);
        }
    }
    if !zero_variance.is_empty() {
        log::warn!(
            "classes {zero_variance:?} have constant leaf probability; correlation set to 0"
        );
    }
    Ok(CorrelationReport {
        omega,
        zero_variance,
    })
}

/// `D(x, y) = Ω(x, y) - min(Ω)` with a zero diagonal, so the most
/// anti-correlated pair sits at distance 0 and strongly correlated
/// (confusable) classes end up far apart.
pub fn correlation_distance(omega: &Matrix) -> Matrix {
    let lo = omega.min();
    let c = omega.rows();
    let mut d = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            if i != j {
                d.set(i, j, (omega.get(i, j) - lo).max(0.0));
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_correlate_perfectly() {
        let obs = Matrix::from_rows(&[vec![0.1, 0.5, 0.3], vec![0.1, 0.5, 0.3]]);
        let r = class_correlation(&obs).unwrap();
        assert!((r.omega.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complementary_rows_anticorrelate() {
        let obs = Matrix::from_rows(&[vec![0.2, 0.9, 0.4, 0.6], vec![0.8, 0.1, 0.6, 0.4]]);
        let r = class_correlation(&obs).unwrap();
        assert!((r.omega.get(0, 1) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_row_is_flagged_not_nan() {
        let obs = Matrix::from_rows(&[vec![0.5, 0.5, 0.5], vec![0.1, 0.2, 0.7]]);
        let r = class_correlation(&obs).unwrap();
        assert_eq!(r.zero_variance, vec![0]);
        assert_eq!(r.omega.get(0, 1), 0.0);
        assert_eq!(r.omega.get(0, 0), 1.0);
    }

    #[test]
    fn hand_distance() {
        let omega = Matrix::from_rows(&[
            vec![1.0, 0.2, -0.4],
            vec![0.2, 1.0, 0.6],
            vec![-0.4, 0.6, 1.0],
        ]);
        let d = correlation_distance(&omega);
        let want = [[0.0, 0.6, 0.0], [0.6, 0.0, 1.0], [0.0, 1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((d.get(i, j) - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_observation_is_rejected() {
        assert!(class_correlation(&Matrix::from_rows(&[vec![1.0], vec![0.0]])).is_err());
    }
}
