use std::collections::HashSet;

use crate::dstf::ClusterAssignment;
use crate::error::{Error, Result};
use crate::image::LabelImage;
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Cooccurrence {
    /// `psi(x, y)` = P(y present | x present), over images.
    pub psi: Matrix,
    /// Number of images containing each class.
    pub images_with: Vec<usize>,
    /// Classes that appear in no image; their rows are zero.
    pub absent: Vec<usize>,
}

/// A class is present in an image when it labels at least one pixel.
pub fn class_cooccurrence(labels: &[&LabelImage], classes: usize) -> Cooccurrence {
    let mut both = vec![0usize; classes * classes];
    let mut images_with = vec![0usize; classes];
    for l in labels {
        let present: Vec<usize> = l
            .class_counts(classes)
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c)
            .collect();
        for &x in &present {
            images_with[x] += 1;
            for &y in &present {
                both[x * classes + y] += 1;
            }
        }
    }
    let mut psi = Matrix::zeros(classes, classes);
    let mut absent = Vec::new();
    for x in 0..classes {
        if images_with[x] == 0 {
            absent.push(x);
            continue;
        }
        for y in 0..classes {
            psi.set(x, y, both[x * classes + y] as f64 / images_with[x] as f64);
        }
    }
    if !absent.is_empty() {
        log::warn!("classes {absent:?} appear in no training image");
    }
    Cooccurrence {
        psi,
        images_with,
        absent,
    }
}

/// Sum over non-void pixels of `psi(c, label)`.
pub fn score_image(c: usize, labels: &LabelImage, psi: &Matrix) -> f64 {
    labels
        .class_counts(psi.cols())
        .iter()
        .enumerate()
        .map(|(y, &n)| n as f64 * psi.get(c, y))
        .sum()
}

/// Per-cluster image budget `ceil(cap * n)`, at least 1. A small slack keeps
/// products like `0.07 * 100` from rounding up past the intended integer.
pub fn gather_budget(cap_fraction: f64, n: usize) -> usize {
    ((cap_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Images ranked by `score_image(c, ·)` descending, ties to the lower index.
/// Images scoring 0 are left out.
pub fn rank_images(c: usize, labels: &[&LabelImage], psi: &Matrix) -> Vec<usize> {
    let scores: Vec<f64> = labels.iter().map(|l| score_image(c, l, psi)).collect();
    let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| scores[i] > 0.0).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Fills each cluster's budget by taking the next-best image of each member
/// class in turn (ascending class id), skipping images already taken.
pub fn gather_training_sets(
    assignment: &ClusterAssignment,
    psi: &Matrix,
    labels: &[&LabelImage],
    cap_fraction: f64,
) -> Result<Vec<Vec<usize>>> {
    if !(cap_fraction > 0.0 && cap_fraction <= 1.0) {
        return Err(Error::param(format!(
            "cap fraction must be in (0, 1], got {cap_fraction}"
        )));
    }
    let budget = gather_budget(cap_fraction, labels.len());
    let mut out = Vec::with_capacity(assignment.k);
    for k in 0..assignment.k {
        let members = assignment.members(k);
        let lists: Vec<Vec<usize>> = members
            .iter()
            .map(|&c| rank_images(c, labels, psi))
            .collect();
        let mut seen = HashSet::new();
        let mut set = Vec::with_capacity(budget);
        let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
        'fill: for r in 0..longest {
            for list in &lists {
                if let Some(&img) = list.get(r) {
                    if seen.insert(img) {
                        set.push(img);
                        if set.len() == budget {
                            break 'fill;
                        }
                    }
                }
            }
        }
        if set.is_empty() {
            return Err(Error::EmptyCluster {
                cluster: k,
                classes: members,
            });
        }
        out.push(set);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::VOID;

    fn img(labels: &[u8]) -> LabelImage {
        LabelImage::new(labels.len(), 1, labels.to_vec()).unwrap()
    }

    #[test]
    fn conditional_presence_counts() {
        // class 0 in 4 images, class 1 in 2 of them
        let ims = [
            img(&[0, 1]),
            img(&[0, 0]),
            img(&[1, 0]),
            img(&[0, VOID]),
            img(&[2, 2]),
        ];
        let refs: Vec<&LabelImage> = ims.iter().collect();
        let co = class_cooccurrence(&refs, 4);
        assert_eq!(co.psi.get(0, 1), 0.5);
        assert_eq!(co.psi.get(1, 0), 1.0);
        assert_eq!(co.psi.get(0, 0), 1.0);
        assert_eq!(co.absent, vec![3]);
        assert!(co.psi.row(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn budget_is_exact_for_round_products() {
        assert_eq!(gather_budget(0.07, 100), 7);
        assert_eq!(gather_budget(0.07, 60), 5);
        assert_eq!(gather_budget(1.0, 13), 13);
        assert_eq!(gather_budget(0.001, 10), 1);
    }

    #[test]
    fn image_score_by_hand() {
        let psi = Matrix::from_rows(&[vec![1.0, 0.25], vec![0.5, 1.0]]);
        let l = img(&[0, 1, 1, VOID, 0]);
        assert_eq!(score_image(0, &l, &psi), 2.0 + 0.5);
        assert_eq!(score_image(1, &l, &psi), 1.0 + 2.0);
    }

    #[test]
    fn missing_cluster_classes_error() {
        let ims = [img(&[0, 0]), img(&[1, 1])];
        let refs: Vec<&LabelImage> = ims.iter().collect();
        let co = class_cooccurrence(&refs, 3);
        let a = ClusterAssignment::from_groups(3, &[vec![0, 1], vec![2]]);
        match gather_training_sets(&a, &co.psi, &refs, 1.0) {
            Err(Error::EmptyCluster { cluster, classes }) => {
                assert_eq!(cluster, 1);
                assert_eq!(classes, vec![2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
