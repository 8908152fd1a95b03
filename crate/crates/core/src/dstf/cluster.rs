use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Single,
    Complete,
}

/// One agglomeration step: clusters with the given members merged at `height`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cluster_of: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn single(classes: usize) -> Self {
        ClusterAssignment {
            cluster_of: vec![0; classes],
            k: 1,
        }
    }

    /// Member classes of cluster `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.cluster_of.len())
            .filter(|&c| self.cluster_of[c] == k)
            .collect()
    }

    /// Builds an assignment from groups; cluster ids follow each group's smallest class.
    pub fn from_groups(classes: usize, groups: &[Vec<usize>]) -> Self {
        let mut order: Vec<&Vec<usize>> = groups.iter().filter(|g| !g.is_empty()).collect();
        order.sort_by_key(|g| *g.iter().min().unwrap());
        let mut cluster_of = vec![0; classes];
        for (k, g) in order.iter().enumerate() {
            for &c in g.iter() {
                cluster_of[c] = k;
            }
        }
        ClusterAssignment {
            cluster_of,
            k: order.len(),
        }
    }
}

/// Agglomerative clustering of a symmetric distance matrix. Returns the merge
/// sequence; heights are non-decreasing for the supported linkages.
pub fn dendrogram(d: &Matrix, linkage: Linkage) -> Vec<Merge> {
    let c = d.rows();
    let mut members: Vec<Option<Vec<usize>>> = (0..c).map(|i| Some(vec![i])).collect();
    let mut dist = d.clone();
    let mut merges = Vec::with_capacity(c.saturating_sub(1));
    for _ in 1..c {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..c {
            if members[i].is_none() {
                continue;
            }
            for j in i + 1..c {
                if members[j].is_none() {
                    continue;
                }
                let v = dist.get(i, j);
                if best.is_none_or(|(_, _, b)| v < b) {
                    best = Some((i, j, v));
                }
            }
        }
        let (i, j, height) = best.expect("at least two active clusters");
        let (ni, nj) = (
            members[i].as_ref().unwrap().len() as f64,
            members[j].as_ref().unwrap().len() as f64,
        );
        for k in 0..c {
            if k == i || k == j || members[k].is_none() {
                continue;
            }
            let (a, b) = (dist.get(i, k), dist.get(j, k));
            let v = match linkage {
                Linkage::Average => (ni * a + nj * b) / (ni + nj),
                Linkage::Single => a.min(b),
                Linkage::Complete => a.max(b),
            };
            dist.set(i, k, v);
            dist.set(k, i, v);
        }
        let right = members[j].take().unwrap();
        let left = members[i].clone().unwrap();
        let mut joined = left.clone();
        joined.extend_from_slice(&right);
        joined.sort_unstable();
        members[i] = Some(joined);
        merges.push(Merge {
            left,
            right,
            height,
        });
    }
    merges
}

/// Groups after applying the first `m` merges.
fn groups_after(c: usize, merges: &[Merge], m: usize) -> Vec<Vec<usize>> {
    let mut group_of: Vec<usize> = (0..c).collect();
    for merge in &merges[..m] {
        let target = group_of[merge.left[0]];
        let source = group_of[merge.right[0]];
        for g in group_of.iter_mut() {
            if *g == source {
                *g = target;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut ids: Vec<usize> = Vec::new();
    for (class, &g) in group_of.iter().enumerate() {
        match ids.iter().position(|&x| x == g) {
            Some(p) => groups[p].push(class),
            None => {
                ids.push(g);
                groups.push(vec![class]);
            }
        }
    }
    groups
}

/// Cuts the dendrogram at the lowest height where every cluster has at least
/// `min_members` classes. Cuts are only taken between merges of different
/// height, so tied merges are applied together. Falls back to one cluster.
const HEIGHT_TOL: f64 = 1e-9;

pub fn cluster_classes(d: &Matrix, min_members: usize, linkage: Linkage) -> ClusterAssignment {
    let c = d.rows();
    if c < 2 {
        return ClusterAssignment::single(c);
    }
    let merges = dendrogram(d, linkage);
    for m in 0..merges.len() {
        // rounding in the linkage update must not open a cut between equal heights
        if m > 0
            && merges[m].height
                <= merges[m - 1].height + HEIGHT_TOL * merges[m - 1].height.abs().max(1.0)
        {
            continue;
        }
        let groups = groups_after(c, &merges, m);
        if groups.len() > 1 && groups.iter().all(|g| g.len() >= min_members) {
            return ClusterAssignment::from_groups(c, &groups);
        }
    }
    ClusterAssignment::single(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks() -> Matrix {
        let group = [0, 1, 0, 1, 0, 1];
        let mut d = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                if i != j && group[i] != group[j] {
                    d.set(i, j, 1.0);
                }
            }
        }
        d
    }

    #[test]
    fn two_blocks_split() {
        let a = cluster_classes(&blocks(), 3, Linkage::Average);
        assert_eq!(a.k, 2);
        assert_eq!(a.members(0), vec![0, 2, 4]);
        assert_eq!(a.members(1), vec![1, 3, 5]);
    }

    #[test]
    fn two_classes_collapse() {
        let d = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(
            cluster_classes(&d, 3, Linkage::Average),
            ClusterAssignment::single(2)
        );
    }

    #[test]
    fn equal_distances_collapse() {
        let mut d = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    d.set(i, j, 0.4);
                }
            }
        }
        assert_eq!(cluster_classes(&d, 3, Linkage::Average).k, 1);
    }

    #[test]
    fn average_linkage_heights() {
        // 0-1 at 1, then {0,1}-2 at mean(4, 6) = 5
        let d = Matrix::from_rows(&[
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 6.0],
            vec![4.0, 6.0, 0.0],
        ]);
        let m = dendrogram(&d, Linkage::Average);
        assert_eq!(m[0].height, 1.0);
        assert_eq!(m[1].height, 5.0);
        assert_eq!(dendrogram(&d, Linkage::Single)[1].height, 4.0);
        assert_eq!(dendrogram(&d, Linkage::Complete)[1].height, 6.0);
    }
}
