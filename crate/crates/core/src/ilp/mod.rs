//! Image-level priors: multi-label extremely randomized forests over global
//! image features that predict per-class presence probabilities.

mod gini;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, Decoder, Encoder, Kind};
use crate::error::{Error, Result};
use crate::features::TEXTON_COLOR_GRID;
use crate::image::LabelImage;
use crate::par;

pub use gini::{gini_k, score_split, score_split_with, split_gini_k, SplitCriterion};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlpParams {
    pub extractor: String,
    pub trees: usize,
    pub max_depth: usize,
    pub candidates: usize,
    pub criterion: SplitCriterion,
    /// A class is present when it covers at least
    /// `min(presence_pixels, ceil(presence_fraction * pixels))` pixels.
    pub presence_pixels: usize,
    pub presence_fraction: f64,
}

impl Default for IlpParams {
    fn default() -> Self {
        IlpParams {
            extractor: TEXTON_COLOR_GRID.to_string(),
            trees: 50,
            max_depth: 12,
            candidates: 64,
            criterion: SplitCriterion::Unweighted,
            presence_pixels: 50,
            presence_fraction: 0.001,
        }
    }
}

impl IlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.candidates == 0 {
            return Err(Error::param("ilp trees and candidates must be positive"));
        }
        if !(0.0..=1.0).contains(&self.presence_fraction) {
            return Err(Error::param("ilp presence_fraction must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn presence_threshold(&self, pixels: usize) -> usize {
        let frac = (self.presence_fraction * pixels as f64).ceil() as usize;
        self.presence_pixels.min(frac).max(1)
    }
}

/// Ground-truth presence vector of one label image.
pub fn presence_vector(labels: &LabelImage, classes: usize, params: &IlpParams) -> Vec<bool> {
    let tau = params.presence_threshold(labels.width() * labels.height());
    labels
        .class_counts(classes)
        .iter()
        .map(|&n| n >= tau)
        .collect()
}

/// A random axis-aligned test `feature[index] <= threshold` sends a point left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IlpNode {
    Split {
        test: SplitCandidate,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IlpTree {
    pub nodes: Vec<IlpNode>,
    /// Per-class presence frequency of the training images reaching each leaf.
    pub leaves: Vec<Vec<f64>>,
}

impl IlpTree {
    fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                IlpNode::Leaf { leaf } => return &self.leaves[*leaf as usize],
                IlpNode::Split { test, left, right } => {
                    i = if x[test.feature] <= test.threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn is_single_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiLabelForest {
    pub classes: usize,
    pub dim: usize,
    pub extractor: String,
    pub trees: Vec<IlpTree>,
}

impl MultiLabelForest {
    /// Per-class mean of leaf presence frequencies; entries are independent
    /// and not normalised across classes.
    pub fn predict(&self, features: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        for tree in &self.trees {
            for (o, p) in out.iter_mut().zip(tree.leaf_for(features)) {
                *o += p;
            }
        }
        let inv = 1.0 / self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }
}

/// Draws `count` candidates for the points `idx`. Features that are constant
/// on the node consume a draw but yield no candidate.
pub fn generate_candidates<R: Rng>(
    rng: &mut R,
    features: &[Vec<f64>],
    idx: &[usize],
    count: usize,
) -> Vec<SplitCandidate> {
    let dim = features[idx[0]].len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let f = rng.random_range(0..dim);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx {
            lo = lo.min(features[i][f]);
            hi = hi.max(features[i][f]);
        }
        if lo >= hi {
            continue;
        }
        let u: f64 = rng.random();
        let threshold = (lo + u * (hi - lo)).min(hi.next_down());
        out.push(SplitCandidate {
            feature: f,
            threshold,
        });
    }
    out
}

fn counts(presence: &[Vec<bool>], idx: &[usize], classes: usize) -> Vec<usize> {
    let mut c = vec![0usize; classes];
    for &i in idx {
        for (k, &p) in presence[i].iter().enumerate() {
            c[k] += p as usize;
        }
    }
    c
}

/// Highest-scoring candidate (first on ties) and its score.
pub fn best_split(
    criterion: SplitCriterion,
    features: &[Vec<f64>],
    presence: &[Vec<bool>],
    idx: &[usize],
    candidates: &[SplitCandidate],
) -> Option<(SplitCandidate, f64)> {
    let classes = presence[idx[0]].len();
    let parent = counts(presence, idx, classes);
    let mut best: Option<(SplitCandidate, f64)> = None;
    let mut left = vec![0usize; classes];
    for cand in candidates {
        left.iter_mut().for_each(|v| *v = 0);
        let mut nl = 0;
        for &i in idx {
            if features[i][cand.feature] <= cand.threshold {
                nl += 1;
                for (k, &p) in presence[i].iter().enumerate() {
                    left[k] += p as usize;
                }
            }
        }
        let nr = idx.len() - nl;
        if nl == 0 || nr == 0 {
            continue;
        }
        let right: Vec<usize> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
        let s = gini::score_counts(criterion, &parent, idx.len(), &left, nl, &right, nr);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((*cand, s));
        }
    }
    best
}

struct Grower<'a> {
    features: &'a [Vec<f64>],
    presence: &'a [Vec<bool>],
    params: &'a IlpParams,
    classes: usize,
    rng: ChaCha8Rng,
    nodes: Vec<IlpNode>,
    leaves: Vec<Vec<f64>>,
}

impl Grower<'_> {
    fn leaf(&mut self, idx: &[usize]) -> IlpNode {
        let n = idx.len() as f64;
        let freq = counts(self.presence, idx, self.classes)
            .iter()
            .map(|&c| c as f64 / n)
            .collect();
        self.leaves.push(freq);
        IlpNode::Leaf {
            leaf: (self.leaves.len() - 1) as u32,
        }
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len();
        self.nodes.push(IlpNode::Leaf { leaf: 0 });
        let uniform = idx
            .iter()
            .all(|&i| self.presence[i] == self.presence[idx[0]]);
        let node = if depth >= self.params.max_depth || idx.len() < 2 || uniform {
            self.leaf(idx)
        } else {
            let cands =
                generate_candidates(&mut self.rng, self.features, idx, self.params.candidates);
            match best_split(
                self.params.criterion,
                self.features,
                self.presence,
                idx,
                &cands,
            ) {
                Some((test, score)) if score > 0.0 => {
                    idx.sort_by_key(|&i| self.features[i][test.feature] > test.threshold);
                    let mid = idx
                        .iter()
                        .position(|&i| self.features[i][test.feature] > test.threshold)
                        .unwrap_or(idx.len());
                    let (l, r) = idx.split_at_mut(mid);
                    let left = self.grow(l, depth + 1);
                    let right = self.grow(r, depth + 1);
                    IlpNode::Split { test, left, right }
                }
                _ => self.leaf(idx),
            }
        };
        self.nodes[id] = node;
        id as u32
    }
}

/// Trains a multi-label forest on precomputed features and presence vectors.
pub fn train_ilp(
    features: &[Vec<f64>],
    presence: &[Vec<bool>],
    params: &IlpParams,
    seed: u64,
) -> Result<MultiLabelForest> {
    params.validate()?;
    if features.len() != presence.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature vectors for {} presence vectors",
            features.len(),
            presence.len()
        )));
    }
    if features.len() < 2 {
        return Err(Error::param("ilp training needs at least 2 images"));
    }
    let dim = features[0].len();
    let classes = presence[0].len();
    if dim == 0
        || features.iter().any(|f| f.len() != dim)
        || presence.iter().any(|p| p.len() != classes)
    {
        return Err(Error::DimensionMismatch("ragged ilp training data".into()));
    }
    let trees = par::map_range(params.trees, |t| {
        let mut g = Grower {
            features,
            presence,
            params,
            classes,
            rng: ChaCha8Rng::seed_from_u64(par::derive_seed(seed, t as u64)),
            nodes: Vec::new(),
            leaves: Vec::new(),
        };
        let mut idx: Vec<usize> = (0..features.len()).collect();
        g.grow(&mut idx, 0);
        IlpTree {
            nodes: g.nodes,
            leaves: g.leaves,
        }
    });
    Ok(MultiLabelForest {
        classes,
        dim,
        extractor: params.extractor.clone(),
        trees,
    })
}

/// Seed of the per-class forest `k` in the multiclass baseline; class 0 uses
/// the master seed itself.
pub fn multiclass_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(GOLDEN)
}

/// Independent single-class forests, one per class.
pub fn train_ilp_multiclass_baseline(
    features: &[Vec<f64>],
    presence: &[Vec<bool>],
    params: &IlpParams,
    seed: u64,
) -> Result<Vec<MultiLabelForest>> {
    let classes = presence.first().map_or(0, Vec::len);
    (0..classes)
        .map(|k| {
            let column: Vec<Vec<bool>> = presence.iter().map(|p| vec![p[k]]).collect();
            train_ilp(features, &column, params, multiclass_seed(seed, k))
        })
        .collect()
}

/// Either ILP variant behind one prediction interface.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IlpModel {
    Context(MultiLabelForest),
    Multiclass(Vec<MultiLabelForest>),
}

impl IlpModel {
    pub fn extractor(&self) -> &str {
        match self {
            IlpModel::Context(f) => &f.extractor,
            IlpModel::Multiclass(fs) => &fs[0].extractor,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            IlpModel::Context(f) => f.classes,
            IlpModel::Multiclass(fs) => fs.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            IlpModel::Context(f) => f.dim,
            IlpModel::Multiclass(fs) => fs[0].dim,
        }
    }

    /// Presence probabilities for one image's global features.
    pub fn predict(&self, features: &[f64]) -> Vec<f64> {
        match self {
            IlpModel::Context(f) => f.predict(features),
            IlpModel::Multiclass(fs) => fs.iter().map(|f| f.predict(features)[0]).collect(),
        }
    }
}

fn encode_forest(f: &MultiLabelForest, e: &mut Encoder) {
    e.u32(f.classes as u32);
    e.u32(f.dim as u32);
    e.str(&f.extractor);
    e.len(f.trees.len());
    for t in &f.trees {
        e.len(t.nodes.len());
        for n in &t.nodes {
            match n {
                IlpNode::Leaf { leaf } => {
                    e.u8(0);
                    e.u32(*leaf);
                }
                IlpNode::Split { test, left, right } => {
                    e.u8(1);
                    e.u32(test.feature as u32);
                    e.f64(test.threshold);
                    e.u32(*left);
                    e.u32(*right);
                }
            }
        }
        e.len(t.leaves.len());
        for l in &t.leaves {
            e.f64s(l);
        }
    }
}

fn decode_forest(d: &mut Decoder<'_>) -> Result<MultiLabelForest> {
    let classes = d.u32()? as usize;
    let dim = d.u32()? as usize;
    let extractor = d.str()?;
    let nt = d.len(1)?;
    let mut trees = Vec::with_capacity(nt);
    for _ in 0..nt {
        let nn = d.len(5)?;
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            nodes.push(match d.u8()? {
                0 => IlpNode::Leaf { leaf: d.u32()? },
                1 => {
                    let feature = d.u32()? as usize;
                    let threshold = d.f64()?;
                    if feature >= dim {
                        return Err(Error::Model(format!(
                            "feature {feature} >= dimension {dim}"
                        )));
                    }
                    IlpNode::Split {
                        test: SplitCandidate { feature, threshold },
                        left: d.u32()?,
                        right: d.u32()?,
                    }
                }
                t => return Err(Error::Model(format!("unknown node tag {t}"))),
            });
        }
        let nl = d.len(8)?;
        let leaves: Vec<Vec<f64>> = (0..nl).map(|_| d.f64s()).collect::<Result<_>>()?;
        if leaves
            .iter()
            .any(|l| l.len() != classes || l.iter().any(|p| !(0.0..=1.0).contains(p)))
        {
            return Err(Error::Model("invalid leaf presence frequencies".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            let ok = match n {
                IlpNode::Leaf { leaf } => (*leaf as usize) < leaves.len(),
                IlpNode::Split { left, right, .. } => {
                    let (l, r) = (*left as usize, *right as usize);
                    l > i && r > i && l < nodes.len() && r < nodes.len()
                }
            };
            if !ok {
                return Err(Error::Model(format!("dangling reference at node {i}")));
            }
        }
        if nodes.is_empty() {
            return Err(Error::Model("empty tree".into()));
        }
        trees.push(IlpTree { nodes, leaves });
    }
    if trees.is_empty() {
        return Err(Error::Model("ilp forest has no trees".into()));
    }
    Ok(MultiLabelForest {
        classes,
        dim,
        extractor,
        trees,
    })
}

impl Codec for IlpModel {
    const KIND: Kind = Kind::Ilp;

    fn encode(&self, e: &mut Encoder) {
        match self {
            IlpModel::Context(f) => {
                e.u8(0);
                encode_forest(f, e);
            }
            IlpModel::Multiclass(fs) => {
                e.u8(1);
                e.len(fs.len());
                for f in fs {
                    encode_forest(f, e);
                }
            }
        }
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        match d.u8()? {
            0 => Ok(IlpModel::Context(decode_forest(d)?)),
            1 => {
                let n = d.len(1)?;
                let fs: Vec<MultiLabelForest> =
                    (0..n).map(|_| decode_forest(d)).collect::<Result<_>>()?;
                if fs.is_empty() || fs.iter().any(|f| f.classes != 1 || f.dim != fs[0].dim) {
                    return Err(Error::Model("malformed multiclass ilp".into()));
                }
                Ok(IlpModel::Multiclass(fs))
            }
            t => Err(Error::Model(format!("unknown ilp variant {t}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presence_threshold_takes_smaller_rule() {
        let p = IlpParams::default();
        assert_eq!(p.presence_threshold(64 * 64), 5);
        assert_eq!(p.presence_threshold(320 * 240), 50);
        assert_eq!(p.presence_threshold(10), 1);
    }

    #[test]
    fn identical_presence_gives_root_leaves() {
        let f: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let p = vec![vec![true, false, true]; 6];
        let forest = train_ilp(
            &f,
            &p,
            &IlpParams {
                trees: 4,
                ..IlpParams::default()
            },
            1,
        )
        .unwrap();
        assert!(forest.trees.iter().all(IlpTree::is_single_leaf));
        assert_eq!(forest.predict(&[0.0, 0.0]), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn single_image_is_rejected() {
        assert!(train_ilp(&[vec![1.0]], &[vec![true, false]], &IlpParams::default(), 0).is_err());
    }

    #[test]
    fn codec_round_trip() {
        let f: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
        let p: Vec<Vec<bool>> = (0..10).map(|i| vec![i < 5, i >= 5]).collect();
        let params = IlpParams {
            trees: 3,
            ..IlpParams::default()
        };
        let ctx = IlpModel::Context(train_ilp(&f, &p, &params, 9).unwrap());
        assert_eq!(IlpModel::from_bytes(&ctx.to_bytes()).unwrap(), ctx);
        let mc = IlpModel::Multiclass(train_ilp_multiclass_baseline(&f, &p, &params, 9).unwrap());
        assert_eq!(IlpModel::from_bytes(&mc.to_bytes()).unwrap(), mc);
        assert!(mc.predict(&f[0])[0] > 0.5);
    }
}
