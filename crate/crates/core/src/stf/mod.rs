//! Extremely randomized texton forests over raw pixel patches.

mod patch;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, Decoder, Encoder, Kind};
use crate::dataset::{is_labelled, Sample};
use crate::error::{Error, Result};
use crate::image::{Labeling, RgbImage};
use crate::instrument::Counters;
use crate::par;

pub use patch::{PatchTest, Probe, TestKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StfParams {
    /// Side of the square patch window; probes stay within `patch_size / 2`.
    pub patch_size: usize,
    pub trees: usize,
    pub max_depth: usize,
    pub candidates: usize,
    pub min_samples_leaf: usize,
    /// Training pixels are taken on a grid with this spacing (random offset per tree and image).
    pub stride: usize,
    /// Pseudo-count added to every class before normalising a leaf.
    pub leaf_prior: f64,
}

impl Default for StfParams {
    fn default() -> Self {
        StfParams {
            patch_size: 21,
            trees: 5,
            max_depth: 10,
            candidates: 400,
            min_samples_leaf: 5,
            stride: 3,
            leaf_prior: 1.0,
        }
    }
}

impl StfParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size > 255 {
            return Err(Error::param("stf patch_size must be in [1, 255]"));
        }
        if self.trees == 0 {
            return Err(Error::param("stf needs at least one tree"));
        }
        if self.candidates == 0 || self.min_samples_leaf == 0 || self.stride == 0 {
            return Err(Error::param(
                "stf candidates, min_samples_leaf and stride must be positive",
            ));
        }
        if !(self.leaf_prior >= 0.0 && self.leaf_prior.is_finite()) {
            return Err(Error::param("stf leaf_prior must be finite and >= 0"));
        }
        Ok(())
    }

    fn radius(&self) -> i8 {
        (self.patch_size / 2) as i8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        test: PatchTest,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Leaf {
    pub probs: Vec<f64>,
    pub samples: u64,
}

/// Nodes are stored depth-first; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub leaves: Vec<Leaf>,
}

impl Tree {
    /// Index of the leaf reached from `(x, y)` and the number of nodes visited.
    #[inline]
    pub fn descend(&self, image: &RgbImage, x: usize, y: usize) -> (usize, u64) {
        let mut i = 0usize;
        let mut visited = 1u64;
        loop {
            match &self.nodes[i] {
                Node::Leaf { leaf } => return (*leaf as usize, visited),
                Node::Split { test, left, right } => {
                    i = if test.eval(image, x, y) {
                        *right as usize
                    } else {
                        *left as usize
                    };
                    visited += 1;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TextonForest {
    pub classes: usize,
    pub params: StfParams,
    pub trees: Vec<Tree>,
}

/// Per-pixel class distributions, row-major with `classes` values per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbGrid {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl ProbGrid {
    pub fn uniform(width: usize, height: usize, classes: usize) -> Self {
        ProbGrid {
            width,
            height,
            classes,
            data: vec![1.0 / classes as f64; width * height * classes],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.classes;
        &self.data[i..i + self.classes]
    }

    /// Per-pixel argmax; ties go to the lowest class id.
    pub fn argmax(&self) -> Labeling {
        let labels = self.data.chunks(self.classes).map(argmax).collect();
        Labeling {
            width: self.width,
            height: self.height,
            labels,
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

impl TextonForest {
    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(|t| t.leaves.len()).sum()
    }

    /// Starting offset of each tree's leaves in the forest-wide leaf numbering.
    pub fn leaf_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.trees
            .iter()
            .map(|t| {
                let o = acc;
                acc += t.leaves.len();
                o
            })
            .collect()
    }

    /// All leaves in forest-wide order.
    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.trees.iter().flat_map(|t| t.leaves.iter())
    }

    fn accumulate(&self, image: &RgbImage, x: usize, y: usize, out: &mut [f64]) -> u64 {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut visited = 0;
        for tree in &self.trees {
            let (leaf, n) = tree.descend(image, x, y);
            visited += n;
            for (o, p) in out.iter_mut().zip(&tree.leaves[leaf].probs) {
                *o += p;
            }
        }
        let inv = 1.0 / self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        visited
    }

    /// Mean of the reached leaf distributions over all trees.
    pub fn classify_pixel(&self, image: &RgbImage, x: usize, y: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        self.accumulate(image, x, y, &mut out);
        out
    }

    pub fn classify_image(&self, image: &RgbImage) -> ProbGrid {
        self.classify_image_counted(image, None)
    }

    pub fn classify_image_counted(
        &self,
        image: &RgbImage,
        counters: Option<&Counters>,
    ) -> ProbGrid {
        let (w, h, c) = (image.width(), image.height(), self.classes);
        let mut data = vec![0.0; w * h * c];
        let visits = par::map_rows(&mut data, w * c, |y, row| {
            let mut n = 0;
            for x in 0..w {
                n += self.accumulate(image, x, y, &mut row[x * c..(x + 1) * c]);
            }
            n
        });
        if let Some(ctr) = counters {
            ctr.forest_image((w * h) as u64);
            ctr.traversals((w * h * self.trees.len()) as u64, visits.iter().sum());
        }
        ProbGrid {
            width: w,
            height: h,
            classes: c,
            data,
        }
    }

    /// L1-normalised histogram of forest-wide leaf indices over pixels on a
    /// `stride` grid. Dimension is [`TextonForest::total_leaves`].
    pub fn leaf_histogram(&self, image: &RgbImage, stride: usize) -> Vec<f64> {
        let offsets = self.leaf_offsets();
        let mut hist = vec![0.0; self.total_leaves()];
        let stride = stride.max(1);
        let mut n = 0.0;
        for y in (0..image.height()).step_by(stride) {
            for x in (0..image.width()).step_by(stride) {
                for (tree, off) in self.trees.iter().zip(&offsets) {
                    hist[off + tree.descend(image, x, y).0] += 1.0;
                    n += 1.0;
                }
            }
        }
        hist.iter_mut().for_each(|v| *v /= n);
        hist
    }
}

#[derive(Clone, Copy)]
struct Px {
    img: u32,
    x: u32,
    y: u32,
    label: u8,
}

fn entropy(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

struct Builder<'a> {
    images: Vec<&'a RgbImage>,
    classes: usize,
    params: &'a StfParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    feat: Vec<i32>,
}

impl Builder<'_> {
    fn leaf(&mut self, counts: &[u32], n: u32) -> Node {
        let prior = self.params.leaf_prior;
        let denom = n as f64 + prior * self.classes as f64;
        let probs = if denom > 0.0 {
            counts.iter().map(|&c| (c as f64 + prior) / denom).collect()
        } else {
            vec![1.0 / self.classes as f64; self.classes]
        };
        self.leaves.push(Leaf {
            probs,
            samples: n as u64,
        });
        Node::Leaf {
            leaf: (self.leaves.len() - 1) as u32,
        }
    }

    fn build(&mut self, px: &mut [Px], depth: usize) -> u32 {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf: 0 });
        let n = px.len() as u32;
        let mut counts = vec![0u32; self.classes];
        for p in px.iter() {
            counts[p.label as usize] += 1;
        }
        let min_leaf = self.params.min_samples_leaf as u32;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let node = if depth >= self.params.max_depth || pure || n < 2 * min_leaf {
            self.leaf(&counts, n)
        } else {
            match self.best_split(px, &counts) {
                None => self.leaf(&counts, n),
                Some(test) => {
                    let mid = partition(px, |p| {
                        !test.eval(self.images[p.img as usize], p.x as usize, p.y as usize)
                    });
                    let (l, r) = px.split_at_mut(mid);
                    let left = self.build(l, depth + 1);
                    let right = self.build(r, depth + 1);
                    Node::Split { test, left, right }
                }
            }
        };
        self.nodes[id] = node;
        id as u32
    }

    fn best_split(&mut self, px: &[Px], counts: &[u32]) -> Option<PatchTest> {
        let n = px.len();
        let min_leaf = self.params.min_samples_leaf;
        let parent = entropy(counts, n as u32);
        let mut best: Option<(f64, PatchTest)> = None;
        let mut right = vec![0u32; self.classes];
        let mut left = vec![0u32; self.classes];
        self.feat.resize(n, 0);
        for _ in 0..self.params.candidates {
            let mut test = PatchTest::random_geometry(&mut self.rng, self.params.radius());
            let (mut lo, mut hi) = (i32::MAX, i32::MIN);
            for (f, p) in self.feat.iter_mut().zip(px) {
                *f = test.feature(self.images[p.img as usize], p.x as usize, p.y as usize);
                lo = lo.min(*f);
                hi = hi.max(*f);
            }
            if lo == hi {
                continue;
            }
            let u: f64 = self.rng.random();
            test.threshold = lo as f64 + u * (hi - lo) as f64;
            right.iter_mut().for_each(|c| *c = 0);
            let mut nr = 0usize;
            for (&f, p) in self.feat.iter().zip(px) {
                if f as f64 > test.threshold {
                    right[p.label as usize] += 1;
                    nr += 1;
                }
            }
            let nl = n - nr;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            for ((l, &c), &r) in left.iter_mut().zip(counts).zip(&right) {
                *l = c - r;
            }
            let gain = parent
                - (nl as f64 / n as f64) * entropy(&left, nl as u32)
                - (nr as f64 / n as f64) * entropy(&right, nr as u32);
            if gain > 1e-12 && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, test));
            }
        }
        best.map(|(_, t)| t)
    }
}

/// Stable-order partition: elements satisfying `pred` first. Returns the split point.
fn partition<T: Copy>(v: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let (yes, no): (Vec<T>, Vec<T>) = v.iter().partition(|p| pred(p));
    let mid = yes.len();
    v[..mid].copy_from_slice(&yes);
    v[mid..].copy_from_slice(&no);
    mid
}

fn subsample(samples: &[&Sample], classes: usize, stride: usize, rng: &mut ChaCha8Rng) -> Vec<Px> {
    let mut px = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let ox = rng.random_range(0..stride);
        let oy = rng.random_range(0..stride);
        for y in (oy..s.labels.height()).step_by(stride) {
            for x in (ox..s.labels.width()).step_by(stride) {
                let label = s.labels.get(x, y);
                if is_labelled(label, classes) {
                    px.push(Px {
                        img: i as u32,
                        x: x as u32,
                        y: y as u32,
                        label,
                    });
                }
            }
        }
    }
    px
}

/// Trains one tree per `params.trees`, each from its own seed stream.
pub fn train_stf(
    samples: &[&Sample],
    classes: usize,
    params: &StfParams,
    seed: u64,
) -> Result<TextonForest> {
    params.validate()?;
    if classes < 2 {
        return Err(Error::ClassSet(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    let any = samples
        .iter()
        .any(|s| s.labels.labels().iter().any(|&l| is_labelled(l, classes)));
    if !any {
        return Err(Error::NoLabels("every training pixel is void".into()));
    }
    let trees = par::map_range(params.trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::derive_seed(seed, t as u64));
        let mut px = subsample(samples, classes, params.stride, &mut rng);
        if px.is_empty() {
            px = subsample(samples, classes, 1, &mut rng);
        }
        let mut b = Builder {
            images: samples.iter().map(|s| &s.image).collect(),
            classes,
            params,
            rng,
            nodes: Vec::new(),
            leaves: Vec::new(),
            feat: Vec::new(),
        };
        b.build(&mut px, 0);
        Tree {
            nodes: b.nodes,
            leaves: b.leaves,
        }
    });
    log::debug!(
        "trained stf: {} trees, {} leaves",
        trees.len(),
        trees.iter().map(|t| t.leaves.len()).sum::<usize>()
    );
    Ok(TextonForest {
        classes,
        params: params.clone(),
        trees,
    })
}

pub(crate) fn encode_params(p: &StfParams, e: &mut Encoder) {
    for v in [
        p.patch_size,
        p.trees,
        p.max_depth,
        p.candidates,
        p.min_samples_leaf,
        p.stride,
    ] {
        e.u32(v as u32);
    }
    e.f64(p.leaf_prior);
}

pub(crate) fn decode_params(d: &mut Decoder<'_>) -> Result<StfParams> {
    let mut v = [0usize; 6];
    for x in v.iter_mut() {
        *x = d.u32()? as usize;
    }
    let p = StfParams {
        patch_size: v[0],
        trees: v[1],
        max_depth: v[2],
        candidates: v[3],
        min_samples_leaf: v[4],
        stride: v[5],
        leaf_prior: d.f64()?,
    };
    p.validate().map_err(|e| Error::Model(e.to_string()))?;
    Ok(p)
}

fn encode_probe(p: &Probe, e: &mut Encoder) {
    e.i8(p.dx);
    e.i8(p.dy);
    e.u8(p.channel);
}

fn decode_probe(d: &mut Decoder<'_>) -> Result<Probe> {
    let p = Probe::new(d.i8()?, d.i8()?, d.u8()?);
    if p.channel > 2 {
        return Err(Error::Model(format!("channel {} out of range", p.channel)));
    }
    Ok(p)
}

impl Codec for TextonForest {
    const KIND: Kind = Kind::Forest;

    fn encode(&self, e: &mut Encoder) {
        e.u32(self.classes as u32);
        encode_params(&self.params, e);
        e.len(self.trees.len());
        for tree in &self.trees {
            e.len(tree.nodes.len());
            for node in &tree.nodes {
                match node {
                    Node::Leaf { leaf } => {
                        e.u8(0);
                        e.u32(*leaf);
                    }
                    Node::Split { test, left, right } => {
                        e.u8(1);
                        e.u8(test.kind.to_u8());
                        encode_probe(&test.a, e);
                        encode_probe(&test.b, e);
                        e.f64(test.threshold);
                        e.u32(*left);
                        e.u32(*right);
                    }
                }
            }
            e.len(tree.leaves.len());
            for leaf in &tree.leaves {
                e.u64(leaf.samples);
                e.f64s(&leaf.probs);
            }
        }
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let classes = d.u32()? as usize;
        let params = decode_params(d)?;
        let ntrees = d.len(1)?;
        let mut trees = Vec::with_capacity(ntrees);
        for _ in 0..ntrees {
            let nn = d.len(5)?;
            let mut nodes = Vec::with_capacity(nn);
            for _ in 0..nn {
                nodes.push(match d.u8()? {
                    0 => Node::Leaf { leaf: d.u32()? },
                    1 => {
                        let kind = TestKind::from_u8(d.u8()?)
                            .ok_or_else(|| Error::Model("unknown test kind".into()))?;
                        let a = decode_probe(d)?;
                        let b = decode_probe(d)?;
                        let threshold = d.f64()?;
                        Node::Split {
                            test: PatchTest {
                                kind,
                                a,
                                b,
                                threshold,
                            },
                            left: d.u32()?,
                            right: d.u32()?,
                        }
                    }
                    t => return Err(Error::Model(format!("unknown node tag {t}"))),
                });
            }
            let nl = d.len(16)?;
            let mut leaves = Vec::with_capacity(nl);
            for _ in 0..nl {
                let samples = d.u64()?;
                let probs = d.f64s()?;
                if probs.len() != classes {
                    return Err(Error::Model("leaf distribution has wrong length".into()));
                }
                leaves.push(Leaf { probs, samples });
            }
            // every reference must point forward inside the tree
            for (i, node) in nodes.iter().enumerate() {
                let ok = match node {
                    Node::Leaf { leaf } => (*leaf as usize) < leaves.len(),
                    Node::Split { left, right, .. } => {
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
            trees.push(Tree { nodes, leaves });
        }
        if trees.is_empty() {
            return Err(Error::Model("forest has no trees".into()));
        }
        Ok(TextonForest {
            classes,
            params,
            trees,
        })
    }
}
