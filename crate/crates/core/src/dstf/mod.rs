//! Decorrelated texton forests: class clustering from leaf correlations,
//! co-occurrence-ranked image gathering, one specialist forest per cluster and
//! an image-level recognizer that routes each image to exactly one specialist.

mod cluster;
mod correlation;
mod gather;
mod recognizer;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::features::{self, GlobalFeature};
use crate::image::{LabelImage, RgbImage};
use crate::instrument::Counters;
use crate::matrix::Matrix;
use crate::par;
use crate::stf::{train_stf, ProbGrid, StfParams, TextonForest};

pub use cluster::{cluster_classes, dendrogram, ClusterAssignment, Linkage, Merge};
pub use correlation::{
    class_correlation, collect_leaf_observations, correlation_distance, CorrelationReport,
};
pub use gather::{
    class_cooccurrence, gather_budget, gather_training_sets, rank_images, score_image, Cooccurrence,
};
pub use recognizer::{train_recognizer, ClusterRecognizer, RecognizerParams};

const SPECIALIST_STREAM: u64 = 0x5350_4543;
const RECOGNIZER_STREAM: u64 = 0x5245_4347;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DstfParams {
    /// Per-cluster training budget as a fraction of the training split.
    pub cap_fraction: f64,
    pub min_members: usize,
    pub linkage: Linkage,
    pub recognizer: RecognizerParams,
}

impl Default for DstfParams {
    fn default() -> Self {
        DstfParams {
            cap_fraction: 0.07,
            min_members: 3,
            linkage: Linkage::Average,
            recognizer: RecognizerParams::default(),
        }
    }
}

/// Seed used for specialist `k` under master seed `seed`.
pub fn specialist_seed(seed: u64, k: usize) -> u64 {
    par::derive_seed(par::derive_seed(seed, SPECIALIST_STREAM), k as u64)
}

pub struct DecorrelatedModel {
    pub assignment: ClusterAssignment,
    pub recognizer: ClusterRecognizer,
    pub specialists: Vec<TextonForest>,
    features: Arc<dyn GlobalFeature>,
}

impl std::fmt::Debug for DecorrelatedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DecorrelatedModel")
            .field("assignment", &self.assignment)
            .field("recognizer", &self.recognizer.extractor)
            .field("specialists", &self.specialists.len())
            .finish()
    }
}

impl DecorrelatedModel {
    pub fn new(
        assignment: ClusterAssignment,
        recognizer: ClusterRecognizer,
        specialists: Vec<TextonForest>,
        features: Arc<dyn GlobalFeature>,
    ) -> Result<Self> {
        let k = assignment.k;
        if specialists.len() != k || recognizer.clusters() != k {
            return Err(Error::Model(format!(
                "{} clusters but {} specialists and {} recognizer outputs",
                k,
                specialists.len(),
                recognizer.clusters()
            )));
        }
        if recognizer.dim() != features.dim() || recognizer.extractor != features.id() {
            return Err(Error::Model(format!(
                "recognizer expects {} ({}-d), extractor is {} ({}-d)",
                recognizer.extractor,
                recognizer.dim(),
                features.id(),
                features.dim()
            )));
        }
        if let Some(f) = specialists
            .iter()
            .find(|f| f.classes != assignment.cluster_of.len())
        {
            return Err(Error::Model(format!(
                "specialist predicts {} classes, assignment covers {}",
                f.classes,
                assignment.cluster_of.len()
            )));
        }
        Ok(DecorrelatedModel {
            assignment,
            recognizer,
            specialists,
            features,
        })
    }

    pub fn features(&self) -> &Arc<dyn GlobalFeature> {
        &self.features
    }

    /// Cluster chosen for `image`; one recognizer evaluation.
    pub fn route(&self, image: &RgbImage, counters: Option<&Counters>) -> usize {
        if let Some(c) = counters {
            c.recognizer();
        }
        self.recognizer.predict(&self.features.extract(image))
    }

    pub fn classify_image(&self, image: &RgbImage) -> ProbGrid {
        self.classify_image_counted(image, None)
    }

    /// Routes once, then evaluates only the selected specialist.
    pub fn classify_image_counted(
        &self,
        image: &RgbImage,
        counters: Option<&Counters>,
    ) -> ProbGrid {
        let k = self.route(image, counters);
        if let Some(c) = counters {
            c.specialist(k);
        }
        self.specialists[k].classify_image_counted(image, counters)
    }
}

/// Intermediate products of decorrelated training, kept for reports.
#[derive(Clone, Debug)]
pub struct DstfReport {
    pub correlation: CorrelationReport,
    pub distance: Matrix,
    pub merges: Vec<Merge>,
    pub cooccurrence: Cooccurrence,
    /// Training-split indices gathered for each cluster.
    pub gathered: Vec<Vec<usize>>,
}

/// Builds the decorrelated model on top of an already trained temporary forest.
pub fn train_dstf_from(
    temporary: &TextonForest,
    train: &[&Sample],
    stf: &StfParams,
    params: &DstfParams,
    seed: u64,
) -> Result<(DecorrelatedModel, DstfReport)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = temporary.classes;
    let obs = collect_leaf_observations(temporary)?;
    let correlation = class_correlation(&obs)?;
    let distance = correlation_distance(&correlation.omega);
    let merges = dendrogram(&distance, params.linkage);
    let assignment = cluster_classes(&distance, params.min_members, params.linkage);
    log::info!(
        "class clusters: {:?}",
        (0..assignment.k)
            .map(|k| assignment.members(k))
            .collect::<Vec<_>>()
    );

    let labels: Vec<&LabelImage> = train.iter().map(|s| &s.labels).collect();
    let cooccurrence = class_cooccurrence(&labels, classes);
    let gathered =
        gather_training_sets(&assignment, &cooccurrence.psi, &labels, params.cap_fraction)?;

    let specialists = par::map_range(assignment.k, |k| {
        let subset: Vec<&Sample> = gathered[k].iter().map(|&i| train[i]).collect();
        train_stf(&subset, classes, stf, specialist_seed(seed, k))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let extractor = features::extractor(&params.recognizer.extractor, None)?;
    let recognizer = if assignment.k == 1 {
        ClusterRecognizer::constant(extractor.id(), extractor.dim())
    } else {
        let mut rows: Vec<usize> = gathered.iter().flatten().copied().collect();
        rows.sort_unstable();
        rows.dedup();
        let feats = par::map_slice(&rows, |&i| extractor.extract(&train[i].image));
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (k, set) in gathered.iter().enumerate() {
            for i in set {
                let pos = rows.binary_search(i).expect("gathered index");
                x.push(feats[pos].clone());
                y.push(k);
            }
        }
        train_recognizer(
            &x,
            &y,
            assignment.k,
            &params.recognizer,
            par::derive_seed(seed, RECOGNIZER_STREAM),
        )?
    };
    let model = DecorrelatedModel::new(assignment, recognizer, specialists, extractor)?;
    Ok((
        model,
        DstfReport {
            correlation,
            distance,
            merges,
            cooccurrence,
            gathered,
        },
    ))
}

/// Full pipeline: temporary forest, clustering, gathering, specialists and recognizer.
/// Returns the temporary forest alongside the model.
pub fn train_dstf(
    train: &[&Sample],
    classes: usize,
    stf: &StfParams,
    params: &DstfParams,
    seed: u64,
) -> Result<(DecorrelatedModel, TextonForest, DstfReport)> {
    let temporary = train_stf(train, classes, stf, seed)?;
    let (model, report) = train_dstf_from(&temporary, train, stf, params, seed)?;
    Ok((model, temporary, report))
}
