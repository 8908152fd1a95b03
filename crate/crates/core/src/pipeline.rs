//! End-to-end training, segmentation, evaluation, ablation and the omega sweep.

use std::sync::Arc;

use serde::Serialize;

use crate::bundle::{BundleMeta, ModelBundle, TrainingReport, BUNDLE_FORMAT};
use crate::config::{IlpVariant, RunConfig};
use crate::crf::{alpha_expansion, build_unary, CrfParams, CrfProblem};
use crate::dataset::{Dataset, Sample, Split};
use crate::dstf::train_dstf_from;
use crate::error::{Error, Result};
use crate::eval::{ConfusionMatrix, Metrics};
use crate::features;
use crate::ilp::{presence_vector, train_ilp, train_ilp_multiclass_baseline, IlpModel};
use crate::image::{LabelImage, Labeling, RgbImage};
use crate::instrument::Counters;
use crate::location::train_location;
use crate::par;
use crate::stf::{train_stf, ProbGrid};

const ILP_STREAM: u64 = 0x494C_5000;

/// Trains every component on the training split of `data`.
pub fn train_bundle(data: &Dataset, config: &RunConfig) -> Result<ModelBundle> {
    config.validate()?;
    let train = data.split(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = data.num_classes();
    let names = data.classes.names().to_vec();
    log::info!("training texton forest on {} images", train.len());
    let stf = Arc::new(train_stf(&train, classes, &config.stf, config.seed)?);

    log::info!("training decorrelated specialists");
    let (dstf, report) = train_dstf_from(&stf, &train, &config.stf, &config.dstf, config.seed)?;
    let summary = TrainingReport::new(&names, &dstf.assignment, &report);

    log::info!("training image-level priors ({:?})", config.ilp_variant);
    let extractor = features::extractor(&config.ilp.extractor, Some(&stf))?;
    let feats = par::map_slice(&train, |s| extractor.extract(&s.image));
    let presence: Vec<Vec<bool>> = train
        .iter()
        .map(|s| presence_vector(&s.labels, classes, &config.ilp))
        .collect();
    let ilp_seed = par::derive_seed(config.seed, ILP_STREAM);
    let ilp_context = match config.ilp_variant {
        IlpVariant::Multiclass => None,
        _ => Some(IlpModel::Context(train_ilp(
            &feats,
            &presence,
            &config.ilp,
            ilp_seed,
        )?)),
    };
    let ilp_multiclass = match config.ilp_variant {
        IlpVariant::Context => None,
        _ => Some(IlpModel::Multiclass(train_ilp_multiclass_baseline(
            &feats,
            &presence,
            &config.ilp,
            ilp_seed,
        )?)),
    };

    let labels: Vec<&LabelImage> = train.iter().map(|s| &s.labels).collect();
    let location = train_location(&labels, classes, config.location.grid)?;

    let meta = BundleMeta {
        format: BUNDLE_FORMAT,
        classes: names,
        palette: data.palette.clone(),
        ilp_variant: config.ilp_variant,
        baseline_ilp: config.ilp_variant == IlpVariant::Multiclass,
        clusters: dstf.assignment.k,
        train_images: train.len(),
        config: config.clone(),
    };
    let mut bundle = ModelBundle::new(meta, stf, dstf, ilp_context, ilp_multiclass, location)?;
    bundle.report = Some((summary, report));
    Ok(bundle)
}

/// Source of the per-pixel class distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Appearance {
    Stf,
    Dstf,
}

/// Source of the image-level prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    None,
    Multiclass,
    Context,
    /// Ground-truth presence; needs the label image.
    Ideal,
}

impl std::fmt::Display for Appearance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Appearance::Stf => "stf",
            Appearance::Dstf => "dstf",
        })
    }
}

impl std::fmt::Display for Prior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Prior::None => "none",
            Prior::Multiclass => "multiclass",
            Prior::Context => "context",
            Prior::Ideal => "ideal",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOptions {
    pub appearance: Appearance,
    pub prior: Prior,
    pub crf: CrfParams,
}

impl SegmentOptions {
    /// DSTF with the bundle's primary prior and CRF settings.
    pub fn full(bundle: &ModelBundle) -> Self {
        let prior = match bundle.primary_ilp() {
            IlpModel::Context(_) => Prior::Context,
            IlpModel::Multiclass(_) => Prior::Multiclass,
        };
        SegmentOptions {
            appearance: Appearance::Dstf,
            prior,
            crf: bundle.config().crf.clone(),
        }
    }
}

/// Per-pixel class distributions. With `omega == 1` the appearance term has
/// no weight and no forest is evaluated.
pub fn appearance(
    bundle: &ModelBundle,
    image: &RgbImage,
    which: Appearance,
    omega: f64,
    counters: Option<&Counters>,
) -> ProbGrid {
    if omega >= 1.0 {
        return ProbGrid::uniform(image.width(), image.height(), bundle.classes());
    }
    match which {
        Appearance::Stf => bundle.stf.classify_image_counted(image, counters),
        Appearance::Dstf => bundle.dstf.classify_image_counted(image, counters),
    }
}

/// Presence probabilities for one image, or `None` for no prior.
pub fn image_prior(
    bundle: &ModelBundle,
    image: &RgbImage,
    truth: Option<&LabelImage>,
    which: Prior,
) -> Result<Option<Vec<f64>>> {
    let model = match which {
        Prior::None => return Ok(None),
        Prior::Ideal => {
            let t = truth.ok_or_else(|| {
                Error::MissingComponent("ground truth for the ideal prior".into())
            })?;
            let p = presence_vector(t, bundle.classes(), &bundle.config().ilp);
            return Ok(Some(
                p.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
            ));
        }
        Prior::Context => bundle.ilp_context.as_ref(),
        Prior::Multiclass => bundle.ilp_multiclass.as_ref(),
    };
    let model =
        model.ok_or_else(|| Error::MissingComponent(format!("{which} image-level prior")))?;
    Ok(Some(model.predict(&bundle.ilp_features().extract(image))))
}

/// Builds the unary from appearance, location and prior, then runs
/// alpha-expansion from the unary argmin.
pub fn infer(
    bundle: &ModelBundle,
    grid: &ProbGrid,
    zeta: Option<&[f64]>,
    crf: &CrfParams,
) -> Result<(Labeling, f64)> {
    let unary = build_unary(grid, Some(&bundle.location), zeta, crf)?;
    let problem = CrfProblem::new(grid.width, grid.height, grid.classes, unary, crf.lambda)?;
    let init = problem.unary_argmin();
    let out = alpha_expansion(&problem, &init, crf.max_sweeps)?;
    Ok((out.labeling, out.energy))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub labeling: Labeling,
    pub energy: f64,
}

pub fn segment_image(
    bundle: &ModelBundle,
    image: &RgbImage,
    truth: Option<&LabelImage>,
    options: &SegmentOptions,
    counters: Option<&Counters>,
) -> Result<Segmentation> {
    let grid = appearance(
        bundle,
        image,
        options.appearance,
        options.crf.omega,
        counters,
    );
    let zeta = image_prior(bundle, image, truth, options.prior)?;
    let (labeling, energy) = infer(bundle, &grid, zeta.as_deref(), &options.crf)?;
    Ok(Segmentation { labeling, energy })
}

/// Segments every sample (in parallel) and scores the result.
pub fn evaluate_samples(
    bundle: &ModelBundle,
    samples: &[&Sample],
    options: &SegmentOptions,
    counters: Option<&Counters>,
) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let confs = par::map_slice(samples, |s| -> Result<ConfusionMatrix> {
        let seg = segment_image(bundle, &s.image, Some(&s.labels), options, counters)?;
        let mut c = ConfusionMatrix::new(bundle.classes());
        c.accumulate(&seg.labeling, &s.labels)?;
        Ok(c)
    });
    let mut total = ConfusionMatrix::new(bundle.classes());
    for c in confs {
        total.merge(&c?);
    }
    Metrics::from_confusion(&bundle.meta.classes, total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub appearance: Appearance,
    pub prior: Prior,
    pub metrics: Metrics,
}

/// The appearance x prior grid. Appearance and prior outputs are computed
/// once per image and shared across cells.
pub fn ablate(
    bundle: &ModelBundle,
    samples: &[&Sample],
    crf: &CrfParams,
    priors: &[Prior],
) -> Result<Vec<AblationRow>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let appearances = [Appearance::Stf, Appearance::Dstf];
    let c = bundle.classes();
    let cells = appearances.len() * priors.len();
    let per_image = par::map_slice(samples, |s| -> Result<Vec<ConfusionMatrix>> {
        let grids: Vec<ProbGrid> = appearances
            .iter()
            .map(|&a| appearance(bundle, &s.image, a, crf.omega, None))
            .collect();
        let zetas = priors
            .iter()
            .map(|&p| image_prior(bundle, &s.image, Some(&s.labels), p))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(cells);
        for grid in &grids {
            for zeta in &zetas {
                let (labeling, _) = infer(bundle, grid, zeta.as_deref(), crf)?;
                let mut m = ConfusionMatrix::new(c);
                m.accumulate(&labeling, &s.labels)?;
                out.push(m);
            }
        }
        Ok(out)
    });
    let mut totals = vec![ConfusionMatrix::new(c); cells];
    for img in per_image {
        for (t, m) in totals.iter_mut().zip(img?) {
            t.merge(&m);
        }
    }
    let mut rows = Vec::with_capacity(cells);
    let mut totals = totals.into_iter();
    for &a in &appearances {
        for &p in priors {
            rows.push(AblationRow {
                appearance: a,
                prior: p,
                metrics: Metrics::from_confusion(
                    &bundle.meta.classes,
                    totals.next().expect("cell"),
                )?,
            });
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("appearance,prior,average_recall,global_recall,mean_iou\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.appearance,
            r.prior,
            r.metrics.recall.average,
            r.metrics.recall.global,
            r.metrics.iou.mean
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub omega: f64,
    pub average_recall: f64,
    pub global_recall: f64,
    /// Whole-image appearance forest evaluations during this row's run.
    pub appearance_evaluations: u64,
}

/// One full evaluation per omega value, in the given order.
pub fn sweep_omega(
    bundle: &ModelBundle,
    samples: &[&Sample],
    omegas: &[f64],
    base: &SegmentOptions,
) -> Result<Vec<SweepRow>> {
    if omegas.is_empty() {
        return Err(Error::param("omega list is empty"));
    }
    omegas
        .iter()
        .map(|&omega| {
            let mut options = base.clone();
            options.crf.omega = omega;
            let counters = Counters::new();
            let m = evaluate_samples(bundle, samples, &options, Some(&counters))?;
            Ok(SweepRow {
                omega,
                average_recall: m.recall.average,
                global_recall: m.recall.global,
                appearance_evaluations: counters.snapshot().forest_image_calls,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("omega,average_recall,global_recall,appearance_evaluations\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            r.omega, r.average_recall, r.global_recall, r.appearance_evaluations
        ));
    }
    out
}
