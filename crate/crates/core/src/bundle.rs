//! Trained model bundle: every component the pipeline needs, saved as one
//! directory.
//!
//! | file                  | content                                        |
//! |-----------------------|------------------------------------------------|
//! | `meta.json`           | classes, palette, ILP variant, full config     |
//! | `stf.bin`, `stf.json` | plain texton forest (binary and debug dump)    |
//! | `assignment.json`     | class to cluster map                           |
//! | `recognizer.bin`      | cluster recognizer                             |
//! | `specialist_<k>.bin`  | specialist forest of cluster `k`               |
//! | `ilp.bin`             | multi-label image-level prior                  |
//! | `ilp_multiclass.bin`  | per-class baseline prior                       |
//! | `location.bin`, `.csv`| location potentials                            |
//! | `report.json`         | clusters, merges and gathered-set sizes        |
//! | `omega.csv`, `distance.csv`, `psi.csv` | class correlation, distance and co-occurrence |

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::Codec;
use crate::config::{IlpVariant, RunConfig};
use crate::dstf::{ClusterAssignment, ClusterRecognizer, DecorrelatedModel, DstfReport, Merge};
use crate::error::{Error, Result};
use crate::features::{self, GlobalFeature};
use crate::ilp::IlpModel;
use crate::location::LocationPotentials;
use crate::stf::TextonForest;

pub const BUNDLE_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub format: u32,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palette: Option<Vec<[u8; 3]>>,
    pub ilp_variant: IlpVariant,
    /// True when the bundle carries only the per-class baseline prior.
    pub baseline_ilp: bool,
    pub clusters: usize,
    pub train_images: usize,
    pub config: RunConfig,
}

/// Human-oriented summary of DSTF training.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingReport {
    pub clusters: Vec<Vec<String>>,
    pub gathered_sizes: Vec<usize>,
    /// Training-split indices gathered per cluster.
    pub gathered: Vec<Vec<usize>>,
    pub merges: Vec<Merge>,
    pub zero_variance_classes: Vec<String>,
    pub absent_classes: Vec<String>,
}

impl TrainingReport {
    pub fn new(classes: &[String], assignment: &ClusterAssignment, report: &DstfReport) -> Self {
        let names = |ids: &[usize]| ids.iter().map(|&c| classes[c].clone()).collect::<Vec<_>>();
        TrainingReport {
            clusters: (0..assignment.k)
                .map(|k| names(&assignment.members(k)))
                .collect(),
            gathered_sizes: report.gathered.iter().map(Vec::len).collect(),
            gathered: report.gathered.clone(),
            merges: report.merges.clone(),
            zero_variance_classes: names(&report.correlation.zero_variance),
            absent_classes: names(&report.cooccurrence.absent),
        }
    }
}

pub struct ModelBundle {
    pub meta: BundleMeta,
    /// Plain forest on the full training split; also the texton vocabulary.
    pub stf: Arc<TextonForest>,
    pub dstf: DecorrelatedModel,
    pub ilp_context: Option<IlpModel>,
    pub ilp_multiclass: Option<IlpModel>,
    pub location: LocationPotentials,
    /// Present only on freshly trained bundles.
    pub report: Option<(TrainingReport, DstfReport)>,
    ilp_features: Arc<dyn GlobalFeature>,
}

impl std::fmt::Debug for ModelBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelBundle")
            .field("meta", &self.meta)
            .field("dstf", &self.dstf)
            .finish_non_exhaustive()
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| missing_or_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn missing_or_io(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingComponent(path.display().to_string())
    } else {
        Error::io(path, e)
    }
}

fn load<T: Codec>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingComponent(path.display().to_string()));
    }
    T::load(path)
}

impl ModelBundle {
    /// Assembles a bundle and checks that every component agrees on the class
    /// count and feature dimension.
    pub fn new(
        meta: BundleMeta,
        stf: Arc<TextonForest>,
        dstf: DecorrelatedModel,
        ilp_context: Option<IlpModel>,
        ilp_multiclass: Option<IlpModel>,
        location: LocationPotentials,
    ) -> Result<Self> {
        let c = meta.classes.len();
        let ilp_features = features::extractor(&meta.config.ilp.extractor, Some(&stf))?;
        if stf.classes != c || location.classes != c || dstf.assignment.cluster_of.len() != c {
            return Err(Error::Model(
                "bundle components disagree on the class count".into(),
            ));
        }
        for m in ilp_context.iter().chain(&ilp_multiclass) {
            if m.classes() != c
                || m.dim() != ilp_features.dim()
                || m.extractor() != ilp_features.id()
            {
                return Err(Error::Model(format!(
                    "image-level prior expects {} classes of {} ({}-d), bundle has {} classes of {} ({}-d)",
                    m.classes(),
                    m.extractor(),
                    m.dim(),
                    c,
                    ilp_features.id(),
                    ilp_features.dim()
                )));
            }
        }
        if ilp_context.is_none() && ilp_multiclass.is_none() {
            return Err(Error::MissingComponent("image-level prior".into()));
        }
        Ok(ModelBundle {
            meta,
            stf,
            dstf,
            ilp_context,
            ilp_multiclass,
            location,
            report: None,
            ilp_features,
        })
    }

    pub fn classes(&self) -> usize {
        self.meta.classes.len()
    }

    pub fn config(&self) -> &RunConfig {
        &self.meta.config
    }

    pub fn ilp_features(&self) -> &Arc<dyn GlobalFeature> {
        &self.ilp_features
    }

    /// The prior `predict` uses: the multi-label forest unless only the baseline was trained.
    pub fn primary_ilp(&self) -> &IlpModel {
        self.ilp_context
            .as_ref()
            .or(self.ilp_multiclass.as_ref())
            .expect("bundle holds at least one prior")
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serialises");
        write(&dir.join("meta.json"), meta + "\n")?;
        self.stf.save(dir.join("stf.bin"))?;
        write(
            &dir.join("stf.json"),
            serde_json::to_string(&*self.stf).expect("forest serialises"),
        )?;
        let assignment =
            serde_json::to_string_pretty(&self.dstf.assignment).expect("assignment serialises");
        write(&dir.join("assignment.json"), assignment + "\n")?;
        self.dstf.recognizer.save(dir.join("recognizer.bin"))?;
        for (k, s) in self.dstf.specialists.iter().enumerate() {
            s.save(dir.join(format!("specialist_{k}.bin")))?;
        }
        if let Some(m) = &self.ilp_context {
            m.save(dir.join("ilp.bin"))?;
        }
        if let Some(m) = &self.ilp_multiclass {
            m.save(dir.join("ilp_multiclass.bin"))?;
        }
        self.location.save(dir.join("location.bin"))?;
        write(
            &dir.join("location.csv"),
            self.location.to_csv(&self.meta.classes),
        )?;
        if let Some((summary, report)) = &self.report {
            let names = Some(self.meta.classes.as_slice());
            let json = serde_json::to_string_pretty(summary).expect("report serialises");
            write(&dir.join("report.json"), json + "\n")?;
            write(
                &dir.join("omega.csv"),
                report.correlation.omega.to_csv(names),
            )?;
            write(&dir.join("distance.csv"), report.distance.to_csv(names))?;
            write(&dir.join("psi.csv"), report.cooccurrence.psi.to_csv(names))?;
        }
        Ok(dir.to_path_buf())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::MissingComponent(format!(
                "model bundle {}",
                dir.display()
            )));
        }
        let meta: BundleMeta = read_json(&dir.join("meta.json"))?;
        if meta.format != BUNDLE_FORMAT {
            return Err(Error::Model(format!(
                "unsupported bundle format {}",
                meta.format
            )));
        }
        meta.config.validate()?;
        let stf = Arc::new(load::<TextonForest>(&dir.join("stf.bin"))?);
        let assignment: ClusterAssignment = read_json(&dir.join("assignment.json"))?;
        if assignment.cluster_of.iter().any(|&k| k >= assignment.k) {
            return Err(Error::Model(
                "assignment references a missing cluster".into(),
            ));
        }
        let recognizer = load::<ClusterRecognizer>(&dir.join("recognizer.bin"))?;
        let specialists = (0..assignment.k)
            .map(|k| load::<TextonForest>(&dir.join(format!("specialist_{k}.bin"))))
            .collect::<Result<Vec<_>>>()?;
        let extractor = features::extractor(&recognizer.extractor, Some(&stf))?;
        let dstf = DecorrelatedModel::new(assignment, recognizer, specialists, extractor)?;
        let wants_context = meta.ilp_variant != IlpVariant::Multiclass;
        let wants_multiclass = meta.ilp_variant != IlpVariant::Context;
        let ilp_context = if wants_context {
            Some(load::<IlpModel>(&dir.join("ilp.bin"))?)
        } else {
            None
        };
        let ilp_multiclass = if wants_multiclass {
            Some(load::<IlpModel>(&dir.join("ilp_multiclass.bin"))?)
        } else {
            None
        };
        let location = load::<LocationPotentials>(&dir.join("location.bin"))?;
        ModelBundle::new(meta, stf, dstf, ilp_context, ilp_multiclass, location)
    }
}
