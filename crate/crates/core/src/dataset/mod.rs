//! Dataset manifests, loading, saving and the synthetic scene generator.

pub mod presets;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ClassSet, LabelImage, RgbImage, VOID};
use crate::pnm;

pub use synth::{
    generate_synthetic, CategorySpec, ClassStyle, Placement, SlotSpec, SynthSpec, Texture,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::param(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub labels: PathBuf,
    pub split: Split,
    /// Scene category the generator drew this image from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<usize>,
}

/// On-disk JSON manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub void: u8,
    /// Display colour per class, used for colour-mapped predictions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palette: Option<Vec<[u8; 3]>>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn class_set(&self) -> Result<ClassSet> {
        ClassSet::new(self.classes.clone(), self.void)
    }
}

/// One decoded image/label pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: RgbImage,
    pub labels: LabelImage,
    pub split: Split,
    pub category: Option<usize>,
}

/// A validated, fully decoded dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: ClassSet,
    pub palette: Option<Vec<[u8; 3]>>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    /// Checks dimensions and label ranges of every sample.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let c = self.classes.len();
        for s in &self.samples {
            if !s.labels.same_size(&s.image) {
                return Err(Error::DimensionMismatch(format!(
                    "{}: image is {}x{} but labels are {}x{}",
                    s.name,
                    s.image.width(),
                    s.image.height(),
                    s.labels.width(),
                    s.labels.height()
                )));
            }
            if let Some(&bad) = s
                .labels
                .labels()
                .iter()
                .find(|&&l| l as usize >= c && l != self.classes.void_id())
            {
                return Err(Error::LabelOutOfRange {
                    path: PathBuf::from(&s.name),
                    value: bad,
                    classes: c,
                });
            }
        }
        if let Some(p) = &self.palette {
            if p.len() != c {
                return Err(Error::ClassSet(format!(
                    "palette has {} colours for {} classes",
                    p.len(),
                    c
                )));
            }
        }
        Ok(())
    }

    /// Writes rasters plus `manifest.json` into `dir` and returns the manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let image = PathBuf::from(format!("{}.ppm", s.name));
            let labels = PathBuf::from(format!("{}_labels.pgm", s.name));
            pnm::write_ppm(dir.join(&image), &s.image)?;
            pnm::write_pgm(dir.join(&labels), &s.labels)?;
            entries.push(ManifestEntry {
                image,
                labels,
                split: s.split,
                category: s.category,
            });
        }
        let manifest = DatasetManifest {
            classes: self.classes.names().to_vec(),
            void: self.classes.void_id(),
            palette: self.palette.clone(),
            entries,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Reads a manifest, decodes every referenced raster and validates the result.
/// Relative raster paths resolve against the manifest's directory.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::read(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = manifest.class_set()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let image_path = base.join(&entry.image);
        let label_path = base.join(&entry.labels);
        let image = pnm::read_ppm(&image_path)?;
        let labels = pnm::read_pgm(&label_path)?;
        if !labels.same_size(&image) {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{} but {} is {}x{}",
                image_path.display(),
                image.width(),
                image.height(),
                label_path.display(),
                labels.width(),
                labels.height()
            )));
        }
        if let Some(&bad) = labels
            .labels()
            .iter()
            .find(|&&l| l as usize >= classes.len() && l != classes.void_id())
        {
            return Err(Error::LabelOutOfRange {
                path: label_path,
                value: bad,
                classes: classes.len(),
            });
        }
        let name = entry
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        samples.push(Sample {
            name,
            image,
            labels,
            split: entry.split,
            category: entry.category,
        });
    }
    let ds = Dataset {
        classes,
        palette: manifest.palette,
        samples,
    };
    ds.validate()?;
    Ok(ds)
}

/// True when `label` is a real class id.
#[inline]
pub(crate) fn is_labelled(label: u8, classes: usize) -> bool {
    label != VOID && (label as usize) < classes
}
