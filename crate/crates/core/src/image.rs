//! Raster carriers: RGB images, per-pixel label images and class metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label value reserved for unlabelled pixels.
pub const VOID: u8 = 255;

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} rgb image needs {} bytes, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel value with coordinates clamped to the image border.
    #[inline]
    pub fn clamped(&self, x: i64, y: i64, channel: usize) -> u8 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[(y * self.width + x) * 3 + channel]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Row-major class ids; `VOID` marks unlabelled pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} label image with {} values",
                width,
                height,
                labels.len()
            )));
        }
        Ok(LabelImage {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    pub fn same_size(&self, image: &RgbImage) -> bool {
        self.width == image.width() && self.height == image.height()
    }

    /// Per-class pixel counts over non-void pixels. Values `>= classes` that
    /// are not void are ignored.
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0usize; classes];
        for &l in &self.labels {
            if l != VOID && (l as usize) < classes {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    pub fn non_void(&self) -> usize {
        self.labels.iter().filter(|&&l| l != VOID).count()
    }
}

/// Ordered class names plus the void sentinel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSet {
    names: Vec<String>,
    void_id: u8,
}

impl ClassSet {
    pub fn new(names: Vec<String>, void_id: u8) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::ClassSet(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        if names.len() > VOID as usize {
            return Err(Error::ClassSet(format!(
                "at most {} classes fit in 8-bit labels",
                VOID
            )));
        }
        if (void_id as usize) < names.len() {
            return Err(Error::ClassSet(format!(
                "void id {void_id} collides with a class id"
            )));
        }
        let mut sorted: Vec<&String> = names.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::ClassSet(format!("duplicate class name `{}`", w[0])));
        }
        Ok(ClassSet { names, void_id })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn void_id(&self) -> u8 {
        self.void_id
    }
}

/// Per-pixel class assignment produced by inference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
}

impl Labeling {
    pub fn new(width: usize, height: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} labeling with {} entries",
                width,
                height,
                labels.len()
            )));
        }
        Ok(Labeling {
            width,
            height,
            labels,
        })
    }

    pub fn uniform(width: usize, height: usize, label: usize) -> Self {
        Labeling {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn to_label_image(&self) -> Result<LabelImage> {
        let labels =
            self.labels
                .iter()
                .map(|&l| {
                    u8::try_from(l).ok().filter(|&v| v != VOID).ok_or_else(|| {
                        Error::ClassSet(format!("label {l} does not fit a pgm byte"))
                    })
                })
                .collect::<Result<Vec<u8>>>()?;
        LabelImage::new(self.width, self.height, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_dimensions_are_checked() {
        assert!(RgbImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RgbImage::new(0, 2, vec![]).is_err());
        assert!(RgbImage::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn clamped_reads_border() {
        let mut img = RgbImage::filled(3, 2, [0, 0, 0]).unwrap();
        img.set_pixel(2, 1, [9, 8, 7]);
        assert_eq!(img.clamped(10, 10, 0), 9);
        assert_eq!(img.clamped(-5, -5, 0), 0);
        assert_eq!(img.clamped(5, 1, 2), 7);
    }

    #[test]
    fn class_set_rules() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(ClassSet::new(names(&["a"]), 255).is_err());
        assert!(ClassSet::new(names(&["a", "a"]), 255).is_err());
        assert!(ClassSet::new(names(&["a", "b"]), 1).is_err());
        assert!(ClassSet::new(names(&["a", "b"]), 255).is_ok());
    }

    #[test]
    fn counts_skip_void() {
        let l = LabelImage::new(2, 2, vec![0, 1, VOID, 1]).unwrap();
        assert_eq!(l.class_counts(2), vec![1, 2]);
        assert_eq!(l.non_void(), 3);
    }
}
