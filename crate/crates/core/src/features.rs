//! Image-level feature extractors shared by the cluster recognizer and the ILP.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::stf::TextonForest;

pub const COLOR_GRID: &str = "color-grid";
pub const TEXTON_COLOR_GRID: &str = "texton+color-grid";

const BINS: usize = 16;
const GRID: usize = 4;
/// Pixel spacing used when building texton histograms.
const TEXTON_STRIDE: usize = 4;

pub trait GlobalFeature: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn extract(&self, image: &RgbImage) -> Vec<f64>;
}

/// Per-channel 16-bin colour histogram followed by a 4x4 grid of mean RGB.
/// Each of the two 48-value blocks is L1-normalised on its own.
#[derive(Clone, Copy, Debug, Default)]
pub struct ColorGrid;

impl GlobalFeature for ColorGrid {
    fn id(&self) -> &str {
        COLOR_GRID
    }

    fn dim(&self) -> usize {
        3 * BINS + GRID * GRID * 3
    }

    fn extract(&self, image: &RgbImage) -> Vec<f64> {
        let (w, h) = (image.width(), image.height());
        let mut hist = vec![0.0; 3 * BINS];
        let mut sums = vec![0.0; GRID * GRID * 3];
        let mut counts = [0usize; GRID * GRID];
        for y in 0..h {
            let gy = y * GRID / h;
            for x in 0..w {
                let cell = gy * GRID + x * GRID / w;
                counts[cell] += 1;
                for (ch, &v) in image.pixel(x, y).iter().enumerate() {
                    hist[ch * BINS + v as usize * BINS / 256] += 1.0;
                    sums[cell * 3 + ch] += v as f64 / 255.0;
                }
            }
        }
        for (cell, &n) in counts.iter().enumerate() {
            if n > 0 {
                sums[cell * 3..cell * 3 + 3]
                    .iter_mut()
                    .for_each(|s| *s /= n as f64);
            }
        }
        l1_normalize(&mut hist);
        l1_normalize(&mut sums);
        hist.extend_from_slice(&sums);
        hist
    }
}

/// Histogram of texton-forest leaf indices concatenated with [`ColorGrid`].
#[derive(Clone, Debug)]
pub struct TextonColorGrid {
    forest: Arc<TextonForest>,
}

impl TextonColorGrid {
    pub fn new(forest: Arc<TextonForest>) -> Self {
        TextonColorGrid { forest }
    }
}

impl GlobalFeature for TextonColorGrid {
    fn id(&self) -> &str {
        TEXTON_COLOR_GRID
    }

    fn dim(&self) -> usize {
        self.forest.total_leaves() + ColorGrid.dim()
    }

    fn extract(&self, image: &RgbImage) -> Vec<f64> {
        let mut v = self.forest.leaf_histogram(image, TEXTON_STRIDE);
        v.extend(ColorGrid.extract(image));
        v
    }
}

fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Looks up an extractor by id. Texton-based extractors need the forest whose
/// leaves define the vocabulary.
pub fn extractor(id: &str, textons: Option<&Arc<TextonForest>>) -> Result<Arc<dyn GlobalFeature>> {
    match id {
        COLOR_GRID => Ok(Arc::new(ColorGrid)),
        TEXTON_COLOR_GRID => match textons {
            Some(f) => Ok(Arc::new(TextonColorGrid::new(Arc::clone(f)))),
            None => Err(Error::MissingComponent(format!(
                "texton forest required by extractor `{id}`"
            ))),
        },
        other => Err(Error::UnknownExtractor(other.to_string())),
    }
}

/// Extracts a feature with an extractor that needs no trained state.
pub fn extract_global_feature(image: &RgbImage, id: &str) -> Result<Vec<f64>> {
    Ok(extractor(id, None)?.extract(image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_fills_one_bin_per_channel() {
        let img = RgbImage::filled(7, 5, [10, 130, 255]).unwrap();
        let v = extract_global_feature(&img, COLOR_GRID).unwrap();
        assert_eq!(v.len(), 96);
        let third = 1.0 / 3.0;
        for (ch, value) in [10usize, 130, 255].into_iter().enumerate() {
            let block = &v[ch * BINS..(ch + 1) * BINS];
            let bin = value * BINS / 256;
            for (i, &b) in block.iter().enumerate() {
                let want = if i == bin { third } else { 0.0 };
                assert!((b - want).abs() < 1e-12, "channel {ch} bin {i}: {b}");
            }
        }
        // grid cells all carry the same mean colour
        let grid = &v[48..];
        for cell in grid.chunks(3) {
            assert!((cell[0] - grid[0]).abs() < 1e-12 && (cell[2] - grid[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_does_not_depend_on_size() {
        for (w, h) in [(1, 1), (3, 9), (64, 48)] {
            let img = RgbImage::filled(w, h, [1, 2, 3]).unwrap();
            assert_eq!(ColorGrid.extract(&img).len(), ColorGrid.dim());
        }
    }

    #[test]
    fn unknown_id_is_an_error() {
        let img = RgbImage::filled(2, 2, [0; 3]).unwrap();
        assert!(matches!(
            extract_global_feature(&img, "cnn"),
            Err(Error::UnknownExtractor(_))
        ));
        assert!(matches!(
            extract_global_feature(&img, TEXTON_COLOR_GRID),
            Err(Error::MissingComponent(_))
        ));
    }
}
