//! Seeded generator for scene-structured synthetic segmentation datasets.
//!
//! Each class has a fixed appearance (base colour plus texture). Each scene
//! category lists class slots: horizontal bands stacked top to bottom, or
//! rectangular objects dropped on top of the bands. Giving two classes in
//! different categories the same style yields a pixel-identical confusable
//! pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::image::{ClassSet, LabelImage, RgbImage, VOID};
use crate::par::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Texture {
    Flat,
    /// Horizontal stripes alternating base and accent colour.
    Stripes {
        period: usize,
    },
    Checker {
        period: usize,
    },
    /// Independent uniform per-pixel offsets in `[-amplitude, amplitude]`.
    Noise {
        amplitude: u8,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassStyle {
    pub name: String,
    pub color: [u8; 3],
    #[serde(default)]
    pub accent: Option<[u8; 3]>,
    pub texture: Texture,
}

impl ClassStyle {
    pub fn new(name: &str, color: [u8; 3], texture: Texture) -> Self {
        ClassStyle {
            name: name.to_string(),
            color,
            accent: None,
            texture,
        }
    }

    fn accent(&self) -> [u8; 3] {
        self.accent
            .unwrap_or_else(|| self.color.map(|c| (c as u16 * 3 / 5) as u8))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Placement {
    /// Full-width band; height proportional to `weight` among present bands.
    Band { weight: f64 },
    /// Rectangle with sides drawn uniformly from `[min_size, max_size]` as
    /// fractions of the image sides.
    Object { min_size: f64, max_size: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub class: usize,
    #[serde(default = "one")]
    pub presence: f64,
    pub placement: Placement,
}

fn one() -> f64 {
    1.0
}

impl SlotSpec {
    pub fn band(class: usize, weight: f64) -> Self {
        SlotSpec {
            class,
            presence: 1.0,
            placement: Placement::Band { weight },
        }
    }

    pub fn object(class: usize, min_size: f64, max_size: f64) -> Self {
        SlotSpec {
            class,
            presence: 1.0,
            placement: Placement::Object { min_size, max_size },
        }
    }

    pub fn with_presence(mut self, p: f64) -> Self {
        self.presence = p;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub name: String,
    pub slots: Vec<SlotSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: Vec<ClassStyle>,
    pub categories: Vec<CategorySpec>,
    pub train: usize,
    #[serde(default)]
    pub val: usize,
    #[serde(default)]
    pub test: usize,
    pub width: usize,
    pub height: usize,
    /// Relative jitter applied to band heights.
    #[serde(default = "default_jitter")]
    pub band_jitter: f64,
    /// Per-channel uniform sensor noise added to every pixel.
    #[serde(default)]
    pub pixel_noise: u8,
    /// Width in pixels of void label strips drawn along region boundaries.
    #[serde(default)]
    pub void_gutter: usize,
}

fn default_jitter() -> f64 {
    0.2
}

impl SynthSpec {
    fn check(&self) -> Result<ClassSet> {
        let names = self.classes.iter().map(|c| c.name.clone()).collect();
        let classes = ClassSet::new(names, VOID)?;
        if self.categories.is_empty() {
            return Err(Error::param("synthetic spec needs at least one category"));
        }
        for (k, cat) in self.categories.iter().enumerate() {
            if cat.slots.is_empty() {
                return Err(Error::param(format!(
                    "category {k} (`{}`) has no classes",
                    cat.name
                )));
            }
            for slot in &cat.slots {
                if slot.class >= classes.len() {
                    return Err(Error::param(format!(
                        "category `{}` references class {} of {}",
                        cat.name,
                        slot.class,
                        classes.len()
                    )));
                }
                if !(0.0..=1.0).contains(&slot.presence) {
                    return Err(Error::param("slot presence must lie in [0, 1]"));
                }
                match slot.placement {
                    Placement::Band { weight } if weight <= 0.0 => {
                        return Err(Error::param("band weight must be positive"))
                    }
                    Placement::Object { min_size, max_size }
                        if !(min_size > 0.0 && min_size <= max_size && max_size <= 1.0) =>
                    {
                        return Err(Error::param(
                            "object sizes must satisfy 0 < min <= max <= 1",
                        ))
                    }
                    _ => {}
                }
            }
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("image size must be positive"));
        }
        if self.train + self.val + self.test == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(classes)
    }
}

/// Generates the dataset in memory; call [`Dataset::save`] to write it out.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    let classes = spec.check()?;
    let k = spec.categories.len();
    let mut shown = vec![0usize; k];
    let mut samples = Vec::new();
    let splits = [
        (Split::Train, spec.train),
        (Split::Val, spec.val),
        (Split::Test, spec.test),
    ];
    let mut index = 0u64;
    for (split, count) in splits {
        for i in 0..count {
            let category = i % k;
            let forced = shown[category];
            shown[category] += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index));
            let (image, labels) = render(spec, category, forced, &mut rng)?;
            samples.push(Sample {
                name: format!("img_{index:04}"),
                image,
                labels,
                split,
                category: Some(category),
            });
            index += 1;
        }
    }
    Ok(Dataset {
        classes,
        palette: Some(spec.classes.iter().map(|c| c.color).collect()),
        samples,
    })
}

struct Region {
    class: usize,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn render(
    spec: &SynthSpec,
    category: usize,
    forced_slot: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(RgbImage, LabelImage)> {
    let (w, h) = (spec.width, spec.height);
    let slots = &spec.categories[category].slots;
    // the n-th image of a category always shows slot n, so every class of a
    // palette appears at least once when there are enough images
    let present: Vec<bool> = slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let draw = rng.random::<f64>() < s.presence;
            draw || i == forced_slot
        })
        .collect();

    let mut bands: Vec<(usize, f64)> = slots
        .iter()
        .zip(&present)
        .filter_map(|(s, &p)| match s.placement {
            Placement::Band { weight } if p => {
                let j = 1.0 + spec.band_jitter * (2.0 * rng.random::<f64>() - 1.0);
                Some((s.class, weight * j.max(0.05)))
            }
            _ => None,
        })
        .collect();
    if bands.is_empty() {
        // no band drawn: the first present slot fills the frame
        let first = slots
            .iter()
            .zip(&present)
            .find(|(_, &p)| p)
            .map(|(s, _)| s.class)
            .unwrap_or(slots[0].class);
        bands.push((first, 1.0));
    }

    let mut regions = Vec::new();
    let total: f64 = bands.iter().map(|b| b.1).sum();
    let mut acc = 0.0;
    let mut y0 = 0usize;
    for (i, &(class, weight)) in bands.iter().enumerate() {
        acc += weight;
        let y1 = if i + 1 == bands.len() {
            h
        } else {
            ((acc / total) * h as f64).round() as usize
        }
        .clamp(y0, h);
        if y1 > y0 {
            regions.push(Region {
                class,
                x0: 0,
                y0,
                x1: w,
                y1,
            });
        }
        y0 = y1;
    }
    for (s, &p) in slots.iter().zip(&present) {
        if let (true, Placement::Object { min_size, max_size }) = (p, s.placement) {
            let ow = ((min_size + rng.random::<f64>() * (max_size - min_size)) * w as f64)
                .round()
                .clamp(1.0, w as f64) as usize;
            let oh = ((min_size + rng.random::<f64>() * (max_size - min_size)) * h as f64)
                .round()
                .clamp(1.0, h as f64) as usize;
            let x0 = rng.random_range(0..=w - ow);
            let y0 = rng.random_range(0..=h - oh);
            regions.push(Region {
                class: s.class,
                x0,
                y0,
                x1: x0 + ow,
                y1: y0 + oh,
            });
        }
    }

    let mut image = RgbImage::filled(w, h, [0, 0, 0])?;
    let mut labels = LabelImage::filled(w, h, VOID)?;
    for r in &regions {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                labels.set(x, y, r.class as u8);
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            let class = labels.get(x, y) as usize;
            let style = &spec.classes[class];
            let mut px = shade(style, x, y, rng);
            if spec.pixel_noise > 0 {
                let a = spec.pixel_noise as i16;
                for c in px.iter_mut() {
                    *c = (*c as i16 + rng.random_range(-a..=a)).clamp(0, 255) as u8;
                }
            }
            image.set_pixel(x, y, px);
        }
    }
    if spec.void_gutter > 0 {
        let g = spec.void_gutter as i64;
        let original = labels.clone();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let l = original.get(x as usize, y as usize);
                let near_other = (-g..=g).any(|dy| {
                    (-g..=g).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx >= 0
                            && ny >= 0
                            && nx < w as i64
                            && ny < h as i64
                            && original.get(nx as usize, ny as usize) != l
                    })
                });
                if near_other {
                    labels.set(x as usize, y as usize, VOID);
                }
            }
        }
    }
    Ok((image, labels))
}

fn shade(style: &ClassStyle, x: usize, y: usize, rng: &mut ChaCha8Rng) -> [u8; 3] {
    match style.texture {
        Texture::Flat => style.color,
        Texture::Stripes { period } => {
            let p = period.max(1);
            if (y / p) % 2 == 0 {
                style.color
            } else {
                style.accent()
            }
        }
        Texture::Checker { period } => {
            let p = period.max(1);
            if (x / p + y / p) % 2 == 0 {
                style.color
            } else {
                style.accent()
            }
        }
        Texture::Noise { amplitude } => {
            let a = amplitude as i16;
            style
                .color
                .map(|c| (c as i16 + rng.random_range(-a..=a)).clamp(0, 255) as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_category_spec() -> SynthSpec {
        SynthSpec {
            classes: vec![
                ClassStyle::new("A", [200, 30, 30], Texture::Flat),
                ClassStyle::new("B", [30, 200, 30], Texture::Stripes { period: 3 }),
                ClassStyle::new("C", [30, 30, 200], Texture::Checker { period: 4 }),
                ClassStyle::new("D", [200, 200, 30], Texture::Noise { amplitude: 20 }),
            ],
            categories: vec![
                CategorySpec {
                    name: "first".into(),
                    slots: vec![SlotSpec::band(0, 1.0), SlotSpec::object(1, 0.2, 0.4)],
                },
                CategorySpec {
                    name: "second".into(),
                    slots: vec![SlotSpec::band(2, 1.0), SlotSpec::band(3, 1.0)],
                },
            ],
            train: 8,
            val: 0,
            test: 0,
            width: 64,
            height: 64,
            band_jitter: 0.2,
            pixel_noise: 3,
            void_gutter: 0,
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = two_category_spec();
        let a = generate_synthetic(&spec, 7).unwrap();
        let b = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn written_files_are_byte_identical() {
        let spec = two_category_spec();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_synthetic(&spec, 7)
            .unwrap()
            .save(d1.path())
            .unwrap();
        generate_synthetic(&spec, 7)
            .unwrap()
            .save(d2.path())
            .unwrap();
        let mut names: Vec<_> = std::fs::read_dir(d1.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert_eq!(names.len(), 17);
        for n in names {
            let a = std::fs::read(d1.path().join(&n)).unwrap();
            let b = std::fs::read(d2.path().join(&n)).unwrap();
            assert_eq!(a, b, "{n:?} differs");
        }
    }

    #[test]
    fn classes_only_cooccur_within_their_category() {
        let ds = generate_synthetic(&two_category_spec(), 3).unwrap();
        for s in &ds.samples {
            let counts = s.labels.class_counts(4);
            let allowed: &[usize] = if s.category == Some(0) {
                &[0, 1]
            } else {
                &[2, 3]
            };
            for (c, &n) in counts.iter().enumerate() {
                if n > 0 {
                    assert!(
                        allowed.contains(&c),
                        "class {c} in category {:?}",
                        s.category
                    );
                }
            }
        }
    }

    #[test]
    fn every_palette_class_appears() {
        let mut spec = two_category_spec();
        spec.categories[0].slots[1].presence = 0.0;
        let ds = generate_synthetic(&spec, 11).unwrap();
        for c in 0..4 {
            assert!(ds.samples.iter().any(|s| s.labels.class_counts(4)[c] > 0));
        }
    }

    #[test]
    fn empty_category_is_an_error() {
        let mut spec = two_category_spec();
        spec.categories[1].slots.clear();
        assert!(generate_synthetic(&spec, 1).is_err());
    }

    #[test]
    fn confusable_classes_have_equal_histograms() {
        // A (category 0) and C (category 1) share one flat style.
        let style = |n: &str| ClassStyle::new(n, [90, 140, 60], Texture::Flat);
        let spec = SynthSpec {
            classes: vec![
                style("A"),
                ClassStyle::new("B", [10, 10, 220], Texture::Flat),
                style("C"),
                ClassStyle::new("D", [220, 220, 10], Texture::Flat),
            ],
            categories: vec![
                CategorySpec {
                    name: "x".into(),
                    slots: vec![SlotSpec::band(0, 1.0), SlotSpec::band(1, 1.0)],
                },
                CategorySpec {
                    name: "y".into(),
                    slots: vec![SlotSpec::band(2, 1.0), SlotSpec::band(3, 1.0)],
                },
            ],
            train: 6,
            val: 0,
            test: 0,
            width: 32,
            height: 32,
            band_jitter: 0.3,
            pixel_noise: 0,
            void_gutter: 0,
        };
        let ds = generate_synthetic(&spec, 5).unwrap();
        let hist = |class: u8| {
            let mut h = std::collections::BTreeMap::<[u8; 3], usize>::new();
            let mut n = 0usize;
            for s in &ds.samples {
                for y in 0..32 {
                    for x in 0..32 {
                        if s.labels.get(x, y) == class {
                            *h.entry(s.image.pixel(x, y)).or_default() += 1;
                            n += 1;
                        }
                    }
                }
            }
            h.into_iter()
                .map(|(k, v)| (k, v as f64 / n as f64))
                .collect::<Vec<_>>()
        };
        assert_eq!(hist(0), hist(2));
        assert_ne!(hist(0), hist(1));
    }

    #[test]
    fn gutters_void_the_boundaries() {
        let mut spec = two_category_spec();
        spec.void_gutter = 2;
        let ds = generate_synthetic(&spec, 4).unwrap();
        let s = &ds.samples[1];
        // any two labelled pixels with different labels are > 2 apart
        for y in 0..64usize {
            for x in 0..63usize {
                let (a, b) = (s.labels.get(x, y), s.labels.get(x + 1, y));
                if a != VOID && b != VOID {
                    assert_eq!(a, b);
                }
            }
        }
        assert!(s.labels.non_void() > 0);
    }
}
