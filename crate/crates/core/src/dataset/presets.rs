//! Named synthetic scene layouts used by the CLI, the tests and the benches.

use super::synth::{CategorySpec, ClassStyle, SlotSpec, SynthSpec, Texture};

pub const NAMES: &[&str] = &["easy", "cooccurrence", "confusable", "location"];

pub fn by_name(name: &str) -> Option<SynthSpec> {
    match name {
        "easy" => Some(easy()),
        "cooccurrence" => Some(cooccurrence()),
        "confusable" => Some(confusable()),
        "location" => Some(location()),
        _ => None,
    }
}

fn category(name: &str, slots: Vec<SlotSpec>) -> CategorySpec {
    CategorySpec {
        name: name.to_string(),
        slots,
    }
}

fn base(classes: Vec<ClassStyle>, categories: Vec<CategorySpec>) -> SynthSpec {
    SynthSpec {
        classes,
        categories,
        train: 60,
        val: 20,
        test: 20,
        width: 64,
        height: 64,
        band_jitter: 0.2,
        pixel_noise: 4,
        void_gutter: 0,
    }
}

/// Two categories of three visually distinct classes each.
pub fn easy() -> SynthSpec {
    base(
        vec![
            ClassStyle::new("sky", [90, 150, 230], Texture::Flat),
            ClassStyle::new("grass", [40, 170, 40], Texture::Stripes { period: 2 }),
            ClassStyle::new("cow", [120, 70, 30], Texture::Checker { period: 3 }),
            ClassStyle::new("wall", [200, 200, 190], Texture::Checker { period: 6 }),
            ClassStyle::new("road", [70, 70, 70], Texture::Noise { amplitude: 12 }),
            ClassStyle::new("car", [220, 30, 30], Texture::Flat),
        ],
        vec![
            category(
                "field",
                vec![
                    SlotSpec::band(0, 1.0),
                    SlotSpec::band(1, 1.2),
                    SlotSpec::object(2, 0.2, 0.4),
                ],
            ),
            category(
                "street",
                vec![
                    SlotSpec::band(3, 1.2),
                    SlotSpec::band(4, 1.0),
                    SlotSpec::object(5, 0.2, 0.4),
                ],
            ),
        ],
    )
}

/// Two categories with disjoint three-class palettes. Each category's ground
/// and object classes look exactly like the other category's, so only the
/// scene context tells them apart. The objects appear in about half of the
/// images of their category. Region borders are left unlabelled, so small
/// patches (7 px) never see across a labelled border.
pub fn cooccurrence() -> SynthSpec {
    let mut s = base(
        vec![
            ClassStyle::new("sky", [90, 150, 230], Texture::Flat),
            ClassStyle::new("meadow", [40, 170, 40], Texture::Stripes { period: 2 }),
            ClassStyle::new("sheep", [200, 190, 170], Texture::Checker { period: 3 }),
            ClassStyle::new("wall", [200, 120, 60], Texture::Checker { period: 6 }),
            ClassStyle::new("lawn", [40, 170, 40], Texture::Stripes { period: 2 }),
            ClassStyle::new("statue", [200, 190, 170], Texture::Checker { period: 3 }),
        ],
        vec![
            category(
                "pasture",
                vec![
                    SlotSpec::band(0, 1.0),
                    SlotSpec::band(1, 1.0),
                    SlotSpec::object(2, 0.25, 0.45).with_presence(0.5),
                ],
            ),
            category(
                "courtyard",
                vec![
                    SlotSpec::band(3, 1.0),
                    SlotSpec::band(4, 1.0),
                    SlotSpec::object(5, 0.25, 0.45).with_presence(0.5),
                ],
            ),
        ],
    );
    s.void_gutter = 3;
    s
}

/// Two categories sharing one pixel-identical class pair, one in every image.
/// Borders are unlabelled as in [`cooccurrence`], so a small-patch forest
/// cannot use the surroundings to tell the pair apart.
pub fn confusable() -> SynthSpec {
    let mut s = base(
        vec![
            ClassStyle::new("sky", [90, 150, 230], Texture::Flat),
            ClassStyle::new("grass", [40, 170, 40], Texture::Stripes { period: 2 }),
            ClassStyle::new("cow", [150, 110, 80], Texture::Checker { period: 3 }),
            ClassStyle::new("wall", [200, 120, 60], Texture::Checker { period: 6 }),
            ClassStyle::new("road", [70, 70, 70], Texture::Noise { amplitude: 12 }),
            ClassStyle::new("horse", [150, 110, 80], Texture::Checker { period: 3 }),
        ],
        vec![
            category(
                "field",
                vec![
                    SlotSpec::band(0, 1.0),
                    SlotSpec::band(1, 1.0),
                    SlotSpec::object(2, 0.3, 0.5),
                ],
            ),
            category(
                "street",
                vec![
                    SlotSpec::band(3, 1.0),
                    SlotSpec::band(4, 1.0),
                    SlotSpec::object(5, 0.3, 0.5),
                ],
            ),
        ],
    );
    s.void_gutter = 3;
    s.train = 120;
    s.test = 40;
    s
}

/// One category whose top and bottom bands look identical; only their
/// position separates them.
pub fn location() -> SynthSpec {
    base(
        vec![
            ClassStyle::new("ceiling", [180, 180, 180], Texture::Noise { amplitude: 20 }),
            ClassStyle::new("wall", [200, 160, 110], Texture::Stripes { period: 3 }),
            ClassStyle::new("floor", [180, 180, 180], Texture::Noise { amplitude: 20 }),
            ClassStyle::new("lamp", [250, 230, 60], Texture::Flat),
        ],
        vec![category(
            "room",
            vec![
                SlotSpec::band(0, 1.0),
                SlotSpec::band(1, 1.5),
                SlotSpec::band(2, 1.0),
                SlotSpec::object(3, 0.1, 0.25).with_presence(0.7),
            ],
        )],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    #[test]
    fn every_preset_generates() {
        for name in NAMES {
            let mut spec = by_name(name).unwrap();
            spec.train = 4;
            spec.val = 0;
            spec.test = 2;
            let d = generate_synthetic(&spec, 1).unwrap();
            d.validate().unwrap();
        }
        assert!(by_name("nope").is_none());
    }
}
