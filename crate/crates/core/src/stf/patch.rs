use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::RgbImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Value,
    Sum,
    Difference,
    AbsDifference,
}

impl TestKind {
    const ALL: [TestKind; 4] = [
        TestKind::Value,
        TestKind::Sum,
        TestKind::Difference,
        TestKind::AbsDifference,
    ];

    pub(crate) fn to_u8(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }
}

/// A pixel read relative to the patch centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub dx: i8,
    pub dy: i8,
    pub channel: u8,
}

impl Probe {
    pub fn new(dx: i8, dy: i8, channel: u8) -> Self {
        Probe { dx, dy, channel }
    }

    #[inline]
    fn read(&self, image: &RgbImage, x: usize, y: usize) -> i32 {
        image.clamped(
            x as i64 + self.dx as i64,
            y as i64 + self.dy as i64,
            self.channel as usize,
        ) as i32
    }
}

/// Binary split test on raw patch values: `feature(patch) > threshold`.
/// `b` is ignored by [`TestKind::Value`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchTest {
    pub kind: TestKind,
    pub a: Probe,
    pub b: Probe,
    pub threshold: f64,
}

impl PatchTest {
    /// Integer feature value at centre `(x, y)`. Reads outside the image are
    /// clamped to the border.
    #[inline]
    pub fn feature(&self, image: &RgbImage, x: usize, y: usize) -> i32 {
        let a = self.a.read(image, x, y);
        match self.kind {
            TestKind::Value => a,
            TestKind::Sum => a + self.b.read(image, x, y),
            TestKind::Difference => a - self.b.read(image, x, y),
            TestKind::AbsDifference => (a - self.b.read(image, x, y)).abs(),
        }
    }

    #[inline]
    pub fn eval(&self, image: &RgbImage, x: usize, y: usize) -> bool {
        self.feature(image, x, y) as f64 > self.threshold
    }

    /// Random kind and probes with `|dx|, |dy| <= radius`; threshold left at 0.
    pub(crate) fn random_geometry<R: Rng>(rng: &mut R, radius: i8) -> Self {
        let kind = TestKind::ALL[rng.random_range(0..4)];
        let mut probe = || {
            Probe::new(
                rng.random_range(-radius..=radius),
                rng.random_range(-radius..=radius),
                rng.random_range(0..3),
            )
        };
        let a = probe();
        let b = if kind == TestKind::Value { a } else { probe() };
        PatchTest {
            kind,
            a,
            b,
            threshold: 0.0,
        }
    }
}
