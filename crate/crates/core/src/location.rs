//! Absolute-position class priors on a normalised grid, kept separately for
//! portrait and landscape images.

use serde::Serialize;

use crate::codec::{Codec, Decoder, Encoder, Kind};
use crate::dataset::is_labelled;
use crate::error::{Error, Result};
use crate::image::LabelImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Portrait,
    Landscape,
}

impl Orientation {
    /// Square images count as landscape.
    pub fn of(width: usize, height: usize) -> Self {
        if width >= height {
            Orientation::Landscape
        } else {
            Orientation::Portrait
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocationPotentials {
    pub grid: usize,
    pub classes: usize,
    /// `grid * grid * classes` probabilities, indexed `(cy * grid + cx) * classes + c`.
    pub portrait: Vec<f64>,
    pub landscape: Vec<f64>,
}

/// Grid cell of pixel `(x, y)` in a `width x height` image.
#[inline]
pub fn cell_of(grid: usize, width: usize, height: usize, x: usize, y: usize) -> (usize, usize) {
    (x * grid / width, y * grid / height)
}

fn transpose(table: &[f64], grid: usize, classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    for cy in 0..grid {
        for cx in 0..grid {
            let src = (cy * grid + cx) * classes;
            let dst = (cx * grid + cy) * classes;
            out[dst..dst + classes].copy_from_slice(&table[src..src + classes]);
        }
    }
    out
}

fn normalise(counts: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(counts.len());
    for cell in counts.chunks(classes) {
        let total: f64 = cell.iter().map(|n| n + 1.0).sum();
        out.extend(cell.iter().map(|n| (n + 1.0) / total));
    }
    out
}

/// Counts labelled pixels per cell and class (+1 smoothing, then per-cell
/// normalisation). An orientation without images borrows the other one's
/// table, transposed.
pub fn train_location(
    labels: &[&LabelImage],
    classes: usize,
    grid: usize,
) -> Result<LocationPotentials> {
    if grid == 0 {
        return Err(Error::param("location grid must be at least 1"));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cells = grid * grid * classes;
    let mut counts = [vec![0.0; cells], vec![0.0; cells]];
    let mut seen = [false, false];
    let mut any = false;
    for l in labels {
        let (w, h) = (l.width(), l.height());
        let g = (Orientation::of(w, h) == Orientation::Landscape) as usize;
        seen[g] = true;
        for y in 0..h {
            for x in 0..w {
                let lab = l.get(x, y);
                if is_labelled(lab, classes) {
                    let (cx, cy) = cell_of(grid, w, h, x, y);
                    counts[g][(cy * grid + cx) * classes + lab as usize] += 1.0;
                    any = true;
                }
            }
        }
    }
    if !any {
        return Err(Error::NoLabels(
            "location training set is entirely void".into(),
        ));
    }
    let mut portrait = normalise(&counts[0], classes);
    let mut landscape = normalise(&counts[1], classes);
    if !seen[0] {
        portrait = transpose(&landscape, grid, classes);
    } else if !seen[1] {
        landscape = transpose(&portrait, grid, classes);
    }
    Ok(LocationPotentials {
        grid,
        classes,
        portrait,
        landscape,
    })
}

impl LocationPotentials {
    pub fn table(&self, orientation: Orientation) -> &[f64] {
        match orientation {
            Orientation::Portrait => &self.portrait,
            Orientation::Landscape => &self.landscape,
        }
    }

    /// Class distribution at pixel `(x, y)` of a `width x height` image.
    #[inline]
    pub fn cell_probs(&self, width: usize, height: usize, x: usize, y: usize) -> &[f64] {
        let (cx, cy) = cell_of(self.grid, width, height, x, y);
        let i = (cy * self.grid + cx) * self.classes;
        &self.table(Orientation::of(width, height))[i..i + self.classes]
    }

    pub fn lookup(&self, width: usize, height: usize, x: usize, y: usize, class: usize) -> f64 {
        self.cell_probs(width, height, x, y)[class]
    }

    /// Long-format CSV: orientation, class, row, column, probability.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("orientation,class,row,col,probability\n");
        for (tag, table) in [("portrait", &self.portrait), ("landscape", &self.landscape)] {
            for (c, name) in names.iter().enumerate().take(self.classes) {
                for cy in 0..self.grid {
                    for cx in 0..self.grid {
                        let p = table[(cy * self.grid + cx) * self.classes + c];
                        out.push_str(&format!("{tag},{name},{cy},{cx},{p}\n"));
                    }
                }
            }
        }
        out
    }
}

impl Codec for LocationPotentials {
    const KIND: Kind = Kind::Location;

    fn encode(&self, e: &mut Encoder) {
        e.u32(self.grid as u32);
        e.u32(self.classes as u32);
        e.f64s(&self.portrait);
        e.f64s(&self.landscape);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let grid = d.u32()? as usize;
        let classes = d.u32()? as usize;
        let portrait = d.f64s()?;
        let landscape = d.f64s()?;
        let n = grid * grid * classes;
        if grid == 0 || classes == 0 || portrait.len() != n || landscape.len() != n {
            return Err(Error::Model("location table has the wrong shape".into()));
        }
        Ok(LocationPotentials {
            grid,
            classes,
            portrait,
            landscape,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::VOID;

    #[test]
    fn two_by_two_by_hand() {
        // 4x2 landscape image; cells are 2x1 pixel blocks
        let l = LabelImage::new(4, 2, vec![0, 0, 1, VOID, 1, 1, 1, 0]).unwrap();
        let pot = train_location(&[&l], 2, 2).unwrap();
        // top-left cell: two 0s -> (3/4, 1/4) after +1 smoothing
        assert_eq!(pot.cell_probs(4, 2, 0, 0), &[0.75, 0.25]);
        // top-right: one 1 -> (1/3, 2/3)
        assert_eq!(pot.cell_probs(4, 2, 3, 0), &[1.0 / 3.0, 2.0 / 3.0]);
        // bottom-right: one 1, one 0 -> (1/2, 1/2)
        assert_eq!(pot.lookup(4, 2, 2, 1, 0), 0.5);
    }

    #[test]
    fn missing_orientation_is_transposed() {
        let l = LabelImage::new(4, 2, vec![0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
        let pot = train_location(&[&l], 2, 2).unwrap();
        // landscape: class 1 on the right; portrait copy: class 1 at the bottom
        assert!(pot.lookup(2, 4, 0, 3, 1) > 0.5);
        assert!(pot.lookup(2, 4, 1, 0, 0) > 0.5);
    }

    #[test]
    fn all_void_is_an_error() {
        let l = LabelImage::filled(3, 3, VOID).unwrap();
        assert!(matches!(
            train_location(&[&l], 2, 4),
            Err(Error::NoLabels(_))
        ));
    }
}
