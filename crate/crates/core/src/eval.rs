//! Confusion matrices, recall and intersection-over-union.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{LabelImage, Labeling};

/// Rows are ground truth, columns are predictions; void pixels are skipped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    #[inline]
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, pred)).sum()
    }

    /// Adds every labelled pixel of `truth`. Ground-truth values outside
    /// `[0, classes)` count as void.
    pub fn accumulate(&mut self, prediction: &Labeling, truth: &LabelImage) -> Result<()> {
        if prediction.width != truth.width() || prediction.height != truth.height() {
            return Err(Error::DimensionMismatch(format!(
                "prediction is {}x{}, truth is {}x{}",
                prediction.width,
                prediction.height,
                truth.width(),
                truth.height()
            )));
        }
        for (&p, &t) in prediction.labels.iter().zip(truth.labels()) {
            let t = t as usize;
            if t >= self.classes {
                continue;
            }
            if p >= self.classes {
                return Err(Error::param(format!(
                    "predicted label {p} >= {}",
                    self.classes
                )));
            }
            self.counts[t * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Recalls {
    /// `None` for classes absent from the ground truth.
    pub per_class: Vec<Option<f64>>,
    pub average: f64,
    pub global: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Iou {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

fn mean_defined(v: &[Option<f64>]) -> f64 {
    let d: Vec<f64> = v.iter().flatten().copied().collect();
    d.iter().sum::<f64>() / d.len() as f64
}

pub fn recalls(conf: &ConfusionMatrix) -> Result<Recalls> {
    let total = conf.total();
    if total == 0 {
        return Err(Error::NoLabels("confusion matrix is empty".into()));
    }
    let per_class: Vec<Option<f64>> = (0..conf.classes)
        .map(|c| {
            let row = conf.row_sum(c);
            (row > 0).then(|| conf.get(c, c) as f64 / row as f64)
        })
        .collect();
    let trace: u64 = (0..conf.classes).map(|c| conf.get(c, c)).sum();
    Ok(Recalls {
        average: mean_defined(&per_class),
        global: trace as f64 / total as f64,
        per_class,
    })
}

pub fn iou(conf: &ConfusionMatrix) -> Result<Iou> {
    if conf.total() == 0 {
        return Err(Error::NoLabels("confusion matrix is empty".into()));
    }
    let per_class: Vec<Option<f64>> = (0..conf.classes)
        .map(|c| {
            let tp = conf.get(c, c);
            let denom = conf.row_sum(c) + conf.col_sum(c) - tp;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect();
    Ok(Iou {
        mean: mean_defined(&per_class),
        per_class,
    })
}

/// Recall and IoU for one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub classes: Vec<String>,
    pub recall: Recalls,
    pub iou: Iou,
    pub confusion: ConfusionMatrix,
}

impl Metrics {
    pub fn from_confusion(classes: &[String], conf: ConfusionMatrix) -> Result<Self> {
        Ok(Metrics {
            classes: classes.to_vec(),
            recall: recalls(&conf)?,
            iou: iou(&conf)?,
            confusion: conf,
        })
    }

    /// One row per class plus summary rows; undefined values are left empty.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("class,recall,iou\n");
        for (i, name) in self.classes.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                name,
                fmt(self.recall.per_class[i]),
                fmt(self.iou.per_class[i])
            ));
        }
        out.push_str(&format!(
            "average,{:.6},{:.6}\n",
            self.recall.average, self.iou.mean
        ));
        out.push_str(&format!("global,{:.6},\n", self.recall.global));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::VOID;

    fn conf_3140() -> ConfusionMatrix {
        ConfusionMatrix {
            classes: 2,
            counts: vec![3, 1, 0, 4],
        }
    }

    #[test]
    fn recall_by_hand() {
        let r = recalls(&conf_3140()).unwrap();
        assert_eq!(r.per_class, vec![Some(0.75), Some(1.0)]);
        assert_eq!(r.average, 0.875);
        assert_eq!(r.global, 7.0 / 8.0);
    }

    #[test]
    fn iou_by_hand() {
        let i = iou(&conf_3140()).unwrap();
        assert_eq!(i.per_class, vec![Some(0.75), Some(0.8)]);
    }

    #[test]
    fn accumulate_by_hand() {
        let truth = LabelImage::new(2, 2, vec![0, 1, VOID, 1]).unwrap();
        let pred = Labeling::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        let mut c = ConfusionMatrix::new(2);
        c.accumulate(&pred, &truth).unwrap();
        assert_eq!(c.counts, vec![1, 0, 1, 1]);
        let void = LabelImage::filled(2, 2, VOID).unwrap();
        c.accumulate(&pred, &void).unwrap();
        assert_eq!(c.total(), 3);
        assert!(c.accumulate(&Labeling::uniform(1, 2, 0), &truth).is_err());
    }

    #[test]
    fn absent_class_is_undefined() {
        let c = ConfusionMatrix {
            classes: 3,
            counts: vec![2, 0, 0, 0, 2, 0, 0, 0, 0],
        };
        let r = recalls(&c).unwrap();
        assert_eq!(r.per_class[2], None);
        assert_eq!(r.average, 1.0);
        assert_eq!(iou(&c).unwrap().per_class[2], None);
        assert!(recalls(&ConfusionMatrix::new(2)).is_err());
    }
}
