use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, Decoder, Encoder, Kind};
use crate::error::{Error, Result};
use crate::features::COLOR_GRID;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerParams {
    pub extractor: String,
    pub epochs: usize,
    /// L2 regularisation strength.
    pub lambda: f64,
    pub learning_rate: f64,
}

impl Default for RecognizerParams {
    fn default() -> Self {
        RecognizerParams {
            extractor: COLOR_GRID.to_string(),
            epochs: 60,
            lambda: 1e-3,
            learning_rate: 0.1,
        }
    }
}

impl RecognizerParams {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("recognizer epochs must be positive"));
        }
        if !(self.lambda > 0.0 && self.learning_rate > 0.0) {
            return Err(Error::param(
                "recognizer lambda and learning_rate must be positive",
            ));
        }
        Ok(())
    }
}

/// One-vs-rest linear scorer over global image features.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterRecognizer {
    pub extractor: String,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl ClusterRecognizer {
    /// A recognizer that always answers cluster 0.
    pub fn constant(extractor: &str, dim: usize) -> Self {
        ClusterRecognizer {
            extractor: extractor.to_string(),
            weights: vec![vec![0.0; dim]],
            biases: vec![0.0],
        }
    }

    pub fn clusters(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, features) + b)
            .collect()
    }

    /// Highest-scoring cluster; ties go to the lowest id.
    pub fn predict(&self, features: &[f64]) -> usize {
        crate::stf::argmax(&self.scores(features))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hinge-loss SGD with a decaying step, run once per cluster on standardised
/// features; the standardisation is folded back into the returned weights.
pub fn train_recognizer(
    features: &[Vec<f64>],
    targets: &[usize],
    clusters: usize,
    params: &RecognizerParams,
    seed: u64,
) -> Result<ClusterRecognizer> {
    params.validate()?;
    if features.len() != targets.len() || features.is_empty() {
        return Err(Error::param(
            "recognizer needs one target per feature vector",
        ));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch(
            "ragged recognizer features".into(),
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= clusters) {
        return Err(Error::param(format!("target cluster {t} >= {clusters}")));
    }
    if clusters == 1 {
        return Ok(ClusterRecognizer::constant(&params.extractor, dim));
    }
    let n = features.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n)
        .collect();
    let inv_std: Vec<f64> = (0..dim)
        .map(|j| {
            let var = features
                .iter()
                .map(|f| (f[j] - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            if var > 1e-24 {
                1.0 / var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|f| (0..dim).map(|j| (f[j] - mean[j]) * inv_std[j]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut weights = vec![vec![0.0; dim]; clusters];
    let mut biases = vec![0.0; clusters];
    let mut step = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            step += 1;
            let eta =
                params.learning_rate / (1.0 + params.learning_rate * params.lambda * step as f64);
            let shrink = 1.0 - eta * params.lambda;
            for k in 0..clusters {
                let y = if targets[i] == k { 1.0 } else { -1.0 };
                let w = &mut weights[k];
                let margin = y * (dot(w, &z[i]) + biases[k]);
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, zj) in w.iter_mut().zip(&z[i]) {
                        *wj += eta * y * zj;
                    }
                    biases[k] += eta * y;
                }
            }
        }
    }
    for k in 0..clusters {
        let mut shift = 0.0;
        for j in 0..dim {
            weights[k][j] *= inv_std[j];
            shift += weights[k][j] * mean[j];
        }
        biases[k] -= shift;
    }
    Ok(ClusterRecognizer {
        extractor: params.extractor.clone(),
        weights,
        biases,
    })
}

impl Codec for ClusterRecognizer {
    const KIND: Kind = Kind::Recognizer;

    fn encode(&self, e: &mut Encoder) {
        e.str(&self.extractor);
        e.len(self.weights.len());
        for w in &self.weights {
            e.f64s(w);
        }
        e.f64s(&self.biases);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let extractor = d.str()?;
        let k = d.len(8)?;
        let weights: Vec<Vec<f64>> = (0..k).map(|_| d.f64s()).collect::<Result<_>>()?;
        let biases = d.f64s()?;
        if k == 0 || biases.len() != k || weights.iter().any(|w| w.len() != weights[0].len()) {
            return Err(Error::Model("inconsistent recognizer shapes".into()));
        }
        Ok(ClusterRecognizer {
            extractor,
            weights,
            biases,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_points_are_learned() {
        let mut f = Vec::new();
        let mut t = Vec::new();
        for i in 0..30 {
            let x = i as f64 / 30.0;
            f.push(vec![x, 1.0 - x, 0.5]);
            t.push(if x < 0.3 {
                0
            } else if x < 0.7 {
                1
            } else {
                2
            });
        }
        let r = train_recognizer(&f, &t, 3, &RecognizerParams::default(), 3).unwrap();
        let acc = f.iter().zip(&t).filter(|(x, &y)| r.predict(x) == y).count();
        assert!(acc >= 26, "accuracy {acc}/30");
    }

    #[test]
    fn ties_pick_lowest() {
        let r = ClusterRecognizer {
            extractor: "x".into(),
            weights: vec![vec![1.0], vec![1.0], vec![0.0]],
            biases: vec![0.0, 0.0, 0.0],
        };
        assert_eq!(r.predict(&[2.0]), 0);
        assert_eq!(r.predict(&[-2.0]), 2);
    }

    #[test]
    fn single_cluster_is_constant() {
        let r = train_recognizer(
            &[vec![1.0], vec![2.0]],
            &[0, 0],
            1,
            &RecognizerParams::default(),
            0,
        )
        .unwrap();
        assert_eq!(r.predict(&[100.0]), 0);
        let back = ClusterRecognizer::from_bytes(&r.to_bytes()).unwrap();
        assert_eq!(back, r);
    }
}
