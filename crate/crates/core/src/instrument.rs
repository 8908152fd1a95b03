//! Evaluation counters used to check routing and cost contracts.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Debug, Default)]
pub struct Counters {
    recognizer_calls: AtomicU64,
    forest_image_calls: AtomicU64,
    pixel_predictions: AtomicU64,
    tree_traversals: AtomicU64,
    node_visits: AtomicU64,
    specialist_calls: Mutex<Vec<u64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub recognizer_calls: u64,
    /// Whole-image forest evaluations (one per `classify_image`).
    pub forest_image_calls: u64,
    /// Pixels whose class distribution was computed by a forest.
    pub pixel_predictions: u64,
    /// Pixel x tree root-to-leaf walks.
    pub tree_traversals: u64,
    /// Internal and leaf nodes touched during those walks.
    pub node_visits: u64,
    /// Image-level evaluations per specialist forest, indexed by cluster.
    pub specialist_calls: Vec<u64>,
}

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn recognizer(&self) {
        self.recognizer_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn forest_image(&self, pixels: u64) {
        self.forest_image_calls.fetch_add(1, Ordering::Relaxed);
        self.pixel_predictions.fetch_add(pixels, Ordering::Relaxed);
    }

    pub(crate) fn traversals(&self, walks: u64, nodes: u64) {
        self.tree_traversals.fetch_add(walks, Ordering::Relaxed);
        self.node_visits.fetch_add(nodes, Ordering::Relaxed);
    }

    pub(crate) fn specialist(&self, cluster: usize) {
        let mut v = self.specialist_calls.lock().unwrap();
        if v.len() <= cluster {
            v.resize(cluster + 1, 0);
        }
        v[cluster] += 1;
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            recognizer_calls: self.recognizer_calls.load(Ordering::Relaxed),
            forest_image_calls: self.forest_image_calls.load(Ordering::Relaxed),
            pixel_predictions: self.pixel_predictions.load(Ordering::Relaxed),
            tree_traversals: self.tree_traversals.load(Ordering::Relaxed),
            node_visits: self.node_visits.load(Ordering::Relaxed),
            specialist_calls: self.specialist_calls.lock().unwrap().clone(),
        }
    }
}
