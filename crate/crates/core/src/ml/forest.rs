//! Bagged trees with per-split feature sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{self, GrowParams, Tree};
use super::{argmax_counts, N_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
            MaxFeatures::All => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
}

/// Generator for tree `t`: the master seed on stream `t`.
pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Bootstrap sample of `n` row indices, drawn first from the tree's stream.
pub fn bootstrap(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

impl Forest {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_trees: usize,
        max_depth: Option<usize>,
        max_features: MaxFeatures,
        seed: u64,
    ) -> Self {
        let params = GrowParams { max_depth, max_features: Some(max_features.resolve(x[0].len())) };
        let cols = tree::columns(x);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t);
                let idx = bootstrap(&mut rng, x.len());
                Tree::grow_with_columns(x, &cols, y, idx, params, Some(&mut rng))
            })
            .collect();
        Forest { trees }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features())
    }

    /// Majority vote; ties go to the lowest class index.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut votes = [0usize; N_CLASSES];
        for t in &self.trees {
            votes[t.predict_row(x)] += 1;
        }
        argmax_counts(&votes)
    }
}
