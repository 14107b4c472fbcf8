//! Gini classification trees.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_counts, N_CLASSES};

pub const MIN_LEAF: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { class: usize },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    n_features: usize,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: Option<usize>,
    /// Features drawn per split; all when `None`.
    pub max_features: Option<usize>,
}

fn gini(counts: &[usize; N_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    /// `x` by column.
    cols: &'a [Vec<f64>],
    y: &'a [usize],
    params: GrowParams,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let d = self.x[0].len();
        let features: Vec<usize> = match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < d => {
                let mut f = index::sample(rng, d, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let n = idx.len();
        let mut total = [0usize; N_CLASSES];
        for &i in idx {
            total[self.y[i]] += 1;
        }
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for f in features {
            pairs.clear();
            let col = &self.cols[f];
            pairs.extend(idx.iter().map(|&i| (col[i], self.y[i])));
            // order within ties cannot change any admissible split
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; N_CLASSES];
            for k in 0..n - 1 {
                left[pairs[k].1] += 1;
                let nl = k + 1;
                if nl < MIN_LEAF || n - nl < MIN_LEAF || pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let mut right = total;
                for c in 0..N_CLASSES {
                    right[c] -= left[c];
                }
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let threshold = 0.5 * (pairs[k].0 + pairs[k + 1].0);
                    best = Some(BestSplit { feature: f, threshold, score });
                }
            }
        }
        let parent = gini(&total, n);
        best.filter(|b| b.score < parent)
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let mut counts = [0usize; N_CLASSES];
        for &i in &idx {
            counts[self.y[i]] += 1;
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { class: argmax_counts(&counts) });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || capped || idx.len() < 2 * MIN_LEAF {
            return slot;
        }
        let Some(split) = self.best_split(&idx) else {
            return slot;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        slot
    }
}

pub(crate) fn columns(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..x[0].len()).map(|f| x.iter().map(|r| r[f]).collect()).collect()
}

impl Tree {
    /// Grows a tree on `x[idx]`. `rng` drives per-split feature sampling.
    pub fn grow(
        x: &[Vec<f64>],
        y: &[usize],
        idx: Vec<usize>,
        params: GrowParams,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Self {
        Self::grow_with_columns(x, &columns(x), y, idx, params, rng)
    }

    pub(crate) fn grow_with_columns(
        x: &[Vec<f64>],
        cols: &[Vec<f64>],
        y: &[usize],
        idx: Vec<usize>,
        params: GrowParams,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Self {
        let mut b = Builder { x, cols, y, params, rng, nodes: Vec::new() };
        b.grow(idx, 0);
        Tree { n_features: x[0].len(), nodes: b.nodes }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}
