//! One-vs-rest linear SVM trained with Pegasos subgradient steps.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, class_counts, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    mean: Vec<f64>,
    scale: Vec<f64>,
    classes: Vec<usize>,
    /// Per class: weights over standardised features, bias last.
    weights: Vec<Vec<f64>>,
}

impl LinearSvm {
    pub fn fit(x: &[Vec<f64>], y: &[usize], lambda: f64, epochs: usize, seed: u64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for i in 0..d {
                scale[i] += (row[i] - mean[i]).powi(2) / n as f64;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|row| {
                let mut r: Vec<f64> = (0..d).map(|i| (row[i] - mean[i]) / scale[i]).collect();
                r.push(1.0);
                r
            })
            .collect();
        let counts = class_counts(y);
        let classes: Vec<usize> = (0..N_CLASSES).filter(|&c| counts[c] > 0).collect();
        let radius = 1.0 / lambda.sqrt();
        let weights = classes
            .iter()
            .map(|&c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let mut w = vec![0.0; d + 1];
                let mut order: Vec<usize> = (0..n).collect();
                let mut t = 0usize;
                for _ in 0..epochs {
                    order.shuffle(&mut rng);
                    for &i in &order {
                        t += 1;
                        let eta = 1.0 / (lambda * t as f64);
                        let target = if y[i] == c { 1.0 } else { -1.0 };
                        let margin = target * dot(&w, &z[i]);
                        let shrink = 1.0 - eta * lambda;
                        w.iter_mut().for_each(|v| *v *= shrink);
                        if margin < 1.0 {
                            for (v, zi) in w.iter_mut().zip(&z[i]) {
                                *v += eta * target * zi;
                            }
                        }
                        let norm = dot(&w, &w).sqrt();
                        if norm > radius {
                            w.iter_mut().for_each(|v| *v *= radius / norm);
                        }
                    }
                }
                w
            })
            .collect();
        Self { mean, scale, classes, weights }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut scores = [f64::NEG_INFINITY; N_CLASSES];
        for (&c, w) in self.classes.iter().zip(&self.weights) {
            let d = self.mean.len();
            let s: f64 = (0..d).map(|i| w[i] * (x[i] - self.mean[i]) / self.scale[i]).sum();
            scores[c] = s + w[d];
        }
        argmax(&scores)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
