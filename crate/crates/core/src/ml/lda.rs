//! Shrinkage linear discriminant analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{argmax, class_counts, N_CLASSES};

/// Linear scores `w_c . (x - centre) + b_c`; absent classes hold no weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    centre: Vec<f64>,
    classes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Lda {
    /// Pooled within-class covariance plus `gamma * trace / d` on the
    /// diagonal. Solved in the sample space when `d` exceeds the row count.
    pub fn fit(x: &[Vec<f64>], y: &[usize], gamma: f64) -> Result<Self> {
        let n = x.len();
        let d = x[0].len();
        let counts = class_counts(y);
        let classes: Vec<usize> = (0..N_CLASSES).filter(|&c| counts[c] > 0).collect();
        let mut centre = vec![0.0; d];
        for row in x {
            for (m, v) in centre.iter_mut().zip(row) {
                *m += v;
            }
        }
        centre.iter_mut().for_each(|m| *m /= n as f64);

        // class means relative to the global centre, d x C
        let mut means = DMatrix::<f64>::zeros(d, classes.len());
        for (row, &c) in x.iter().zip(y) {
            let j = classes.iter().position(|&k| k == c).unwrap();
            for i in 0..d {
                means[(i, j)] += row[i] - centre[i];
            }
        }
        for (j, &c) in classes.iter().enumerate() {
            means.column_mut(j).scale_mut(1.0 / counts[c] as f64);
        }
        // within-class deviations, n x d
        let dev = DMatrix::from_fn(n, d, |r, i| {
            let j = classes.iter().position(|&k| k == y[r]).unwrap();
            x[r][i] - centre[i] - means[(i, j)]
        });
        let dof = n.saturating_sub(classes.len()).max(1) as f64;
        let trace = dev.norm_squared() / dof;
        let lambda = if trace > 0.0 { gamma * trace / d as f64 } else { gamma };

        let solved = if d <= n {
            let mut s = dev.tr_mul(&dev) / dof;
            for i in 0..d {
                s[(i, i)] += lambda;
            }
            let chol = s.cholesky().ok_or_else(|| Error::Numerical("LDA covariance not positive definite".into()))?;
            chol.solve(&means)
        } else {
            let mut k = &dev * dev.transpose();
            for i in 0..n {
                k[(i, i)] += dof * lambda;
            }
            let chol = k.cholesky().ok_or_else(|| Error::Numerical("LDA Gram matrix not positive definite".into()))?;
            let inner = chol.solve(&(&dev * &means));
            (&means - dev.tr_mul(&inner)) / lambda
        };

        let mut weights = Vec::with_capacity(classes.len());
        let mut bias = Vec::with_capacity(classes.len());
        for (j, &c) in classes.iter().enumerate() {
            let w: DVector<f64> = solved.column(j).into_owned();
            let prior = counts[c] as f64 / n as f64;
            bias.push(-0.5 * w.dot(&means.column(j)) + prior.ln());
            weights.push(w.iter().copied().collect());
        }
        Ok(Self { centre, classes, weights, bias })
    }

    pub fn n_features(&self) -> usize {
        self.centre.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut scores = [f64::NEG_INFINITY; N_CLASSES];
        for ((&c, w), b) in self.classes.iter().zip(&self.weights).zip(&self.bias) {
            let s: f64 = w.iter().zip(x).zip(&self.centre).map(|((w, v), m)| w * (v - m)).sum();
            scores[c] = s + b;
        }
        argmax(&scores)
    }
}
