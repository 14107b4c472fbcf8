//! Sliding-window train-test (walk-forward) evaluation.
//!
//! Rows are visited in time order. A test row may only be predicted by a
//! model whose training rows all have horizons ending at or before the
//! test row's history start. Models are refitted every `retrain_every`
//! test rows; each refit opens a fold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, WindowSpec};
use crate::ml::{self, ConfusionMatrix, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwttConfig {
    /// Training rows required before the first prediction.
    pub min_train_rows: usize,
    /// Test rows served by one fitted model.
    pub retrain_every: usize,
    /// Train on only the most recent `n` eligible rows instead of all.
    pub trailing: Option<usize>,
}

impl Default for SwttConfig {
    fn default() -> Self {
        Self { min_train_rows: 30, retrain_every: 10, trailing: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train_rows: std::ops::Range<usize>,
    pub test_rows: Vec<usize>,
    /// Latest horizon end among the training rows, seconds.
    pub train_horizon_end: f64,
    /// Earliest history start among the test rows, seconds.
    pub test_history_start: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwttResult {
    pub confusion: ConfusionMatrix,
    pub folds: Vec<Fold>,
    /// `(row, predicted class)` for every tested row.
    pub predictions: Vec<(usize, usize)>,
}

impl SwttResult {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    pub fn n_test(&self) -> usize {
        self.predictions.len()
    }
}

/// Number of leading rows whose horizons end by `t`. Rows are time-sorted.
fn eligible(fm: &FeatureMatrix, spec: &WindowSpec, t: f64) -> usize {
    fm.times.partition_point(|&s| s + spec.horizon <= t + 1e-9)
}

pub fn swtt_evaluate(
    fm: &FeatureMatrix,
    spec: &WindowSpec,
    model: &ModelSpec,
    cfg: &SwttConfig,
) -> Result<SwttResult> {
    if cfg.retrain_every == 0 {
        return Err(Error::config("retrain_every must be positive"));
    }
    if fm.times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("feature rows are not in time order"));
    }
    let y: Vec<usize> = fm.labels.iter().map(|l| l.index()).collect();
    let mut cm = ConfusionMatrix::default();
    let mut folds: Vec<Fold> = Vec::new();
    let mut predictions = Vec::new();
    let mut current: Option<(ml::Model, std::ops::Range<usize>, f64)> = None;
    let mut served = 0;

    for i in 0..fm.n_rows() {
        let history_start = fm.times[i] - spec.history;
        if current.is_none() || served == cfg.retrain_every {
            let end = eligible(fm, spec, history_start);
            let start = cfg.trailing.map_or(0, |n| end.saturating_sub(n));
            let classes = {
                let mut seen = [false; ml::N_CLASSES];
                y[start..end].iter().for_each(|&c| seen[c] = true);
                seen.iter().filter(|&&s| s).count()
            };
            if end - start < cfg.min_train_rows.max(1) || classes < 2 {
                // warm-up: nothing can be tested yet
                current = None;
                continue;
            }
            let m = ml::train(model, &fm.rows[start..end], &y[start..end])?;
            let horizon_end = fm.times[end - 1] + spec.horizon;
            current = Some((m, start..end, horizon_end));
            served = 0;
            folds.push(Fold {
                train_rows: start..end,
                test_rows: Vec::new(),
                train_horizon_end: horizon_end,
                test_history_start: history_start,
                accuracy: 0.0,
            });
        }
        let (m, _, horizon_end) = current.as_ref().expect("model fitted above");
        // no temporal leakage
        assert!(
            *horizon_end <= history_start + 1e-9,
            "training horizon ends at {horizon_end} s after test history start {history_start} s"
        );
        let p = m.predict_row(&fm.rows[i])?;
        cm.record(y[i], p)?;
        predictions.push((i, p));
        folds.last_mut().unwrap().test_rows.push(i);
        served += 1;
    }

    let mut predicted = vec![None; fm.n_rows()];
    for &(i, p) in &predictions {
        predicted[i] = Some(p);
    }
    for f in &mut folds {
        let hits = f.test_rows.iter().filter(|&&i| predicted[i] == Some(y[i])).count();
        f.accuracy = hits as f64 / f.test_rows.len() as f64;
    }
    if folds.len() < 2 {
        let min_rows = cfg.min_train_rows + spec.samples(spec.history + spec.horizon) / spec.samples(spec.step).max(1) + 2;
        return Err(Error::InsufficientData(format!(
            "walk-forward evaluation produced {} fold(s); need at least 2 (roughly {} feature rows covering two classes)",
            folds.len(),
            min_rows + cfg.retrain_every
        )));
    }
    debug_assert_eq!(cm.total() as usize, predictions.len());
    Ok(SwttResult { confusion: cm, folds, predictions })
}

/// True when every fold's training horizon ends by its test history start.
pub fn no_leakage(result: &SwttResult) -> bool {
    result.folds.iter().all(|f| f.train_horizon_end <= f.test_history_start + 1e-9)
}
