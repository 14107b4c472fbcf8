//! Classifiers and evaluation metrics over four-class feature rows.
//!
//! Classes are `Label` indices (rest, 0-back, 2-back, 3-back). All ties,
//! in votes, scores and equal-gain splits, resolve to the lowest index.

pub mod forest;
pub mod lda;
pub mod metrics;
pub mod svm;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{Forest, MaxFeatures};
pub use lda::Lda;
pub use metrics::{confusion, confusion_labels, metrics, ConfusionMatrix, MetricsReport, N_CLASSES};
pub use svm::LinearSvm;
pub use tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Lda { gamma: f64 },
    Cart { depth: usize },
    RandomForest { n_trees: usize, max_depth: Option<usize>, max_features: MaxFeatures },
    LinearSvm { lambda: f64, epochs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub seed: u64,
}

/// Model rows of the comparison tables. Both SVM rows are linear.
pub const PRESETS: [&str; 7] = ["svm-l", "svm-r", "rf-50", "rf-100", "cart-6", "cart-10", "lda"];

impl ModelSpec {
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let rf = |n_trees| ModelKind::RandomForest { n_trees, max_depth: None, max_features: MaxFeatures::Sqrt };
        let kind = match name {
            "svm-l" | "svm-r" => ModelKind::LinearSvm { lambda: 1e-2, epochs: 20 },
            "rf-50" => rf(50),
            "rf-100" => rf(100),
            "cart-6" => ModelKind::Cart { depth: 6 },
            "cart-10" => ModelKind::Cart { depth: 10 },
            "lda" => ModelKind::Lda { gamma: 1e-3 },
            other => {
                return Err(Error::config(format!(
                    "unknown model `{other}`, expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(Self { kind, seed })
    }

    /// Table row name; the radial SVM slot is filled by the linear model.
    pub fn display_name(preset: &str) -> String {
        match preset {
            "svm-l" => "SVM-L".into(),
            "svm-r" => "SVM-R (linear)".into(),
            other => other.to_uppercase(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::Lda { gamma } if !(gamma > 0.0) => Err(Error::config("LDA gamma must be positive")),
            ModelKind::Cart { depth: 0 } => Err(Error::config("CART depth must be positive")),
            ModelKind::RandomForest { n_trees: 0, .. } => Err(Error::config("forest needs at least one tree")),
            ModelKind::LinearSvm { lambda, epochs } if !(lambda > 0.0) || epochs == 0 => {
                Err(Error::config("SVM needs lambda > 0 and at least one epoch"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Lda(Lda),
    Cart(Tree),
    RandomForest(Forest),
    LinearSvm(LinearSvm),
}

pub(crate) fn class_counts(y: &[usize]) -> [usize; N_CLASSES] {
    let mut c = [0; N_CLASSES];
    for &v in y {
        c[v] += 1;
    }
    c
}

pub(crate) fn argmax(scores: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

pub(crate) fn argmax_counts(counts: &[usize; N_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

pub fn train(spec: &ModelSpec, x: &[Vec<f64>], y: &[usize]) -> Result<Model> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let Some(first) = x.first() else {
        return Err(Error::InsufficientData("no training rows".into()));
    };
    let d = first.len();
    if d == 0 {
        return Err(Error::InsufficientData("training rows have no features".into()));
    }
    for row in x {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite training feature".into()));
        }
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= N_CLASSES) {
        return Err(Error::domain(format!("class index {bad} out of range")));
    }
    if class_counts(y).iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InsufficientData("training set holds a single class".into()));
    }
    Ok(match spec.kind {
        ModelKind::Lda { gamma } => Model::Lda(Lda::fit(x, y, gamma)?),
        ModelKind::Cart { depth } => {
            let params = tree::GrowParams { max_depth: Some(depth), max_features: None };
            Model::Cart(Tree::grow(x, y, (0..x.len()).collect(), params, None))
        }
        ModelKind::RandomForest { n_trees, max_depth, max_features } => {
            Model::RandomForest(Forest::fit(x, y, n_trees, max_depth, max_features, spec.seed))
        }
        ModelKind::LinearSvm { lambda, epochs } => {
            Model::LinearSvm(LinearSvm::fit(x, y, lambda, epochs, spec.seed))
        }
    })
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Lda(m) => m.n_features(),
            Model::Cart(m) => m.n_features(),
            Model::RandomForest(m) => m.n_features(),
            Model::LinearSvm(m) => m.n_features(),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: x.len() });
        }
        Ok(match self {
            Model::Lda(m) => m.predict_row(x),
            Model::Cart(m) => m.predict_row(x),
            Model::RandomForest(m) => m.predict_row(x),
            Model::LinearSvm(m) => m.predict_row(x),
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }
}
