//! Scenario runner: every (feature scheme, model) pair over every
//! recording, evaluated walk-forward within each subject.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::recording::{Recording, SCENARIO_A_CHANNELS, SCENARIO_B_CHANNELS};
use super::swtt::{no_leakage, swtt_evaluate, SwttConfig};
use crate::decomposer::{decompose, DecomposerConfig, Decomposition, Threshold};
use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix, HdmFeatureSpec, Label, WindowSpec};
use crate::filterbank;
use crate::hrf::BaseKernel;
use crate::ml::{metrics, ConfusionMatrix, MetricsReport, ModelSpec, PRESETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Raw,
    Tfd,
    Hdm,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Raw, Scheme::Tfd, Scheme::Hdm];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Raw => "raw",
            Scheme::Tfd => "tfd",
            Scheme::Hdm => "hdm",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Scheme::Raw => "Raw data",
            Scheme::Tfd => "TFD-FB",
            Scheme::Hdm => "HDM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown feature scheme `{s}` (raw, tfd, hdm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub channels: Vec<String>,
    pub schemes: Vec<Scheme>,
    /// Model presets, see `ml::PRESETS`.
    pub models: Vec<String>,
    pub window: WindowSpec,
    pub swtt: SwttConfig,
    pub decomposer: DecomposerConfig,
    pub hdm: HdmFeatureSpec,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::scenario_a(0)
    }
}

impl ScenarioConfig {
    pub fn scenario_a(seed: u64) -> Self {
        Self {
            name: "A".into(),
            channels: SCENARIO_A_CHANNELS.iter().map(|s| s.to_string()).collect(),
            schemes: Scheme::ALL.to_vec(),
            models: PRESETS.iter().map(|s| s.to_string()).collect(),
            window: WindowSpec::default(),
            swtt: SwttConfig::default(),
            decomposer: DecomposerConfig::default(),
            hdm: HdmFeatureSpec::default(),
            seed,
        }
    }

    pub fn scenario_b(seed: u64) -> Self {
        Self {
            name: "B".into(),
            channels: SCENARIO_B_CHANNELS.iter().map(|s| s.to_string()).collect(),
            ..Self::scenario_a(seed)
        }
    }

    /// Scenario B tuned for the synthetic atom-rate sessions: single
    /// channel, RF-50, a longer stopping budget for the decomposer.
    pub fn atom_rate_benchmark(seed: u64) -> Self {
        Self {
            name: "atom-rate".into(),
            models: vec!["rf-50".into()],
            swtt: SwttConfig { retrain_every: 40, ..SwttConfig::default() },
            decomposer: DecomposerConfig {
                xi: Threshold::Relative(0.08),
                max_iter: 1000,
                ..DecomposerConfig::default()
            },
            ..Self::scenario_b(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.schemes.is_empty() || self.models.is_empty() {
            return Err(Error::config("scenario needs channels, schemes and models"));
        }
        for m in &self.models {
            ModelSpec::preset(m, self.seed)?;
        }
        self.window.validate()?;
        self.decomposer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: String,
    pub accuracy: f64,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBlock {
    pub scheme: Scheme,
    pub model: String,
    pub display: String,
    /// Pooled over subjects.
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub subjects: Vec<SubjectResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub version: String,
    pub config: ScenarioConfig,
    pub blocks: Vec<ReportBlock>,
}

impl ScenarioReport {
    pub fn block(&self, scheme: Scheme, model: &str) -> Option<&ReportBlock> {
        self.blocks.iter().find(|b| b.scheme == scheme && b.model == model)
    }
}

/// Feature rows of `rec` under `scheme`. HDM decomposes each whole channel
/// once before windowing.
pub fn scheme_features(rec: &Recording, cfg: &ScenarioConfig, scheme: Scheme) -> Result<FeatureMatrix> {
    let signals = rec.select(&cfg.channels)?;
    let window = WindowSpec { fs: rec.fs(), ..cfg.window };
    let labels = features::align_labels(&rec.markers, &window, rec.len(), rec.t0());
    match scheme {
        Scheme::Raw => features::window_raw(&signals, &window, &labels),
        Scheme::Tfd => {
            let bank = filterbank::default_bank(rec.fs())?;
            features::window_tfd(&signals, &window, &bank, &labels)
        }
        Scheme::Hdm => {
            let decs = decompose_channels(&signals, &cfg.decomposer)?;
            features::window_hdm(&decs, &window, &cfg.hdm, &labels)
        }
    }
}

pub fn decompose_channels(
    signals: &[(String, crate::signal::SampledSignal)],
    cfg: &DecomposerConfig,
) -> Result<Vec<(String, Decomposition)>> {
    let base = BaseKernel::default();
    signals
        .par_iter()
        .map(|(n, s)| Ok((n.clone(), decompose(s, cfg, &base)?)))
        .collect()
}

pub fn run_scenario(recordings: &[Recording], cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    if recordings.is_empty() {
        return Err(Error::InsufficientData("no recordings supplied".into()));
    }
    let window_for = |rec: &Recording| WindowSpec { fs: rec.fs(), ..cfg.window };
    // features once per (recording, scheme)
    let feats: Vec<Vec<FeatureMatrix>> = recordings
        .par_iter()
        .map(|rec| cfg.schemes.iter().map(|&s| scheme_features(rec, cfg, s)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, &String)> = (0..cfg.schemes.len())
        .flat_map(|si| cfg.models.iter().map(move |m| (si, m)))
        .collect();
    let blocks = pairs
        .par_iter()
        .map(|&(si, model)| -> Result<ReportBlock> {
            let spec = ModelSpec::preset(model, cfg.seed)?;
            let mut pooled = ConfusionMatrix::default();
            let mut subjects = Vec::new();
            for (rec, fm) in recordings.iter().zip(&feats) {
                let r = swtt_evaluate(&fm[si], &window_for(rec), &spec, &cfg.swtt)?;
                assert!(no_leakage(&r));
                pooled.merge(&r.confusion);
                subjects.push(SubjectResult {
                    subject: rec.subject.clone(),
                    accuracy: r.confusion.trace() as f64 / r.confusion.total() as f64,
                    n_test: r.n_test(),
                    confusion: r.confusion,
                    fold_accuracies: r.fold_accuracies(),
                });
            }
            Ok(ReportBlock {
                scheme: cfg.schemes[si],
                model: model.clone(),
                display: ModelSpec::display_name(model),
                confusion: pooled,
                metrics: metrics(&pooled)?,
                subjects,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioReport { version: crate::VERSION.to_string(), config: cfg.clone(), blocks })
}

/// Accuracy plus per-activity recall and precision, one model per row
/// group and one scheme per column pair.
pub fn render_table(report: &ScenarioReport) -> String {
    let cfg = &report.config;
    let mut s = String::new();
    let _ = writeln!(s, "Scenario {} ({})", cfg.name, cfg.channels.join(", "));
    let _ = write!(s, "{:<16} {:<9}", "Model", "Activity");
    for sc in &cfg.schemes {
        let _ = write!(s, " | {:^17}", sc.title());
    }
    let _ = writeln!(s);
    let _ = write!(s, "{:<16} {:<9}", "", "");
    for _ in &cfg.schemes {
        let _ = write!(s, " | {:>8} {:>8}", "SENS", "PREC");
    }
    let _ = writeln!(s);
    for model in &cfg.models {
        let name = ModelSpec::display_name(model);
        for (k, label) in Label::ALL.iter().enumerate() {
            let _ = write!(s, "{:<16} {:<9}", if k == 0 { name.as_str() } else { "" }, label.as_str());
            for &sc in &cfg.schemes {
                match report.block(sc, model) {
                    Some(b) => {
                        let _ = write!(s, " | {:>8.3} {:>8.3}", b.metrics.recall[k], b.metrics.precision[k]);
                    }
                    None => {
                        let _ = write!(s, " | {:>8} {:>8}", "-", "-");
                    }
                }
            }
            let _ = writeln!(s);
        }
        let _ = write!(s, "{:<16} {:<9}", "", "ACC");
        for &sc in &cfg.schemes {
            match report.block(sc, model) {
                Some(b) => {
                    let _ = write!(s, " | {:>17.3}", b.metrics.accuracy);
                }
                None => {
                    let _ = write!(s, " | {:>17}", "-");
                }
            }
        }
        let _ = writeln!(s);
    }
    s
}

/// `scheme,model,actual,<predicted classes>` rows.
pub fn confusion_csv(report: &ScenarioReport) -> String {
    let mut s = String::from("scheme,model,actual");
    for l in Label::ALL {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for b in &report.blocks {
        for (r, l) in Label::ALL.iter().enumerate() {
            let _ = write!(s, "{},{},{}", b.scheme.name(), b.model, l);
            for c in 0..4 {
                let _ = write!(s, ",{}", b.confusion.counts[r][c]);
            }
            s.push('\n');
        }
    }
    s
}

/// `scheme,model,subject,fold,accuracy` rows for box plots.
pub fn folds_csv(report: &ScenarioReport) -> String {
    let mut s = String::from("scheme,model,subject,fold,accuracy\n");
    for b in &report.blocks {
        for sub in &b.subjects {
            for (k, a) in sub.fold_accuracies.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{},{}", b.scheme.name(), b.model, sub.subject, k, a);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::LabelEvent;
    use crate::signal::SampledSignal;

    /// Class sets the level of a slow sinusoid on one channel.
    fn toy_recording() -> Recording {
        let fs = 10.0;
        let block = 60.0;
        let n_blocks = 16;
        let len = (block * n_blocks as f64 * fs) as usize;
        let mut markers = Vec::new();
        for b in 0..n_blocks {
            markers.push(LabelEvent { onset: b as f64 * block, duration: block, label: Label::ALL[(b * 3) % 4] });
        }
        let y: Vec<f64> = (0..len)
            .map(|n| {
                let t = n as f64 / fs;
                let b = (t / block) as usize;
                Label::ALL[(b * 3) % 4].index() as f64 + 0.1 * (t * 0.7).sin()
            })
            .collect();
        let ch = vec![("AFpz".to_string(), SampledSignal::new(0.1, 0.0, y).unwrap())];
        Recording::new("toy", ch, markers).unwrap()
    }

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            schemes: vec![Scheme::Raw, Scheme::Tfd],
            models: vec!["lda".into(), "cart-6".into()],
            window: WindowSpec { history: 20.0, horizon: 2.0, step: 2.0, fs: 10.0 },
            ..ScenarioConfig::scenario_b(3)
        }
    }

    #[test]
    fn report_layout_and_determinism() {
        let rec = toy_recording();
        let cfg = small_config();
        let a = run_scenario(std::slice::from_ref(&rec), &cfg).unwrap();
        let b = run_scenario(std::slice::from_ref(&rec), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.blocks.len(), 4);
        let table = render_table(&a);
        // title, two header lines, 5 rows per model
        assert_eq!(table.lines().count(), 3 + 5 * 2);
        assert_eq!(confusion_csv(&a).lines().count(), 1 + 4 * 4);
        let total: u64 = a.blocks[0].confusion.total();
        assert_eq!(total as usize, a.blocks[0].subjects[0].n_test);
    }

    #[test]
    fn missing_channel_is_reported() {
        let rec = toy_recording();
        let cfg = ScenarioConfig { models: vec!["lda".into()], ..ScenarioConfig::scenario_a(0) };
        match run_scenario(&[rec], &cfg) {
            Err(Error::MissingChannel(c)) => assert_eq!(c, "AF7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_scheme_and_model() {
        assert!(Scheme::parse("wavelet").is_err());
        let cfg = ScenarioConfig { models: vec!["svm-rbf".into()], ..small_config() };
        assert!(cfg.validate().is_err());
    }
}
