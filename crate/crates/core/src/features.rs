//! Windowed feature rows for the raw, filter-bank and HDM schemes.
//!
//! Every scheme uses the same walk of windows: a `history` span that the
//! features may look at, immediately followed by a `horizon` span whose
//! label the row carries.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposer::Decomposition;
use crate::error::{Error, Result};
use crate::filterbank::{self, FirFilter};
use crate::signal::SampledSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "rest")]
    Rest,
    #[serde(rename = "0-back")]
    ZeroBack,
    #[serde(rename = "2-back")]
    TwoBack,
    #[serde(rename = "3-back")]
    ThreeBack,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Rest, Label::ZeroBack, Label::TwoBack, Label::ThreeBack];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Rest => "rest",
            Label::ZeroBack => "0-back",
            Label::TwoBack => "2-back",
            Label::ThreeBack => "3-back",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s.trim())
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

/// A labelled interval of the session, in seconds on the record clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub onset: f64,
    pub duration: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub history: f64,
    pub horizon: f64,
    pub step: f64,
    pub fs: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { history: 60.0, horizon: 2.0, step: 2.0, fs: 10.0 }
    }
}

/// Sample ranges of one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub history: Range<usize>,
    pub horizon: Range<usize>,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("history", self.history),
            ("horizon", self.horizon),
            ("step", self.step),
            ("fs", self.fs),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("window {name} must be positive, got {v}")));
            }
        }
        if self.samples(self.step) == 0 || self.samples(self.horizon) == 0 {
            return Err(Error::config("window step and horizon must span at least one sample"));
        }
        Ok(())
    }

    pub fn samples(&self, seconds: f64) -> usize {
        (seconds * self.fs).round() as usize
    }

    /// Every window that fits inside a record of `len` samples.
    pub fn windows(&self, len: usize) -> Vec<Window> {
        let h = self.samples(self.history);
        let z = self.samples(self.horizon);
        let step = self.samples(self.step).max(1);
        let mut out = Vec::new();
        let mut start = 0;
        while start + h + z <= len {
            out.push(Window { history: start..start + h, horizon: start + h..start + h + z });
            start += step;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    /// Horizon start of each row, seconds.
    pub times: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<Label>, times: Vec<f64>) -> Result<Self> {
        if labels.len() != rows.len() || times.len() != rows.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), got: labels.len().min(times.len()) });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::DimensionMismatch { expected: columns.len(), got: bad.len() });
        }
        Ok(Self { columns, rows, labels, times })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// CSV with `time,label,<columns>` and `#` comment lines on top.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        let io = |e| Error::io("<features>", e);
        for c in comments {
            writeln!(out, "# {c}").map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(out);
        let header = ["time", "label"].into_iter().map(String::from).chain(self.columns.iter().cloned());
        w.write_record(header).map_err(csv_err)?;
        for ((row, label), t) in self.rows.iter().zip(&self.labels).zip(&self.times) {
            let rec = [t.to_string(), label.to_string()]
                .into_iter()
                .chain(row.iter().map(|v| v.to_string()));
            w.write_record(rec).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, path: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { path: path.to_string(), line, message };
        let mut lines = Vec::new();
        for (i, l) in input.lines().enumerate() {
            let l = l.map_err(|e| Error::io(path, e))?;
            if !l.starts_with('#') && !l.trim().is_empty() {
                lines.push((i + 1, l));
            }
        }
        let Some((hline, header)) = lines.first() else {
            return Err(parse_err(1, "missing header".into()));
        };
        let head: Vec<&str> = header.split(',').collect();
        if head.len() < 2 || head[0] != "time" || head[1] != "label" {
            return Err(parse_err(*hline, "header must start with `time,label`".into()));
        }
        let columns: Vec<String> = head[2..].iter().map(|s| s.to_string()).collect();
        let (mut rows, mut labels, mut times) = (Vec::new(), Vec::new(), Vec::new());
        for (ln, l) in &lines[1..] {
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != head.len() {
                return Err(parse_err(*ln, format!("expected {} fields, found {}", head.len(), fields.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err(*ln, format!("`{s}`: {e}")));
            times.push(num(fields[0])?);
            labels.push(fields[1].parse::<Label>().map_err(|e| parse_err(*ln, e))?);
            rows.push(fields[2..].iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?);
        }
        Self::new(columns, rows, labels, times)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<features>", std::io::Error::other(e.to_string()))
}

fn check_channels(signals: &[(String, SampledSignal)], spec: &WindowSpec) -> Result<usize> {
    spec.validate()?;
    let Some((_, first)) = signals.first() else {
        return Err(Error::InsufficientData("no channels supplied".into()));
    };
    for (name, s) in signals {
        if s.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), got: s.len() });
        }
        if (s.fs() - spec.fs).abs() > 1e-9 * spec.fs {
            return Err(Error::domain(format!(
                "channel {name} sampled at {} Hz, window spec expects {} Hz",
                s.fs(),
                spec.fs
            )));
        }
    }
    Ok(first.len())
}

fn horizon_times(signal: &SampledSignal, windows: &[Window]) -> Vec<f64> {
    windows.iter().map(|w| signal.time(w.horizon.start)).collect()
}

/// Flattened history samples of every channel.
pub fn window_raw(signals: &[(String, SampledSignal)], spec: &WindowSpec, labels: &[Label]) -> Result<FeatureMatrix> {
    let len = check_channels(signals, spec)?;
    let windows = spec.windows(len);
    check_labels(labels, &windows)?;
    let h = spec.samples(spec.history);
    let columns = signals
        .iter()
        .flat_map(|(name, _)| (0..h).map(move |j| format!("{name}:s{j}")))
        .collect();
    let rows = windows
        .par_iter()
        .map(|w| {
            signals
                .iter()
                .flat_map(|(_, s)| s.samples()[w.history.clone()].iter().copied())
                .collect()
        })
        .collect();
    FeatureMatrix::new(columns, rows, labels.to_vec(), horizon_times(&signals[0].1, &windows))
}

/// Log band powers of every channel, filtering the history segment alone
/// and measuring outside its edge regions.
pub fn window_tfd(
    signals: &[(String, SampledSignal)],
    spec: &WindowSpec,
    bank: &[FirFilter],
    labels: &[Label],
) -> Result<FeatureMatrix> {
    let len = check_channels(signals, spec)?;
    let windows = spec.windows(len);
    check_labels(labels, &windows)?;
    let columns = signals
        .iter()
        .flat_map(|(name, _)| (0..bank.len()).map(move |b| format!("{name}:band{}", b + 1)))
        .collect();
    let rows = windows
        .par_iter()
        .map(|w| -> Result<Vec<f64>> {
            let mut row = Vec::with_capacity(signals.len() * bank.len());
            for (_, s) in signals {
                let seg = SampledSignal::new(
                    s.period(),
                    s.time(w.history.start),
                    s.samples()[w.history.clone()].to_vec(),
                )?;
                let n = seg.len();
                let e = filterbank::GROUP_DELAY;
                let range = if n > 2 * e { e..n - e } else { 0..n };
                row.extend(filterbank::band_powers(&seg, bank, range)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::new(columns, rows, labels.to_vec(), horizon_times(&signals[0].1, &windows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdmFeatureSpec {
    pub k_max: usize,
}

impl Default for HdmFeatureSpec {
    fn default() -> Self {
        Self { k_max: 8 }
    }
}

pub const HDM_SUMMARY: [&str; 7] =
    ["count", "sum_pos", "sum_neg", "max_abs", "mean_omega", "theta", "resid_rms"];

impl HdmFeatureSpec {
    pub fn width(&self) -> usize {
        3 * self.k_max + HDM_SUMMARY.len()
    }
}

/// Atom slots and summaries per channel from whole-record decompositions.
///
/// Atoms are assigned to a window when their peak time falls inside the
/// history span; the largest `k_max` by `|a|` fill the slots with `tau`
/// relative to the window start.
pub fn window_hdm(
    decompositions: &[(String, Decomposition)],
    spec: &WindowSpec,
    hspec: &HdmFeatureSpec,
    labels: &[Label],
) -> Result<FeatureMatrix> {
    spec.validate()?;
    let Some((_, first)) = decompositions.first() else {
        return Err(Error::InsufficientData("no channels supplied".into()));
    };
    let grid = first.grid;
    for (_, d) in decompositions {
        if d.grid.len != grid.len {
            return Err(Error::DimensionMismatch { expected: grid.len, got: d.grid.len });
        }
    }
    let windows = spec.windows(grid.len);
    check_labels(labels, &windows)?;
    let columns = decompositions
        .iter()
        .flat_map(|(name, _)| {
            let slots = (1..=hspec.k_max).flat_map(move |k| {
                ["a", "omega", "tau"].into_iter().map(move |p| format!("{name}:{p}{k}"))
            });
            slots.chain(HDM_SUMMARY.iter().map(move |s| format!("{name}:{s}")))
        })
        .collect();
    // analytic peak times, computed once
    let peaks: Vec<Vec<f64>> = decompositions
        .iter()
        .map(|(_, d)| d.atoms.iter().map(|a| a.peak_time(&d.base)).collect())
        .collect();
    let rows = windows
        .par_iter()
        .map(|w| {
            let t_start = grid.time(w.history.start);
            let t_end = grid.time(w.history.end);
            let mut row = Vec::with_capacity(decompositions.len() * hspec.width());
            for ((_, d), pk) in decompositions.iter().zip(&peaks) {
                let mut chosen: Vec<_> = d
                    .atoms
                    .iter()
                    .zip(pk)
                    .filter(|(_, &p)| p >= t_start && p < t_end)
                    .map(|(a, _)| *a)
                    .collect();
                chosen.sort_by(|x, y| y.a.abs().total_cmp(&x.a.abs()).then(x.tau.total_cmp(&y.tau)));
                for k in 0..hspec.k_max {
                    match chosen.get(k) {
                        Some(a) => row.extend([a.a, a.omega, a.tau - t_start]),
                        None => row.extend([0.0; 3]),
                    }
                }
                let count = chosen.len() as f64;
                let sum_pos: f64 = chosen.iter().map(|a| a.a.max(0.0)).sum();
                let sum_neg: f64 = chosen.iter().map(|a| a.a.min(0.0)).sum();
                let max_abs = chosen.iter().fold(0.0f64, |m, a| m.max(a.a.abs()));
                let mean_omega = if chosen.is_empty() {
                    0.0
                } else {
                    chosen.iter().map(|a| a.omega).sum::<f64>() / count
                };
                let res = &d.residual[w.history.clone()];
                let rms = (res.iter().map(|v| v * v).sum::<f64>() / res.len() as f64).sqrt();
                row.extend([count, sum_pos, sum_neg, max_abs, mean_omega, d.theta_eps_hat, rms]);
            }
            row
        })
        .collect();
    let times = windows.iter().map(|w| grid.time(w.horizon.start)).collect();
    FeatureMatrix::new(columns, rows, labels.to_vec(), times)
}

fn check_labels(labels: &[Label], windows: &[Window]) -> Result<()> {
    if labels.len() != windows.len() {
        return Err(Error::DimensionMismatch { expected: windows.len(), got: labels.len() });
    }
    Ok(())
}

/// Label of each window's horizon: the label covering the largest part of
/// it, rest where no event applies. Ties resolve to the lower class index.
pub fn align_labels(events: &[LabelEvent], spec: &WindowSpec, len: usize, t0: f64) -> Vec<Label> {
    let period = 1.0 / spec.fs;
    spec.windows(len)
        .iter()
        .map(|w| {
            let start = t0 + w.horizon.start as f64 * period;
            let end = t0 + w.horizon.end as f64 * period;
            let mut cover = [0.0; 4];
            for e in events {
                let lo = e.onset.max(start);
                let hi = (e.onset + e.duration).min(end);
                if hi > lo {
                    cover[e.label.index()] += hi - lo;
                }
            }
            let labelled: f64 = cover.iter().sum();
            cover[Label::Rest.index()] += ((end - start) - labelled).max(0.0);
            let mut best = 0;
            for c in 1..4 {
                if cover[c] > cover[best] + 1e-12 {
                    best = c;
                }
            }
            Label::ALL[best]
        })
        .collect()
}
