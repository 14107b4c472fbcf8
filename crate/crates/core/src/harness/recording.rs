//! Recordings and their two CSV contracts.
//!
//! Signals: header `time,<name>,...`, seconds in the first column, one row
//! per sample. Markers: header `onset_s,duration_s,label` with labels
//! `rest`, `0-back`, `2-back`, `3-back`. Lines starting with `#` are
//! comments in both.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Label, LabelEvent};
use crate::signal::SampledSignal;

/// The seven frontal channels analysed.
pub const MONTAGE: [&str; 7] = ["AF7", "AF8", "AFF5h", "AFF6h", "AFp3", "AFp4", "AFpz"];
pub const SCENARIO_A_CHANNELS: [&str; 6] = ["AF7", "AF8", "AFF5h", "AFF6h", "AFp3", "AFp4"];
pub const SCENARIO_B_CHANNELS: [&str; 1] = ["AFpz"];

/// Tolerance on the spacing of the time column, seconds.
pub const TIME_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub subject: String,
    pub channels: Vec<(String, SampledSignal)>,
    pub markers: Vec<LabelEvent>,
}

impl Recording {
    pub fn new(subject: impl Into<String>, channels: Vec<(String, SampledSignal)>, markers: Vec<LabelEvent>) -> Result<Self> {
        let Some((_, first)) = channels.first() else {
            return Err(Error::InsufficientData("recording without channels".into()));
        };
        for (i, (name, s)) in channels.iter().enumerate() {
            if name.is_empty() || name.contains(',') || name == "time" {
                return Err(Error::config(format!("invalid channel name `{name}`")));
            }
            if channels[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::config(format!("duplicate channel `{name}`")));
            }
            if s.len() != first.len() {
                return Err(Error::DimensionMismatch { expected: first.len(), got: s.len() });
            }
            if s.period() != first.period() || s.t0() != first.t0() {
                return Err(Error::domain(format!("channel `{name}` is on a different time grid")));
            }
        }
        check_markers(&markers).map_err(|(i, m)| Error::domain(format!("marker {}: {m}", i + 1)))?;
        Ok(Self { subject: subject.into(), channels, markers })
    }

    pub fn len(&self) -> usize {
        self.channels[0].1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t0(&self) -> f64 {
        self.channels[0].1.t0()
    }

    pub fn fs(&self) -> f64 {
        self.channels[0].1.fs()
    }

    pub fn channel(&self, name: &str) -> Result<&SampledSignal> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    /// The named channels, in the requested order.
    pub fn select(&self, names: &[String]) -> Result<Vec<(String, SampledSignal)>> {
        names.iter().map(|n| Ok((n.clone(), self.channel(n)?.clone()))).collect()
    }
}

/// Index and reason of the first invalid or overlapping event.
fn check_markers(markers: &[LabelEvent]) -> std::result::Result<(), (usize, String)> {
    let mut order: Vec<usize> = (0..markers.len()).collect();
    order.sort_by(|&a, &b| markers[a].onset.total_cmp(&markers[b].onset));
    for (k, &i) in order.iter().enumerate() {
        let e = &markers[i];
        if !(e.onset.is_finite() && e.duration > 0.0 && e.duration.is_finite()) {
            return Err((i, format!("invalid onset {} / duration {}", e.onset, e.duration)));
        }
        if k > 0 {
            let p = &markers[order[k - 1]];
            if e.onset < p.onset + p.duration - 1e-9 {
                return Err((i, format!("overlaps the event starting at {} s", p.onset)));
            }
        }
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, message: message.into() }
}

pub fn load_signals(path: &Path) -> Result<Vec<(String, SampledSignal)>> {
    let lines = read_lines(path)?;
    let Some((hline, header)) = lines.first() else {
        return Err(parse_error(path, 1, "missing header"));
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.len() < 2 || names[0] != "time" {
        return Err(parse_error(path, *hline, "header must be `time,<channel>,...`"));
    }
    let mut times = Vec::with_capacity(lines.len());
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(lines.len()); names.len() - 1];
    for (ln, l) in &lines[1..] {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != names.len() {
            return Err(parse_error(path, *ln, format!("expected {} fields, found {}", names.len(), fields.len())));
        }
        let mut vals = fields.iter().map(|f| {
            f.trim().parse::<f64>().map_err(|e| parse_error(path, *ln, format!("`{}`: {e}", f.trim())))
        });
        times.push(vals.next().unwrap()?);
        for col in cols.iter_mut() {
            let v = vals.next().unwrap()?;
            if !v.is_finite() {
                return Err(parse_error(path, *ln, "non-finite sample"));
            }
            col.push(v);
        }
    }
    if times.len() < 2 {
        return Err(parse_error(path, *hline, "need at least two samples to infer the sampling period"));
    }
    let t0 = times[0];
    let period = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
    if !(period > 0.0) {
        return Err(parse_error(path, lines[1].0, "time column is not increasing"));
    }
    for (n, &t) in times.iter().enumerate() {
        if (t - (t0 + n as f64 * period)).abs() > TIME_TOLERANCE {
            return Err(parse_error(path, lines[n + 1].0, format!("non-uniform time {t}")));
        }
    }
    names[1..]
        .iter()
        .zip(cols)
        .map(|(n, c)| Ok((n.to_string(), SampledSignal::new(period, t0, c)?)))
        .collect()
}

pub fn load_markers(path: &Path) -> Result<Vec<LabelEvent>> {
    let lines = read_lines(path)?;
    let Some((hline, header)) = lines.first() else {
        return Err(parse_error(path, 1, "missing header"));
    };
    let head: Vec<&str> = header.split(',').map(str::trim).collect();
    if head != ["onset_s", "duration_s", "label"] {
        return Err(parse_error(path, *hline, "header must be `onset_s,duration_s,label`"));
    }
    let mut events = Vec::new();
    let mut line_of = Vec::new();
    for (ln, l) in &lines[1..] {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(parse_error(path, *ln, format!("expected 3 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_error(path, *ln, format!("`{s}`: {e}")));
        let label = f[2].parse::<Label>().map_err(|m| parse_error(path, *ln, m))?;
        events.push(LabelEvent { onset: num(f[0])?, duration: num(f[1])?, label });
        line_of.push(*ln);
    }
    check_markers(&events).map_err(|(i, m)| parse_error(path, line_of[i], m))?;
    Ok(events)
}

pub fn load_recording(signal_path: &Path, marker_path: &Path, subject: &str) -> Result<Recording> {
    let channels = load_signals(signal_path)?;
    let markers = load_markers(marker_path)?;
    Recording::new(subject, channels, markers)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

fn comment_block(comments: &[String]) -> String {
    comments.iter().map(|c| format!("# {c}\n")).collect()
}

pub fn signals_to_csv(rec: &Recording, comments: &[String]) -> String {
    let mut s = comment_block(comments);
    s.push_str("time");
    for (n, _) in &rec.channels {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    let first = &rec.channels[0].1;
    for i in 0..rec.len() {
        s.push_str(&first.time(i).to_string());
        for (_, c) in &rec.channels {
            s.push(',');
            s.push_str(&c.samples()[i].to_string());
        }
        s.push('\n');
    }
    s
}

pub fn markers_to_csv(markers: &[LabelEvent], comments: &[String]) -> String {
    let mut s = comment_block(comments);
    s.push_str("onset_s,duration_s,label\n");
    for e in markers {
        s.push_str(&format!("{},{},{}\n", e.onset, e.duration, e.label));
    }
    s
}

pub fn write_recording(rec: &Recording, signal_path: &Path, marker_path: &Path, comments: &[String]) -> Result<()> {
    write_file(signal_path, &signals_to_csv(rec, comments))?;
    write_file(marker_path, &markers_to_csv(&rec.markers, comments))
}
