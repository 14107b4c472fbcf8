//! FIR filter bank over the slow hemodynamic bands.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampledSignal;

pub const ORDER: usize = 100;
pub const GROUP_DELAY: usize = ORDER / 2;
/// Floor added to band powers before the logarithm.
pub const POWER_FLOOR: f64 = 1e-12;

/// Contiguous 0-0.10 Hz bank in 0.02 Hz steps.
pub const DEFAULT_BANDS: [(f64, f64); 5] =
    [(0.0, 0.02), (0.02, 0.04), (0.04, 0.06), (0.06, 0.08), (0.08, 0.10)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    taps: Vec<f64>,
    band: (f64, f64),
    fs: f64,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc band-pass of order 100, normalised to unit gain at
/// DC for a low-pass (`low == 0`) and at the band centre otherwise.
pub fn design_bandpass(low: f64, high: f64, fs: f64) -> Result<FirFilter> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::domain(format!("sampling rate must be positive, got {fs}")));
    }
    if !(low >= 0.0 && low < high && high <= fs / 2.0) {
        return Err(Error::domain(format!(
            "band ({low}, {high}) Hz is invalid at fs = {fs} Hz"
        )));
    }
    let lowpass = |fc: f64, m: f64| 2.0 * fc / fs * sinc(2.0 * fc / fs * m);
    let mut taps: Vec<f64> = (0..=ORDER)
        .map(|n| {
            let m = n as f64 - GROUP_DELAY as f64;
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / ORDER as f64).cos();
            let ideal = if low == 0.0 { lowpass(high, m) } else { lowpass(high, m) - lowpass(low, m) };
            w * ideal
        })
        .collect();
    // exact symmetry regardless of rounding in the two halves
    for n in 0..GROUP_DELAY {
        taps[ORDER - n] = taps[n];
    }
    let mut filter = FirFilter { taps, band: (low, high), fs };
    let reference = if low == 0.0 { 0.0 } else { 0.5 * (low + high) };
    let gain = filter.magnitude(reference);
    if !(gain > 0.0) {
        return Err(Error::Numerical(format!("zero gain at {reference} Hz")));
    }
    for t in &mut filter.taps {
        *t /= gain;
    }
    Ok(filter)
}

pub fn default_bank(fs: f64) -> Result<Vec<FirFilter>> {
    DEFAULT_BANDS.iter().map(|&(lo, hi)| design_bandpass(lo, hi, fs)).collect()
}

impl FirFilter {
    /// Wraps arbitrary taps, e.g. for testing plumbing with an impulse.
    pub fn from_taps(taps: Vec<f64>, band: (f64, f64), fs: f64) -> Result<Self> {
        if taps.len() != ORDER + 1 {
            return Err(Error::DimensionMismatch { expected: ORDER + 1, got: taps.len() });
        }
        Ok(Self { taps, band, fs })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    /// `|H(f)|` by direct evaluation of the DTFT.
    pub fn magnitude(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f / self.fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, h) in self.taps.iter().enumerate() {
            re += h * (w * n as f64).cos();
            im -= h * (w * n as f64).sin();
        }
        re.hypot(im)
    }

    pub fn gain_db(&self, f: f64) -> f64 {
        20.0 * self.magnitude(f).log10()
    }
}

/// Filter output aligned with its input; the first and last
/// `GROUP_DELAY` samples see zero padding and are flagged as edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub signal: SampledSignal,
    pub edge: usize,
}

impl Filtered {
    pub fn is_edge(&self, n: usize) -> bool {
        n < self.edge || n + self.edge >= self.signal.len()
    }

    /// Samples outside the edge regions, or everything when none remain.
    pub fn steady_range(&self) -> Range<usize> {
        let len = self.signal.len();
        if len > 2 * self.edge {
            self.edge..len - self.edge
        } else {
            0..len
        }
    }
}

pub fn apply(filter: &FirFilter, y: &SampledSignal) -> Result<Filtered> {
    if (filter.fs * y.period() - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "filter designed for {} Hz applied to a {} Hz signal",
            filter.fs,
            y.fs()
        )));
    }
    let x = y.samples();
    let n_len = x.len() as isize;
    let out: Vec<f64> = (0..n_len)
        .map(|n| {
            let mut acc = 0.0;
            for (k, h) in filter.taps.iter().enumerate() {
                let m = n + GROUP_DELAY as isize - k as isize;
                if m >= 0 && m < n_len {
                    acc += h * x[m as usize];
                }
            }
            acc
        })
        .collect();
    Ok(Filtered {
        signal: SampledSignal::new(y.period(), y.t0(), out)?,
        edge: GROUP_DELAY,
    })
}

/// `ln(mean(filtered^2) + 1e-12)` per band over `window`.
pub fn band_powers(y: &SampledSignal, bank: &[FirFilter], window: Range<usize>) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(Error::InsufficientData("band power over an empty window".into()));
    }
    if window.end > y.len() {
        return Err(Error::domain(format!(
            "window {:?} exceeds signal length {}",
            window,
            y.len()
        )));
    }
    bank.iter()
        .map(|f| {
            let out = apply(f, y)?;
            let seg = &out.signal.samples()[window.clone()];
            let ms = seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64;
            Ok((ms + POWER_FLOOR).ln())
        })
        .collect()
}

/// One column per filter, one row per tap, with a commented header.
pub fn taps_to_text(bank: &[FirFilter]) -> String {
    let mut s = String::new();
    let bands: Vec<String> = bank
        .iter()
        .map(|f| format!("{}-{}Hz", f.band.0, f.band.1))
        .collect();
    let fs = bank.first().map_or(0.0, |f| f.fs);
    let _ = writeln!(s, "# FIR taps, order {ORDER}, fs {fs} Hz");
    let _ = writeln!(s, "{}", bands.join(","));
    for n in 0..=ORDER {
        let row: Vec<String> = bank.iter().map(|f| format!("{:e}", f.taps[n])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}
