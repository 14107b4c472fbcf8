//! Synthetic recordings with known ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::recording::Recording;
use crate::error::{Error, Result};
use crate::features::{Label, LabelEvent};
use crate::hrf::{canonical_hrf, BaseKernel, CanonicalHrfParams, KernelAtom};
use crate::signal::{
    boxcar, convolve, glm_forward, hdm_forward, reconstruct, Grid, NoiseParams, SampledSignal, StimulusEvent, StimulusTrain,
};

/// Sessions whose classes differ only in how often hemodynamic events
/// occur. Inside a block of class `c` the atoms peak at `rates_per_min[c]`
/// per minute, each displaced from its periodic slot centre by up to
/// `jitter` of the slot length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtomRateConfig {
    pub channels: Vec<String>,
    pub fs: f64,
    pub block_s: f64,
    pub blocks_per_class: usize,
    /// Indexed by class (rest, 0-back, 2-back, 3-back).
    pub rates_per_min: [f64; 4],
    pub amplitude: (f64, f64),
    pub omega: (f64, f64),
    pub theta_eps: f64,
    /// Mean clean power over innovation variance, dB.
    pub snr_db: f64,
    /// Scale amplitudes by `sqrt(rate_min / rate)` so every class carries
    /// the same clean energy per unit time.
    pub balance_energy: bool,
    /// Draw each atom's sign at random so the mean level carries no class
    /// information either.
    pub mixed_signs: bool,
    /// Fraction of the inter-atom interval, in `[0, 0.5)`.
    pub jitter: f64,
    /// Range of a per-block gain applied on top of the atom amplitudes.
    pub block_gain: (f64, f64),
}

impl Default for AtomRateConfig {
    fn default() -> Self {
        Self {
            channels: vec!["AFpz".into()],
            fs: 10.0,
            block_s: 240.0,
            blocks_per_class: 8,
            rates_per_min: [1.0, 2.5, 4.0, 5.5],
            amplitude: (0.5, 1.5),
            omega: (4.5, 7.5),
            theta_eps: 0.3,
            snr_db: 10.0,
            balance_energy: true,
            mixed_signs: true,
            jitter: 0.25,
            block_gain: (1.0, 1.0),
        }
    }
}

/// Innovation variance giving `snr_db` against the clean signal's power.
pub fn sigma2_for_snr(clean: &[f64], snr_db: f64) -> f64 {
    let p = clean.iter().map(|v| v * v).sum::<f64>() / clean.len().max(1) as f64;
    p / 10f64.powf(snr_db / 10.0)
}

pub fn channel_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1)
}

/// Recording plus the true atoms of every channel.
pub fn atom_rate_recording(cfg: &AtomRateConfig, seed: u64) -> Result<(Recording, Vec<Vec<KernelAtom>>)> {
    if !(0.0..0.5).contains(&cfg.jitter) {
        return Err(Error::config("jitter must lie in [0, 0.5)"));
    }
    if cfg.blocks_per_class == 0 || !(cfg.block_s > 0.0) || cfg.channels.is_empty() {
        return Err(Error::config("atom-rate benchmark needs channels, blocks and a positive block length"));
    }
    let base = BaseKernel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::new();
    for _ in 0..cfg.blocks_per_class {
        let mut cycle = Label::ALL.to_vec();
        cycle.shuffle(&mut rng);
        order.extend(cycle);
    }
    let markers: Vec<LabelEvent> = order
        .iter()
        .enumerate()
        .map(|(b, &label)| LabelEvent { onset: b as f64 * cfg.block_s, duration: cfg.block_s, label })
        .collect();
    let grid = Grid::from_duration(cfg.fs, cfg.block_s * order.len() as f64)?;
    let mut channels = Vec::new();
    let mut truth = Vec::new();
    for (k, name) in cfg.channels.iter().enumerate() {
        let mut atoms = Vec::new();
        let rate_min = cfg.rates_per_min.iter().copied().fold(f64::INFINITY, f64::min);
        for ev in &markers {
            let rate = cfg.rates_per_min[ev.label.index()];
            let mut gain = if cfg.balance_energy { (rate_min / rate).sqrt() } else { 1.0 };
            if cfg.block_gain.0 < cfg.block_gain.1 {
                gain *= rng.random_range(cfg.block_gain.0..cfg.block_gain.1);
            }
            let interval = 60.0 / rate;
            let count = (cfg.block_s / interval).round() as usize;
            for j in 0..count {
                let offset = if cfg.jitter > 0.0 { rng.random_range(-cfg.jitter..cfg.jitter) } else { 0.0 };
                let peak = ev.onset + (j as f64 + 0.5 + offset) * interval;
                let omega = rng.random_range(cfg.omega.0..cfg.omega.1);
                let mut a = gain * rng.random_range(cfg.amplitude.0..cfg.amplitude.1);
                if cfg.mixed_signs && rng.random_bool(0.5) {
                    a = -a;
                }
                let s = omega / base.omega0();
                atoms.push(KernelAtom::new(a, omega, peak - base.tau0() * (s - 1.0))?);
            }
        }
        let clean = reconstruct(&atoms, &base, grid);
        let noise = NoiseParams {
            rho: 0.0,
            theta_eps: cfg.theta_eps,
            sigma2: sigma2_for_snr(clean.samples(), cfg.snr_db),
        };
        channels.push((name.clone(), hdm_forward(&atoms, &base, &noise, grid, channel_seed(seed, k))?));
        truth.push(atoms);
    }
    Ok((Recording::new(format!("atom-rate-{seed}"), channels, markers)?, truth))
}

/// `k` random atoms per channel spread over `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdmSimConfig {
    pub channels: Vec<String>,
    pub fs: f64,
    pub duration: f64,
    pub atoms: usize,
    pub amplitude: (f64, f64),
    pub omega: (f64, f64),
    pub theta_eps: f64,
    pub sigma2: f64,
}

impl Default for HdmSimConfig {
    fn default() -> Self {
        Self {
            channels: vec!["AFpz".into()],
            fs: 10.0,
            duration: 120.0,
            atoms: 5,
            amplitude: (0.5, 1.5),
            omega: (4.5, 7.5),
            theta_eps: 0.0,
            sigma2: 0.01,
        }
    }
}

/// Atom `k` of `n` sits in the `k`-th equal slot of the record, with random
/// sign, amplitude, width and jitter.
pub fn random_atoms(n: usize, duration: f64, amplitude: (f64, f64), omega: (f64, f64), rng: &mut ChaCha8Rng) -> Result<Vec<KernelAtom>> {
    let slot = duration / n.max(1) as f64;
    (0..n)
        .map(|k| {
            let a = rng.random_range(amplitude.0..amplitude.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let w = rng.random_range(omega.0..omega.1);
            let tau = slot * (k as f64 + rng.random_range(0.3..0.5));
            KernelAtom::new(a, w, tau)
        })
        .collect()
}

pub fn hdm_recording(cfg: &HdmSimConfig, seed: u64) -> Result<(Recording, Vec<Vec<KernelAtom>>)> {
    let base = BaseKernel::default();
    let grid = Grid::from_duration(cfg.fs, cfg.duration)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = NoiseParams { rho: 0.0, theta_eps: cfg.theta_eps, sigma2: cfg.sigma2 };
    let mut channels = Vec::new();
    let mut truth = Vec::new();
    for (k, name) in cfg.channels.iter().enumerate() {
        let atoms = random_atoms(cfg.atoms, cfg.duration, cfg.amplitude, cfg.omega, &mut rng)?;
        channels.push((name.clone(), hdm_forward(&atoms, &base, &noise, grid, channel_seed(seed, k))?));
        truth.push(atoms);
    }
    let markers = vec![LabelEvent { onset: 0.0, duration: cfg.duration, label: Label::Rest }];
    Ok((Recording::new(format!("hdm-{seed}"), channels, markers)?, truth))
}

/// Block-design GLM session: stimulus blocks of `block_on` seconds every
/// `period` seconds, convolved with the canonical HRF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmSimConfig {
    pub channels: Vec<String>,
    pub fs: f64,
    pub duration: f64,
    pub block_on: f64,
    pub period: f64,
    pub beta: f64,
    pub rho: f64,
    pub sigma2: f64,
}

impl Default for GlmSimConfig {
    fn default() -> Self {
        Self {
            channels: vec!["AFpz".into()],
            fs: 10.0,
            duration: 300.0,
            block_on: 20.0,
            period: 60.0,
            beta: 1.0,
            rho: 0.5,
            sigma2: 0.1,
        }
    }
}

/// Recording plus the design regressor. Stimulus blocks are marked
/// `0-back`, the gaps `rest`.
pub fn glm_recording(cfg: &GlmSimConfig, seed: u64) -> Result<(Recording, SampledSignal)> {
    if !(cfg.block_on > 0.0 && cfg.block_on < cfg.period) {
        return Err(Error::config("block_on must lie in (0, period)"));
    }
    let grid = Grid::from_duration(cfg.fs, cfg.duration)?;
    let mut events = Vec::new();
    let mut markers = Vec::new();
    let mut t = 0.0;
    while t < cfg.duration {
        let on = cfg.block_on.min(cfg.duration - t);
        events.push(StimulusEvent { onset: t, duration: on, height: 1.0 });
        markers.push(LabelEvent { onset: t, duration: on, label: Label::ZeroBack });
        let off = (cfg.period - cfg.block_on).min(cfg.duration - t - on);
        if off > 0.0 {
            markers.push(LabelEvent { onset: t + on, duration: off, label: Label::Rest });
        }
        t += cfg.period;
    }
    let hrf_params = CanonicalHrfParams::default();
    let h_len = (32.0 * cfg.fs).round() as usize + 1;
    let h = SampledSignal::new(
        1.0 / cfg.fs,
        0.0,
        (0..h_len).map(|n| canonical_hrf(n as f64 / cfg.fs, &hrf_params)).collect(),
    )?;
    let x = convolve(&boxcar(&StimulusTrain::new(events)?, grid), &h)?;
    let noise = NoiseParams { rho: cfg.rho, theta_eps: 0.0, sigma2: cfg.sigma2 };
    let channels = cfg
        .channels
        .iter()
        .enumerate()
        .map(|(k, name)| Ok((name.clone(), glm_forward(&x, cfg.beta, &noise, channel_seed(seed, k))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((Recording::new(format!("glm-{seed}"), channels, markers)?, x))
}
