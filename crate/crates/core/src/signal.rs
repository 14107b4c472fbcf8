//! Uniformly sampled signals and the forward models used to simulate them.
//!
//! Two generators are provided. The GLM generator convolves a stimulus
//! train with an HRF and adds AR(1) noise on the error term. The HDM
//! generator sums kernel atoms and feeds the observation back through a
//! lag-one regression, `y(n) = sum_k h_k(n) + theta y(n-1) + e(n)` with
//! `y(-1) = 0`.
//!
//! Gaussian draws come from `rand_chacha::ChaCha8Rng` seeded with
//! `seed_from_u64(seed)` (rand_chacha 0.9) and `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrf::{self, BaseKernel, KernelAtom};

/// Sampling layout of a signal: period, start time and length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub period: f64,
    pub t0: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(period: f64, t0: f64, len: usize) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::domain(format!("sampling period must be positive, got {period}")));
        }
        if len == 0 {
            return Err(Error::domain("signal must hold at least one sample"));
        }
        Ok(Self { period, t0, len })
    }

    /// Grid covering `duration` seconds at rate `fs`.
    pub fn from_duration(fs: f64, duration: f64) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::domain("sampling rate must be positive"));
        }
        Grid::new(1.0 / fs, 0.0, (duration * fs).round() as usize)
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.period
    }

    pub fn fs(&self) -> f64 {
        1.0 / self.period
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    period: f64,
    t0: f64,
    samples: Vec<f64>,
}

impl SampledSignal {
    pub fn new(period: f64, t0: f64, samples: Vec<f64>) -> Result<Self> {
        Grid::new(period, t0, samples.len())?;
        Ok(Self { period, t0, samples })
    }

    pub fn zeros(period: f64, t0: f64, len: usize) -> Result<Self> {
        Self::new(period, t0, vec![0.0; len])
    }

    pub fn on_grid(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len {
            return Err(Error::DimensionMismatch { expected: grid.len, got: samples.len() });
        }
        Self::new(grid.period, grid.t0, samples)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn fs(&self) -> f64 {
        1.0 / self.period
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn grid(&self) -> Grid {
        Grid { period: self.period, t0: self.t0, len: self.samples.len() }
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.period
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { samples: self.samples.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }
}

/// One stimulus block: `[onset, onset + duration)` at the given height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub onset: f64,
    pub duration: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StimulusTrain {
    events: Vec<StimulusEvent>,
}

impl StimulusTrain {
    pub fn new(events: Vec<StimulusEvent>) -> Result<Self> {
        for w in events.windows(2) {
            if w[1].onset < w[0].onset {
                return Err(Error::domain("stimulus onsets must be non-decreasing"));
            }
        }
        if events.iter().any(|e| !(e.duration >= 0.0)) {
            return Err(Error::domain("stimulus durations must be non-negative"));
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[StimulusEvent] {
        &self.events
    }
}

/// Noise parameters for both generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// AR(1) coefficient on the GLM error term.
    pub rho: f64,
    /// Lag-one regression coefficient on the HDM observation.
    pub theta_eps: f64,
    /// Innovation variance.
    pub sigma2: f64,
}

impl NoiseParams {
    pub fn silent() -> Self {
        Self { rho: 0.0, theta_eps: 0.0, sigma2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) {
            return Err(Error::domain("noise variance must be non-negative"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::domain("AR coefficient must satisfy |rho| < 1"));
        }
        if !self.theta_eps.is_finite() {
            return Err(Error::domain("theta_eps must be finite"));
        }
        Ok(())
    }
}

/// Stimulus function sampled on `grid`.
pub fn boxcar(train: &StimulusTrain, grid: Grid) -> SampledSignal {
    let eps = 1e-9 * grid.period;
    let mut out = vec![0.0; grid.len];
    for ev in train.events() {
        let end = ev.onset + ev.duration;
        for (n, v) in out.iter_mut().enumerate() {
            let t = grid.time(n);
            if t >= ev.onset - eps && t < end - eps {
                *v += ev.height;
            }
        }
    }
    SampledSignal::on_grid(grid, out).expect("grid already validated")
}

/// Causal discrete convolution scaled by the sampling period, truncated to
/// the length of `u`.
pub fn convolve(u: &SampledSignal, h: &SampledSignal) -> Result<SampledSignal> {
    if (u.period() - h.period()).abs() > 1e-12 * u.period() {
        return Err(Error::domain(format!(
            "sampling periods differ: {} vs {}",
            u.period(),
            h.period()
        )));
    }
    let dt = u.period();
    let us = u.samples();
    let hs = h.samples();
    let mut out = vec![0.0; us.len()];
    for (m, &um) in us.iter().enumerate() {
        if um == 0.0 {
            continue;
        }
        for (k, &hk) in hs.iter().enumerate().take(us.len() - m) {
            out[m + k] += um * hk;
        }
    }
    for v in &mut out {
        *v *= dt;
    }
    SampledSignal::new(dt, u.t0(), out)
}

fn gaussian_stream(seed: u64, sigma2: f64) -> impl FnMut() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = sigma2.sqrt();
    move || {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    }
}

/// `y = beta x + eps`, `eps(n) = rho eps(n-1) + eta(n)`, `eps(0) = eta(0)`.
pub fn glm_forward(x: &SampledSignal, beta: f64, noise: &NoiseParams, seed: u64) -> Result<SampledSignal> {
    noise.validate()?;
    let mut draw = gaussian_stream(seed, noise.sigma2);
    let mut eps = 0.0;
    let out = x
        .samples()
        .iter()
        .enumerate()
        .map(|(n, &xn)| {
            let eta = draw();
            eps = if n == 0 { eta } else { noise.rho * eps + eta };
            beta * xn + eps
        })
        .collect();
    SampledSignal::new(x.period(), x.t0(), out)
}

/// Noiseless sum of atom waveforms on `grid`.
pub fn reconstruct(atoms: &[KernelAtom], base: &BaseKernel, grid: Grid) -> SampledSignal {
    let mut out = vec![0.0; grid.len];
    for atom in atoms {
        hrf::add_atom(&mut out, grid.t0, grid.period, atom, base, 1.0);
    }
    SampledSignal::on_grid(grid, out).expect("grid already validated")
}

/// HDM generator: `y(n) = sum_k h_k(n) + theta y(n-1) + e(n)`, `y(-1) = 0`.
pub fn hdm_forward(
    atoms: &[KernelAtom],
    base: &BaseKernel,
    noise: &NoiseParams,
    grid: Grid,
    seed: u64,
) -> Result<SampledSignal> {
    noise.validate()?;
    for atom in atoms {
        atom.validate()?;
    }
    let clean = reconstruct(atoms, base, grid);
    let mut draw = gaussian_stream(seed, noise.sigma2);
    let mut prev = 0.0;
    let out = clean
        .samples()
        .iter()
        .map(|&h| {
            let y = h + noise.theta_eps * prev + draw();
            prev = y;
            y
        })
        .collect();
    SampledSignal::on_grid(grid, out)
}

/// `S*_n = y(n) - recon(n) - theta y(n-1)` for `n = 1..N`.
pub(crate) fn innovations<'a>(
    y: &'a [f64],
    recon: &'a [f64],
    theta_eps: f64,
) -> impl Iterator<Item = f64> + 'a {
    (1..y.len()).map(move |n| y[n] - recon[n] - theta_eps * y[n - 1])
}

/// Conditional Gaussian log-likelihood of `y(1..N)` given `y(0)`.
pub fn log_likelihood(
    y: &SampledSignal,
    atoms: &[KernelAtom],
    theta_eps: f64,
    sigma2: f64,
    base: &BaseKernel,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    if y.len() < 2 {
        return Err(Error::InsufficientData("log-likelihood needs at least 2 samples".into()));
    }
    let recon = reconstruct(atoms, base, y.grid());
    let ss: f64 = innovations(y.samples(), recon.samples(), theta_eps).map(|s| s * s).sum();
    Ok(log_likelihood_from_ss(ss, y.len() - 1, sigma2))
}

pub(crate) fn log_likelihood_from_ss(ss: f64, n: usize, sigma2: f64) -> f64 {
    let n = n as f64;
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * n * sigma2.ln() - ss / (2.0 * sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(len: usize) -> Grid {
        Grid::new(0.1, 0.0, len).unwrap()
    }

    #[test]
    fn boxcar_cases() {
        let g = Grid::new(1.0, 0.0, 8).unwrap();
        let empty = boxcar(&StimulusTrain::default(), g);
        assert!(empty.samples().iter().all(|&v| v == 0.0));

        let one = StimulusTrain::new(vec![StimulusEvent { onset: 2.0, duration: 3.0, height: 1.0 }]).unwrap();
        assert_eq!(boxcar(&one, g).samples(), &[0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);

        let two = StimulusTrain::new(vec![
            StimulusEvent { onset: 1.0, duration: 3.0, height: 1.0 },
            StimulusEvent { onset: 3.0, duration: 3.0, height: 1.0 },
        ])
        .unwrap();
        assert_eq!(boxcar(&two, g).samples()[3], 2.0);
        assert!(StimulusTrain::new(vec![
            StimulusEvent { onset: 3.0, duration: 1.0, height: 1.0 },
            StimulusEvent { onset: 1.0, duration: 1.0, height: 1.0 },
        ])
        .is_err());
    }

    #[test]
    fn convolution_identity_and_zero() {
        let base = BaseKernel::default();
        let atom = KernelAtom::new(1.0, 5.2, 5.4).unwrap();
        let h = reconstruct(&[atom], &base, grid(300));
        let mut impulse = vec![0.0; 300];
        impulse[0] = 1.0 / 0.1;
        let u = SampledSignal::new(0.1, 0.0, impulse).unwrap();
        let x = convolve(&u, &h).unwrap();
        for (a, b) in x.samples().iter().zip(h.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = convolve(&SampledSignal::zeros(0.1, 0.0, 300).unwrap(), &h).unwrap();
        assert!(z.samples().iter().all(|&v| v == 0.0));
        let other = SampledSignal::zeros(0.2, 0.0, 300).unwrap();
        assert!(convolve(&other, &h).is_err());
    }

    #[test]
    fn longer_stimulus_wider_response() {
        let g = grid(1200);
        let h = SampledSignal::on_grid(
            g,
            (0..g.len).map(|n| hrf::canonical_hrf(g.time(n), &Default::default())).collect(),
        )
        .unwrap();
        let mut last = 0.0;
        for dur in [1.0, 4.0, 8.0, 16.0] {
            let train = StimulusTrain::new(vec![StimulusEvent { onset: 5.0, duration: dur, height: 1.0 }]).unwrap();
            let x = convolve(&boxcar(&train, g), &h).unwrap();
            let s = x.samples();
            let peak = s.iter().cloned().fold(f64::MIN, f64::max);
            let above = s.iter().filter(|&&v| v >= 0.5 * peak).count() as f64 * 0.1;
            assert!(above > last, "duration {dur}: width {above} <= {last}");
            last = above;
        }
    }

    #[test]
    fn glm_noiseless_and_determinism() {
        let x = SampledSignal::new(0.1, 0.0, (0..100).map(|i| (i as f64).sin()).collect()).unwrap();
        let y = glm_forward(&x, 2.5, &NoiseParams::silent(), 3).unwrap();
        for (a, b) in y.samples().iter().zip(x.samples()) {
            assert_eq!(*a, 2.5 * b);
        }
        let noise = NoiseParams { rho: 0.3, theta_eps: 0.0, sigma2: 1.0 };
        let a = glm_forward(&x, 1.0, &noise, 11).unwrap();
        let b = glm_forward(&x, 1.0, &noise, 11).unwrap();
        assert_eq!(a, b);
        assert!(glm_forward(&x, 1.0, &NoiseParams { rho: 1.0, ..noise }, 1).is_err());
    }

    #[test]
    fn glm_white_noise_variance() {
        let x = SampledSignal::zeros(0.1, 0.0, 100_000).unwrap();
        let y = glm_forward(&x, 0.0, &NoiseParams { rho: 0.0, theta_eps: 0.0, sigma2: 2.0 }, 5).unwrap();
        let n = y.len() as f64;
        let mean = y.samples().iter().sum::<f64>() / n;
        let var = y.samples().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var / 2.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn glm_ar1_autocorrelation() {
        let x = SampledSignal::zeros(0.1, 0.0, 100_000).unwrap();
        let y = glm_forward(&x, 0.0, &NoiseParams { rho: 0.5, theta_eps: 0.0, sigma2: 1.0 }, 9).unwrap();
        let s = y.samples();
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let c0: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
        let c1: f64 = s.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((c1 / c0 - 0.5).abs() < 0.02, "{}", c1 / c0);
    }

    #[test]
    fn hdm_forward_cases() {
        let base = BaseKernel::default();
        let g = grid(800);
        let y = hdm_forward(&[], &base, &NoiseParams::silent(), g, 1).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));

        let atoms = [
            KernelAtom::new(1.0, 5.0, 12.0).unwrap(),
            KernelAtom::new(-0.6, 3.0, 35.0).unwrap(),
            KernelAtom::new(0.8, 6.5, 60.0).unwrap(),
        ];
        let single = hdm_forward(&atoms[..1], &base, &NoiseParams::silent(), g, 1).unwrap();
        let sampled = hrf::sample_atom(&atoms[0], &base, 0.1, 79.9).unwrap();
        assert_eq!(single.samples(), sampled.samples());

        let all = hdm_forward(&atoms, &base, &NoiseParams::silent(), g, 1).unwrap();
        for (n, v) in all.samples().iter().enumerate() {
            let sum: f64 = atoms.iter().map(|a| hrf::sample_atom(a, &base, 0.1, 79.9).unwrap().samples()[n]).sum();
            assert!((v - sum).abs() < 1e-12);
        }
        assert_eq!(all, reconstruct(&atoms, &base, g));
    }

    #[test]
    fn likelihood_algebra() {
        let base = BaseKernel::default();
        let atoms = [KernelAtom::new(1.0, 5.0, 12.0).unwrap()];
        let g = grid(400);
        let y = reconstruct(&atoms, &base, g);
        let n = 399.0;
        let ll = log_likelihood(&y, &atoms, 0.0, 1.0, &base).unwrap();
        assert!((ll + 0.5 * n * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-9);
        let ll2 = log_likelihood(&y, &atoms, 0.0, 2.0, &base).unwrap();
        assert!((ll - ll2 - 0.5 * n * 2f64.ln()).abs() < 1e-9);
        assert!(log_likelihood(&y, &atoms, 0.0, 0.0, &base).is_err());
        let short = SampledSignal::new(0.1, 0.0, vec![1.0]).unwrap();
        assert!(log_likelihood(&short, &atoms, 0.0, 1.0, &base).is_err());
    }

    #[test]
    fn likelihood_prefers_truth() {
        let base = BaseKernel::default();
        let g = grid(1200);
        let atoms = [
            KernelAtom::new(1.0, 5.0, 20.0).unwrap(),
            KernelAtom::new(-0.7, 6.0, 60.0).unwrap(),
        ];
        let shifted: Vec<_> = atoms.iter().map(|a| KernelAtom { tau: a.tau + 2.0, ..*a }).collect();
        let noise = NoiseParams { rho: 0.0, theta_eps: 0.3, sigma2: 0.05 };
        let mut wins = 0;
        for seed in 0..100 {
            let y = hdm_forward(&atoms, &base, &noise, g, seed).unwrap();
            let t = log_likelihood(&y, &atoms, 0.3, 0.05, &base).unwrap();
            let p = log_likelihood(&y, &shifted, 0.3, 0.05, &base).unwrap();
            wins += usize::from(t > p);
        }
        assert!(wins >= 95, "{wins}");
    }

    #[test]
    fn sigma2_grid_search_finds_mle() {
        let base = BaseKernel::default();
        let g = grid(2000);
        let atoms = [KernelAtom::new(1.0, 5.0, 20.0).unwrap()];
        let noise = NoiseParams { rho: 0.0, theta_eps: 0.2, sigma2: 0.3 };
        let y = hdm_forward(&atoms, &base, &noise, g, 4).unwrap();
        let recon = reconstruct(&atoms, &base, g);
        let ss: f64 = innovations(y.samples(), recon.samples(), 0.2).map(|s| s * s).sum();
        let mle = ss / 1999.0;
        let best = (1..2000)
            .map(|i| i as f64 * 0.0005)
            .max_by(|a, b| {
                let la = log_likelihood(&y, &atoms, 0.2, *a, &base).unwrap();
                let lb = log_likelihood(&y, &atoms, 0.2, *b, &base).unwrap();
                la.total_cmp(&lb)
            })
            .unwrap();
        assert!((best - mle).abs() <= 0.0005, "{best} vs {mle}");
    }
}
