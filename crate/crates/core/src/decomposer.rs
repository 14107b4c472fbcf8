//! Greedy decomposition of a signal into kernel atoms.
//!
//! Each iteration locates the local extrema of the current residual, builds
//! a parameter box around every extremum, fits one atom per box with BFGS
//! on a local window, and commits the single atom that removes the most
//! residual energy. The loop stops once the squared residual norm reaches
//! the convergence radius `xi`, after `max_iter` iterations, or when no
//! candidate atom lowers the residual. The lag-one regression coefficient
//! and the innovation variance are estimated from the final atom set.
//!
//! The amplitude box spans `[kappa_a0 y_i, y_i]` (ordered for negative
//! extrema). The shift box constrains the atom onset `tau_k - tau0` to lie
//! between `kappa_tau0 tau0` and `kappa_tau1 tau0` seconds before the
//! extremum, and each fit sees the residual on
//! `[t_i - kappa_tau1 tau0, t_i + kappa_tau1 tau0]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrf::{self, BaseKernel, KernelAtom};
use crate::optim::{self, BfgsOptions, BoxMap, Termination};
use crate::signal::{self, Grid, SampledSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedOrder {
    /// Largest `|y_i|` first.
    DescendingMagnitude,
    Chronological,
}

/// Convergence radius on the squared residual norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// Fraction of the squared norm of the (detrended) input.
    Relative(f64),
    Absolute(f64),
}

impl Threshold {
    pub fn resolve(&self, energy: f64) -> f64 {
        match *self {
            Threshold::Relative(f) => f * energy,
            Threshold::Absolute(v) => v,
        }
    }
}

/// Offset removed before decomposition and restored in reconstructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detrend {
    None,
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposerConfig {
    pub xi: Threshold,
    pub max_iter: usize,
    pub kappa_a0: f64,
    pub kappa_tau0: f64,
    pub kappa_tau1: f64,
    pub omega_eps: f64,
    pub omega_m: f64,
    pub smoothing_halfwidth: usize,
    /// Half-width (samples) of the heavier smoothing that locates the
    /// valleys bounding each fit window. Zero disables valley clipping.
    pub valley_halfwidth: usize,
    pub seed_order: SeedOrder,
    /// Extrema fitted per iteration, taken in `seed_order`.
    pub max_seeds: usize,
    pub n_starts: usize,
    pub detrend: Detrend,
    pub bfgs_max_iter: usize,
}

impl Default for DecomposerConfig {
    fn default() -> Self {
        Self {
            xi: Threshold::Relative(0.02),
            max_iter: 50,
            kappa_a0: 0.8,
            kappa_tau0: 0.8,
            kappa_tau1: 3.0,
            omega_eps: 0.1,
            omega_m: 8.0,
            smoothing_halfwidth: 3,
            valley_halfwidth: 10,
            seed_order: SeedOrder::DescendingMagnitude,
            max_seeds: 12,
            n_starts: 3,
            detrend: Detrend::Median,
            bfgs_max_iter: 200,
        }
    }
}

impl DecomposerConfig {
    pub fn validate(&self) -> Result<()> {
        let xi_ok = match self.xi {
            Threshold::Relative(v) | Threshold::Absolute(v) => v > 0.0 && v.is_finite(),
        };
        if !xi_ok {
            return Err(Error::config("xi must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        if !(self.kappa_a0 > 0.0 && self.kappa_a0 < 1.0) {
            return Err(Error::config("kappa_a0 must lie in (0, 1)"));
        }
        if !(self.kappa_tau0 < self.kappa_tau1) {
            return Err(Error::config("kappa_tau0 must be below kappa_tau1"));
        }
        if !(self.omega_eps > 0.0 && self.omega_eps < self.omega_m) {
            return Err(Error::config("need 0 < omega_eps < omega_m"));
        }
        if self.max_seeds == 0 || self.n_starts == 0 {
            return Err(Error::config("max_seeds and n_starts must be positive"));
        }
        Ok(())
    }

    fn bfgs(&self) -> BfgsOptions {
        BfgsOptions { max_iter: self.bfgs_max_iter, ..BfgsOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub t: f64,
    pub y: f64,
}

/// Parameter ranges for one seed plus the time window its fit sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub seed: Extremum,
    pub a_range: (f64, f64),
    pub omega_range: (f64, f64),
    pub tau_range: (f64, f64),
    pub window: (f64, f64),
}

impl SearchBox {
    pub fn contains(&self, atom: &KernelAtom) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(atom.a, self.a_range)
            && inside(atom.omega, self.omega_range)
            && inside(atom.tau, self.tau_range)
    }

    fn maps(&self) -> [BoxMap; 3] {
        [
            BoxMap::new(self.a_range.0, self.a_range.1),
            BoxMap::new(self.omega_range.0, self.omega_range.1),
            BoxMap::new(self.tau_range.0, self.tau_range.1),
        ]
    }

    /// Atom at normalised box coordinates `p` in `(0, 1)^3`.
    pub fn at_unit(&self, p: [f64; 3]) -> KernelAtom {
        let lerp = |(lo, hi): (f64, f64), s: f64| lo + (hi - lo) * s;
        KernelAtom {
            a: lerp(self.a_range, p[0]),
            omega: lerp(self.omega_range, p[1]),
            tau: lerp(self.tau_range, p[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomFit {
    pub atom: KernelAtom,
    /// Squared error over the fit window.
    pub local_sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub base: BaseKernel,
    pub config: DecomposerConfig,
    pub grid: Grid,
    /// Offset removed before fitting.
    pub baseline: f64,
    pub atoms: Vec<KernelAtom>,
    pub theta_eps_hat: f64,
    /// Set when the AR regression had a zero denominator.
    pub theta_eps_degenerate: bool,
    pub sigma2_hat: f64,
    /// Resolved convergence radius.
    pub xi: f64,
    /// `r^(0), r^(1), ...`: squared residual norm after each committed atom.
    pub residual_curve: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rejected_seeds: usize,
    /// Final residual `y - baseline - sum_k h_k`.
    pub residual: Vec<f64>,
}

impl Decomposition {
    /// `baseline + sum_k h_k` on the input grid.
    pub fn reconstruction(&self) -> SampledSignal {
        let mut r = signal::reconstruct(&self.atoms, &self.base, self.grid);
        for v in r.samples_mut() {
            *v += self.baseline;
        }
        r
    }

    pub fn final_residual_energy(&self) -> f64 {
        *self.residual_curve.last().expect("curve holds r^(0)")
    }
}

fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return x.to_vec();
    }
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|n| {
            let lo = n.saturating_sub(half);
            let hi = (n + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Interior local extrema of `y` after moving-average smoothing, in
/// chronological order. Values are taken from the unsmoothed signal.
pub fn find_extrema(y: &SampledSignal, config: &DecomposerConfig) -> Result<Vec<Extremum>> {
    if y.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "extrema need at least 3 samples, got {}",
            y.len()
        )));
    }
    let s = moving_average(y.samples(), config.smoothing_halfwidth);
    let mut out = Vec::new();
    // (index of diff, sign) of the last non-zero first difference
    let mut last: Option<(usize, f64)> = None;
    for n in 0..s.len() - 1 {
        let d = s[n + 1] - s[n];
        if d == 0.0 {
            continue;
        }
        let sign = d.signum();
        if let Some((k, prev)) = last {
            if prev != sign {
                // plateau spans samples k+1..=n
                let idx = (k + 1 + n) / 2;
                out.push(Extremum { index: idx, t: y.time(idx), y: y.samples()[idx] });
            }
        }
        last = Some((n, sign));
    }
    Ok(out)
}

/// Search box for one seed, or `None` when `y_i == 0`.
pub fn build_search_space(
    seed: &Extremum,
    config: &DecomposerConfig,
    base: &BaseKernel,
) -> Option<SearchBox> {
    if seed.y == 0.0 || !seed.y.is_finite() {
        return None;
    }
    let lo_a = config.kappa_a0 * seed.y;
    let a_range = if lo_a <= seed.y { (lo_a, seed.y) } else { (seed.y, lo_a) };
    let tau0 = base.tau0();
    // onset = tau_k - tau0 lies kappa_tau0*tau0 .. kappa_tau1*tau0 before t_i
    let tau_range = (
        seed.t - config.kappa_tau1 * tau0 + tau0,
        seed.t - config.kappa_tau0 * tau0 + tau0,
    );
    let reach = config.kappa_tau1 * tau0;
    Some(SearchBox {
        seed: *seed,
        a_range,
        omega_range: (config.omega_eps, config.omega_m),
        tau_range,
        window: (seed.t - reach, seed.t + reach),
    })
}

/// Sample index range of `residual` inside `[start, end]`.
pub fn window_indices(residual: &SampledSignal, window: (f64, f64)) -> std::ops::Range<usize> {
    let p = residual.period();
    let lo = ((window.0 - residual.t0()) / p).ceil().max(0.0) as usize;
    let hi = (((window.1 - residual.t0()) / p).floor() + 1.0).max(0.0) as usize;
    let lo = lo.min(residual.len());
    lo..hi.min(residual.len()).max(lo)
}

/// Samples seen by the fit of `bx`: the box window, further clipped to the
/// valleys (or zero crossings) of the smoothed residual on either side of
/// the seed so that neighbouring components do not bias the fit.
pub fn fit_window(
    residual: &SampledSignal,
    bx: &SearchBox,
    config: &DecomposerConfig,
) -> std::ops::Range<usize> {
    let range = window_indices(residual, bx.window);
    if config.valley_halfwidth == 0 || range.is_empty() {
        return range;
    }
    let sign = bx.seed.y.signum();
    let guide = moving_average(&residual.samples()[range.clone()], config.valley_halfwidth);
    let v = |i: usize| sign * guide[i];
    let centre = bx.seed.index.clamp(range.start, range.end - 1) - range.start;
    let margin = config.valley_halfwidth;
    let mut lo = centre;
    while lo > 0 && (centre - lo < margin || (v(lo - 1) <= v(lo) && v(lo - 1) >= 0.0)) {
        lo -= 1;
    }
    let mut hi = centre;
    while hi + 1 < guide.len() && (hi - centre < margin || (v(hi + 1) <= v(hi) && v(hi + 1) >= 0.0)) {
        hi += 1;
    }
    range.start + lo..range.start + hi + 1
}

/// Squared error between `atom` and `residual` on `range`, with its
/// gradient with respect to `(a, omega, tau)`.
pub fn windowed_sse(
    residual: &SampledSignal,
    range: std::ops::Range<usize>,
    atom: &KernelAtom,
    base: &BaseKernel,
) -> (f64, [f64; 3]) {
    let r = residual.samples();
    let scale = atom.scale(base);
    let shift = base.tau0() - atom.tau;
    let (mut f, mut ga, mut gw, mut gt) = (0.0, 0.0, 0.0, 0.0);
    for n in range {
        let t = residual.time(n);
        let u = (t + shift) / scale;
        let (g, dg) = base.eval_with_derivative(u);
        let e = r[n] - atom.a * g;
        f += e * e;
        if g != 0.0 {
            ga -= 2.0 * e * g;
            let c = -2.0 * e * atom.a * dg;
            // du/domega = -u/omega, du/dtau = -1/scale
            gw += c * (-u / atom.omega);
            gt += c * (-1.0 / scale);
        }
    }
    (f, [ga, gw, gt])
}

fn peak_aligned_starts(bx: &SearchBox, base: &BaseKernel, count: usize) -> Vec<[f64; 3]> {
    let (t_lo, t_hi) = bx.tau_range;
    let (w_lo, w_hi) = bx.omega_range;
    let omega0 = base.omega0();
    let tau0 = base.tau0();
    // omega values for which the peak can sit on t_i with tau inside its box
    let lo = (omega0 * (1.0 + (bx.seed.t - t_hi) / tau0)).max(w_lo);
    let hi = (omega0 * (1.0 + (bx.seed.t - t_lo) / tau0)).min(w_hi);
    let (lo, hi) = if lo < hi { (lo, hi) } else { (w_lo, w_hi) };
    let unit = |v: f64, (a, b): (f64, f64)| ((v - a) / (b - a)).clamp(0.02, 0.98);
    (1..=count)
        .map(|j| {
            let omega = lo + (hi - lo) * j as f64 / (count + 1) as f64;
            let tau = bx.seed.t - tau0 * (omega / omega0 - 1.0);
            [0.9, unit(omega, bx.omega_range), unit(tau, bx.tau_range)]
        })
        .collect()
}

/// Fits one atom inside `bx` to `residual` restricted to the box window.
///
/// Parameters are mapped onto their ranges through logistic bijections and
/// optimised with BFGS from `n_starts` deterministic starting points (the
/// box centre, then peak-aligned guesses). The best local optimum wins.
pub fn fit_atom(
    residual: &SampledSignal,
    bx: &SearchBox,
    base: &BaseKernel,
    config: &DecomposerConfig,
) -> Result<AtomFit> {
    let range = fit_window(residual, bx, config);
    if range.len() < 3 {
        return Err(Error::Numerical(format!(
            "fit window around t = {} holds fewer than 3 samples",
            bx.seed.t
        )));
    }
    let maps = bx.maps();
    let decode = |z: &[f64]| -> (KernelAtom, [f64; 3]) {
        let (a, da) = maps[0].forward(z[0]);
        let (w, dw) = maps[1].forward(z[1]);
        let (t, dt) = maps[2].forward(z[2]);
        (KernelAtom { a, omega: w, tau: t }, [da, dw, dt])
    };
    let objective = |z: &[f64], grad: &mut [f64]| -> f64 {
        let (atom, jac) = decode(z);
        let (f, g) = windowed_sse(residual, range.clone(), &atom, base);
        for i in 0..3 {
            grad[i] = g[i] * jac[i];
        }
        f
    };

    let mut starts = vec![[0.5, 0.5, 0.5]];
    if config.n_starts > 1 {
        starts.extend(peak_aligned_starts(bx, base, config.n_starts - 1));
    }
    let opts = config.bfgs();
    let mut best: Option<AtomFit> = None;
    let mut failure = None;
    for p in starts {
        let z0: Vec<f64> = p.iter().map(|&v| BoxMap::from_unit(v)).collect();
        let res = optim::minimize(&objective, &z0, &opts);
        if res.termination == Termination::NonFinite || !res.f.is_finite() {
            failure = Some(res.f);
            continue;
        }
        let (atom, _) = decode(&res.x);
        if best.is_none_or(|b| res.f < b.local_sse) {
            best = Some(AtomFit { atom, local_sse: res.f });
        }
    }
    best.ok_or_else(|| {
        Error::Numerical(format!(
            "non-finite objective ({failure:?}) for seed at t = {}",
            bx.seed.t
        ))
    })
}

/// Reduction of the squared residual norm if `atom` were subtracted.
fn energy_gain(residual: &SampledSignal, atom: &KernelAtom, base: &BaseKernel) -> f64 {
    let Some(range) =
        hrf::support_indices(residual.len(), residual.t0(), residual.period(), atom, base)
    else {
        return 0.0;
    };
    let r = residual.samples();
    range
        .map(|n| {
            let h = hrf::atom_waveform(residual.time(n), atom, base);
            2.0 * r[n] * h - h * h
        })
        .sum()
}

fn location(x: &[f64], detrend: Detrend) -> f64 {
    match detrend {
        Detrend::None => 0.0,
        Detrend::Mean => x.iter().sum::<f64>() / x.len() as f64,
        Detrend::Median => {
            let mut v = x.to_vec();
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 1 {
                v[m]
            } else {
                0.5 * (v[m - 1] + v[m])
            }
        }
    }
}

pub fn decompose(
    y: &SampledSignal,
    config: &DecomposerConfig,
    base: &BaseKernel,
) -> Result<Decomposition> {
    config.validate()?;
    if y.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "decomposition needs at least 3 samples, got {}",
            y.len()
        )));
    }
    if y.samples().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("input contains non-finite samples".into()));
    }
    let baseline = location(y.samples(), config.detrend);
    let centred = y.map(|v| v - baseline);
    let mut residual = centred.clone();
    let mut r = residual.energy();
    let xi = config.xi.resolve(r);
    let mut curve = vec![r];
    let mut atoms = Vec::new();
    let mut rejected = 0;
    let mut iterations = 0;

    while iterations < config.max_iter && r > xi {
        let mut seeds = find_extrema(&residual, config)?;
        if config.seed_order == SeedOrder::DescendingMagnitude {
            // stable sort keeps chronological order among equal magnitudes
            seeds.sort_by(|a, b| b.y.abs().total_cmp(&a.y.abs()));
        }
        seeds.truncate(config.max_seeds);
        let boxes: Vec<SearchBox> =
            seeds.iter().filter_map(|s| build_search_space(s, config, base)).collect();
        if boxes.is_empty() {
            break;
        }
        let fits: Vec<Option<(SearchBox, AtomFit, f64)>> = boxes
            .par_iter()
            .map(|bx| {
                let fit = fit_atom(&residual, bx, base, config).ok()?;
                let gain = energy_gain(&residual, &fit.atom, base);
                Some((*bx, fit, gain))
            })
            .collect();
        rejected += fits.iter().filter(|f| f.is_none()).count();
        let best = fits
            .into_iter()
            .flatten()
            .filter(|(_, _, gain)| *gain > 0.0 && gain.is_finite())
            .reduce(|best, cand| {
                let better = cand.2 > best.2 || (cand.2 == best.2 && cand.0.seed.t < best.0.seed.t);
                if better { cand } else { best }
            });
        let Some((_, fit, _)) = best else {
            break;
        };
        let before = residual.samples().to_vec();
        hrf::add_atom(residual.samples_mut(), y.t0(), y.period(), &fit.atom, base, -1.0);
        let r_new = residual.energy();
        if !(r_new < r) {
            residual.samples_mut().copy_from_slice(&before);
            break;
        }
        r = r_new;
        curve.push(r);
        atoms.push(fit.atom);
        iterations += 1;
    }

    let ar = estimate_ar(&centred, &atoms, base)?;
    let sigma2_hat = estimate_noise_var(&centred, &atoms, ar.theta, base)?;
    Ok(Decomposition {
        base: *base,
        config: config.clone(),
        grid: y.grid(),
        baseline,
        atoms,
        theta_eps_hat: ar.theta,
        theta_eps_degenerate: ar.degenerate,
        sigma2_hat,
        xi,
        converged: r <= xi,
        residual_curve: curve,
        iterations,
        rejected_seeds: rejected,
        residual: residual.into_samples(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArEstimate {
    pub theta: f64,
    /// True when every regressor sample was zero; `theta` is then 0.
    pub degenerate: bool,
}

/// Least-squares lag-one coefficient of the reconstruction residual on the
/// lagged observation.
pub fn estimate_ar(y: &SampledSignal, atoms: &[KernelAtom], base: &BaseKernel) -> Result<ArEstimate> {
    if y.len() < 2 {
        return Err(Error::InsufficientData("AR estimation needs at least 2 samples".into()));
    }
    let recon = signal::reconstruct(atoms, base, y.grid());
    let ys = y.samples();
    let rs = recon.samples();
    let (mut num, mut den) = (0.0, 0.0);
    for n in 1..ys.len() {
        let delta = ys[n] - rs[n];
        num += delta * ys[n - 1];
        den += ys[n - 1] * ys[n - 1];
    }
    if den == 0.0 {
        return Ok(ArEstimate { theta: 0.0, degenerate: true });
    }
    Ok(ArEstimate { theta: num / den, degenerate: false })
}

/// `(1/N) sum_n (S*_n)^2`, the stationary point of the log-likelihood in
/// the innovation variance.
pub fn estimate_noise_var(
    y: &SampledSignal,
    atoms: &[KernelAtom],
    theta_eps: f64,
    base: &BaseKernel,
) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::InsufficientData("noise variance needs at least 2 samples".into()));
    }
    let recon = signal::reconstruct(atoms, base, y.grid());
    let ss: f64 = signal::innovations(y.samples(), recon.samples(), theta_eps).map(|s| s * s).sum();
    Ok(ss / (y.len() - 1) as f64)
}
