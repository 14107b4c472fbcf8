//! Gamma basis functions, the canonical double-gamma HRF and HDM atoms.
//!
//! A gamma lobe is parameterised by its height `a`, its full width at half
//! maximum `omega` and its time-to-peak `tau`:
//!
//! ```text
//! g(t) = a (t/tau)^kappa exp(-kappa (t - tau) / tau),   t > 0
//! kappa = 8 ln 2 (tau / omega)^2
//! ```
//!
//! and `g(t) = 0` for `t <= 0`. An atom `(a_k, omega_k, tau_k)` is the base
//! kernel `g0` rescaled in time by `omega_k / omega0` and shifted so that its
//! argument vanishes at `t = tau_k - tau0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampledSignal;

/// Relative magnitude below which sampled atom tails are truncated to zero.
pub const TAIL_CUTOFF: f64 = 1e-9;

/// One gamma lobe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGammaParams")]
pub struct GammaParams {
    a: f64,
    omega: f64,
    tau: f64,
}

#[derive(Deserialize)]
struct RawGammaParams {
    a: f64,
    omega: f64,
    tau: f64,
}

impl TryFrom<RawGammaParams> for GammaParams {
    type Error = Error;

    fn try_from(raw: RawGammaParams) -> Result<Self> {
        GammaParams::new(raw.a, raw.omega, raw.tau)
    }
}

impl GammaParams {
    pub fn new(a: f64, omega: f64, tau: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::domain(format!("omega must be positive, got {omega}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::domain(format!("tau must be positive, got {tau}")));
        }
        if !a.is_finite() {
            return Err(Error::domain("amplitude must be finite"));
        }
        Ok(Self { a, omega, tau })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_amplitude(self, a: f64) -> Self {
        Self { a, ..self }
    }

    /// Shape exponent `8 ln 2 (tau/omega)^2`.
    pub fn kappa(&self) -> f64 {
        8.0 * std::f64::consts::LN_2 * (self.tau / self.omega).powi(2)
    }
}

/// Shape exponent of a gamma lobe from raw `(omega, tau)`.
pub fn kappa(omega: f64, tau: f64) -> Result<f64> {
    GammaParams::new(1.0, omega, tau).map(|p| p.kappa())
}

/// Unit-height gamma lobe evaluated through logs, `exp(kappa (ln x - x + 1))`
/// with `x = t / tau`.
#[inline]
fn unit_gamma(t: f64, tau: f64, kappa: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = t / tau;
    (kappa * (x.ln() - x + 1.0)).exp()
}

pub fn gamma_basis(t: f64, params: &GammaParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t == params.tau {
        return params.a;
    }
    params.a * unit_gamma(t, params.tau, params.kappa())
}

/// Rise and undershoot lobes of the canonical HRF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalHrfParams {
    pub increase: GammaParams,
    pub undershoot: GammaParams,
}

impl Default for CanonicalHrfParams {
    /// Sensorimotor reference values.
    fn default() -> Self {
        Self {
            increase: GammaParams { a: 1.0, omega: 5.2, tau: 5.4 },
            undershoot: GammaParams { a: 0.35, omega: 10.8, tau: 7.35 },
        }
    }
}

pub fn canonical_hrf(t: f64, params: &CanonicalHrfParams) -> f64 {
    gamma_basis(t, &params.increase) - gamma_basis(t, &params.undershoot)
}

/// The base kernel `g0` shared by every atom of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaParams", into = "GammaParams")]
pub struct BaseKernel {
    params: GammaParams,
    kappa: f64,
    /// Argument beyond the peak where `g0` drops below [`TAIL_CUTOFF`].
    cutoff: f64,
}

impl TryFrom<GammaParams> for BaseKernel {
    type Error = Error;

    fn try_from(params: GammaParams) -> Result<Self> {
        BaseKernel::new(params)
    }
}

impl From<BaseKernel> for GammaParams {
    fn from(base: BaseKernel) -> Self {
        base.params
    }
}

impl Default for BaseKernel {
    fn default() -> Self {
        BaseKernel::new(GammaParams { a: 1.0, omega: 5.2, tau: 5.4 }).expect("valid base kernel")
    }
}

impl BaseKernel {
    /// Base kernels are normalised to unit height.
    pub fn new(params: GammaParams) -> Result<Self> {
        if params.a != 1.0 {
            return Err(Error::domain(format!(
                "base kernel must have unit amplitude, got {}",
                params.a
            )));
        }
        let kappa = params.kappa();
        let target = TAIL_CUTOFF.ln();
        // kappa (ln x - x + 1) is decreasing for x > 1
        let f = |x: f64| kappa * (x.ln() - x + 1.0) - target;
        let mut lo = 1.0;
        let mut hi = 2.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self { params, kappa, cutoff: hi * params.tau })
    }

    pub fn params(&self) -> &GammaParams {
        &self.params
    }

    pub fn omega0(&self) -> f64 {
        self.params.omega
    }

    pub fn tau0(&self) -> f64 {
        self.params.tau
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa
    }

    /// `g0(u)`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        unit_gamma(u, self.params.tau, self.kappa)
    }

    /// `(g0(u), g0'(u))`.
    #[inline]
    pub fn eval_with_derivative(&self, u: f64) -> (f64, f64) {
        if u <= 0.0 {
            return (0.0, 0.0);
        }
        let g = self.eval(u);
        (g, g * self.kappa * (1.0 / u - 1.0 / self.params.tau))
    }

    /// Kernel argument past which `g0` is negligible.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

/// One decomposed component. `omega > 0` is required; `a` may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelAtom {
    pub a: f64,
    pub omega: f64,
    pub tau: f64,
}

impl KernelAtom {
    pub fn new(a: f64, omega: f64, tau: f64) -> Result<Self> {
        let atom = Self { a, omega, tau };
        atom.validate()?;
        Ok(atom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::domain(format!("atom omega must be positive, got {}", self.omega)));
        }
        if !self.a.is_finite() || !self.tau.is_finite() {
            return Err(Error::domain("atom parameters must be finite"));
        }
        Ok(())
    }

    /// Time scale relative to the base kernel.
    #[inline]
    pub fn scale(&self, base: &BaseKernel) -> f64 {
        self.omega / base.omega0()
    }

    /// Rescaled kernel argument at time `t`.
    #[inline]
    pub fn argument(&self, t: f64, base: &BaseKernel) -> f64 {
        (t - self.tau + base.tau0()) / self.scale(base)
    }

    /// Time at which the waveform leaves zero.
    pub fn onset(&self, base: &BaseKernel) -> f64 {
        self.tau - base.tau0()
    }

    /// Time of the waveform extremum, `tau_k + tau0 (omega_k/omega0 - 1)`.
    pub fn peak_time(&self, base: &BaseKernel) -> f64 {
        self.tau + base.tau0() * (self.scale(base) - 1.0)
    }

    /// Waveform value at the peak.
    pub fn peak_value(&self, base: &BaseKernel) -> f64 {
        self.a * base.params().a
    }

    /// Interval outside which the waveform magnitude is below
    /// `TAIL_CUTOFF * |a|`.
    pub fn support(&self, base: &BaseKernel) -> (f64, f64) {
        let onset = self.onset(base);
        (onset, onset + self.scale(base) * base.cutoff())
    }
}

pub fn atom_waveform(t: f64, atom: &KernelAtom, base: &BaseKernel) -> f64 {
    atom.a * base.eval(atom.argument(t, base))
}

/// Samples an atom on `{0, T_h, 2T_h, ...}` up to `horizon` seconds.
pub fn sample_atom(
    atom: &KernelAtom,
    base: &BaseKernel,
    period: f64,
    horizon: f64,
) -> Result<SampledSignal> {
    if !(period > 0.0) || !(horizon > 0.0) {
        return Err(Error::domain("sampling period and horizon must be positive"));
    }
    atom.validate()?;
    let n = (horizon / period).floor() as usize + 1;
    let mut signal = SampledSignal::zeros(period, 0.0, n)?;
    add_atom(signal.samples_mut(), 0.0, period, atom, base, 1.0);
    Ok(signal)
}

/// Adds `sign * atom` into `buf`, a grid starting at `t0` with spacing
/// `period`, touching only samples inside the atom's support.
pub(crate) fn add_atom(
    buf: &mut [f64],
    t0: f64,
    period: f64,
    atom: &KernelAtom,
    base: &BaseKernel,
    sign: f64,
) {
    let Some(range) = support_indices(buf.len(), t0, period, atom, base) else {
        return;
    };
    for n in range {
        let t = t0 + n as f64 * period;
        buf[n] += sign * atom_waveform(t, atom, base);
    }
}

/// Grid indices covered by the atom support, if any.
pub(crate) fn support_indices(
    len: usize,
    t0: f64,
    period: f64,
    atom: &KernelAtom,
    base: &BaseKernel,
) -> Option<std::ops::Range<usize>> {
    if atom.a == 0.0 || len == 0 {
        return None;
    }
    let (lo, hi) = atom.support(base);
    let first = ((lo - t0) / period).floor().max(0.0);
    let last = ((hi - t0) / period).ceil() + 1.0;
    if first >= len as f64 || last <= 0.0 {
        return None;
    }
    let first = first as usize;
    let last = (last.min(len as f64)) as usize;
    (first < last).then_some(first..last)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_max_crossing(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, level: f64) -> f64 {
        // f(lo) - level and f(hi) - level have opposite signs
        let s_lo = (f(lo) - level).signum();
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) - level).signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn fwhm(f: &dyn Fn(f64) -> f64, peak_t: f64, peak: f64, span: f64) -> f64 {
        let left = half_max_crossing(f, peak_t - span, peak_t, 0.5 * peak);
        let right = half_max_crossing(f, peak_t, peak_t + span, 0.5 * peak);
        right - left
    }

    #[test]
    fn kappa_reference_values() {
        let k = kappa(5.2, 5.4).unwrap();
        assert!((k - 5.9797).abs() < 1e-3, "{k}");
        let k = kappa(3.0, 3.0).unwrap();
        assert!((k - 8.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let k = kappa(50.0, 5.0).unwrap();
        assert!((k - 8.0 * std::f64::consts::LN_2 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_rejects_non_positive() {
        assert!(kappa(0.0, 1.0).is_err());
        assert!(kappa(1.0, -2.0).is_err());
        assert!(GammaParams::new(1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gamma_peak_and_causality() {
        let p = GammaParams::new(-0.7, 3.1, 4.2).unwrap();
        assert_eq!(gamma_basis(4.2, &p), -0.7);
        assert_eq!(gamma_basis(0.0, &p), 0.0);
        assert_eq!(gamma_basis(-1.0, &p), 0.0);
    }

    #[test]
    fn gamma_fwhm_base_kernel() {
        let p = GammaParams::new(1.0, 5.2, 5.4).unwrap();
        let f = |t: f64| gamma_basis(t, &p);
        let w = fwhm(&f, 5.4, 1.0, 5.4);
        assert!((w / 5.2 - 1.0).abs() < 0.03, "fwhm {w}");
    }

    #[test]
    fn canonical_shape() {
        let p = CanonicalHrfParams::default();
        assert_eq!(canonical_hrf(0.0, &p), 0.0);
        let (mut best_t, mut best) = (0.0, f64::MIN);
        let mut min_after = f64::MAX;
        for i in 0..4000 {
            let t = i as f64 * 0.01;
            let v = canonical_hrf(t, &p);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        for i in (best_t * 100.0) as usize..4000 {
            min_after = min_after.min(canonical_hrf(i as f64 * 0.01, &p));
        }
        assert!((best_t - 5.4).abs() < 1.5, "peak at {best_t}");
        assert!(min_after < 0.0);

        let flat = CanonicalHrfParams {
            undershoot: p.undershoot.with_amplitude(0.0),
            ..p
        };
        for i in 0..300 {
            let t = i as f64 * 0.1;
            assert_eq!(canonical_hrf(t, &flat), gamma_basis(t, &flat.increase));
        }
    }

    #[test]
    fn atom_identities() {
        let base = BaseKernel::default();
        let unit = KernelAtom::new(1.0, 5.2, 5.4).unwrap();
        assert!((atom_waveform(5.4, &unit, &base) - 1.0).abs() < 1e-15);

        let neg = KernelAtom::new(-2.0, 5.2, 5.4).unwrap();
        for i in 0..200 {
            let t = i as f64 * 0.1;
            let expect = -2.0 * base.eval(t);
            assert!((atom_waveform(t, &neg, &base) - expect).abs() < 1e-15);
        }
        assert!((atom_waveform(5.4, &neg, &base) + 2.0).abs() < 1e-15);

        let wide = KernelAtom::new(1.0, 10.4, 5.4).unwrap();
        let peak_t = wide.peak_time(&base);
        let f = |t: f64| atom_waveform(t, &wide, &base);
        assert!((f(peak_t) - 1.0).abs() < 1e-12);
        let w = fwhm(&f, peak_t, 1.0, 12.0);
        assert!((w / 10.4 - 1.0).abs() < 0.03, "fwhm {w}");
    }

    #[test]
    fn atom_width_law() {
        let base = BaseKernel::default();
        let g0 = |t: f64| base.eval(t);
        let w0 = fwhm(&g0, base.tau0(), 1.0, 5.4);
        for omega in [1.0, 2.5, 5.2, 7.9] {
            let atom = KernelAtom::new(1.3, omega, 20.0).unwrap();
            let pt = atom.peak_time(&base);
            let f = |t: f64| atom_waveform(t, &atom, &base);
            let w = fwhm(&f, pt, 1.3, 3.0 * omega);
            assert!((w / (w0 * omega / 5.2) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn sample_atom_behaviour() {
        let base = BaseKernel::default();
        let zero = KernelAtom::new(0.0, 4.0, 10.0).unwrap();
        let s = sample_atom(&zero, &base, 0.1, 60.0).unwrap();
        assert!(s.samples().iter().all(|&v| v == 0.0));

        let atom = KernelAtom::new(1.7, 4.0, 10.0).unwrap();
        let neg = KernelAtom { a: -1.7, ..atom };
        let s1 = sample_atom(&atom, &base, 0.1, 60.0).unwrap();
        let s2 = sample_atom(&neg, &base, 0.1, 60.0).unwrap();
        assert!(s1.samples().iter().zip(s2.samples()).all(|(x, y)| x + y == 0.0));

        for (n, &v) in s1.samples().iter().enumerate() {
            let exact = atom_waveform(n as f64 * 0.1, &atom, &base);
            if v != 0.0 {
                assert_eq!(v, exact);
            } else {
                assert!(exact.abs() < TAIL_CUTOFF * 1.7);
            }
        }
        assert!(sample_atom(&atom, &base, 0.0, 60.0).is_err());
    }

    #[test]
    fn smooth_away_from_zero() {
        let p = GammaParams::new(1.0, 5.2, 5.4).unwrap();
        let h = 0.01;
        let mut prev_d2: Option<f64> = None;
        for i in 10..4000 {
            let t = i as f64 * h;
            let d2 = (gamma_basis(t + h, &p) - 2.0 * gamma_basis(t, &p) + gamma_basis(t - h, &p))
                / (h * h);
            assert!(d2.abs() < 10.0);
            if let Some(p2) = prev_d2 {
                assert!((d2 - p2).abs() < 0.05);
            }
            prev_d2 = Some(d2);
        }
    }
}
