//! Unconstrained BFGS with a strong-Wolfe line search, plus the sigmoid
//! reparameterisation used to keep parameters inside a box.

/// Objective returning `(f(x), grad f(x))`.
pub trait Objective {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when `max |g_i| <= grad_tol * max(1, |f|)`.
    pub grad_tol: f64,
    /// Stop when the relative decrease of `f` over an iteration is below this.
    pub f_tol: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-10, f_tol: 1e-14, c1: 1e-4, c2: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Stalled,
    MaxIter,
    LineSearch,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn minimize(obj: &impl Objective, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsResult { x, f, iterations: 0, termination: Termination::NonFinite };
    }
    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for iter in 0..opts.max_iter {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= opts.grad_tol * f.abs().max(1.0) {
            return BfgsResult { x, f, iterations: iter, termination: Termination::Gradient };
        }
        for i in 0..n {
            p[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut dg = dot(&p, &g);
        if dg >= 0.0 {
            // lost descent; restart from steepest descent
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
                p[i] = -g[i];
            }
            first = true;
            dg = -dot(&g, &g);
        }
        let alpha0 = if first { (1.0 / gmax).min(1.0) } else { 1.0 };
        let Some((_, f_new)) =
            line_search(obj, &x, f, &p, dg, alpha0, opts, &mut x_new, &mut g_new)
        else {
            return BfgsResult { x, f, iterations: iter, termination: Termination::LineSearch };
        };
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let f_old = f;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;

        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if first {
                let scale = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= scale;
                }
                first = false;
            }
            for i in 0..n {
                hy[i] = (0..n).map(|j| h[i * n + j] * y[j]).sum();
            }
            let rho = 1.0 / sy;
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        if (f_old - f).abs() <= opts.f_tol * f_old.abs().max(f.abs()).max(1e-300) {
            return BfgsResult { x, f, iterations: iter + 1, termination: Termination::Stalled };
        }
    }
    BfgsResult { x, f, iterations: opts.max_iter, termination: Termination::MaxIter }
}

/// Strong-Wolfe line search (bracketing then zoom with safeguarded cubic
/// interpolation). Writes the accepted point into `x_out` / `g_out`.
#[allow(clippy::too_many_arguments)]
fn line_search(
    obj: &impl Objective,
    x: &[f64],
    f0: f64,
    p: &[f64],
    dg0: f64,
    alpha0: f64,
    opts: &BfgsOptions,
    x_out: &mut [f64],
    g_out: &mut [f64],
) -> Option<(f64, f64)> {
    let mut phi = |alpha: f64, x_out: &mut [f64], g_out: &mut [f64]| -> (f64, f64) {
        for i in 0..x.len() {
            x_out[i] = x[i] + alpha * p[i];
        }
        let f = obj.eval(x_out, g_out);
        (f, dot(g_out, p))
    };

    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = dg0;
    let mut a = alpha0;
    for i in 0..30 {
        let (fa, da) = phi(a, x_out, g_out);
        if !fa.is_finite() || !da.is_finite() {
            // step into overflow; back off
            a = 0.5 * (a_prev + a);
            if a - a_prev < 1e-16 {
                return None;
            }
            continue;
        }
        if fa > f0 + opts.c1 * a * dg0 || (i > 0 && fa >= f_prev) {
            return zoom(&mut phi, f0, dg0, (a_prev, f_prev, d_prev), (a, fa, da), opts, x_out, g_out);
        }
        if da.abs() <= -opts.c2 * dg0 {
            return Some((a, fa));
        }
        if da >= 0.0 {
            return zoom(&mut phi, f0, dg0, (a, fa, da), (a_prev, f_prev, d_prev), opts, x_out, g_out);
        }
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a *= 2.0;
    }
    None
}

fn cubic_min(a: (f64, f64, f64), b: (f64, f64, f64)) -> Option<f64> {
    let (x0, f0, d0) = a;
    let (x1, f1, d1) = b;
    let d1s = d0 + d1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1s * d1s - d0 * d1;
    if disc < 0.0 {
        return None;
    }
    let d2 = (x1 - x0).signum() * disc.sqrt();
    let t = x1 - (x1 - x0) * (d1 + d2 - d1s) / (d1 - d0 + 2.0 * d2);
    t.is_finite().then_some(t)
}

#[allow(clippy::too_many_arguments)]
fn zoom(
    phi: &mut impl FnMut(f64, &mut [f64], &mut [f64]) -> (f64, f64),
    f0: f64,
    dg0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    opts: &BfgsOptions,
    x_out: &mut [f64],
    g_out: &mut [f64],
) -> Option<(f64, f64)> {
    for _ in 0..40 {
        let (a_lo, a_hi) = (lo.0.min(hi.0), lo.0.max(hi.0));
        let width = a_hi - a_lo;
        if width <= 1e-16 * a_hi.max(1.0) {
            break;
        }
        let mut a = cubic_min(lo, hi).unwrap_or(0.5 * (a_lo + a_hi));
        if !(a > a_lo + 0.1 * width && a < a_hi - 0.1 * width) {
            a = 0.5 * (a_lo + a_hi);
        }
        let (fa, da) = phi(a, x_out, g_out);
        if !fa.is_finite() {
            hi = (a, f64::INFINITY, 0.0);
            continue;
        }
        if fa > f0 + opts.c1 * a * dg0 || fa >= lo.1 {
            hi = (a, fa, da);
        } else {
            if da.abs() <= -opts.c2 * dg0 {
                return Some((a, fa));
            }
            if da * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, fa, da);
        }
    }
    // accept the best sufficient-decrease point found, if any
    if lo.0 > 0.0 && lo.1 < f0 {
        let (f, _) = phi(lo.0, x_out, g_out);
        return Some((lo.0, f));
    }
    None
}

/// Logistic map from an unbounded coordinate onto `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMap {
    pub lo: f64,
    pub hi: f64,
}

impl BoxMap {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Returns `(x, dx/dz)`.
    #[inline]
    pub fn forward(&self, z: f64) -> (f64, f64) {
        let s = sigmoid(z);
        (self.lo + self.width() * s, self.width() * s * (1.0 - s))
    }

    /// Unbounded coordinate of a normalised position `p` in `(0, 1)`.
    pub fn from_unit(p: f64) -> f64 {
        let p = p.clamp(1e-9, 1.0 - 1e-9);
        (p / (1.0 - p)).ln()
    }

    /// Unbounded coordinate for an interior value.
    pub fn inverse(&self, x: f64) -> f64 {
        if self.width() <= 0.0 {
            return 0.0;
        }
        Self::from_unit((x - self.lo) / self.width())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (1.0, 100.0);
            g[0] = -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0];
            g[1] = 2.0 * b * (x[1] - x[0] * x[0]);
            (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2)
        };
        let r = minimize(&f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn quadratic_converges_fast() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 20.0 * (x[1] + 1.0);
            g[2] = 0.2 * x[2];
            (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2) + 0.1 * x[2] * x[2]
        };
        let r = minimize(&f, &[0.0, 0.0, 5.0], &BfgsOptions::default());
        assert!(r.f < 1e-12, "{r:?}");
        assert!(r.iterations < 30);
    }

    #[test]
    fn box_map_round_trip() {
        let m = BoxMap::new(-2.0, 5.0);
        for x in [-1.9, 0.0, 3.3, 4.99] {
            let (back, d) = m.forward(m.inverse(x));
            assert!((back - x).abs() < 1e-9);
            assert!(d > 0.0);
        }
        let (x, _) = m.forward(1e6);
        assert!(x <= 5.0);
        let (x, _) = m.forward(-1e6);
        assert!(x >= -2.0);
    }

    #[test]
    fn non_finite_start_is_reported() {
        let f = |_: &[f64], g: &mut [f64]| {
            g[0] = 0.0;
            f64::NAN
        };
        let r = minimize(&f, &[0.0], &BfgsOptions::default());
        assert_eq!(r.termination, Termination::NonFinite);
    }
}
