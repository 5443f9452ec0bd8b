//! Small scalar numerics shared across modules.

use crate::error::{Error, Result};

/// Safeguarded Newton: iterates Newton steps on f within [lo, hi], falling
/// back to bisection whenever the step leaves the bracket or stalls.
/// Requires f(lo) and f(hi) of opposite sign.
pub fn solve_bracketed(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::ConvergenceError(format!(
            "no sign change on bracket [{lo}, {hi}]"
        )));
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..max_iter {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= xtol {
            return Ok(x.clamp(lo, hi));
        }
    }
    // Bracket keeps shrinking by at least half every other iteration, so
    // reaching the budget means xtol was unattainably small.
    Err(Error::ConvergenceError(format!(
        "root polish stalled on [{lo}, {hi}] (width {:.3e} > xtol {xtol:.3e})",
        hi - lo
    )))
}

/// Unsafeguarded Newton from a seed; used only after a bracket is known to
/// be locally convex. Falls back to an error after max_iter.
pub fn newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    seed: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut x = seed;
    for _ in 0..max_iter {
        let fx = f(x);
        let d = df(x);
        if d == 0.0 {
            return Err(Error::ConvergenceError(format!(
                "Newton hit zero derivative at {x}"
            )));
        }
        let step = fx / d;
        x -= step;
        if step.abs() <= xtol {
            return Ok(x);
        }
    }
    Err(Error::ConvergenceError(format!(
        "Newton did not converge from seed {seed}"
    )))
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

/// Compensated (Kahan) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    s: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }

    pub fn value(&self) -> f64 {
        self.s
    }
}

/// Ordinary least squares for y = a + b x; returns (a, b, r_squared).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}
