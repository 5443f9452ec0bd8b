//! Truncated Taylor series (jets) for exact derivatives of composed models.
//!
//! A `Jet` holds the Taylor coefficients c[k] = f^(k)(x0)/k! of a scalar
//! function at a point, truncated at order [`JET_ORDER`]. Arithmetic on jets
//! propagates derivatives exactly (to rounding), which is how the potential
//! W and its derivatives through order 6 are produced without finite
//! differences even when W is a rational composition (the N=2 case divides
//! by tau(v)).

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Highest derivative order carried by a jet.
pub const JET_ORDER: usize = 6;
const LEN: usize = JET_ORDER + 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    /// Taylor coefficients: c[k] = f^(k)/k!.
    pub c: [f64; LEN],
}

const FACTORIAL: [f64; LEN] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0];

impl Jet {
    pub fn constant(a: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = a;
        Jet { c }
    }

    /// The identity function v ↦ v seeded at v = x0.
    pub fn variable(x0: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = x0;
        c[1] = 1.0;
        Jet { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative (unscaled), k <= JET_ORDER.
    pub fn derivative(&self, k: usize) -> f64 {
        self.c[k] * FACTORIAL[k]
    }

    /// Reciprocal; requires a nonzero value coefficient.
    pub fn recip(&self) -> Jet {
        let b = &self.c;
        let mut d = [0.0; LEN];
        d[0] = 1.0 / b[0];
        for k in 1..LEN {
            let mut s = 0.0;
            for j in 1..=k {
                s += b[j] * d[k - j];
            }
            d[k] = -s / b[0];
        }
        Jet { c: d }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut c = self.c;
        for k in 0..LEN {
            c[k] += rhs.c[k];
        }
        Jet { c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let mut c = self.c;
        for k in 0..LEN {
            c[k] -= rhs.c[k];
        }
        Jet { c }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut c = self.c;
        for x in &mut c {
            *x = -*x;
        }
        Jet { c }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [0.0; LEN];
        for k in 0..LEN {
            let mut s = 0.0;
            for j in 0..=k {
                s += self.c[j] * rhs.c[k - j];
            }
            c[k] = s;
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        let mut c = self.c;
        for x in &mut c {
            *x *= s;
        }
        Jet { c }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        let mut c = self.c;
        c[0] += s;
        Jet { c }
    }
}
