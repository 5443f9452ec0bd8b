//! Dense univariate polynomials with ascending coefficients.
//!
//! Model ingredients (f, kappa, tau) are polynomial families selected by
//! config coefficient lists, so all derivatives are exact.

use crate::jet::Jet;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    /// coeffs[k] multiplies v^k.
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn constant(a: f64) -> Self {
        Polynomial { coeffs: vec![a] }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|&a| a != 0.0)
            .unwrap_or(0)
    }

    pub fn eval(&self, v: f64) -> f64 {
        let mut acc = 0.0;
        for &a in self.coeffs.iter().rev() {
            acc = acc * v + a;
        }
        acc
    }

    pub fn deriv(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &a)| a * k as f64)
            .collect();
        Polynomial { coeffs }
    }

    /// k-th derivative value at v.
    pub fn eval_deriv(&self, v: f64, k: usize) -> f64 {
        let mut p = self.clone();
        for _ in 0..k {
            p = p.deriv();
        }
        p.eval(v)
    }

    /// Horner evaluation over jets: returns the Taylor jet of the polynomial
    /// composed with the jet argument.
    pub fn eval_jet(&self, x: Jet) -> Jet {
        let mut acc = Jet::constant(0.0);
        for &a in self.coeffs.iter().rev() {
            acc = acc * x + a;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_and_derivatives() {
        // p = 1 - 2v + 3v^2
        let p = Polynomial::new(vec![1.0, -2.0, 3.0]);
        assert_relative_eq!(p.eval(2.0), 9.0);
        assert_relative_eq!(p.deriv().eval(2.0), 10.0);
        assert_relative_eq!(p.eval_deriv(2.0, 2), 6.0);
        assert_relative_eq!(p.eval_deriv(2.0, 3), 0.0);
    }

    #[test]
    fn jet_agrees_with_derivatives() {
        let p = Polynomial::new(vec![0.0, 0.0, 0.0, 0.0, 0.5]); // v^4/2
        let j = p.eval_jet(Jet::variable(1.5));
        for k in 0..=4 {
            assert_relative_eq!(j.derivative(k), p.eval_deriv(1.5, k), max_relative = 1e-13);
        }
    }
}
