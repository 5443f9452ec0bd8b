//! Adaptive integration of linear matrix differential equations Y' = A(x) Y
//! with complex coefficients.
//!
//! The driver is Dormand-Prince 4(5) with a PI step controller. Long
//! intervals with exponential dichotomies are handled by the checkpointed
//! propagator, which re-orthonormalizes the evolving frame at regular
//! stations and accumulates the triangular factors in log-scaled form, so
//! the result stays well conditioned even when the raw propagator entries
//! would dwarf f64 range.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{det_scaled, CMatrix, LogComplex};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    /// Relative tolerance on the local error per step.
    pub rtol: f64,
    /// Absolute floor for the error weights.
    pub atol: f64,
    /// Hard cap on accepted plus rejected steps per interval.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-13,
            max_steps: 2_000_000,
        }
    }
}

// Dormand-Prince 4(5) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn weighted_sum(terms: &[(&CMatrix, f64)]) -> CMatrix {
    let (first, w0) = terms[0];
    let mut acc = first * Complex64::new(w0, 0.0);
    for &(m, w) in &terms[1..] {
        if w != 0.0 {
            acc += m * Complex64::new(w, 0.0);
        }
    }
    acc
}

/// Integrate Y' = A(x) Y from x0 to x1 (either direction) starting at y0.
pub fn integrate_linear(
    a: &dyn Fn(f64) -> CMatrix,
    x0: f64,
    x1: f64,
    y0: CMatrix,
    opts: &OdeOptions,
) -> Result<CMatrix> {
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = (span.abs() / 64.0).min(0.1).max(1e-8) * dir;
    let mut k1 = a(x) * &y;
    let mut prev_err: f64 = 1.0;
    let mut steps = 0usize;
    loop {
        let remaining = x1 - x;
        if remaining == 0.0 || remaining.abs() <= 1e-14 * span.abs() {
            return Ok(y);
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        if h.abs() < 1e-14 * span.abs() {
            return Err(Error::IntegrationError(format!(
                "step size underflow at x = {x:.6e}"
            )));
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::IntegrationError(format!(
                "step budget {} exhausted on [{x0:.3e}, {x1:.3e}]",
                opts.max_steps
            )));
        }
        let y2 = &y + weighted_sum(&[(&k1, A2[0])]) * Complex64::new(h, 0.0);
        let k2 = a(x + C[1] * h) * y2;
        let y3 = &y + weighted_sum(&[(&k1, A3[0]), (&k2, A3[1])]) * Complex64::new(h, 0.0);
        let k3 = a(x + C[2] * h) * y3;
        let y4 = &y + weighted_sum(&[(&k1, A4[0]), (&k2, A4[1]), (&k3, A4[2])])
            * Complex64::new(h, 0.0);
        let k4 = a(x + C[3] * h) * y4;
        let y5 = &y
            + weighted_sum(&[(&k1, A5[0]), (&k2, A5[1]), (&k3, A5[2]), (&k4, A5[3])])
                * Complex64::new(h, 0.0);
        let k5 = a(x + C[4] * h) * y5;
        let y6 = &y
            + weighted_sum(&[
                (&k1, A6[0]),
                (&k2, A6[1]),
                (&k3, A6[2]),
                (&k4, A6[3]),
                (&k5, A6[4]),
            ]) * Complex64::new(h, 0.0);
        let k6 = a(x + C[5] * h) * y6;
        let y_new = &y
            + weighted_sum(&[
                (&k1, B5[0]),
                (&k3, B5[2]),
                (&k4, B5[3]),
                (&k5, B5[4]),
                (&k6, B5[5]),
            ]) * Complex64::new(h, 0.0);
        // FSAL stage doubles as the error estimate's last sample.
        let k7 = a(x + h) * &y_new;
        let err_mat = weighted_sum(&[
            (&k1, B5[0] - B4[0]),
            (&k3, B5[2] - B4[2]),
            (&k4, B5[3] - B4[3]),
            (&k5, B5[4] - B4[4]),
            (&k6, B5[5] - B4[5]),
            (&k7, B5[6] - B4[6]),
        ]) * Complex64::new(h, 0.0);
        let mut sum = 0.0;
        for i in 0..y.nrows() {
            for j in 0..y.ncols() {
                let scale = opts.atol + opts.rtol * y[(i, j)].norm().max(y_new[(i, j)].norm());
                let r = err_mat[(i, j)].norm() / scale;
                sum += r * r;
            }
        }
        let err = (sum / (y.nrows() * y.ncols()) as f64).sqrt().max(1e-30);
        if err <= 1.0 {
            x += h;
            y = y_new;
            k1 = k7;
            // PI controller: order-5 exponent with a weak damping term.
            let factor = 0.9 * err.powf(-0.2) * prev_err.powf(0.04);
            prev_err = err;
            h *= factor.clamp(0.2, 5.0);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
}

/// Product of an interval propagator in factored form: T = scale * Q * U
/// with Q orthonormal columns and U upper triangular. For square frames
/// this is the full propagator; for tall frames it is the evolved subspace
/// with its accumulated growth factors.
#[derive(Clone, Debug)]
pub struct CheckpointedProduct {
    pub q: CMatrix,
    pub u: CMatrix,
    pub scale: LogComplex,
    /// Largest single-checkpoint condition ratio max|diag R| / min|diag R|.
    pub frame_condition: f64,
    pub checkpoints: usize,
}

impl CheckpointedProduct {
    /// det of the triangular growth factors times scale^k, the part of the
    /// block determinant that is independent of the orthonormal frame.
    pub fn column_factor(&self) -> LogComplex {
        self.scale
            .powi(self.u.ncols() as i32)
            .mul(det_scaled(&self.u))
    }

    /// Full determinant, defined for square frames only.
    pub fn log_det(&self) -> LogComplex {
        assert_eq!(self.q.nrows(), self.q.ncols(), "determinant of a tall frame");
        self.column_factor().mul(det_scaled(&self.q))
    }

    /// Reassemble scale * Q * U as a plain matrix.
    pub fn materialize(&self) -> Result<CMatrix> {
        let qu = &self.q * &self.u;
        let maxabs = qu.iter().map(|t| t.norm()).fold(0.0, f64::max);
        if self.scale.ln_abs() + maxabs.max(1e-300).ln() > 700.0 {
            return Err(Error::IntegrationError(
                "propagator entries exceed f64 range; use the factored form".into(),
            ));
        }
        Ok(qu * self.scale.value())
    }
}

/// Integrate the frame `y0` across [x0, x1] with re-orthonormalization
/// every `checkpoint_len` units of x. The triangular factors R are folded
/// into U, which is renormalized to unit max entry at each station with the
/// magnitude pushed into `scale`.
pub fn propagate_checkpointed(
    a: &dyn Fn(f64) -> CMatrix,
    x0: f64,
    x1: f64,
    y0: CMatrix,
    checkpoint_len: f64,
    opts: &OdeOptions,
) -> Result<CheckpointedProduct> {
    assert!(checkpoint_len > 0.0, "checkpoint length must be positive");
    let cols = y0.ncols();
    let span = x1 - x0;
    let segments = (span.abs() / checkpoint_len).ceil().max(1.0) as usize;
    let mut q = y0;
    let mut u = CMatrix::identity(cols, cols);
    let mut scale = LogComplex::one();
    let mut frame_condition: f64 = 1.0;
    for s in 0..segments {
        let xa = x0 + span * (s as f64 / segments as f64);
        let xb = if s + 1 == segments {
            x1
        } else {
            x0 + span * ((s + 1) as f64 / segments as f64)
        };
        let evolved = integrate_linear(a, xa, xb, q, opts)?;
        let qr = evolved.qr();
        q = qr.q();
        let r = qr.r();
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0f64;
        for i in 0..cols {
            let d = r[(i, i)].norm();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        if dmin == 0.0 || dmax / dmin > 1e12 {
            return Err(Error::ShootError(format!(
                "frame collapsed at checkpoint x = {xb:.4e}: diagonal ratio {:.3e}",
                if dmin == 0.0 { f64::INFINITY } else { dmax / dmin }
            )));
        }
        frame_condition = frame_condition.max(dmax / dmin);
        u = r * u;
        let umax = u.iter().map(|t| t.norm()).fold(0.0, f64::max);
        if umax == 0.0 {
            return Err(Error::ShootError(
                "propagated frame vanished entirely".into(),
            ));
        }
        u /= Complex64::new(umax, 0.0);
        scale = scale.mul(LogComplex::from_ln(umax.ln(), 0.0));
    }
    Ok(CheckpointedProduct {
        q,
        u,
        scale,
        frame_condition,
        checkpoints: segments,
    })
}
