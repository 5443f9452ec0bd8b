//! Dense complex linear algebra for the small spectral systems.
//!
//! Everything here targets matrices of dimension at most four: eigenvalues
//! through the characteristic polynomial, spectral projectors by resolvent
//! contours, rank-revealing bases, and determinant bookkeeping in
//! (log-modulus, phase) form so products over long intervals never overflow.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A nonnegative multiple of a unit phase, value = e^{ln_abs} * phase.
/// Multiplication adds log-moduli, so determinants of long propagator
/// products stay representable far beyond the f64 exponent range.
#[derive(Clone, Copy, Debug)]
pub struct LogComplex {
    ln_abs: f64,
    phase: Complex64,
}

impl LogComplex {
    pub fn one() -> Self {
        LogComplex {
            ln_abs: 0.0,
            phase: ONE,
        }
    }

    pub fn zero() -> Self {
        LogComplex {
            ln_abs: f64::NEG_INFINITY,
            phase: ONE,
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        let r = z.norm();
        if r == 0.0 || !r.is_finite() {
            if r == 0.0 {
                return LogComplex::zero();
            }
            return LogComplex {
                ln_abs: f64::INFINITY,
                phase: ONE,
            };
        }
        LogComplex {
            ln_abs: r.ln(),
            phase: z / r,
        }
    }

    pub fn from_ln(ln_abs: f64, arg: f64) -> Self {
        LogComplex {
            ln_abs,
            phase: Complex64::new(arg.cos(), arg.sin()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    pub fn ln_abs(&self) -> f64 {
        self.ln_abs
    }

    pub fn arg(&self) -> f64 {
        self.phase.arg()
    }

    pub fn mul(self, other: LogComplex) -> Self {
        let phase = self.phase * other.phase;
        let n = phase.norm();
        LogComplex {
            ln_abs: self.ln_abs + other.ln_abs,
            phase: if n > 0.0 { phase / n } else { ONE },
        }
    }

    pub fn div(self, other: LogComplex) -> Self {
        let phase = self.phase / other.phase;
        let n = phase.norm();
        LogComplex {
            ln_abs: self.ln_abs - other.ln_abs,
            phase: if n > 0.0 { phase / n } else { ONE },
        }
    }

    /// Multiply by e^w for complex w.
    pub fn mul_exp(self, w: Complex64) -> Self {
        LogComplex {
            ln_abs: self.ln_abs + w.re,
            phase: self.phase * Complex64::new(w.im.cos(), w.im.sin()),
        }
    }

    pub fn powi(self, k: i32) -> Self {
        LogComplex::from_ln(self.ln_abs * k as f64, self.arg() * k as f64)
    }

    /// e^{ln_abs} * phase; saturates to 0 or infinity outside f64 range.
    pub fn value(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        self.phase * self.ln_abs.exp()
    }

    /// Principal complex logarithm of the value.
    pub fn ln(&self) -> Complex64 {
        Complex64::new(self.ln_abs, self.arg())
    }
}

/// Coefficients of det(x I - A) in ascending order, monic: the returned
/// vector c has length n+1 with c[n] = 1 and p(x) = sum c[k] x^k.
/// Faddeev-LeVerrier recursion; exact in rational arithmetic, stable enough
/// in floating point for the n <= 4 systems used here.
pub fn characteristic_polynomial(a: &CMatrix) -> Vec<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "characteristic polynomial needs a square matrix");
    let zero = Complex64::new(0.0, 0.0);
    let mut coeffs = vec![zero; n + 1];
    coeffs[n] = ONE;
    if n == 0 {
        return coeffs;
    }
    let mut m = a.clone();
    let mut trace = m.diagonal().sum();
    coeffs[n - 1] = -trace;
    for k in 2..=n {
        let shifted = &m + CMatrix::identity(n, n) * coeffs[n - k + 1];
        m = a * shifted;
        trace = m.diagonal().sum();
        coeffs[n - k] = -trace / Complex64::new(k as f64, 0.0);
    }
    coeffs
}

fn eval_poly(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn eval_poly_deriv(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &c) in coeffs.iter().enumerate().skip(1).rev() {
        acc = acc * x + c * Complex64::new(k as f64, 0.0);
    }
    acc
}

/// All roots of a polynomial with complex coefficients (ascending order),
/// by the Durand-Kerner simultaneous iteration plus a Newton polish per
/// root. Multiple roots come back as tight clusters rather than exact
/// repeats; downstream spectral code treats clusters through contours, so
/// that accuracy loss is harmless.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut c: Vec<Complex64> = coeffs.to_vec();
    while c.len() > 1 && c.last().map(|t| t.norm()) == Some(0.0) {
        c.pop();
    }
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = c[n];
    if lead.norm() == 0.0 {
        return Err(Error::ConvergenceError(
            "polynomial has zero leading coefficient".into(),
        ));
    }
    for t in c.iter_mut() {
        *t /= lead;
    }
    // Cauchy bound keeps every root inside |x| <= 1 + max |c_k|.
    let bound = 1.0 + c[..n].iter().map(|t| t.norm()).fold(0.0, f64::max);
    let r0 = bound.min(1.0 + bound.sqrt());
    let mut x: Vec<Complex64> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            Complex64::new(th.cos(), th.sin()) * (0.5 * r0)
        })
        .collect();
    let mut converged = false;
    for _ in 0..600 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = ONE;
            for j in 0..n {
                if j != i {
                    denom *= x[i] - x[j];
                }
            }
            if denom.norm() == 0.0 {
                // Collided iterates; nudge apart and continue.
                x[i] += Complex64::new(1e-8 * (1.0 + r0), 1e-8);
                max_step = f64::INFINITY;
                continue;
            }
            let step = eval_poly(&c, x[i]) / denom;
            x[i] -= step;
            max_step = max_step.max(step.norm());
        }
        let scale = 1.0 + x.iter().map(|t| t.norm()).fold(0.0, f64::max);
        if max_step <= 1e-14 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        // Clusters from multiple roots stall the joint iteration early; the
        // Newton polish below still tightens simple roots, and residuals are
        // checked by the callers that need certified values.
    }
    for xi in x.iter_mut() {
        for _ in 0..3 {
            let d = eval_poly_deriv(&c, *xi);
            if d.norm() == 0.0 {
                break;
            }
            let step = eval_poly(&c, *xi) / d;
            if !step.norm().is_finite() {
                break;
            }
            *xi -= step;
        }
    }
    x.sort_by(|a, b| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(x)
}

/// Eigenvalues of a complex matrix, sorted by (Re, Im).
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    polynomial_roots(&characteristic_polynomial(a))
}

fn single_linkage_clusters(points: &[Complex64], threshold: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Spectral projector onto the invariant subspace of the eigenvalues in
/// `inside`, with `outside` the rest of the spectrum. Each cluster of
/// inside eigenvalues gets its own resolvent circle, evaluated by the
/// trapezoid rule, which converges geometrically for contours clear of the
/// remaining spectrum. Works for defective eigenvalues as well since only
/// the enclosing contour matters.
pub fn spectral_projector(
    a: &CMatrix,
    inside: &[Complex64],
    outside: &[Complex64],
) -> Result<CMatrix> {
    let n = a.nrows();
    if inside.is_empty() {
        return Ok(CMatrix::zeros(n, n));
    }
    if outside.is_empty() {
        return Ok(CMatrix::identity(n, n));
    }
    let d_io = inside
        .iter()
        .flat_map(|p| outside.iter().map(move |q| (p - q).norm()))
        .fold(f64::INFINITY, f64::min);
    if d_io <= 0.0 {
        return Err(Error::ConvergenceError(
            "coincident eigenvalues across the spectral split".into(),
        ));
    }
    let clusters = single_linkage_clusters(inside, 0.5 * d_io);
    let scale = inside
        .iter()
        .chain(outside.iter())
        .map(|p| p.norm())
        .fold(1.0, f64::max);
    let identity = CMatrix::identity(n, n);
    let mut p = CMatrix::zeros(n, n);
    for cluster in clusters {
        let center = cluster.iter().map(|&i| inside[i]).sum::<Complex64>()
            / Complex64::new(cluster.len() as f64, 0.0);
        // Pad the inner radius by the root-cluster uncertainty so the true
        // eigenvalues are strictly enclosed even when the computed ones are
        // off by the accuracy of a multiple root.
        let r_in = cluster
            .iter()
            .map(|&i| (inside[i] - center).norm())
            .fold(0.0, f64::max)
            + 1e-6 * scale;
        let d_out = inside
            .iter()
            .enumerate()
            .filter(|(i, _)| !cluster.contains(i))
            .map(|(_, m)| (m - center).norm())
            .chain(outside.iter().map(|m| (m - center).norm()))
            .fold(f64::INFINITY, f64::min);
        if d_out <= r_in * 1.02 {
            return Err(Error::ConvergenceError(format!(
                "projector contour pinched near {center}: inner radius {r_in:.3e}, outer gap {d_out:.3e}"
            )));
        }
        let radius = 0.5 * (r_in + d_out);
        let ratio = (radius / d_out).max(r_in / radius);
        let nodes = ((-34.5 / ratio.ln()).ceil() as usize).clamp(48, 8192);
        let mut pc = CMatrix::zeros(n, n);
        for j in 0..nodes {
            let th = 2.0 * std::f64::consts::PI * j as f64 / nodes as f64;
            let w = Complex64::new(th.cos(), th.sin());
            let zeta = center + w * radius;
            let resolvent = (identity.clone() * zeta - a).lu().try_inverse().ok_or_else(|| {
                Error::ConvergenceError(format!("resolvent singular on contour at {zeta}"))
            })?;
            pc += resolvent * (w * radius / Complex64::new(nodes as f64, 0.0));
        }
        p += pc;
    }
    // One Newton step toward idempotency cleans the trapezoid tail without
    // moving the range.
    for _ in 0..2 {
        let defect = (&p * &p - &p).norm();
        if defect <= 1e-13 * (1.0 + p.norm()) {
            break;
        }
        p = &p * &p * (identity.clone() * Complex64::new(3.0, 0.0) - &p * Complex64::new(2.0, 0.0));
    }
    let defect = (&p * &p - &p).norm();
    if defect > 1e-10 * (1.0 + p.norm()) {
        return Err(Error::ConvergenceError(format!(
            "spectral projector failed idempotency: defect {defect:.3e}"
        )));
    }
    Ok(p)
}

/// Orthonormal basis of the range of `p`, first `rank` columns from a
/// column-pivoted QR. Errors when the trailing pivot shows the projector
/// does not carry the requested rank.
pub fn orthonormal_range(p: &CMatrix, rank: usize) -> Result<CMatrix> {
    let n = p.nrows();
    let qr = p.clone().col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    if rank == 0 || rank > n {
        return Err(Error::ConvergenceError(format!(
            "requested range of rank {rank} from a {n}x{n} projector"
        )));
    }
    let lead = r[(0, 0)].norm();
    let tail = r[(rank - 1, rank - 1)].norm();
    if !(tail > 1e-8 * lead.max(1e-300)) {
        return Err(Error::ConvergenceError(format!(
            "projector range is rank deficient: pivot ratio {:.3e}",
            tail / lead.max(1e-300)
        )));
    }
    Ok(q.columns(0, rank).into_owned())
}

/// Determinant with a pre-scaling that keeps the LU factorization inside
/// f64 range; exact magnitude is recovered in the log-modulus.
pub fn det_scaled(m: &CMatrix) -> LogComplex {
    let n = m.nrows();
    if n == 0 {
        return LogComplex::one();
    }
    let maxabs = m.iter().map(|t| t.norm()).fold(0.0, f64::max);
    if maxabs == 0.0 {
        return LogComplex::zero();
    }
    let scaled = m / Complex64::new(maxabs, 0.0);
    let d = scaled.determinant();
    LogComplex::from_complex(d).mul(LogComplex::from_ln(maxabs.ln() * n as f64, 0.0))
}

pub fn solve_inverse(m: &CMatrix) -> Result<CMatrix> {
    m.clone().lu().try_inverse().ok_or_else(|| {
        Error::ConvergenceError("matrix inversion failed: numerically singular".into())
    })
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor core.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.iter().map(|t| t.norm()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = a / Complex64::new((2.0f64).powi(squarings as i32), 0.0);
    let mut term = CMatrix::identity(n, n);
    let mut sum = CMatrix::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Spectral norm through the Hermitian eigenproblem of m^H m; the matrices
/// here are tiny, so the characteristic-polynomial route is adequate.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    let gram = m.adjoint() * m;
    match eigenvalues(&gram) {
        Ok(eigs) => eigs
            .iter()
            .map(|e| e.re.max(0.0))
            .fold(0.0, f64::max)
            .sqrt(),
        Err(_) => m.norm(),
    }
}

/// sin of the largest principal angle between the spans of two orthonormal
/// frames with the same column count.
pub fn span_defect(q1: &CMatrix, q2: &CMatrix) -> f64 {
    let projected = q2 * (q2.adjoint() * q1);
    spectral_norm(&(q1 - projected))
}

/// Columns of `left` followed by columns of `right`.
pub fn hstack(left: &CMatrix, right: &CMatrix) -> CMatrix {
    assert_eq!(left.nrows(), right.nrows());
    let n = left.nrows();
    let k = left.ncols() + right.ncols();
    CMatrix::from_fn(n, k, |i, j| {
        if j < left.ncols() {
            left[(i, j)]
        } else {
            right[(i, j - left.ncols())]
        }
    })
}

/// Rows of `top` followed by rows of `bottom`.
pub fn vstack(top: &CMatrix, bottom: &CMatrix) -> CMatrix {
    assert_eq!(top.ncols(), bottom.ncols());
    let m = top.nrows() + bottom.nrows();
    let k = top.ncols();
    CMatrix::from_fn(m, k, |i, j| {
        if i < top.nrows() {
            top[(i, j)]
        } else {
            bottom[(i - top.nrows(), j)]
        }
    })
}
