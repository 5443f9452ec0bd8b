//! Adaptive singular quadrature and the Taylor-remainder kernel.
//!
//! Everything asymptotic in this crate is validated against the integrals
//! computed here, so this module favors robustness over speed:
//!
//! - endpoint square-root singularities are removed by the substitution
//!   v = m + h·sinθ (the cosθ Jacobian cancels a 1/√ endpoint factor and is
//!   harmless at regular endpoints, so one code path serves all tags);
//! - the near-double-root spike at the potential saddle v_s is resolved by
//!   v = v_s + (ε/√(−R_s))·sinh t together with the cancellation-free
//!   factorization μ − W = ε² − (v−v_s)²·R̃(v, v_s, v_s);
//! - panels are accumulated with compensated summation and an explicit
//!   error estimate; exceeding the panel budget is an error, not a warning.

use crate::error::{Error, Result};
use crate::model::PotentialEval;
use crate::util::KahanSum;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Fixed Gauss order for adaptive panels.
const PANEL_ORDER: usize = 15;
/// Gauss order for the Taylor-remainder kernel (exact through polynomial
/// degree 23 in each variable).
const KERNEL_ORDER: usize = 12;
/// Hard cap on integrand evaluations per adaptive call.
const EVAL_BUDGET: usize = 4_000_000;

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| compute_gauss_legendre(n))
        .clone()
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on P_n with the Chebyshev-based initial guess.
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn gauss_panel(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(PANEL_ORDER);
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = KahanSum::default();
    for (&x, &w) in nodes.iter().zip(&weights) {
        s.add(w * f(m + h * x));
    }
    s.value() * h
}

/// One panel, also returning ∫|f| for tolerance scaling (cancellation-safe).
fn gauss_panel_abs(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (nodes, weights) = gauss_legendre(PANEL_ORDER);
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = KahanSum::default();
    let mut sa = KahanSum::default();
    for (&x, &w) in nodes.iter().zip(&weights) {
        let y = f(m + h * x);
        s.add(w * y);
        sa.add(w * y.abs());
    }
    (s.value() * h, sa.value() * h)
}

/// One refined panel of the global adaptive scheme: `value` is the two-half
/// Gauss estimate, `err` the coarse-vs-fine discrepancy, `abs` the ∫|f| mass.
struct Panel {
    err: f64,
    value: f64,
    abs: f64,
    lo: f64,
    hi: f64,
    splittable: bool,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key() == other.cmp_key()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cmp_key().total_cmp(&other.cmp_key())
    }
}

impl Panel {
    /// Unsplittable panels sort last regardless of error.
    fn cmp_key(&self) -> f64 {
        if self.splittable {
            self.err
        } else {
            -1.0
        }
    }
}

/// Adaptive Gauss integration, worst-panel-first with a global error target.
/// Returns (value, error estimate). The target is rtol · ∫|f| so that
/// cancellation cannot collapse it to zero, and refinement stops at the
/// machine-precision floor of the accumulated panels.
pub fn adaptive_gauss(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rtol: f64,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut evals = 0usize;
    let make = |f: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64, evals: &mut usize| -> Panel {
        let coarse = gauss_panel(f, lo, hi);
        let mid = 0.5 * (lo + hi);
        let (l, labs) = gauss_panel_abs(f, lo, mid);
        let (r, rabs) = gauss_panel_abs(f, mid, hi);
        *evals += 3 * PANEL_ORDER;
        Panel {
            err: (l + r - coarse).abs(),
            value: l + r,
            abs: labs + rabs,
            lo,
            hi,
            splittable: mid > lo && mid < hi,
        }
    };

    let mut heap = std::collections::BinaryHeap::new();
    let first = make(f, a, b, &mut evals);
    let mut sum_err = first.err;
    let mut sum_abs = first.abs;
    heap.push(first);

    loop {
        let target = rtol * sum_abs.max(1e-300);
        let floor = 1e-15 * sum_abs;
        if sum_err <= target.max(floor) {
            break;
        }
        let Some(worst) = heap.peek() else { break };
        if !worst.splittable {
            break;
        }
        if evals > EVAL_BUDGET {
            return Err(Error::QuadratureError(format!(
                "panel budget exceeded on [{a}, {b}]: achieved error ~{sum_err:.3e}, target {target:.3e}"
            )));
        }
        let worst = heap.pop().unwrap();
        sum_err -= worst.err;
        sum_abs -= worst.abs;
        let mid = 0.5 * (worst.lo + worst.hi);
        for (lo, hi) in [(worst.lo, mid), (mid, worst.hi)] {
            let p = make(f, lo, hi, &mut evals);
            sum_err += p.err;
            sum_abs += p.abs;
            heap.push(p);
        }
    }

    let mut total = KahanSum::default();
    let mut err = KahanSum::default();
    for p in heap.iter() {
        total.add(p.value);
        err.add(p.err);
    }
    Ok((total.value(), err.value()))
}

/// Endpoint classification for [`integrate_sqrt_singular`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndpointTag {
    /// μ − W is bounded away from zero at this endpoint.
    None,
    /// μ − W has a simple root exactly at this endpoint.
    SqrtSimpleRoot,
    /// This endpoint sits at the saddle v_s where μ − W = ε² is small but
    /// positive; requires saddle data on the spec.
    NearDoubleRoot,
}

/// Saddle data needed by the near-double-root substitution.
#[derive(Clone, Copy, Debug)]
pub struct SaddleInfo {
    pub v_s: f64,
    /// ε² = μ − μ_s > 0.
    pub eps2: f64,
    /// Radius within which W_vv < 0 and the factorized form is used.
    pub eta: f64,
}

/// A singular integral I = ∫ φ(v)/√(μ − W(v)) dv on [v_lo, v_hi].
pub struct SingularIntegralSpec<'a> {
    pub phi: &'a dyn Fn(f64) -> f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub tag_lo: EndpointTag,
    pub tag_hi: EndpointTag,
    pub rtol: f64,
    /// Required when either tag is NearDoubleRoot.
    pub saddle: Option<SaddleInfo>,
}

/// Evaluates I(φ) = ∫ φ/√(μ − W) with endpoint singularities removed by
/// substitution. See the module docs for the transform inventory.
pub fn integrate_sqrt_singular(
    spec: &SingularIntegralSpec,
    pot: &PotentialEval,
    mu: f64,
) -> Result<f64> {
    if !(spec.v_lo < spec.v_hi) {
        if spec.v_lo == spec.v_hi {
            return Ok(0.0);
        }
        return Err(Error::QuadratureError(format!(
            "bounds out of order: [{}, {}]",
            spec.v_lo, spec.v_hi
        )));
    }
    match (spec.tag_lo, spec.tag_hi) {
        (EndpointTag::NearDoubleRoot, EndpointTag::NearDoubleRoot) => {
            Err(Error::QuadratureError(
                "both endpoints tagged near-double-root; split at the saddle first".into(),
            ))
        }
        (EndpointTag::NearDoubleRoot, hi_tag) => {
            let saddle = require_saddle(spec)?;
            let split = saddle_split_point(spec.v_lo, spec.v_hi, saddle)?;
            let near = integrate_saddle_side(spec, pot, mu, saddle, split, Side::Right)?;
            let far = integrate_sin_theta(
                spec,
                pot,
                mu,
                split,
                spec.v_hi,
                EndpointTag::None,
                hi_tag,
            )?;
            Ok(near + far)
        }
        (lo_tag, EndpointTag::NearDoubleRoot) => {
            let saddle = require_saddle(spec)?;
            let split = saddle_split_point_left(spec.v_lo, spec.v_hi, saddle)?;
            let near = integrate_saddle_side(spec, pot, mu, saddle, split, Side::Left)?;
            let far = integrate_sin_theta(
                spec,
                pot,
                mu,
                spec.v_lo,
                split,
                lo_tag,
                EndpointTag::None,
            )?;
            Ok(near + far)
        }
        (lo_tag, hi_tag) => {
            // If a saddle sits strictly inside the bounds, split there so each
            // half sees the spike at one end only.
            if let Some(s) = spec.saddle {
                if s.v_s > spec.v_lo + 1e-14 && s.v_s < spec.v_hi - 1e-14 {
                    let left = SingularIntegralSpec {
                        phi: spec.phi,
                        v_lo: spec.v_lo,
                        v_hi: s.v_s,
                        tag_lo: lo_tag,
                        tag_hi: EndpointTag::NearDoubleRoot,
                        rtol: spec.rtol,
                        saddle: spec.saddle,
                    };
                    let right = SingularIntegralSpec {
                        phi: spec.phi,
                        v_lo: s.v_s,
                        v_hi: spec.v_hi,
                        tag_lo: EndpointTag::NearDoubleRoot,
                        tag_hi: hi_tag,
                        rtol: spec.rtol,
                        saddle: spec.saddle,
                    };
                    return Ok(integrate_sqrt_singular(&left, pot, mu)?
                        + integrate_sqrt_singular(&right, pot, mu)?);
                }
            }
            integrate_sin_theta(spec, pot, mu, spec.v_lo, spec.v_hi, lo_tag, hi_tag)
        }
    }
}

fn require_saddle(spec: &SingularIntegralSpec) -> Result<SaddleInfo> {
    let s = spec.saddle.ok_or_else(|| {
        Error::QuadratureError("near-double-root tag requires saddle data".into())
    })?;
    if !(s.eps2 > 0.0) {
        return Err(Error::QuadratureError(format!(
            "near-double-root substitution needs μ − μ_s > 0, got {:.3e}",
            s.eps2
        )));
    }
    Ok(s)
}

fn saddle_split_point(v_lo: f64, v_hi: f64, s: SaddleInfo) -> Result<f64> {
    if (v_lo - s.v_s).abs() > 1e-9 * (v_hi - v_lo).max(1.0) {
        return Err(Error::QuadratureError(format!(
            "near-double-root endpoint {v_lo} does not coincide with the saddle {}",
            s.v_s
        )));
    }
    Ok((s.v_s + s.eta).min(v_hi))
}

fn saddle_split_point_left(v_lo: f64, v_hi: f64, s: SaddleInfo) -> Result<f64> {
    if (v_hi - s.v_s).abs() > 1e-9 * (v_hi - v_lo).max(1.0) {
        return Err(Error::QuadratureError(format!(
            "near-double-root endpoint {v_hi} does not coincide with the saddle {}",
            s.v_s
        )));
    }
    Ok((s.v_s - s.eta).max(v_lo))
}

enum Side {
    /// Integrate [v_s, split] (saddle at the left edge of the segment).
    Right,
    /// Integrate [split, v_s].
    Left,
}

/// ∫ over the saddle-adjacent segment using v = v_s + (ε/√(−R_s))·sinh t and
/// μ − W = ε² − (v−v_s)²·R̃(v, v_s, v_s). Both terms of the factorized
/// denominator are positive, so no cancellation occurs for any ε.
fn integrate_saddle_side(
    spec: &SingularIntegralSpec,
    pot: &PotentialEval,
    mu: f64,
    s: SaddleInfo,
    split: f64,
    side: Side,
) -> Result<f64> {
    let _ = mu;
    let eps = s.eps2.sqrt();
    let r_s = taylor_remainder_r(pot, s.v_s, s.v_s, s.v_s);
    if !(r_s < 0.0) {
        return Err(Error::QuadratureError(format!(
            "saddle curvature R_s = {r_s:.3e} is not negative"
        )));
    }
    let scale = eps / (-r_s).sqrt();
    let width = match side {
        Side::Right => split - s.v_s,
        Side::Left => s.v_s - split,
    };
    if width <= 0.0 {
        return Ok(0.0);
    }
    let t_max = (width / scale).asinh();
    let sign = match side {
        Side::Right => 1.0,
        Side::Left => -1.0,
    };
    let mut f = |t: f64| {
        let w = scale * t.sinh();
        let v = s.v_s + sign * w;
        let r = taylor_remainder_r(pot, v, s.v_s, s.v_s);
        // μ − W = ε² − (v−v_s)² R̃; R̃ < 0 on the eta-window.
        let denom = s.eps2 + w * w * (-r);
        (spec.phi)(v) * scale * t.cosh() / denom.sqrt()
    };
    let (val, _) = adaptive_gauss(&mut f, 0.0, t_max, spec.rtol)?;
    Ok(val)
}

/// μ − W(v) near a tagged root endpoint, evaluated as W(root) − W(v) from
/// the Taylor jet of W at v with the exactly-known distance d_to_root.
///
/// This deliberately treats the polished endpoint as the exact root: the
/// float root b differs from the true root by δ = (μ − W(b))/W'(b) ~ 1e-16,
/// and moving the root by δ perturbs the integral by O(δ). Keeping the
/// residual μ − W(b) in the denominator instead would truncate the integral
/// at b, an O(√resid) ~ 1e-8 error hidden in a boundary layer too narrow
/// for any error estimator to see. Only called for |d_to_root| small
/// against the segment, where the order-6 truncation of a rational W is
/// far below rounding.
pub(crate) fn denom_via_root(pot: &PotentialEval, v: f64, d_to_root: f64) -> f64 {
    let jet = pot.w_jet(v);
    let mut s = 0.0;
    let mut dk = 1.0;
    for k in 1..=crate::jet::JET_ORDER {
        dk *= d_to_root;
        s += jet.c[k] * dk;
    }
    s
}

/// ∫ φ/√(μ−W) over a segment free of the saddle, via v = m + h·sinθ.
///
/// Near a root-tagged endpoint the distance to the root is computed with
/// the stable identities 1 − sinθ = 2sin²(π/4 − θ/2) and
/// 1 + sinθ = 2cos²(π/4 − θ/2), and μ − W through [`denom_via_root`];
/// evaluating μ − W(v) directly there would lose every significant digit
/// once v rounds onto the root.
#[allow(clippy::too_many_arguments)]
fn integrate_sin_theta(
    spec: &SingularIntegralSpec,
    pot: &PotentialEval,
    mu: f64,
    a: f64,
    b: f64,
    tag_lo: EndpointTag,
    tag_hi: EndpointTag,
) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let quarter_pi = std::f64::consts::FRAC_PI_4;
    let mut f = |theta: f64| {
        let half = quarter_pi - 0.5 * theta;
        let dist_hi = 2.0 * h * half.sin().powi(2); // b − v
        let dist_lo = 2.0 * h * half.cos().powi(2); // v − a
        let v = m + h * theta.sin();
        let denom = if tag_hi == EndpointTag::SqrtSimpleRoot && dist_hi <= 0.1 * h {
            denom_via_root(pot, v, dist_hi)
        } else if tag_lo == EndpointTag::SqrtSimpleRoot && dist_lo <= 0.1 * h {
            denom_via_root(pot, v, -dist_lo)
        } else {
            mu - pot.w(v)
        };
        if denom <= 0.0 {
            // Only reachable within rounding distance of a root, where the
            // cosθ factor kills the contribution anyway.
            return 0.0;
        }
        (spec.phi)(v) * h * theta.cos() / denom.sqrt()
    };
    let (val, _) = adaptive_gauss(&mut f, -half_pi, half_pi, spec.rtol)?;
    Ok(val)
}

/// Second-order Taylor remainder of W as a Hermite-Genocchi double integral:
///   R̃(v, w, z) = ∫₀¹∫₀¹ t · ∂²W(w + t(z−w) + ts(v−z)) ds dt,
/// so that W(v) = W(w) + ∂W(w)(z−w)·… reduces to
///   μ_s − W(v) = −(v−v_s)² R̃(v, v_s, v_s) at the saddle level.
pub fn taylor_remainder_r(pot: &PotentialEval, v: f64, w: f64, z: f64) -> f64 {
    kernel_moments(pot, v, w, z, &[KernelReq::new(1, false, 0, false, 2)])[0]
}

/// One moment request: ∫∫ t^t_pow (1−t)^m1t s^s_pow (1−s)^m1s W^{(order)}(arg).
#[derive(Clone, Copy)]
struct KernelReq {
    t_pow: i32,
    one_minus_t: bool,
    s_pow: i32,
    one_minus_s: bool,
    order: usize,
}

impl KernelReq {
    fn new(t_pow: i32, one_minus_t: bool, s_pow: i32, one_minus_s: bool, order: usize) -> Self {
        Self {
            t_pow,
            one_minus_t,
            s_pow,
            one_minus_s,
            order,
        }
    }
}

/// Derivatives of the remainder kernel in its arguments, obtained by
/// differentiating under the integral sign: the kernel argument is affine
/// with ∂arg/∂v = ts, ∂arg/∂z = t(1−s), ∂arg/∂w = 1−t.
#[derive(Clone, Copy, Debug, Default)]
pub struct RemainderJet {
    pub r: f64,
    pub r_v: f64,
    pub r_z: f64,
    pub r_w: f64,
    pub r_vv: f64,
    pub r_vz: f64,
    pub r_vvv: f64,
}

pub fn taylor_remainder_jet(pot: &PotentialEval, v: f64, w: f64, z: f64) -> RemainderJet {
    let vals = kernel_moments(
        pot,
        v,
        w,
        z,
        &[
            KernelReq::new(1, false, 0, false, 2), // R̃       = ∫∫ t W''
            KernelReq::new(2, false, 1, false, 3), // R̃_v     = ∫∫ t² s W³
            KernelReq::new(2, false, 0, true, 3),  // R̃_z     = ∫∫ t² (1−s) W³
            KernelReq::new(1, true, 0, false, 3),  // R̃_w     = ∫∫ t (1−t) W³
            KernelReq::new(3, false, 2, false, 4), // R̃_vv    = ∫∫ t³ s² W⁴
            KernelReq::new(3, false, 1, true, 4),  // R̃_vz    = ∫∫ t³ s(1−s) W⁴
            KernelReq::new(4, false, 3, false, 5), // R̃_vvv   = ∫∫ t⁴ s³ W⁵
        ],
    );
    RemainderJet {
        r: vals[0],
        r_v: vals[1],
        r_z: vals[2],
        r_w: vals[3],
        r_vv: vals[4],
        r_vz: vals[5],
        r_vvv: vals[6],
    }
}

/// Shared tensor-Gauss pass over [0,1]²; one potential jet per node serves
/// all requested moments.
fn kernel_moments(pot: &PotentialEval, v: f64, w: f64, z: f64, req: &[KernelReq]) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre(KERNEL_ORDER);
    let mut acc = vec![KahanSum::default(); req.len()];
    for (&xt, &wt) in nodes.iter().zip(&weights) {
        let t = 0.5 * (xt + 1.0);
        for (&xs, &ws) in nodes.iter().zip(&weights) {
            let s = 0.5 * (xs + 1.0);
            let arg = w + t * (z - w) + t * s * (v - z);
            let jet = pot.w_jet(arg);
            let weight = 0.25 * wt * ws;
            for (i, rq) in req.iter().enumerate() {
                let mut fac = t.powi(rq.t_pow) * s.powi(rq.s_pow);
                if rq.one_minus_t {
                    fac *= 1.0 - t;
                }
                if rq.one_minus_s {
                    fac *= 1.0 - s;
                }
                acc[i].add(weight * fac * jet.derivative(rq.order));
            }
        }
    }
    acc.into_iter().map(|k| k.value()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_potential, ModelSpec, WaveParams};
    use crate::poly::Polynomial;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn pot_with_w_equals_v_squared() -> PotentialEval {
        // f = -v^2, c = 0, λ = 0 gives W = v².
        let m = ModelSpec::new(
            1,
            1.0,
            Polynomial::constant(1.0),
            None,
            Polynomial::new(vec![0.0, 0.0, -1.0]),
            (-2.0, 2.0),
        )
        .unwrap();
        build_potential(&m, &WaveParams::new(1.0, vec![0.0], 0.0)).unwrap()
    }

    fn mkdv_pot(mu: f64) -> PotentialEval {
        build_potential(&ModelSpec::mkdv(), &WaveParams::new(mu, vec![0.0], 1.0)).unwrap()
    }

    #[test]
    fn gauss_nodes_integrate_polynomials_exactly() {
        let (nodes, weights) = gauss_legendre(15);
        // degree 29 is integrated exactly on [-1, 1]
        let exact = 2.0 / 29.0; // ∫ x^28 = 2/29
        let got: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| w * x.powi(28))
            .sum();
        assert_relative_eq!(got, exact, max_relative = 1e-13);
        let sum_w: f64 = weights.iter().sum();
        assert_relative_eq!(sum_w, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_smooth_integrands() {
        let (v, e) = adaptive_gauss(&mut |x: f64| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(v, std::f64::consts::E - 1.0, max_relative = 1e-13);
        assert!(e < 1e-10);
    }

    #[test]
    fn arcsine_integral_is_pi() {
        let pot = pot_with_w_equals_v_squared();
        let spec = SingularIntegralSpec {
            phi: &|_| 1.0,
            v_lo: -1.0,
            v_hi: 1.0,
            tag_lo: EndpointTag::SqrtSimpleRoot,
            tag_hi: EndpointTag::SqrtSimpleRoot,
            rtol: 1e-12,
            saddle: None,
        };
        let v = integrate_sqrt_singular(&spec, &pot, 1.0).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI, max_relative = 1e-11);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let pot = pot_with_w_equals_v_squared();
        let spec = SingularIntegralSpec {
            phi: &|v: f64| v,
            v_lo: -1.0,
            v_hi: 1.0,
            tag_lo: EndpointTag::SqrtSimpleRoot,
            tag_hi: EndpointTag::SqrtSimpleRoot,
            rtol: 1e-12,
            saddle: None,
        };
        let v = integrate_sqrt_singular(&spec, &pot, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn remainder_kernel_on_mkdv() {
        let pot = mkdv_pot(0.01);
        // R̃(0,0,0) = ½W''(0) = -1/2
        assert_relative_eq!(taylor_remainder_r(&pot, 0.0, 0.0, 0.0), -0.5, max_relative = 1e-13);
        // R(v) = R̃(v,0,0) = (v²−1)/2 for W = v⁴/2 − v²/2
        for &v in &[-0.9, -0.35, 0.2, 0.77] {
            assert_relative_eq!(
                taylor_remainder_r(&pot, v, 0.0, 0.0),
                (v * v - 1.0) / 2.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn remainder_kernel_quadratic_w_is_constant() {
        let pot = pot_with_w_equals_v_squared();
        for &(v, w, z) in &[(0.3, -0.5, 0.9), (-1.2, 0.1, 0.4)] {
            assert_relative_eq!(taylor_remainder_r(&pot, v, w, z), 1.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn factorization_identity_holds() {
        let pot = mkdv_pot(0.01);
        // μ_s − W(v) = −(v−v_s)² R̃(v, v_s, v_s) with v_s = 0, μ_s = 0
        for &v in &[-0.99, -0.6, -0.2, 0.3, 0.8, 0.999] {
            let lhs = 0.0 - pot.w(v);
            let rhs = -(v * v) * taylor_remainder_r(&pot, v, 0.0, 0.0);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10, epsilon = 1e-14);
        }
    }

    #[test]
    fn remainder_jet_derivatives_match_fd() {
        let pot = mkdv_pot(0.01);
        let (v, w, z) = (0.3, 0.05, -0.2);
        let jet = taylor_remainder_jet(&pot, v, w, z);
        let h = 1e-5;
        let rv = (taylor_remainder_r(&pot, v + h, w, z) - taylor_remainder_r(&pot, v - h, w, z))
            / (2.0 * h);
        let rz = (taylor_remainder_r(&pot, v, w, z + h) - taylor_remainder_r(&pot, v, w, z - h))
            / (2.0 * h);
        let rvv = (taylor_remainder_r(&pot, v + h, w, z) - 2.0 * jet.r
            + taylor_remainder_r(&pot, v - h, w, z))
            / (h * h);
        assert_relative_eq!(jet.r_v, rv, max_relative = 1e-8);
        assert_relative_eq!(jet.r_z, rz, max_relative = 1e-8);
        assert_relative_eq!(jet.r_vv, rvv, max_relative = 1e-4);
    }

    #[test]
    fn saddle_substitution_matches_plain_quadrature_at_moderate_eps() {
        // At ε = 0.5 the spike is mild, so the untransformed integrand is
        // integrable by plain panels; both paths must agree.
        let mu = 0.25;
        let pot = mkdv_pot(mu);
        let spec = SingularIntegralSpec {
            phi: &|v: f64| 1.0 + 0.3 * v,
            v_lo: 0.0,
            v_hi: 0.4,
            tag_lo: EndpointTag::NearDoubleRoot,
            tag_hi: EndpointTag::None,
            rtol: 1e-12,
            saddle: Some(SaddleInfo {
                v_s: 0.0,
                eps2: mu,
                eta: 0.25,
            }),
        };
        let fast = integrate_sqrt_singular(&spec, &pot, mu).unwrap();
        let (plain, _) = adaptive_gauss(
            &mut |v: f64| (1.0 + 0.3 * v) / (mu - pot.w(v)).sqrt(),
            0.0,
            0.4,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(fast, plain, max_relative = 1e-10);
    }

    #[test]
    fn halving_rtol_stays_within_error_estimate() {
        let pot = mkdv_pot(0.01);
        let make = |rtol: f64| SingularIntegralSpec {
            phi: &|v: f64| (2.0_f64).sqrt() * (1.0 + 0.1 * v * v),
            v_lo: 0.0,
            v_hi: 1.0049875621,
            tag_lo: EndpointTag::NearDoubleRoot,
            tag_hi: EndpointTag::SqrtSimpleRoot,
            rtol,
            saddle: Some(SaddleInfo {
                v_s: 0.0,
                eps2: 0.01,
                eta: 0.25,
            }),
        };
        let coarse = integrate_sqrt_singular(&make(1e-8), &pot, 0.01).unwrap();
        let fine = integrate_sqrt_singular(&make(1e-12), &pot, 0.01).unwrap();
        assert_relative_eq!(coarse, fine, max_relative = 1e-7);
    }
}
