//! Traveling-wave profiles: saddle structure, turning points, periodic
//! two-pulse grids, and the limiting solitary waves.
//!
//! All x-positions come from quadrature of the first integral
//! ½κ(v̄)v̄ₓ² + W(v̄) = μ, and every stored v_x is recomputed from that first
//! integral rather than from the ODE, so energy is exact at the nodes by
//! construction. Grid nodes are images of uniform ladders in the
//! singularity-removing variables (sinh t near the saddle, sinθ elsewhere),
//! which clusters them where the profile actually turns.

use crate::error::{Error, Result};
use crate::model::PotentialEval;
use crate::quadrature::{
    adaptive_gauss, integrate_sqrt_singular, taylor_remainder_r, EndpointTag, SaddleInfo,
    SingularIntegralSpec,
};
use crate::util::{linspace, solve_bracketed};
use serde::Serialize;

/// Saddle-adjacent data of the potential W at level μ_s.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CriticalStructure {
    pub v_s: f64,
    pub v_l_s: f64,
    pub v_r_s: f64,
    pub mu_s: f64,
    /// R(v_s) = ½W''(v_s) < 0.
    pub r_s: f64,
    /// a_s = (−R_s)^{-1/2}.
    pub a_s: f64,
    /// b_s = W'''(v_s) / (3 W''(v_s)²).
    pub b_s: f64,
    /// W'(v_l_s) < 0.
    pub p_l_s: f64,
    /// W'(v_r_s) > 0.
    pub p_r_s: f64,
    /// Saddle collar radius: W'' < 0 on [v_s − η, v_s + η], with slack.
    pub eta: f64,
}

/// Locates the saddle, the level-μ_s crossings, and the collar radius η.
pub fn find_critical_structure(pot: &PotentialEval) -> Result<CriticalStructure> {
    let window = pot.model().window;
    let (v_s, v_l_s, v_r_s, mu_s) = crate::model::locate_saddle_structure(pot, window)?;
    let w2 = pot.w_vv(v_s);
    if !(w2 < 0.0) {
        return Err(Error::NotTwoPulse(format!(
            "W''(v_s) = {w2:.6e} is not negative at the saddle"
        )));
    }
    let p_l_s = pot.w_v(v_l_s);
    let p_r_s = pot.w_v(v_r_s);
    if !(p_l_s < 0.0 && p_r_s > 0.0) {
        return Err(Error::NotTwoPulse(format!(
            "level crossings are not transversal: W'(v_l_s) = {p_l_s:.3e}, W'(v_r_s) = {p_r_s:.3e}"
        )));
    }

    // Radius on each side within which W'' stays negative, capped by the
    // crossings; bisect the first sign change found by a scan.
    let radius = |dir: f64| -> f64 {
        let cap = if dir > 0.0 { v_r_s - v_s } else { v_s - v_l_s };
        let n = 400;
        for i in 1..=n {
            let d = cap * i as f64 / n as f64;
            if pot.w_vv(v_s + dir * d) >= 0.0 {
                let mut lo = cap * (i - 1) as f64 / n as f64;
                let mut hi = d;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if pot.w_vv(v_s + dir * mid) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return lo;
            }
        }
        cap
    };
    let eta_raw = (0.5 * (v_s - v_l_s))
        .min(0.5 * (v_r_s - v_s))
        .min(radius(-1.0))
        .min(radius(1.0));
    let eta = 0.5 * eta_raw;
    if !(eta > 0.0) {
        return Err(Error::NotTwoPulse(format!("collar radius η = {eta:.3e}")));
    }
    for v in linspace(v_s - eta, v_s + eta, 201) {
        if pot.w_vv(v) >= 0.0 {
            return Err(Error::EtaError(format!(
                "W''({v:.6}) >= 0 inside the collar [v_s ± η]"
            )));
        }
    }

    let r_s = 0.5 * w2;
    Ok(CriticalStructure {
        v_s,
        v_l_s,
        v_r_s,
        mu_s,
        r_s,
        a_s: 1.0 / (-r_s).sqrt(),
        b_s: pot.w_d(v_s, 3) / (3.0 * w2 * w2),
        p_l_s,
        p_r_s,
        eta,
    })
}

/// Turning points of the orbit at level μ = μ_s + ε².
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TurningPoints {
    pub v_l: f64,
    pub v_r: f64,
    pub eps: f64,
}

pub fn find_turning_points(pot: &PotentialEval, crit: &CriticalStructure) -> Result<TurningPoints> {
    let mu = pot.mu();
    let eps2 = mu - crit.mu_s;
    if !(eps2 > 0.0) {
        return Err(Error::ModelError(format!(
            "level μ = {mu:.6e} does not exceed the saddle level μ_s = {:.6e}",
            crit.mu_s
        )));
    }
    let (lo, hi) = pot.model().window;
    let march = |start: f64, dir: f64| -> Result<f64> {
        let edge = if dir > 0.0 { hi } else { lo };
        let step = dir * (edge - start).abs() / 2000.0;
        let mut prev = start;
        loop {
            let next = prev + step;
            if (dir > 0.0 && next >= hi) || (dir < 0.0 && next <= lo) {
                return Err(Error::WindowTooSmall(format!(
                    "turning point at level μ = {mu:.6e} escapes the window [{lo}, {hi}]"
                )));
            }
            if pot.w(next) >= mu {
                let (a, b) = if dir > 0.0 { (prev, next) } else { (next, prev) };
                return solve_bracketed(
                    |v| pot.w(v) - mu,
                    |v| pot.w_v(v),
                    a,
                    b,
                    1e-16 * (hi - lo),
                    200,
                );
            }
            prev = next;
        }
    };
    let v_r = march(crit.v_r_s, 1.0)?;
    let v_l = march(crit.v_l_s, -1.0)?;
    Ok(TurningPoints {
        v_l,
        v_r,
        eps: eps2.sqrt(),
    })
}

/// Verifies the collar conditions that the splitting of singular integrals
/// relies on: W' < 0 on [v_l, v_l_s + η], W' > 0 on [v_r_s − η, v_r], and
/// W'' < 0 on [v_s − η, v_s + η].
pub fn check_eta_conditions(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    tp: &TurningPoints,
) -> Result<()> {
    for v in linspace(tp.v_l, crit.v_l_s + crit.eta, 400) {
        if pot.w_v(v) >= 0.0 {
            return Err(Error::EtaError(format!(
                "W'({v:.6}) >= 0 on the left collar [v_l, v_l_s + η]"
            )));
        }
    }
    for v in linspace(crit.v_r_s - crit.eta, tp.v_r, 400) {
        if pot.w_v(v) <= 0.0 {
            return Err(Error::EtaError(format!(
                "W'({v:.6}) <= 0 on the right collar [v_r_s − η, v_r]"
            )));
        }
    }
    for v in linspace(crit.v_s - crit.eta, crit.v_s + crit.eta, 400) {
        if pot.w_vv(v) >= 0.0 {
            return Err(Error::EtaError(format!(
                "W''({v:.6}) >= 0 inside the collar [v_s ± η]"
            )));
        }
    }
    Ok(())
}

pub(crate) fn saddle_info(crit: &CriticalStructure, eps: f64) -> SaddleInfo {
    SaddleInfo {
        v_s: crit.v_s,
        eps2: eps * eps,
        eta: crit.eta,
    }
}

/// I(φ) = ∫_{v_l}^{v_r} φ(v)/√(μ − W(v)) dv for the current level of `pot`.
pub fn i_phi(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    tp: &TurningPoints,
    phi: &dyn Fn(f64) -> f64,
    rtol: f64,
) -> Result<f64> {
    let spec = SingularIntegralSpec {
        phi,
        v_lo: tp.v_l,
        v_hi: tp.v_r,
        tag_lo: EndpointTag::SqrtSimpleRoot,
        tag_hi: EndpointTag::SqrtSimpleRoot,
        rtol,
        saddle: Some(saddle_info(crit, tp.eps)),
    };
    integrate_sqrt_singular(&spec, pot, pot.mu())
}

/// Half-period data of the two-pulse orbit.
///
/// x_r = ∫_{v_s}^{v_r} √(κ/(2(μ−W))) dv is the x-length of the rising
/// quarter, x_l = −∫_{v_l}^{v_s} (same) < 0, and the full period of the wave
/// is `period` = 2(x_r − x_l).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HalfPeriods {
    pub x_l: f64,
    pub x_r: f64,
    pub period: f64,
}

pub fn compute_half_periods(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    tp: &TurningPoints,
    rtol: f64,
) -> Result<HalfPeriods> {
    let phi = |v: f64| (0.5 * pot.kappa(v)).sqrt();
    let saddle = Some(saddle_info(crit, tp.eps));
    let right = SingularIntegralSpec {
        phi: &phi,
        v_lo: crit.v_s,
        v_hi: tp.v_r,
        tag_lo: EndpointTag::NearDoubleRoot,
        tag_hi: EndpointTag::SqrtSimpleRoot,
        rtol,
        saddle,
    };
    let left = SingularIntegralSpec {
        phi: &phi,
        v_lo: tp.v_l,
        v_hi: crit.v_s,
        tag_lo: EndpointTag::SqrtSimpleRoot,
        tag_hi: EndpointTag::NearDoubleRoot,
        rtol,
        saddle,
    };
    let x_r = integrate_sqrt_singular(&right, pot, pot.mu())?;
    let x_l = -integrate_sqrt_singular(&left, pot, pot.mu())?;
    Ok(HalfPeriods {
        x_l,
        x_r,
        period: 2.0 * (x_r - x_l),
    })
}

/// One period of the wave sampled on [2x_l, 2x_r].
///
/// Layout: v(2x_l) = v_s, v(x_l) = v_l (left pulse trough), v(0) = v_s with
/// v_x(0) > 0, v(x_r) = v_r (right pulse crest), v(2x_r) = v_s. The stored
/// v_x comes from the first integral with the branch sign, so
/// ½κ(v)v_x² + W(v) = μ holds at machine precision on every node.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileGrid {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub v_x: Vec<f64>,
    /// Second component u = g(v) when N = 2.
    pub u: Option<Vec<f64>>,
    pub x_l: f64,
    pub x_r: f64,
    /// Full period 2(x_r − x_l).
    pub period: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ProfileOptions {
    /// Nodes per quarter-period.
    pub nodes: usize,
    pub rtol: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            nodes: 400,
            rtol: 1e-11,
        }
    }
}

/// Ladder of (v, Δx) pairs over one quarter, from the saddle out to the
/// turning point. Returns (v nodes ascending from v_s side, x offsets from
/// the saddle, increasing), both of length n+1 with x[0] = 0 at v_s.
fn quarter_ladder(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    eps: f64,
    v_turn: f64,
    dir: f64,
    opts: &ProfileOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n1 = (opts.nodes / 3).max(8);
    let n2 = (opts.nodes - n1).max(8);
    let scale = eps / (-crit.r_s).sqrt();
    let t_max = (crit.eta / scale).asinh();
    let eps2 = eps * eps;

    let mut vs = Vec::with_capacity(n1 + n2 + 1);
    let mut xs = Vec::with_capacity(n1 + n2 + 1);
    vs.push(crit.v_s);
    xs.push(0.0);

    // Saddle region, sinh parametrization on [v_s, v_s + dir·η].
    let mut integrand_t = |t: f64| {
        let w = scale * t.sinh();
        let v = crit.v_s + dir * w;
        let r = taylor_remainder_r(pot, v, crit.v_s, crit.v_s);
        (0.5 * pot.kappa(v)).sqrt() * scale * t.cosh() / (eps2 + w * w * (-r)).sqrt()
    };
    let mut x_acc = 0.0;
    for j in 1..=n1 {
        let t0 = t_max * (j - 1) as f64 / n1 as f64;
        let t1 = t_max * j as f64 / n1 as f64;
        let (dx, _) = adaptive_gauss(&mut integrand_t, t0, t1, opts.rtol)?;
        x_acc += dx;
        vs.push(crit.v_s + dir * scale * t1.sinh());
        xs.push(x_acc);
    }

    // Outer region, sinθ parametrization on [v_s + dir·η, v_turn]. The
    // turning point sits at θ = π/2 for either direction because h carries
    // the sign; its distance and μ − W are evaluated in root-stable form.
    let a = crit.v_s + dir * crit.eta;
    let m = 0.5 * (a + v_turn);
    let h = 0.5 * (v_turn - a); // sign carries dir
    let mu = pot.mu();
    let quarter_pi = std::f64::consts::FRAC_PI_4;
    let mut integrand_th = |theta: f64| {
        let one_minus_sin = 2.0 * (quarter_pi - 0.5 * theta).sin().powi(2);
        let v = m + h * theta.sin();
        let denom = if one_minus_sin <= 0.1 {
            crate::quadrature::denom_via_root(pot, v, h * one_minus_sin)
        } else {
            mu - pot.w(v)
        };
        if denom <= 0.0 {
            return 0.0;
        }
        (pot.kappa(v) / (2.0 * denom)).sqrt() * h.abs() * theta.cos()
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    for k in 1..=n2 {
        let th0 = -half_pi + std::f64::consts::PI * (k - 1) as f64 / n2 as f64;
        let th1 = -half_pi + std::f64::consts::PI * k as f64 / n2 as f64;
        let (dx, _) = adaptive_gauss(&mut integrand_th, th0, th1, opts.rtol)?;
        x_acc += dx;
        vs.push(m + h * th1.sin());
        xs.push(x_acc);
    }
    // Land exactly on the turning point.
    let last = vs.len() - 1;
    vs[last] = v_turn;
    Ok((vs, xs))
}

pub fn integrate_profile(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    tp: &TurningPoints,
    opts: &ProfileOptions,
) -> Result<ProfileGrid> {
    let (v_right, xi_right) = quarter_ladder(pot, crit, tp.eps, tp.v_r, 1.0, opts)?;
    let (v_left, zeta_left) = quarter_ladder(pot, crit, tp.eps, tp.v_l, -1.0, opts)?;
    let x_r = *xi_right.last().unwrap();
    let x_l = -*zeta_left.last().unwrap();
    let mu = pot.mu();
    let nq = v_right.len();

    let mut x = Vec::with_capacity(4 * nq);
    let mut v = Vec::with_capacity(4 * nq);
    let mut sign = Vec::with_capacity(4 * nq);

    // Branch A: [2x_l, x_l], v_s down to v_l, v_x < 0. x = 2x_l + ζ(v).
    for j in 0..nq {
        x.push(2.0 * x_l + zeta_left[j]);
        v.push(v_left[j]);
        sign.push(-1.0);
    }
    // Branch B: [x_l, 0], v_l up to v_s, v_x > 0. x = −ζ(v). Skip shared v_l.
    for j in (0..nq - 1).rev() {
        x.push(-zeta_left[j]);
        v.push(v_left[j]);
        sign.push(1.0);
    }
    // Branch C: [0, x_r], v_s up to v_r, v_x > 0. Skip shared v_s: the x = 0
    // node is branch B's last entry.
    x.pop();
    v.pop();
    sign.pop();
    for j in 0..nq {
        x.push(xi_right[j]);
        v.push(v_right[j]);
        sign.push(1.0);
    }
    // Branch D: [x_r, 2x_r], v_r down to v_s, v_x < 0. Skip shared v_r.
    for j in (0..nq - 1).rev() {
        x.push(2.0 * x_r - xi_right[j]);
        v.push(v_right[j]);
        sign.push(-1.0);
    }

    let v_x: Vec<f64> = v
        .iter()
        .zip(&sign)
        .map(|(&vi, &s)| {
            let d = (mu - pot.w(vi)).max(0.0);
            s * (2.0 * d / pot.kappa(vi)).sqrt()
        })
        .collect();
    let u = (pot.dim() == 2).then(|| v.iter().map(|&vi| pot.g(vi).unwrap()).collect());

    // x must be strictly increasing for downstream interpolation.
    for w in x.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::GridError(format!(
                "profile grid is not strictly increasing near x = {:.6}",
                w[0]
            )));
        }
    }

    Ok(ProfileGrid {
        x,
        v,
        v_x,
        u,
        x_l,
        x_r,
        period: 2.0 * (x_r - x_l),
    })
}

/// Which pulse of the pair a solitary wave follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PulseSide {
    Left,
    Right,
}

/// Homoclinic profile at μ = μ_s, sampled on [−L, L] with the extremum at 0.
#[derive(Clone, Debug, Serialize)]
pub struct SolitonProfile {
    pub side: PulseSide,
    pub grid: ProfileGrid,
    /// Endstate U_s approached as |x| → ∞.
    pub endstate: Vec<f64>,
    /// Exponential rate ν = √(−W''(v_s)/κ(v_s)) of v − v_s.
    pub decay_rate: f64,
    /// Truncation half-length L with |v(±L) − v_s| = delta_cut.
    pub truncation: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SolitonOptions {
    /// |v − v_s| at the truncated ends.
    pub delta_cut: f64,
    /// Nodes per half-profile.
    pub nodes: usize,
    pub rtol: f64,
}

impl Default for SolitonOptions {
    fn default() -> Self {
        SolitonOptions {
            delta_cut: 1e-8,
            nodes: 400,
            rtol: 1e-11,
        }
    }
}

pub fn compute_soliton(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    side: PulseSide,
    opts: &SolitonOptions,
) -> Result<SolitonProfile> {
    let mu = pot.mu();
    let level_scale = crit.mu_s.abs().max(1.0);
    if (mu - crit.mu_s).abs() > 1e-10 * level_scale {
        return Err(Error::ModelError(format!(
            "solitary profile needs μ = μ_s; got μ − μ_s = {:.3e}",
            mu - crit.mu_s
        )));
    }
    let (v_ext, dir) = match side {
        PulseSide::Right => (crit.v_r_s, 1.0),
        PulseSide::Left => (crit.v_l_s, -1.0),
    };
    let span = (v_ext - crit.v_s).abs();
    if opts.delta_cut >= 0.5 * span {
        return Err(Error::GridError(format!(
            "delta_cut = {:.3e} is not small against the pulse span {:.3e}",
            opts.delta_cut, span
        )));
    }

    let n1 = (opts.nodes / 2).max(16);
    let n2 = (opts.nodes - n1).max(16);
    let v_mid = crit.v_s + dir * 0.5 * span;

    // Inner region [δ_cut, span/2] in d = |v − v_s|, log-uniform ladder:
    // with t = ln d the measure √(κ/(2(μ_s−W))) dv becomes √(κ/(2(−R̃))) dt,
    // bounded for all t, which is how the exponential tail gets resolved.
    let mut integrand_t = |t: f64| {
        let d = t.exp();
        let v = crit.v_s + dir * d;
        let r = taylor_remainder_r(pot, v, crit.v_s, crit.v_s);
        (pot.kappa(v) / (2.0 * (-r))).sqrt()
    };
    let t_lo = opts.delta_cut.ln();
    let t_hi = (0.5 * span).ln();
    let mut ds = Vec::with_capacity(n1 + n2 + 1);
    for j in 0..=n1 {
        ds.push((t_lo + (t_hi - t_lo) * j as f64 / n1 as f64).exp());
    }

    // Outer region [v_mid, v_ext]: sinθ ladder up to the simple root, with
    // the root-stable denominator near θ = π/2.
    let m = 0.5 * (v_mid + v_ext);
    let h = 0.5 * (v_ext - v_mid);
    let quarter_pi = std::f64::consts::FRAC_PI_4;
    let mut integrand_th = |theta: f64| {
        let one_minus_sin = 2.0 * (quarter_pi - 0.5 * theta).sin().powi(2);
        let v = m + h * theta.sin();
        let denom = if one_minus_sin <= 0.1 {
            crate::quadrature::denom_via_root(pot, v, h * one_minus_sin)
        } else {
            crit.mu_s - pot.w(v)
        };
        if denom <= 0.0 {
            return 0.0;
        }
        (pot.kappa(v) / (2.0 * denom)).sqrt() * h.abs() * theta.cos()
    };
    let half_pi = std::f64::consts::FRAC_PI_2;

    // Build the left half x ≤ 0 outward-in: start at the extremum (x = 0)
    // and aggregate Δx back toward the tail, then flip.
    // Work instead tail-to-crest to keep the ladder ascending in |v − v_s|.
    let mut v_nodes = Vec::with_capacity(n1 + n2 + 1);
    let mut x_nodes = Vec::with_capacity(n1 + n2 + 1);
    let mut x_acc = 0.0;
    v_nodes.push(crit.v_s + dir * ds[0]);
    x_nodes.push(0.0);
    for j in 1..=n1 {
        let (dx, _) = adaptive_gauss(
            &mut integrand_t,
            ds[j - 1].ln(),
            ds[j].ln(),
            opts.rtol,
        )?;
        x_acc += dx;
        v_nodes.push(crit.v_s + dir * ds[j]);
        x_nodes.push(x_acc);
    }
    for k in 1..=n2 {
        let th0 = -half_pi + std::f64::consts::PI * (k - 1) as f64 / n2 as f64;
        let th1 = -half_pi + std::f64::consts::PI * k as f64 / n2 as f64;
        let (dx, _) = adaptive_gauss(&mut integrand_th, th0, th1, opts.rtol)?;
        x_acc += dx;
        v_nodes.push(m + h * th1.sin());
        x_nodes.push(x_acc);
    }
    let last = v_nodes.len() - 1;
    v_nodes[last] = v_ext;
    let l_trunc = *x_nodes.last().unwrap();

    // Assemble [−L, L]: left half ascending x (tail node at −L, extremum at
    // 0), mirrored right half.
    let nq = v_nodes.len();
    let mut x = Vec::with_capacity(2 * nq - 1);
    let mut v = Vec::with_capacity(2 * nq - 1);
    let mut sign = Vec::with_capacity(2 * nq - 1);
    for j in 0..nq {
        x.push(x_nodes[j] - l_trunc);
        v.push(v_nodes[j]);
        sign.push(dir);
    }
    for j in (0..nq - 1).rev() {
        x.push(l_trunc - x_nodes[j]);
        v.push(v_nodes[j]);
        sign.push(-dir);
    }
    let v_x: Vec<f64> = v
        .iter()
        .zip(&sign)
        .map(|(&vi, &s)| {
            let d = (crit.mu_s - pot.w(vi)).max(0.0);
            s * (2.0 * d / pot.kappa(vi)).sqrt()
        })
        .collect();
    let u = (pot.dim() == 2).then(|| v.iter().map(|&vi| pot.g(vi).unwrap()).collect());

    for w in x.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::GridError(format!(
                "solitary grid is not strictly increasing near x = {:.6}",
                w[0]
            )));
        }
    }

    let grid = ProfileGrid {
        x,
        v,
        v_x,
        u,
        x_l: -l_trunc,
        x_r: l_trunc,
        period: 2.0 * l_trunc,
    };
    Ok(SolitonProfile {
        side,
        grid,
        endstate: pot.state_on_orbit(crit.v_s),
        decay_rate: (-pot.w_vv(crit.v_s) / pot.kappa(crit.v_s)).sqrt(),
        truncation: l_trunc,
    })
}

impl SolitonProfile {
    /// Least-squares fit of ln|v − v_s| against x over the last resolved
    /// decade of the left tail; returns (rate, amplitude) with
    /// v − v_s ≈ amplitude · e^{rate·x} as x → −∞.
    pub fn fitted_decay(&self, v_s: f64) -> Option<(f64, f64)> {
        let lo = 1.5 * (self.grid.v.first()? - v_s).abs();
        let hi = 10.0 * lo;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (&x, &v) in self.grid.x.iter().zip(&self.grid.v) {
            if x >= 0.0 {
                break;
            }
            let d = (v - v_s).abs();
            if d >= lo && d <= hi {
                xs.push(x);
                ys.push(d.ln());
            }
        }
        if xs.len() < 4 {
            return None;
        }
        let (intercept, slope, _) = crate::util::linear_fit(&xs, &ys);
        Some((slope, intercept.exp()))
    }
}
