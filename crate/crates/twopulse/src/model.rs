//! Hamiltonian model class and the profile potential W.
//!
//! The PDE family is ∂ₜU = ∂ₓ(B δH[U]) with H quadratic in vₓ,
//!
//!   H(U, vₓ) = ½κ(v)vₓ² + f(v)            (N = 1, U = v, B = b)
//!   H(U, vₓ) = ½κ(v)vₓ² + ½τ(v)u² + f(v)  (N = 2, U = (v,u), B = [[0,b],[b,0]])
//!
//! Traveling profiles reduce to the planar first integral
//! ½κ(v̄)v̄ₓ² + W(v̄; λ, c) = μ with
//!
//!   W(v; λ, c) = −f(v) − ½(c/b)v² − λv                     (N = 1)
//!   W(v; λ, c) = −f(v) + ½τ(v)g(v)² − λ₁v,  g = −(cv/b + λ₂)/τ(v)   (N = 2)
//!
//! All evaluators are exact polynomial/rational compositions via jets; no
//! finite differences appear in anything this module returns.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::poly::Polynomial;
use crate::util::{linspace, solve_bracketed};
use serde::{Deserialize, Serialize};

/// Number of samples used for sign checks on the working window.
const SCAN_SAMPLES: usize = 2001;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    /// System dimension: 1 (KdV type) or 2 (Euler-Korteweg type).
    pub n: usize,
    /// Off-diagonal impulse entry; nonzero.
    pub b: f64,
    /// Gradient-energy coefficient kappa(v) > 0 on the window.
    pub kappa: Polynomial,
    /// Kinetic coefficient tau(v) > 0 on the window (N = 2 only).
    #[serde(default)]
    pub tau: Option<Polynomial>,
    /// Bulk energy f(v).
    pub f: Polynomial,
    /// Working interval for all root searches and sign checks.
    pub window: (f64, f64),
}

impl ModelSpec {
    pub fn new(
        n: usize,
        b: f64,
        kappa: Polynomial,
        tau: Option<Polynomial>,
        f: Polynomial,
        window: (f64, f64),
    ) -> Result<Self> {
        let m = ModelSpec {
            n,
            b,
            kappa,
            tau,
            f,
            window,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 1 && self.n != 2 {
            return Err(Error::ModelError(format!("N must be 1 or 2, got {}", self.n)));
        }
        if self.b == 0.0 || !self.b.is_finite() {
            return Err(Error::ModelError(format!("b must be nonzero, got {}", self.b)));
        }
        let (lo, hi) = self.window;
        if !(lo < hi) {
            return Err(Error::ModelError(format!("window [{lo}, {hi}] is empty")));
        }
        for v in linspace(lo, hi, SCAN_SAMPLES) {
            let k = self.kappa.eval(v);
            if !(k > 0.0) {
                return Err(Error::ModelError(format!(
                    "kappa({v:.6}) = {k:.6e} is not positive on the window"
                )));
            }
        }
        match (self.n, &self.tau) {
            (2, Some(tau)) => {
                for v in linspace(lo, hi, SCAN_SAMPLES) {
                    let t = tau.eval(v);
                    if !(t > 0.0) {
                        return Err(Error::ModelError(format!(
                            "tau({v:.6}) = {t:.6e} is not positive on the window"
                        )));
                    }
                }
            }
            (2, None) => {
                return Err(Error::ModelError("N = 2 requires tau".into()));
            }
            (1, _) => {}
            _ => unreachable!(),
        }
        Ok(())
    }

    /// mKdV-type cubic model: N = 1, b = 1, kappa = 1, f = -v^4/2.
    pub fn mkdv() -> Self {
        ModelSpec::new(
            1,
            1.0,
            Polynomial::constant(1.0),
            None,
            Polynomial::new(vec![0.0, 0.0, 0.0, 0.0, -0.5]),
            (-2.0, 2.0),
        )
        .expect("static model is valid")
    }

    /// Supercritical power model: N = 1, b = 1, kappa = 1, f = -v^8/8.
    /// Its solitary waves carry d²cM < 0 (unstable branch) while keeping the
    /// same saddle data as the mKdV model.
    pub fn power8() -> Self {
        let mut coeffs = vec![0.0; 9];
        coeffs[8] = -1.0 / 8.0;
        ModelSpec::new(
            1,
            1.0,
            Polynomial::constant(1.0),
            None,
            Polynomial::new(coeffs),
            (-2.0, 2.0),
        )
        .expect("static model is valid")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveParams {
    /// Energy level of the first integral.
    pub mu: f64,
    /// Lagrange multipliers, length N.
    pub lambda: Vec<f64>,
    /// Wave speed.
    pub c: f64,
}

impl WaveParams {
    pub fn new(mu: f64, lambda: Vec<f64>, c: f64) -> Self {
        WaveParams { mu, lambda, c }
    }
}

/// Evaluators for W and companions at fixed (λ, c).
///
/// Derivatives come from jet arithmetic on the defining composition, so the
/// returned object never differentiates numerically.
#[derive(Clone, Debug)]
pub struct PotentialEval {
    model: ModelSpec,
    params: WaveParams,
}

pub fn build_potential(model: &ModelSpec, params: &WaveParams) -> Result<PotentialEval> {
    model.validate()?;
    if params.lambda.len() != model.n {
        return Err(Error::ModelError(format!(
            "lambda has length {}, expected N = {}",
            params.lambda.len(),
            model.n
        )));
    }
    if !params.mu.is_finite() || !params.c.is_finite() {
        return Err(Error::ModelError("mu and c must be finite".into()));
    }
    Ok(PotentialEval {
        model: model.clone(),
        params: params.clone(),
    })
}

impl PotentialEval {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn params(&self) -> &WaveParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.model.n
    }

    pub fn mu(&self) -> f64 {
        self.params.mu
    }

    /// Same model, new (μ, λ, c).
    pub fn with_params(&self, params: WaveParams) -> Result<PotentialEval> {
        build_potential(&self.model, &params)
    }

    /// Taylor jet of W at v (order 6).
    pub fn w_jet(&self, v: f64) -> Jet {
        let x = Jet::variable(v);
        let c = self.params.c;
        let b = self.model.b;
        let l1 = self.params.lambda[0];
        match self.model.n {
            1 => -self.model.f.eval_jet(x) - x * x * (0.5 * c / b) - x * l1,
            2 => {
                let g = self.g_jet_at(x);
                let tau = self.model.tau.as_ref().expect("validated").eval_jet(x);
                -self.model.f.eval_jet(x) + tau * g * g * 0.5 - x * l1
            }
            _ => unreachable!(),
        }
    }

    fn g_jet_at(&self, x: Jet) -> Jet {
        let c = self.params.c;
        let b = self.model.b;
        let l2 = self.params.lambda[1];
        let tau = self.model.tau.as_ref().expect("N = 2 only").eval_jet(x);
        -(x * (c / b) + l2) / tau
    }

    pub fn w(&self, v: f64) -> f64 {
        self.w_jet(v).value()
    }

    /// k-th derivative of W, k <= 6.
    pub fn w_d(&self, v: f64, k: usize) -> f64 {
        self.w_jet(v).derivative(k)
    }

    pub fn w_v(&self, v: f64) -> f64 {
        self.w_d(v, 1)
    }

    pub fn w_vv(&self, v: f64) -> f64 {
        self.w_d(v, 2)
    }

    /// g(v) = −(cv/b + λ₂)/τ(v); N = 2 only.
    pub fn g_jet(&self, v: f64) -> Option<Jet> {
        (self.model.n == 2).then(|| self.g_jet_at(Jet::variable(v)))
    }

    pub fn g(&self, v: f64) -> Option<f64> {
        self.g_jet(v).map(|j| j.value())
    }

    /// q(v) = Q(v, g(v)) for N = 2, q(v) = v²/(2b) for N = 1.
    pub fn q_jet(&self, v: f64) -> Jet {
        let x = Jet::variable(v);
        let b = self.model.b;
        match self.model.n {
            1 => x * x * (0.5 / b),
            2 => x * self.g_jet_at(x) * (1.0 / b),
            _ => unreachable!(),
        }
    }

    pub fn q(&self, v: f64) -> f64 {
        self.q_jet(v).value()
    }

    pub fn q_d(&self, v: f64, k: usize) -> f64 {
        self.q_jet(v).derivative(k)
    }

    pub fn kappa(&self, v: f64) -> f64 {
        self.model.kappa.eval(v)
    }

    pub fn kappa_jet(&self, v: f64) -> Jet {
        self.model.kappa.eval_jet(Jet::variable(v))
    }

    pub fn kappa_d(&self, v: f64, k: usize) -> f64 {
        self.model.kappa.eval_deriv(v, k)
    }

    /// Q(U) = ½ U·B⁻¹U; U = (v,) or (v, u).
    pub fn quadratic_impulse(&self, u: &[f64]) -> f64 {
        let b = self.model.b;
        match self.model.n {
            1 => u[0] * u[0] / (2.0 * b),
            2 => u[0] * u[1] / b,
            _ => unreachable!(),
        }
    }

    /// The profile state U on the orbit at a given v: (v,) or (v, g(v)).
    pub fn state_on_orbit(&self, v: f64) -> Vec<f64> {
        match self.model.n {
            1 => vec![v],
            2 => vec![v, self.g(v).expect("N = 2")],
            _ => unreachable!(),
        }
    }

    /// ∇L(v) for L(v; μ, λ, c) = μ − W, gradient in (μ, λ…, c) order:
    /// (1, v, [g,] q).
    pub fn grad_l(&self, v: f64) -> Vec<f64> {
        match self.model.n {
            1 => vec![1.0, v, self.q(v)],
            2 => vec![1.0, v, self.g(v).expect("N = 2"), self.q(v)],
            _ => unreachable!(),
        }
    }

    /// Derivative of ∇L in v: (0, 1, [g_v,] q_v).
    pub fn grad_l_v(&self, v: f64) -> Vec<f64> {
        match self.model.n {
            1 => vec![0.0, 1.0, self.q_d(v, 1)],
            2 => vec![
                0.0,
                1.0,
                self.g_jet(v).expect("N = 2").derivative(1),
                self.q_d(v, 1),
            ],
            _ => unreachable!(),
        }
    }

    /// Second v-derivative of ∇L: (0, 0, [g_vv,] q_vv).
    pub fn grad_l_vv(&self, v: f64) -> Vec<f64> {
        match self.model.n {
            1 => vec![0.0, 0.0, self.q_d(v, 2)],
            2 => vec![
                0.0,
                0.0,
                self.g_jet(v).expect("N = 2").derivative(2),
                self.q_d(v, 2),
            ],
            _ => unreachable!(),
        }
    }
}

/// ∇_U H(U, 0): (f'(v),) for N = 1, (f'(v) + ½τ'(v)u², τ(v)u) for N = 2.
pub fn grad_h(model: &ModelSpec, u: &[f64]) -> Vec<f64> {
    match model.n {
        1 => vec![model.f.eval_deriv(u[0], 1)],
        2 => {
            let tau = model.tau.as_ref().expect("validated");
            vec![
                model.f.eval_deriv(u[0], 1) + 0.5 * tau.eval_deriv(u[0], 1) * u[1] * u[1],
                tau.eval(u[0]) * u[1],
            ]
        }
        _ => unreachable!(),
    }
}

/// ∇_U Q(U) = B⁻¹U: (v/b,) or (u/b, v/b).
pub fn grad_q(model: &ModelSpec, u: &[f64]) -> Vec<f64> {
    match model.n {
        1 => vec![u[0] / model.b],
        2 => vec![u[1] / model.b, u[0] / model.b],
        _ => unreachable!(),
    }
}

/// H(U, 0).
pub fn h_at_rest(model: &ModelSpec, u: &[f64]) -> f64 {
    match model.n {
        1 => model.f.eval(u[0]),
        2 => {
            let tau = model.tau.as_ref().expect("validated");
            model.f.eval(u[0]) + 0.5 * tau.eval(u[0]) * u[1] * u[1]
        }
        _ => unreachable!(),
    }
}

/// Q(U) without a PotentialEval at hand.
pub fn q_of(model: &ModelSpec, u: &[f64]) -> f64 {
    match model.n {
        1 => u[0] * u[0] / (2.0 * model.b),
        2 => u[0] * u[1] / model.b,
        _ => unreachable!(),
    }
}

/// Multiplier vector pinning a fixed endstate U_s at speed c:
/// λ(c) = −∇_U H(U_s, 0) − c ∇_U Q(U_s). Exactly linear in c.
pub fn lambda_for_endstate(model: &ModelSpec, u_s: &[f64], c: f64) -> Vec<f64> {
    let gh = grad_h(model, u_s);
    let gq = grad_q(model, u_s);
    gh.iter().zip(&gq).map(|(&h, &q)| -h - c * q).collect()
}

/// Saddle level for a fixed endstate: μ_s(c) = −λ(c)·U_s − (H + cQ)(U_s, 0).
pub fn mu_s_for_endstate(model: &ModelSpec, u_s: &[f64], c: f64) -> f64 {
    let lambda = lambda_for_endstate(model, u_s, c);
    let dot: f64 = lambda.iter().zip(u_s).map(|(&l, &u)| l * u).sum();
    -dot - (h_at_rest(model, u_s) + c * q_of(model, u_s))
}

/// Structural check of the two-pulse hypothesis on a window.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub holds: bool,
    pub v_s: f64,
    pub v_l_s: f64,
    pub v_r_s: f64,
    pub mu_s: f64,
    /// Curvature at the saddle (negative when the assumption holds).
    pub w_vv_at_saddle: f64,
    /// Slopes at the level-μ_s crossings: (left < 0, right > 0).
    pub w_v_at_crossings: (f64, f64),
    /// Depth of the two wells: max of μ_s − W on each gap interval.
    pub gap_depth: (f64, f64),
    /// Distances from the crossings to the window edges.
    pub edge_margin: (f64, f64),
}

/// Saddle and crossing abscissas, polished to |W − μ_s| <= 1e-12 scale.
/// Shared by `validate_window` and the profile module.
pub fn locate_saddle_structure(
    pot: &PotentialEval,
    window: (f64, f64),
) -> Result<(f64, f64, f64, f64)> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::ModelError(format!("window [{lo}, {hi}] is empty")));
    }
    let grid = linspace(lo, hi, SCAN_SAMPLES);
    let w: Vec<f64> = grid.iter().map(|&v| pot.w(v)).collect();

    // Interior local maxima, best (deepest two-sided structure) first.
    let mut candidates: Vec<usize> = (1..grid.len() - 1)
        .filter(|&i| w[i] >= w[i - 1] && w[i] >= w[i + 1] && pot.w_vv(grid[i]) < 0.0)
        .collect();
    candidates.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap());
    if candidates.is_empty() {
        return Err(Error::NotTwoPulse(format!(
            "no interior local maximum of W with W_vv < 0 on [{lo}, {hi}]"
        )));
    }

    let mut saw_saddle = false;
    for &i in &candidates {
        // Polish the saddle on the sample bracket.
        let v_s = match solve_bracketed(
            |v| pot.w_v(v),
            |v| pot.w_vv(v),
            grid[i - 1],
            grid[i + 1],
            1e-15 * (hi - lo),
            200,
        ) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if pot.w_vv(v_s) >= 0.0 {
            continue;
        }
        saw_saddle = true;
        let mu_s = pot.w(v_s);

        // March outward for the first return of W to the level mu_s.
        let crossing = |dir: f64| -> Option<f64> {
            let step = (hi - lo) / (SCAN_SAMPLES - 1) as f64 * dir;
            let mut prev = v_s + step;
            if prev <= lo || prev >= hi || pot.w(prev) >= mu_s {
                return None; // first step already leaves the gap: too tight for the scan
            }
            loop {
                let next = prev + step;
                if next <= lo || next >= hi {
                    return None;
                }
                if pot.w(next) >= mu_s {
                    let (a, b) = if dir > 0.0 { (prev, next) } else { (next, prev) };
                    return solve_bracketed(
                        |v| pot.w(v) - mu_s,
                        |v| pot.w_v(v),
                        a,
                        b,
                        1e-16 * (hi - lo),
                        200,
                    )
                    .ok();
                }
                prev = next;
            }
        };
        let (l, r) = (crossing(-1.0), crossing(1.0));
        if let (Some(v_l_s), Some(v_r_s)) = (l, r) {
            return Ok((v_s, v_l_s, v_r_s, mu_s));
        }
    }
    if saw_saddle {
        Err(Error::WindowTooSmall(format!(
            "saddle found but level-μ_s crossings are not inside [{lo}, {hi}]"
        )))
    } else {
        Err(Error::NotTwoPulse(
            "saddle candidates failed to polish into a nondegenerate maximum".into(),
        ))
    }
}

pub fn validate_window(pot: &PotentialEval, window: (f64, f64)) -> Result<AssumptionReport> {
    let (v_s, v_l_s, v_r_s, mu_s) = locate_saddle_structure(pot, window)?;
    let w_vv_s = pot.w_vv(v_s);
    let w_v_l = pot.w_v(v_l_s);
    let w_v_r = pot.w_v(v_r_s);

    // W < μ_s strictly on the open gap intervals; record depth.
    let mut depth_l: f64 = 0.0;
    let mut depth_r: f64 = 0.0;
    let mut strict = true;
    for v in linspace(v_l_s, v_s, 600).iter().skip(1).take(598) {
        let d = mu_s - pot.w(*v);
        depth_l = depth_l.max(d);
        if d <= 0.0 {
            strict = false;
        }
    }
    for v in linspace(v_s, v_r_s, 600).iter().skip(1).take(598) {
        let d = mu_s - pot.w(*v);
        depth_r = depth_r.max(d);
        if d <= 0.0 {
            strict = false;
        }
    }

    let holds = w_vv_s < 0.0 && w_v_l < 0.0 && w_v_r > 0.0 && strict;
    Ok(AssumptionReport {
        holds,
        v_s,
        v_l_s,
        v_r_s,
        mu_s,
        w_vv_at_saddle: w_vv_s,
        w_v_at_crossings: (w_v_l, w_v_r),
        gap_depth: (depth_l, depth_r),
        edge_margin: (v_l_s - window.0, window.1 - v_r_s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn mkdv_pot() -> PotentialEval {
        let m = ModelSpec::mkdv();
        build_potential(&m, &WaveParams::new(0.01, vec![0.0], 1.0)).unwrap()
    }

    #[test]
    fn mkdv_potential_values() {
        let pot = mkdv_pot();
        // W(v) = v^4/2 - v^2/2
        assert_abs_diff_eq!(pot.w(1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pot.w(0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pot.w_v(0.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(pot.w_vv(0.0), -1.0, max_relative = 1e-14);
        assert_relative_eq!(pot.w(2.0), 8.0 - 2.0, max_relative = 1e-14);
        assert_relative_eq!(pot.w_d(0.5, 4), 12.0, max_relative = 1e-13);
    }

    #[test]
    fn n2_g_formula() {
        // tau = 1, b = 1, c = 1, lambda2 = 0: g(2) = -2
        let m = ModelSpec::new(
            2,
            1.0,
            Polynomial::constant(1.0),
            Some(Polynomial::constant(1.0)),
            Polynomial::zero(),
            (-3.0, 3.0),
        )
        .unwrap();
        let pot = build_potential(&m, &WaveParams::new(0.0, vec![0.0, 0.0], 1.0)).unwrap();
        assert_relative_eq!(pot.g(2.0).unwrap(), -2.0, max_relative = 1e-14);
        // q(v) = v g(v)/b = -v^2 here
        assert_relative_eq!(pot.q(2.0), -4.0, max_relative = 1e-14);
        // Q(U) = uv/b
        assert_relative_eq!(pot.quadratic_impulse(&[2.0, -2.0]), -4.0, max_relative = 1e-14);
    }

    #[test]
    fn n2_rational_w_derivatives_match_fd() {
        // Nonconstant tau exercises the jet division path.
        let m = ModelSpec::new(
            2,
            2.0,
            Polynomial::new(vec![1.0, 0.0, 0.3]),
            Some(Polynomial::new(vec![2.0, 0.5, 0.1])),
            Polynomial::new(vec![0.0, 0.0, 1.0, -0.25]),
            (-1.5, 1.5),
        )
        .unwrap();
        let pot = build_potential(&m, &WaveParams::new(0.2, vec![0.3, -0.4], 0.7)).unwrap();
        let h: f64 = 1e-4;
        for &v in &[-0.8, -0.1, 0.4, 1.1] {
            for k in 1..=4usize {
                let fd = |x: f64| pot.w_d(x, k - 1);
                let central =
                    (fd(v - 2.0 * h) - 8.0 * fd(v - h) + 8.0 * fd(v + h) - fd(v + 2.0 * h))
                        / (12.0 * h);
                assert_relative_eq!(pot.w_d(v, k), central, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn lambda_pins_saddle() {
        // For any c, lambda_for_endstate keeps W_v(v_s) = 0 at the endstate.
        let m = ModelSpec::mkdv();
        let u_s = vec![0.4];
        for &c in &[0.5, 1.0, 2.3] {
            let lambda = lambda_for_endstate(&m, &u_s, c);
            let pot = build_potential(&m, &WaveParams::new(0.0, lambda.clone(), c)).unwrap();
            assert_abs_diff_eq!(pot.w_v(0.4), 0.0, epsilon = 1e-13);
            // mu_s formula matches W at the pinned critical point
            let mu_s = mu_s_for_endstate(&m, &u_s, c);
            assert_abs_diff_eq!(pot.w(0.4), mu_s, epsilon = 1e-13);
        }
    }

    #[test]
    fn validate_window_mkdv() {
        let pot = mkdv_pot();
        let rep = validate_window(&pot, (-2.0, 2.0)).unwrap();
        assert!(rep.holds);
        assert_abs_diff_eq!(rep.v_s, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.v_l_s, -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.v_r_s, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.mu_s, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn validate_window_rejects_single_well() {
        // W = v^2: f = -v^2 - (c/2b)v^2 adjusted so W = v^2 with c=0? Use
        // f = -v^2, c = 0, lambda = 0: W = v^2. No interior maximum.
        let m = ModelSpec::new(
            1,
            1.0,
            Polynomial::constant(1.0),
            None,
            Polynomial::new(vec![0.0, 0.0, -1.0]),
            (-1.0, 1.0),
        )
        .unwrap();
        let pot = build_potential(&m, &WaveParams::new(0.1, vec![0.0], 0.0)).unwrap();
        match validate_window(&pot, (-1.0, 1.0)) {
            Err(Error::NotTwoPulse(_)) => {}
            other => panic!("expected NotTwoPulse, got {other:?}"),
        }
    }

    #[test]
    fn validate_window_rejects_tight_window() {
        let pot = mkdv_pot();
        match validate_window(&pot, (-0.5, 0.5)) {
            Err(Error::WindowTooSmall(_)) => {}
            other => panic!("expected WindowTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn grad_l_matches_partials() {
        // dL/dmu = 1, dL/dlambda1 = v, dL/dc = q by finite differences on W.
        let m = ModelSpec::mkdv();
        let base = WaveParams::new(0.01, vec![0.2], 0.9);
        let pot = build_potential(&m, &base).unwrap();
        let v = 0.7;
        let h = 1e-6;
        let g = pot.grad_l(v);
        let wl = |l: f64| {
            build_potential(&m, &WaveParams::new(base.mu, vec![l], base.c))
                .unwrap()
                .w(v)
        };
        let wc = |c: f64| {
            build_potential(&m, &WaveParams::new(base.mu, base.lambda.clone(), c))
                .unwrap()
                .w(v)
        };
        // L = mu - W so dL/dlambda = -dW/dlambda
        let dl = -(wl(0.2 + h) - wl(0.2 - h)) / (2.0 * h);
        let dc = -(wc(0.9 + h) - wc(0.9 - h)) / (2.0 * h);
        assert_relative_eq!(g[1], dl, max_relative = 1e-8);
        assert_relative_eq!(g[2], dc, max_relative = 1e-8);
        assert_relative_eq!(g[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn n2_grad_l_matches_partials() {
        let m = ModelSpec::new(
            2,
            2.0,
            Polynomial::new(vec![1.0, 0.0, 0.3]),
            Some(Polynomial::new(vec![2.0, 0.5, 0.1])),
            Polynomial::new(vec![0.0, 0.0, 1.0, -0.25]),
            (-1.5, 1.5),
        )
        .unwrap();
        let base = WaveParams::new(0.2, vec![0.3, -0.4], 0.7);
        let pot = build_potential(&m, &base).unwrap();
        let v = 0.6;
        let h = 1e-6;
        let g = pot.grad_l(v);
        let weval = |lambda: Vec<f64>, c: f64| {
            build_potential(&m, &WaveParams::new(base.mu, lambda, c))
                .unwrap()
                .w(v)
        };
        let d1 = -(weval(vec![0.3 + h, -0.4], 0.7) - weval(vec![0.3 - h, -0.4], 0.7)) / (2.0 * h);
        let d2 = -(weval(vec![0.3, -0.4 + h], 0.7) - weval(vec![0.3, -0.4 - h], 0.7)) / (2.0 * h);
        let dc = -(weval(vec![0.3, -0.4], 0.7 + h) - weval(vec![0.3, -0.4], 0.7 - h)) / (2.0 * h);
        assert_relative_eq!(g[1], d1, max_relative = 1e-7);
        assert_relative_eq!(g[2], d2, max_relative = 1e-7);
        assert_relative_eq!(g[3], dc, max_relative = 1e-7);
    }
}
