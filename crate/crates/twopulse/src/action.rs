//! Abbreviated action of the periodic orbit and the signature criterion.
//!
//! The action Θ(μ, λ, c) = 2∫√(2κ(μ−W)) dv over the orbit's v-range encodes
//! the wave family: ∂_μΘ is the period, the full gradient collects the
//! conserved quantities, and the negative signature of ∇²Θ decides
//! co-periodic spectral stability. The module also computes the momenta of
//! the two limiting homoclinic profiles together with their first and second
//! speed derivatives, whose sum fixes which signature branch the large-period
//! regime lands on.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    self, build_potential, q_of, ModelSpec, PotentialEval, WaveParams,
};
use crate::profile::{
    find_critical_structure, find_turning_points, i_phi, CriticalStructure, PulseSide,
};
use crate::quadrature::{adaptive_gauss, denom_via_root, taylor_remainder_r};

/// Rebuild the potential at another energy level, keeping (λ, c).
fn level_potential(pot: &PotentialEval, mu: f64) -> Result<PotentialEval> {
    if mu == pot.mu() {
        return Ok(pot.clone());
    }
    let p = pot.params();
    pot.with_params(WaveParams::new(mu, p.lambda.clone(), p.c))
}

/// ∫_a^b √(2κ(v)(μ − W(v))) dv where μ = μ_s + eps2, one endpoint is the
/// saddle v_s (`saddle_lo` says which) and the other a simple root of μ − W
/// when eps2 = 0, or the corresponding turning point when eps2 > 0.
///
/// The level difference is rebuilt without cancellation everywhere: near the
/// root endpoint from the Taylor jet at the root, elsewhere from the
/// saddle-anchored exact remainder μ − W = eps2 − w W'(v_s) − w² R̃(v),
/// which stays relatively accurate however small μ − W gets against μ_s.
fn sqrt_level_segment(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    a: f64,
    b: f64,
    eps2: f64,
    saddle_lo: bool,
    rtol: f64,
) -> Result<f64> {
    if b <= a {
        return Err(Error::ModelError(format!(
            "degenerate integration segment [{a}, {b}]"
        )));
    }
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let wv_s = pot.w_v(crit.v_s);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let quarter_pi = std::f64::consts::FRAC_PI_4;
    let mut f = |theta: f64| {
        let half = quarter_pi - 0.5 * theta;
        let dist_hi = 2.0 * h * half.sin().powi(2); // b − v
        let dist_lo = 2.0 * h * half.cos().powi(2); // v − a
        let v = m + h * theta.sin();
        // Signed offset from the saddle and signed distance to the root end.
        let (w, d_root) = if saddle_lo {
            (dist_lo, dist_hi)
        } else {
            (-dist_hi, -dist_lo)
        };
        // The root endpoint sits exactly on the integration level, so the
        // jet difference W(root) − W(v) already is the whole radicand.
        let rad = if d_root.abs() <= 0.1 * h {
            denom_via_root(pot, v, d_root)
        } else {
            eps2 - w * wv_s - w * w * taylor_remainder_r(pot, v, crit.v_s, crit.v_s)
        };
        (2.0 * pot.kappa(v) * rad.max(0.0)).sqrt() * h * theta.cos()
    };
    let (val, _) = adaptive_gauss(&mut f, -half_pi, half_pi, rtol)?;
    Ok(val)
}

/// Abbreviated action Θ = 2∫_{v_ℓ}^{v_r} √(2κ(v)(μ − W(v))) dv.
///
/// The integrand vanishes at the turning points but is never divided by, so
/// no singular endpoint handling is involved; the orbit range is split at
/// the saddle only to keep the level difference in stable form on each half.
pub fn action(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    mu: f64,
    rtol: f64,
) -> Result<f64> {
    let pot = level_potential(pot, mu)?;
    let tp = find_turning_points(&pot, crit)?;
    let eps2 = tp.eps * tp.eps;
    let left = sqrt_level_segment(&pot, crit, tp.v_l, crit.v_s, eps2, false, rtol)?;
    let right = sqrt_level_segment(&pot, crit, crit.v_s, tp.v_r, eps2, true, rtol)?;
    Ok(2.0 * (left + right))
}

/// Parameter gradient of the action in (μ, λ…, c) order.
///
/// Each component is the orbit integral I(√(2κ) ∇L_j) with the usual
/// inverse-square-root weight; the first component is the period.
pub fn action_gradient(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    mu: f64,
    rtol: f64,
) -> Result<DVector<f64>> {
    let pot = level_potential(pot, mu)?;
    let tp = find_turning_points(&pot, crit)?;
    let dim = pot.model().n + 2;
    let mut grad = DVector::zeros(dim);
    for j in 0..dim {
        let phi = |v: f64| (2.0 * pot.kappa(v)).sqrt() * pot.grad_l(v)[j];
        grad[j] = i_phi(&pot, crit, &tp, &phi, rtol)?;
    }
    Ok(grad)
}

/// Finite-difference scheme for the action Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HessianScheme {
    /// Central differences of the gradient at step h.
    FdGradient,
    /// One Richardson level on top: (4 D_{h/2} − D_h)/3.
    Richardson,
}

/// Hessian of the action with the raw asymmetry of the stencil kept as a
/// diagnostic; `hess` itself is symmetrized.
#[derive(Clone, Debug)]
pub struct ActionHessian {
    pub hess: DMatrix<f64>,
    pub sym_defect: f64,
    pub step: f64,
}

/// ∇²Θ by central finite differences of `action_gradient` in each of the
/// N+2 parameter directions, per-direction step max(1e-5, ε³).
///
/// Differencing the gradient (clean singular quadratures) avoids the
/// (μ−W)^{-3/2} integrals of the direct second-derivative route, which are
/// only conditionally convergent combinations.
pub fn action_hessian(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    mu: f64,
    scheme: HessianScheme,
    rtol: f64,
) -> Result<ActionHessian> {
    let base = level_potential(pot, mu)?;
    let tp = find_turning_points(&base, crit)?;
    let eps = tp.eps;
    let dim = base.model().n + 2;
    let h0 = 1e-5f64.max(eps.powi(3));
    if h0 >= 0.5 * eps * eps {
        return Err(Error::HessianStepError(format!(
            "step {h0:.3e} is not small against eps^2 = {:.3e}; \
             increase eps or use the expansion route",
            eps * eps
        )));
    }

    // Gradient at a parameter offset; saddle data is reused when only μ
    // moves (W does not depend on μ) and rebuilt otherwise.
    let grad_at = |delta: &[f64]| -> Result<DVector<f64>> {
        let p = base.params();
        let mut lambda = p.lambda.clone();
        for (k, l) in lambda.iter_mut().enumerate() {
            *l += delta[1 + k];
        }
        let params = WaveParams::new(p.mu + delta[0], lambda, p.c + delta[dim - 1]);
        let pert = build_potential(base.model(), &params)?;
        let same_shape = delta[1..].iter().all(|&d| d == 0.0);
        let pcrit = if same_shape {
            crit.clone()
        } else {
            find_critical_structure(&pert)?
        };
        if pert.mu() <= pcrit.mu_s {
            return Err(Error::HessianStepError(format!(
                "perturbed level {:.6e} fell below the saddle level {:.6e}",
                pert.mu(),
                pcrit.mu_s
            )));
        }
        action_gradient(&pert, &pcrit, pert.mu(), rtol)
    };

    // Column i of the Hessian = d/dp_i of the gradient.
    let stencil: Vec<(usize, f64)> = (0..dim)
        .flat_map(|i| {
            let steps: &[f64] = match scheme {
                HessianScheme::FdGradient => &[1.0, -1.0],
                HessianScheme::Richardson => &[1.0, -1.0, 0.5, -0.5],
            };
            steps.iter().map(move |&s| (i, s)).collect::<Vec<_>>()
        })
        .collect();
    let evals: Vec<Result<DVector<f64>>> = stencil
        .par_iter()
        .map(|&(i, s)| {
            let mut delta = vec![0.0; dim];
            delta[i] = s * h0;
            grad_at(&delta)
        })
        .collect();
    let mut grads = Vec::with_capacity(evals.len());
    for e in evals {
        grads.push(e?);
    }

    let per_dir = match scheme {
        HessianScheme::FdGradient => 2,
        HessianScheme::Richardson => 4,
    };
    let mut raw = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let g = &grads[per_dir * i..per_dir * (i + 1)];
        let col = match scheme {
            HessianScheme::FdGradient => (&g[0] - &g[1]) / (2.0 * h0),
            HessianScheme::Richardson => {
                let d_h = (&g[0] - &g[1]) / (2.0 * h0);
                let d_h2 = (&g[2] - &g[3]) / h0;
                (d_h2 * 4.0 - d_h) / 3.0
            }
        };
        raw.set_column(i, &col);
    }
    let norm = raw.norm();
    let sym_defect = if norm > 0.0 {
        (&raw - raw.transpose()).norm() / norm
    } else {
        0.0
    };
    let hess = (&raw + raw.transpose()) * 0.5;
    Ok(ActionHessian {
        hess,
        sym_defect,
        step: h0,
    })
}

/// One-parameter family of potentials sharing a fixed rest state, with the
/// multipliers re-pinned at every speed so the rest state stays critical.
#[derive(Clone, Debug)]
pub struct EndstateFamily {
    model: ModelSpec,
    u_s: Vec<f64>,
}

impl EndstateFamily {
    pub fn new(model: ModelSpec, u_s: Vec<f64>) -> Result<Self> {
        if u_s.len() != model.n {
            return Err(Error::ModelError(format!(
                "rest state has {} components, model needs {}",
                u_s.len(),
                model.n
            )));
        }
        Ok(EndstateFamily { model, u_s })
    }

    /// Family through the saddle state of an existing wave.
    pub fn from_wave(pot: &PotentialEval, crit: &CriticalStructure) -> Self {
        EndstateFamily {
            model: pot.model().clone(),
            u_s: pot.state_on_orbit(crit.v_s),
        }
    }

    pub fn rest_state(&self) -> &[f64] {
        &self.u_s
    }

    /// Potential at speed c, pinned so the rest state is a critical point of
    /// W at level μ = μ_s(c).
    pub fn potential_at(&self, c: f64) -> Result<PotentialEval> {
        let lambda = model::lambda_for_endstate(&self.model, &self.u_s, c);
        let mu_s = model::mu_s_for_endstate(&self.model, &self.u_s, c);
        build_potential(&self.model, &WaveParams::new(mu_s, lambda, c))
    }
}

/// Momentum of one homoclinic profile: M = 2∫ √(2κ(μ_s − W)) dv over the
/// pulse's v-range, between the saddle and the level crossing on that side.
fn momentum_m(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    side: PulseSide,
    rtol: f64,
) -> Result<f64> {
    let seg = match side {
        PulseSide::Left => sqrt_level_segment(pot, crit, crit.v_l_s, crit.v_s, 0.0, false, rtol),
        PulseSide::Right => sqrt_level_segment(pot, crit, crit.v_s, crit.v_r_s, 0.0, true, rtol),
    }?;
    Ok(2.0 * seg)
}

/// First speed derivative of the momentum at fixed rest state, as the
/// σ-parametrized orbit integral
///   d_cM = ∫₀¹ Q(𝒰(𝒱) − U_s) 𝒴(𝒱) dσ/σ,  𝒱 = v_s + σ(v^s − v_s),
/// with 𝒴 = √(2κ/(−R̃)). The quadratic form is applied to the state
/// difference directly, so the σ→0 cancellation is exact; the substitution
/// σ = 1 − u² absorbs the crossing-end square-root singularity at σ = 1.
fn momentum_dc(
    pot: &PotentialEval,
    crit: &CriticalStructure,
    side: PulseSide,
    rtol: f64,
) -> Result<f64> {
    let v_end = match side {
        PulseSide::Left => crit.v_l_s,
        PulseSide::Right => crit.v_r_s,
    };
    let dv = v_end - crit.v_s;
    let n = pot.model().n;
    let g_s = pot.g(crit.v_s);

    let state_diff = |dvs: f64, vv: f64| -> Vec<f64> {
        match n {
            1 => vec![dvs],
            2 => vec![dvs, pot.g(vv).expect("N = 2") - g_s.expect("N = 2")],
            _ => unreachable!(),
        }
    };

    // The bracket must vanish quadratically at σ = 0, so bracket/σ must
    // still shrink linearly; a surviving linear term means the quadratic
    // structure of the impulse is broken and the dσ/σ weight diverges.
    let probe = |sigma: f64| -> f64 {
        let dvs = sigma * dv;
        q_of(pot.model(), &state_diff(dvs, crit.v_s + dvs)) / sigma
    };
    let r1 = probe(1e-3);
    let r2 = probe(1e-6);
    if r2.abs() > 0.01 * r1.abs() + 1e-14 {
        return Err(Error::ModelError(format!(
            "momentum integrand does not cancel at sigma = 0: \
             bracket/sigma = {r1:.3e} at 1e-3 vs {r2:.3e} at 1e-6"
        )));
    }

    let mut f = |u: f64| {
        let sigma = 1.0 - u * u;
        let dvs = sigma * dv;
        let vv = crit.v_s + dvs;
        let bracket = q_of(pot.model(), &state_diff(dvs, vv));
        let mr = -taylor_remainder_r(pot, vv, crit.v_s, crit.v_s);
        if mr <= 0.0 {
            return 0.0;
        }
        let y = (2.0 * pot.kappa(vv) / mr).sqrt();
        bracket * y * 2.0 * u / sigma
    };
    let (val, _) = adaptive_gauss(&mut f, 0.0, 1.0, rtol)?;
    Ok(val)
}

/// Momentum of one homoclinic profile and its first two derivatives in the
/// speed at fixed rest state.
///
/// The multipliers and the saddle level are re-pinned at every probed speed;
/// the second derivative is a central difference of the first with step 1e-4
/// plus one Richardson level.
pub fn boussinesq_momentum(
    family: &EndstateFamily,
    crit: &CriticalStructure,
    side: PulseSide,
    c: f64,
    rtol: f64,
) -> Result<(f64, f64, f64)> {
    let pot = family.potential_at(c)?;
    let m = momentum_m(&pot, crit, side, rtol)?;
    let dcm = momentum_dc(&pot, crit, side, rtol)?;

    let h = 1e-4;
    let dcm_at = |cc: f64| -> Result<f64> {
        let p = family.potential_at(cc)?;
        let cr = find_critical_structure(&p)?;
        momentum_dc(&p, &cr, side, rtol)
    };
    let probes: Vec<Result<f64>> = [c + h, c - h, c + 0.5 * h, c - 0.5 * h]
        .par_iter()
        .map(|&cc| dcm_at(cc))
        .collect();
    let mut vals = Vec::with_capacity(4);
    for p in probes {
        vals.push(p?);
    }
    let d_h = (vals[0] - vals[1]) / (2.0 * h);
    let d_h2 = (vals[2] - vals[3]) / h;
    let dc2m = (4.0 * d_h2 - d_h) / 3.0;
    Ok((m, dcm, dc2m))
}

/// The symplectic pairing matrix and the distinguished directions at the
/// saddle, together with the change of basis used for the signature count.
#[derive(Clone, Debug)]
pub struct BasisSs {
    pub s_s: DVector<f64>,
    pub s_mat: DMatrix<f64>,
    pub v_s: DVector<f64>,
    pub w_s: DVector<f64>,
    pub z_s: DVector<f64>,
    pub t_s: DVector<f64>,
    pub e: DVector<f64>,
    pub p_s: DMatrix<f64>,
    pub cond_p: f64,
}

impl BasisSs {
    pub fn new(pot: &PotentialEval, crit: &CriticalStructure) -> Result<BasisSs> {
        let n = pot.model().n;
        let b = pot.model().b;
        let dim = n + 2;

        let mut s_mat = DMatrix::<f64>::zeros(dim, dim);
        s_mat[(0, dim - 1)] = -1.0;
        s_mat[(dim - 1, 0)] = -1.0;
        match n {
            1 => s_mat[(1, 1)] = 1.0 / b,
            2 => {
                s_mat[(1, 2)] = 1.0 / b;
                s_mat[(2, 1)] = 1.0 / b;
            }
            _ => unreachable!(),
        }

        let v_s = DVector::from_vec(pot.grad_l(crit.v_s));
        let w_s = DVector::from_vec(pot.grad_l_v(crit.v_s));
        let z_s = DVector::from_vec(pot.grad_l_vv(crit.v_s));
        let e = DVector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 });

        let u_s = pot.state_on_orbit(crit.v_s);
        let mut s_s = DVector::zeros(dim);
        s_s[0] = -q_of(pot.model(), &u_s);
        s_s[dim - 1] = -1.0;
        match n {
            1 => s_s[1] = u_s[0] / b,
            2 => {
                s_s[1] = u_s[1] / b;
                s_s[2] = u_s[0] / b;
            }
            _ => unreachable!(),
        }

        let t_s = match n {
            1 => DVector::zeros(dim),
            2 => {
                let tau_s = pot
                    .model()
                    .tau
                    .as_ref()
                    .ok_or_else(|| Error::ModelError("N = 2 requires tau".into()))?
                    .eval(crit.v_s);
                if tau_s <= 0.0 {
                    return Err(Error::ModelError(format!(
                        "tau({}) = {tau_s} is not positive",
                        crit.v_s
                    )));
                }
                let scale = 1.0 / tau_s.sqrt();
                DVector::from_vec(vec![0.0, 0.0, scale, scale * crit.v_s / b])
            }
            _ => unreachable!(),
        };

        let mut p_s = DMatrix::zeros(dim, dim);
        p_s.set_column(0, &e);
        p_s.set_column(1, &(&s_mat * &v_s));
        if n == 2 {
            p_s.set_column(2, &(&s_mat * &t_s));
            p_s.set_column(3, &(&s_mat * &w_s));
        } else {
            p_s.set_column(2, &(&s_mat * &w_s));
        }

        let svd = p_s.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= f64::EPSILON * smax {
            return Err(Error::ModelError(
                "saddle basis is numerically degenerate".into(),
            ));
        }
        let cond_p = smax / smin;

        Ok(BasisSs {
            s_s,
            s_mat,
            v_s,
            w_s,
            z_s,
            t_s,
            e,
            p_s,
            cond_p,
        })
    }
}

/// Number of negative eigenvalues of a symmetric matrix, gated on a
/// nonsingular determinant.
///
/// A symmetric eigensolve is the primary count. When a basis is supplied and
/// every leading principal minor of ℙᵀHℙ clears the conditioning floor, the
/// Sylvester sign-change count must agree; congruence preserves signature,
/// so a disagreement means the matrix is too ill-conditioned to trust.
pub fn negative_signature(hess: &DMatrix<f64>, basis: Option<&BasisSs>) -> Result<usize> {
    let dim = hess.nrows();
    let scale = hess.norm() / (dim as f64).sqrt();
    let floor = (1e-12 * scale.powi(dim as i32)).max(1e-300);

    let eig = hess.clone().symmetric_eigen();
    let det: f64 = eig.eigenvalues.iter().product();
    if det.abs() < floor {
        return Err(Error::SingularHessian(format!(
            "|det| = {:.3e} under floor {:.3e}",
            det.abs(),
            floor
        )));
    }
    let n_eig = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();

    if let Some(basis) = basis {
        if basis.p_s.nrows() == dim {
            let a = basis.p_s.transpose() * hess * &basis.p_s;
            let anorm = a.norm() / (dim as f64).sqrt();
            let mut minors = Vec::with_capacity(dim);
            let mut usable = true;
            for k in 1..=dim {
                let mk = a.view((0, 0), (k, k)).into_owned().determinant();
                if mk.abs() <= 1e-10 * anorm.powi(k as i32) {
                    usable = false;
                    break;
                }
                minors.push(mk);
            }
            if usable {
                let mut n_syl = 0;
                let mut prev = 1.0f64;
                for &mk in &minors {
                    if mk.signum() != prev.signum() {
                        n_syl += 1;
                    }
                    prev = mk;
                }
                if n_syl != n_eig {
                    return Err(Error::SingularHessian(format!(
                        "signature cross-check disagreed: eigensolve {n_eig}, minors {n_syl}"
                    )));
                }
            }
        }
    }
    Ok(n_eig)
}

/// Sign branch of the momentum criterion d_c²M_ℓ + d_c²M_r.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MomentumBranch {
    /// Sum positive: signature N+1 expected, co-periodic instability.
    Positive,
    /// Sum negative: the action Hessian turns negative-definite and the
    /// signature alone cannot decide; the spectral route takes over.
    Negative,
    /// Sum too close to zero to call.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VerdictKind {
    CoperiodicStableCandidate,
    CoperiodicUnstable,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StabilityVerdict {
    pub kind: VerdictKind,
    pub momentum_branch: MomentumBranch,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Momenta {
    pub m_l: f64,
    pub m_r: f64,
    pub dc_m_l: f64,
    pub dc_m_r: f64,
    pub dc2_m_l: f64,
    pub dc2_m_r: f64,
}

impl Momenta {
    pub fn dc2_sum(&self) -> f64 {
        self.dc2_m_l + self.dc2_m_r
    }

    pub fn branch(&self) -> MomentumBranch {
        let s = self.dc2_sum();
        let scale = self.dc2_m_l.abs() + self.dc2_m_r.abs();
        if s.abs() <= 1e-6 * scale + 1e-12 {
            MomentumBranch::Degenerate
        } else if s > 0.0 {
            MomentumBranch::Positive
        } else {
            MomentumBranch::Negative
        }
    }
}

/// Everything the signature route produces for one wave.
#[derive(Clone, Debug, Serialize)]
pub struct ActionReport {
    pub theta: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
    pub n: Option<usize>,
    pub det: f64,
    pub momenta: Momenta,
    pub verdict: StabilityVerdict,
    pub eps: f64,
    pub params: WaveParams,
}

/// Signature-table verdict: n = N is the only stable candidate, an odd
/// defect n − N forces a real unstable co-periodic eigenvalue, anything
/// else (including a withheld signature) is inconclusive.
pub fn classify(report: &ActionReport, n_fields: usize) -> StabilityVerdict {
    let kind = match report.n {
        None => VerdictKind::Inconclusive,
        Some(n) if n == n_fields => VerdictKind::CoperiodicStableCandidate,
        Some(n) => {
            if (n as i64 - n_fields as i64).rem_euclid(2) == 1 {
                VerdictKind::CoperiodicUnstable
            } else {
                VerdictKind::Inconclusive
            }
        }
    };
    StabilityVerdict {
        kind,
        momentum_branch: report.momenta.branch(),
    }
}

/// Full signature-route pipeline for one wave: action, gradient, Hessian,
/// momenta of both limiting pulses, signature, verdict.
pub fn action_report(
    model: &ModelSpec,
    params: &WaveParams,
    scheme: HessianScheme,
    rtol: f64,
) -> Result<ActionReport> {
    let pot = build_potential(model, params)?;
    let crit = find_critical_structure(&pot)?;
    let tp = find_turning_points(&pot, &crit)?;

    let theta = action(&pot, &crit, params.mu, rtol)?;
    let grad = action_gradient(&pot, &crit, params.mu, rtol)?;
    let hessian = action_hessian(&pot, &crit, params.mu, scheme, rtol)?;

    let family = EndstateFamily::from_wave(&pot, &crit);
    let (m_l, dc_m_l, dc2_m_l) =
        boussinesq_momentum(&family, &crit, PulseSide::Left, params.c, rtol)?;
    let (m_r, dc_m_r, dc2_m_r) =
        boussinesq_momentum(&family, &crit, PulseSide::Right, params.c, rtol)?;
    let momenta = Momenta {
        m_l,
        m_r,
        dc_m_l,
        dc_m_r,
        dc2_m_l,
        dc2_m_r,
    };

    let basis = BasisSs::new(&pot, &crit)?;
    let n = match negative_signature(&hessian.hess, Some(&basis)) {
        Ok(n) => Some(n),
        Err(Error::SingularHessian(_)) => None,
        Err(e) => return Err(e),
    };
    let det = hessian.hess.determinant();

    let dim = model.n + 2;
    let mut report = ActionReport {
        theta,
        grad: grad.iter().copied().collect(),
        hess: (0..dim)
            .map(|i| (0..dim).map(|j| hessian.hess[(i, j)]).collect())
            .collect(),
        n,
        det,
        momenta,
        verdict: StabilityVerdict {
            kind: VerdictKind::Inconclusive,
            momentum_branch: momenta.branch(),
        },
        eps: tp.eps,
        params: params.clone(),
    };
    report.verdict = classify(&report, model.n);
    Ok(report)
}
