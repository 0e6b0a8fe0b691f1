//! Quasi-distance barriers anchored outside the half-space, their parameter
//! recipes, and the outer profiles `Φ` (exponential) and `φ` (power).

use serde::{Deserialize, Serialize};

use crate::error::{KfpError, Result};
use crate::special::psi_exact;
use crate::special::quadrature::integrate_simpson;

/// Relative slack when testing the recipe inequalities, several of which
/// hold with equality by construction.
const EQ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    IncomingGradient,
    Exponential,
    Grazing,
}

impl BarrierMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "incoming_gradient" | "incoming-gradient" | "gradient" => Ok(Self::IncomingGradient),
            "exponential" | "exp" => Ok(Self::Exponential),
            "grazing" => Ok(Self::Grazing),
            _ => Err(KfpError::InvalidArgument(format!("unknown barrier mode '{s}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IncomingGradient => "incoming_gradient",
            Self::Exponential => "exponential",
            Self::Grazing => "grazing",
        }
    }

    /// Default `θ0` before any search.
    pub fn default_theta0(self) -> f64 {
        match self {
            Self::Grazing => 1.0 / 32.0,
            _ => 1.0 / 1024.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub mode: BarrierMode,
    pub dim: usize,
    pub r_tilde: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub h: f64,
    pub v_tilde_d: f64,
    pub v0_weight: f64,
    pub theta0: f64,
}

fn ge(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - EQ_TOL * rhs.abs().max(lhs.abs())
}

/// Checks the admissibility window of `r̃` for a mode and returns a
/// description of the violated inequality.
pub fn check_window(mode: BarrierMode, r: f64, vt: f64, w: f64, theta0: f64) -> std::result::Result<(), String> {
    let av = vt.abs();
    match mode {
        BarrierMode::IncomingGradient => {
            let rhs = theta0 * av.min(w.powi(-2));
            if ge(rhs, r.cbrt()) {
                Ok(())
            } else {
                Err(format!("r̃^(1/3) = {:.6e} > θ0·min{{|ṽ_d|, ⟨v0⟩^-2}} = {rhs:.6e}", r.cbrt()))
            }
        }
        BarrierMode::Exponential => {
            let rhs = theta0 * av.powi(3).min(w.powi(-6));
            if ge(rhs, r) {
                Ok(())
            } else {
                Err(format!("r̃ = {r:.6e} > θ0·min{{|ṽ_d|³, ⟨v0⟩^-6}} = {rhs:.6e}"))
            }
        }
        BarrierMode::Grazing => {
            let rhs = av.powi(3).min(w.powi(-6));
            if ge(rhs, r) {
                Ok(())
            } else {
                Err(format!("r̃ = {r:.6e} > min{{|ṽ_d|³, ⟨v0⟩^-6}} = {rhs:.6e}"))
            }
        }
    }
}

/// Smallest `θ0` for which the admissibility window holds (modes whose
/// window involves `θ0`), or `None` if it does not depend on `θ0`.
pub fn minimal_theta0(mode: BarrierMode, r_tilde: f64, v_tilde_d: f64, v0_weight: f64) -> Option<f64> {
    let av = v_tilde_d.abs();
    match mode {
        BarrierMode::IncomingGradient => Some(r_tilde.cbrt() / av.min(v0_weight.powi(-2))),
        BarrierMode::Exponential => Some(r_tilde / av.powi(3).min(v0_weight.powi(-6))),
        BarrierMode::Grazing => None,
    }
}

/// Builds the recipe parameters of a mode.
pub fn select_params(
    mode: BarrierMode,
    r_tilde: f64,
    v_tilde_d: f64,
    v0_weight: f64,
    theta0: f64,
) -> Result<BarrierParams> {
    if !(r_tilde > 0.0) {
        return Err(KfpError::InvalidArgument(format!("r̃ must be positive, got {r_tilde}")));
    }
    if !(v0_weight >= 1.0) {
        return Err(KfpError::InvalidArgument(format!("⟨v0⟩ must be >= 1, got {v0_weight}")));
    }
    if !(theta0 > 0.0 && theta0 <= 1.0 / 16.0 + EQ_TOL) {
        return Err(KfpError::InvalidArgument(format!("θ0 must lie in (0, 1/16], got {theta0}")));
    }
    if mode != BarrierMode::Grazing && !(v_tilde_d < 0.0) {
        return Err(KfpError::InvalidArgument(format!("incoming modes need ṽ_d < 0, got {v_tilde_d}")));
    }
    check_window(mode, r_tilde, v_tilde_d, v0_weight, theta0).map_err(KfpError::Window)?;
    Ok(recipe_params(mode, r_tilde, v_tilde_d, v0_weight, theta0))
}

/// The recipe of a mode without any admissibility checks; used to report
/// parameters for refused configurations.
pub fn recipe_params(mode: BarrierMode, r_tilde: f64, v_tilde_d: f64, v0_weight: f64, theta0: f64) -> BarrierParams {
    let r23 = r_tilde.powf(2.0 / 3.0);
    let av = v_tilde_d.abs();
    let (kappa, a, b, c, h) = match mode {
        BarrierMode::IncomingGradient => (1.0, 1.0 / r23, 1.0 / 16.0, r23 / 4.0, 1.0 / 36.0),
        BarrierMode::Exponential => (1.0 / 64.0, av * av / r_tilde, av, 64.0 * r_tilde, 1.0 / 36.0),
        BarrierMode::Grazing => (theta0.sqrt() / 256.0, 1.0 / r23, theta0, 2.0 * theta0 * r23, theta0),
    };
    BarrierParams { mode, dim: 1, r_tilde, kappa, a, b, c, h, v_tilde_d, v0_weight, theta0 }
}

impl BarrierParams {
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim.max(1);
        self
    }

    /// Exponent of the grazing profile, `m = 5 / (λ θ0²)`.
    pub fn grazing_exponent(&self, lambda: f64) -> f64 {
        5.0 / (lambda * self.theta0 * self.theta0)
    }

    /// Half-width of the velocity range `√(12a/c) r̃`.
    pub fn velocity_extent(&self) -> f64 {
        (12.0 * self.a / self.c).sqrt() * self.r_tilde
    }
}

/// Per-inequality verdicts of the recipe constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    pub sqrt_ac_ge_8b: bool,
    pub a_ge_4c: bool,
    pub velocity_scale: bool,
    pub vr: bool,
    pub vrs: bool,
    /// Velocity condition the mode relies on: `vr` for grazing, `vrs` otherwise.
    pub required: String,
    pub passed: bool,
}

pub fn check_constraints(p: &BarrierParams) -> ConstraintVerdict {
    let av = p.v_tilde_d.abs();
    let sqrt_ac_ge_8b = ge((p.a * p.c).sqrt(), 8.0 * p.b);
    let a_ge_4c = ge(p.a, 4.0 * p.c);
    let velocity_scale = ge(p.v0_weight, (p.a / p.c).sqrt() * p.r_tilde);
    let vr = ge(av, 2.0 * p.b * p.r_tilde / p.c);
    let vrs = ge(av, 8.0 * (p.a / p.c).sqrt() * p.r_tilde);
    let (required, vel_ok) = match p.mode {
        BarrierMode::Grazing => ("vr", vr),
        _ => ("vrs", vrs),
    };
    ConstraintVerdict {
        sqrt_ac_ge_8b,
        a_ge_4c,
        velocity_scale,
        vr,
        vrs,
        required: required.into(),
        passed: sqrt_ac_ge_8b && a_ge_4c && velocity_scale && vel_ok,
    }
}

/// Anchor `(ξ_d, η_d)` outside the domain and `ρ0 = √a r̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub xi_d: f64,
    pub eta_d: f64,
    pub rho0: f64,
}

pub fn anchor_point(p: &BarrierParams) -> Result<AnchorPoint> {
    let ac = p.a * p.c;
    if ac <= p.b * p.b {
        return Err(KfpError::Constraint(format!("ac = {ac:e} <= b² = {:e}", p.b * p.b)));
    }
    let xi_d = ac.sqrt() * p.r_tilde / (ac - p.b * p.b).sqrt();
    Ok(AnchorPoint { xi_d, eta_d: p.v_tilde_d + p.b / p.c * xi_d, rho0: p.a.sqrt() * p.r_tilde })
}

fn split(u: &[f64]) -> (&[f64], f64) {
    let n = u.len();
    (&u[..n - 1], u[n - 1])
}

/// The quadratic form `ρ²` with `x_d` already shifted by `shift`
/// (`X_d = x_d - shift - ξ_d`).
fn rho_sq_shifted(p: &BarrierParams, an: &AnchorPoint, x: &[f64], v: &[f64], shift: f64) -> f64 {
    let (xp, xd) = split(x);
    let (vp, vd) = split(v);
    let k2 = p.kappa * p.kappa;
    let xs: f64 = xp.iter().map(|y| y * y).sum();
    let vs: f64 = vp.iter().map(|y| y * y).sum();
    let big_x = xd - shift - an.xi_d;
    let big_v = vd - an.eta_d;
    p.a * k2 * xs + p.c * vs + p.a * big_x * big_x - 2.0 * p.b * big_x * big_v + p.c * big_v * big_v
}

fn sqrt_checked(q: f64) -> Result<f64> {
    if q < 0.0 {
        return Err(KfpError::Constraint(format!("negative radicand {q:e}: the (a, b, c) form is indefinite")));
    }
    Ok(q.sqrt())
}

/// `ρ(x, v)`.
pub fn rho(p: &BarrierParams, an: &AnchorPoint, x: &[f64], v: &[f64]) -> Result<f64> {
    sqrt_checked(rho_sq_shifted(p, an, x, v, 0.0))
}

/// `ρ_t(x, v) = ρ(x', x_d - h ṽ_d t, v)`.
pub fn rho_t(p: &BarrierParams, an: &AnchorPoint, t: f64, x: &[f64], v: &[f64]) -> Result<f64> {
    sqrt_checked(rho_sq_shifted(p, an, x, v, p.h * p.v_tilde_d * t))
}

/// Membership in `P_T = {ρ0 <= ρ_t <= 3ρ0, x_d <= 0, t <= 0}`.
pub fn region_p_membership(p: &BarrierParams, an: &AnchorPoint, t: f64, x: &[f64], v: &[f64]) -> bool {
    if t > 0.0 || x[x.len() - 1] > 0.0 {
        return false;
    }
    match rho_t(p, an, t, x, v) {
        Ok(r) => r >= an.rho0 * (1.0 - EQ_TOL) && r <= 3.0 * an.rho0 * (1.0 + EQ_TOL),
        Err(_) => false,
    }
}

/// Local quantities of the quadratic form at a point, shared by the
/// analytic operator formulas.
#[derive(Debug, Clone, Copy)]
pub struct FormState {
    /// `X_d^t` (or `X_d` when unshifted).
    pub big_x: f64,
    pub big_v: f64,
    /// `a X - b V`.
    pub gx: f64,
    /// `c V - b X`.
    pub gv: f64,
    pub rho_sq: f64,
}

pub fn form_state(p: &BarrierParams, an: &AnchorPoint, t: f64, x: &[f64], v: &[f64], shifted: bool) -> FormState {
    let shift = if shifted { p.h * p.v_tilde_d * t } else { 0.0 };
    let big_x = x[x.len() - 1] - shift - an.xi_d;
    let big_v = v[v.len() - 1] - an.eta_d;
    FormState {
        big_x,
        big_v,
        gx: p.a * big_x - p.b * big_v,
        gv: p.c * big_v - p.b * big_x,
        rho_sq: rho_sq_shifted(p, an, x, v, shift),
    }
}

/// Exponential outer profile `Φ(τ) = (φ(τ) - φ(τ0)) / (φ(9τ0) - φ(τ0))`
/// with `φ'(τ) = exp(-Θ/τ)`.
///
/// Internally the integrand is rescaled by `exp(Θ/(9τ0))` so that it is at
/// most one on `[τ0, 9τ0]`; the normalization cancels the factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpBarrierState {
    pub theta: f64,
    pub tau0: f64,
    /// `(τ_i, Φ(τ_i))` on a uniform grid of `[0, 9τ0]`.
    pub lookup: Vec<(f64, f64)>,
    norm: f64,
    shift: f64,
}

const LOOKUP_NODES: usize = 512;

impl ExpBarrierState {
    fn scaled_integrand(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            (self.shift - self.theta / s).exp()
        }
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let peak = self.scaled_integrand(hi.max(lo));
        let tol = (1e-14 * hi.abs().max(lo.abs()) * peak).max(f64::MIN_POSITIVE);
        integrate_simpson(|s| self.scaled_integrand(s), lo, hi, tol)
    }

    /// `Φ(τ)`; negative below `τ0`.
    pub fn eval(&self, tau: f64) -> f64 {
        let step = self.lookup[1].0 - self.lookup[0].0;
        let i = ((tau / step).floor().max(0.0) as usize).min(self.lookup.len() - 1);
        let (t_i, phi_i) = self.lookup[i];
        phi_i + self.integral(t_i, tau) / self.norm
    }

    /// `Φ'(τ)`.
    pub fn d1(&self, tau: f64) -> f64 {
        self.scaled_integrand(tau) / self.norm
    }

    /// `Φ''(τ) = Θ/τ² Φ'(τ)`.
    pub fn d2(&self, tau: f64) -> f64 {
        self.theta / (tau * tau) * self.d1(tau)
    }

    /// `Φ''/Φ'`, finite even where `Φ'` underflows.
    pub fn d2_over_d1(&self, tau: f64) -> f64 {
        self.theta / (tau * tau)
    }
}

/// Builds `Φ` for given `Θ, τ0 > 0`.
pub fn phi_ode_barrier(theta: f64, tau0: f64) -> Result<ExpBarrierState> {
    if !(theta > 0.0 && tau0 > 0.0) || !theta.is_finite() || !tau0.is_finite() {
        return Err(KfpError::InvalidArgument(format!("Θ and τ0 must be positive, got {theta}, {tau0}")));
    }
    let mut st = ExpBarrierState { theta, tau0, lookup: Vec::new(), norm: 1.0, shift: theta / (9.0 * tau0) };
    st.norm = st.integral(tau0, 9.0 * tau0);
    if !(st.norm > 0.0) {
        return Err(KfpError::NonFinite(format!("Φ normalization vanished for Θ/τ0 = {}", theta / tau0)));
    }
    let step = 9.0 * tau0 / LOOKUP_NODES as f64;
    let i0 = LOOKUP_NODES / 9;
    let mut table = vec![(0.0, 0.0); LOOKUP_NODES + 1];
    // accumulate outward from τ0 so that Φ(τ0) = 0 exactly
    table[i0] = (tau0, 0.0);
    for i in (i0 + 1)..=LOOKUP_NODES {
        let lo = if i == i0 + 1 { tau0 } else { (i - 1) as f64 * step };
        let hi = if i == LOOKUP_NODES { 9.0 * tau0 } else { i as f64 * step };
        table[i] = (hi, table[i - 1].1 + st.integral(lo, hi) / st.norm);
    }
    for i in (0..i0).rev() {
        let lo = i as f64 * step;
        let hi = table[i + 1].0;
        table[i] = (lo, table[i + 1].1 - st.integral(lo, hi) / st.norm);
    }
    table[LOOKUP_NODES].1 = 1.0;
    // node i0 sits at τ0 rather than i0·step; keep the grid uniform except there
    st.lookup = table;
    Ok(st)
}

/// Power profile `φ(ρ) = (ρ^{-m} - ρ0^{-m}) / ((3ρ0)^{-m} - ρ0^{-m})`,
/// evaluated in the overflow-free form `(1 - (ρ/ρ0)^{-m}) / (1 - 3^{-m})`.
pub fn varphi_power(rho0: f64, m: f64, rho_val: f64) -> Result<f64> {
    if !(rho0 > 0.0) || !(m >= 1.0) {
        return Err(KfpError::InvalidArgument(format!("need ρ0 > 0 and m >= 1, got {rho0}, {m}")));
    }
    if rho_val < rho0 {
        return Err(KfpError::Domain(format!("φ needs ρ >= ρ0, got {rho_val} < {rho0}")));
    }
    Ok((1.0 - (rho_val / rho0).powf(-m)) / (1.0 - 3f64.powf(-m)))
}

/// `φ'(ρ)` of [`varphi_power`].
pub fn varphi_power_d1(rho0: f64, m: f64, rho_val: f64) -> f64 {
    m / rho_val * (rho_val / rho0).powf(-m) / (1.0 - 3f64.powf(-m))
}

/// `φ''/φ' = -(m + 1)/ρ`.
pub fn varphi_power_d2_over_d1(m: f64, rho_val: f64) -> f64 {
    -(m + 1.0) / rho_val
}

/// `Ψ(t, x, v) = ψ(x, v) - 2v - v² - t`, a barrier at the grazing point
/// with `L0 Ψ = 1`.
pub fn grazing_psi(t: f64, x_d: f64, v_d: f64) -> Result<f64> {
    Ok(psi_exact(x_d, v_d)? - 2.0 * v_d - v_d * v_d - t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recipe_values() {
        let p = select_params(BarrierMode::IncomingGradient, 1e-6, -0.3, 1.0, 1.0 / 16.0).unwrap();
        assert_relative_eq!(p.a, 1e4, max_relative = 1e-12);
        assert_relative_eq!(p.c, 2.5e-5, max_relative = 1e-12);
        assert_eq!((p.b, p.h), (0.0625, 1.0 / 36.0));

        let p = select_params(BarrierMode::Exponential, 1e-4, -0.5, 1.0, 1.0 / 16.0).unwrap();
        assert_relative_eq!(p.a, 2500.0, max_relative = 1e-12);
        assert_eq!(p.b, 0.5);
        assert_relative_eq!(p.c, 6.4e-3, max_relative = 1e-12);

        let p = select_params(BarrierMode::Grazing, 1e-6, -0.01, 1.0, 1.0 / 32.0).unwrap();
        assert_eq!(p.b, 0.03125);
        assert_relative_eq!(p.c, 6.25e-6, max_relative = 1e-12);
        assert_relative_eq!(p.kappa, (1.0f64 / 32.0).sqrt() / 256.0, max_relative = 1e-15);
        assert_relative_eq!(p.grazing_exponent(1.0), 5120.0, max_relative = 1e-12);
    }

    #[test]
    fn window_violation_is_reported() {
        let e = select_params(BarrierMode::IncomingGradient, 1e-4, -0.3, 1.0, 1.0 / 16.0).unwrap_err();
        assert!(matches!(e, KfpError::Window(ref s) if s.contains("r̃^(1/3)")));
        let e = select_params(BarrierMode::Exponential, 1e-4, -0.3, 1.0, 1.0 / 1024.0).unwrap_err();
        assert!(matches!(e, KfpError::Window(_)));
    }

    #[test]
    fn constraint_examples() {
        let p = select_params(BarrierMode::IncomingGradient, 1e-6, -0.3, 1.0, 1.0 / 16.0).unwrap();
        let v = check_constraints(&p);
        assert!(v.passed && v.vrs && v.sqrt_ac_ge_8b && v.a_ge_4c);

        let mut bad = p.clone();
        (bad.a, bad.b, bad.c) = (1.0, 1.0, 1.0);
        assert!(!check_constraints(&bad).sqrt_ac_ge_8b);

        let r: f64 = 1e-6;
        let p = select_params(BarrierMode::Grazing, r, -r.cbrt(), 1.0, 1.0 / 32.0).unwrap();
        let v = check_constraints(&p);
        assert!(v.vr && v.passed, "{v:?}");
    }

    #[test]
    fn anchor_closed_form() {
        // r̃ = 1 lies outside the window, so assemble the recipe by hand: ac = 1/4, b = 1/16
        let p = BarrierParams {
            mode: BarrierMode::IncomingGradient,
            dim: 1,
            r_tilde: 1.0,
            kappa: 1.0,
            a: 1.0,
            b: 1.0 / 16.0,
            c: 0.25,
            h: 1.0 / 36.0,
            v_tilde_d: -1.0,
            v0_weight: 1.0,
            theta0: 1.0 / 16.0,
        };
        let an = anchor_point(&p).unwrap();
        assert_relative_eq!(an.xi_d, 8.0 / 63f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(p.b * an.xi_d, p.c * (an.eta_d - p.v_tilde_d), max_relative = 1e-12);
    }

    #[test]
    fn rho_hand_value_and_base_point() {
        let p = BarrierParams {
            mode: BarrierMode::Exponential,
            dim: 1,
            r_tilde: 1.0,
            kappa: 1.0,
            a: 4.0,
            b: 0.0,
            c: 1.0,
            h: 0.0,
            v_tilde_d: -1.0,
            v0_weight: 1.0,
            theta0: 1.0 / 16.0,
        };
        let an = AnchorPoint { xi_d: 1.0, eta_d: 0.0, rho0: 2.0 };
        assert_relative_eq!(rho(&p, &an, &[0.5], &[0.5]).unwrap(), 1.25f64.sqrt(), max_relative = 1e-15);

        let p = select_params(BarrierMode::Exponential, 1e-4, -0.5, 1.0, 1.0 / 16.0).unwrap();
        let an = anchor_point(&p).unwrap();
        assert_relative_eq!(rho(&p, &an, &[0.0], &[p.v_tilde_d]).unwrap(), an.rho0, max_relative = 1e-12);
        assert!(region_p_membership(&p, &an, 0.0, &[0.0], &[p.v_tilde_d]));
        assert!(!region_p_membership(&p, &an, 0.0, &[1e-9], &[p.v_tilde_d]));
    }

    #[test]
    fn grazing_origin_lies_in_inner_shell() {
        let r: f64 = 1e-6;
        let p = select_params(BarrierMode::Grazing, r, -r.cbrt(), 1.0, 1.0 / 32.0).unwrap();
        let an = anchor_point(&p).unwrap();
        let rr = rho(&p, &an, &[0.0], &[0.0]).unwrap();
        assert!(rr >= an.rho0 && rr <= 2.0 * an.rho0, "{} vs {}", rr, an.rho0);
    }

    #[test]
    fn exp_barrier_normalization_and_ode() {
        for (theta, tau0) in [(1.0, 0.01), (10.0, 0.1), (5.0, 1.0)] {
            let st = phi_ode_barrier(theta, tau0).unwrap();
            assert!(st.eval(tau0).abs() < 1e-12);
            assert!((st.eval(9.0 * tau0) - 1.0).abs() < 1e-12);
            let bound = (1.0 + theta / tau0) * (-theta / (8.0 * tau0)).exp();
            assert!(st.eval(4.0 * tau0) <= bound);
            for i in 0..=100 {
                let tau = tau0 * (1.0 + 8.0 * i as f64 / 100.0);
                let res = tau * tau * st.d2(tau) - theta * st.d1(tau);
                assert!(res.abs() <= 1e-10 * theta * st.d1(tau));
                assert!(st.d2(tau) >= 0.0);
            }
        }
        assert!(phi_ode_barrier(0.0, 1.0).is_err());
    }

    #[test]
    fn exp_barrier_monotone() {
        let st = phi_ode_barrier(5.0, 1.0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=900 {
            let v = st.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn power_profile() {
        assert_eq!(varphi_power(1.0, 2.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(varphi_power(1.0, 2.0, 3.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(varphi_power(1.0, 2.0, 2.0).unwrap(), 27.0 / 32.0, max_relative = 1e-15);
        assert!(varphi_power(1.0, 2.0, 0.5).is_err());
        for m in [1.0, 5.0, 160.0] {
            let mut prev = -1.0;
            for i in 0..1000 {
                let v = varphi_power(1.0, m, 1.0 + 2.0 * i as f64 / 999.0).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn grazing_psi_nonnegative_on_incoming_wall() {
        for i in 0..=100 {
            let v = -(i as f64) / 100.0;
            assert!(grazing_psi(0.0, 0.0, v).unwrap() >= 0.0);
        }
    }
}
