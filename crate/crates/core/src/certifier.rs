//! Application of the kinetic operator `L = ∂t + v·∇x - A:D²v - B·∇v` and
//! sampling certification of the barrier inequalities.
//!
//! Barrier values are certified from closed-form derivatives; a
//! finite-difference evaluation of the inner quadratic form on a subset of the
//! samples cross-checks those formulas.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barriers::{
    anchor_point, check_constraints, check_window, minimal_theta0, recipe_params, rho, rho_t, AnchorPoint,
    BarrierMode, BarrierParams, ConstraintVerdict,
};
use crate::error::{KfpError, Result};
use crate::geometry::{symmetric_eigen_range, KineticCylinder, PhasePoint};
use crate::parallel::{batches, map_indexed, Execution};
use crate::rng::stream;

type MatFn = Arc<dyn Fn(&PhasePoint) -> DMatrix<f64> + Send + Sync>;
type VecFn = Arc<dyn Fn(&PhasePoint) -> DVector<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&PhasePoint) -> f64 + Send + Sync>;

/// Coefficients `A`, `B`, `S` of the equation with ellipticity bounds.
#[derive(Clone)]
pub struct CoefficientField {
    pub dim: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Lets callers cache coefficient values across time steps.
    pub time_independent: bool,
    pub label: String,
    /// `(a, b, s)` when all three are constant in `d = 1`.
    uniform: Option<[f64; 3]>,
    a: MatFn,
    b: VecFn,
    s: ScalarFn,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("lambda", &self.lambda)
            .field("big_lambda", &self.big_lambda)
            .finish()
    }
}

impl CoefficientField {
    pub fn new(
        dim: usize,
        lambda: f64,
        big_lambda: f64,
        a: impl Fn(&PhasePoint) -> DMatrix<f64> + Send + Sync + 'static,
        b: impl Fn(&PhasePoint) -> DVector<f64> + Send + Sync + 'static,
        s: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(KfpError::InvalidArgument("dimension must be positive".into()));
        }
        if !(lambda > 0.0 && big_lambda >= lambda) {
            return Err(KfpError::InvalidArgument(format!("need 0 < λ <= Λ, got λ = {lambda}, Λ = {big_lambda}")));
        }
        Ok(Self {
            dim,
            lambda,
            big_lambda,
            time_independent: true,
            label: label.into(),
            uniform: None,
            a: Arc::new(a),
            b: Arc::new(b),
            s: Arc::new(s),
        })
    }

    /// `A = I`, `B = 0`, `S = 0`.
    pub fn identity(dim: usize) -> Self {
        Self::constant(dim, 1.0, 0.0, 0.0).expect("identity coefficients are valid")
    }

    /// `A = a I`, `B = b e_d`, `S = s`.
    pub fn constant(dim: usize, a: f64, b: f64, s: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(KfpError::InvalidArgument(format!("diffusion must be positive, got {a}")));
        }
        let mut bv = DVector::zeros(dim.max(1));
        bv[dim.max(1) - 1] = b;
        let mut c = Self::new(
            dim,
            a,
            a.max(b.abs()).max(1.0).max(a),
            move |_| DMatrix::identity(dim, dim) * a,
            move |_| bv.clone(),
            move |_| s,
            format!("constant(a={a}, b={b}, s={s})"),
        )?;
        if dim == 1 {
            c.uniform = Some([a, b, s]);
        }
        Ok(c)
    }

    pub fn with_source(mut self, s: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static) -> Self {
        self.s = Arc::new(s);
        self.uniform = None;
        self
    }

    pub fn time_dependent(mut self) -> Self {
        self.time_independent = false;
        self
    }

    pub fn a(&self, z: &PhasePoint) -> DMatrix<f64> {
        (self.a)(z)
    }

    pub fn b(&self, z: &PhasePoint) -> DVector<f64> {
        (self.b)(z)
    }

    pub fn s(&self, z: &PhasePoint) -> f64 {
        (self.s)(z)
    }

    /// Scalar `(A, B, S)` for `d = 1`, skipping the matrix allocations when
    /// the field is constant.
    pub fn scalar_1d(&self, z: &PhasePoint) -> [f64; 3] {
        match self.uniform {
            Some(u) => u,
            None => [self.a(z)[(0, 0)], self.b(z)[0], self.s(z)],
        }
    }

    /// Checks `λI <= A(z) <= ΛI` and `|B(z)| <= Λ(1 + |v|²)` at `z`.
    pub fn check_at(&self, z: &PhasePoint) -> Result<()> {
        let a = self.a(z);
        let b = self.b(z);
        if a.nrows() != self.dim || a.ncols() != self.dim || b.len() != self.dim {
            return Err(KfpError::DimensionMismatch { expected: self.dim, got: a.nrows() });
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) || !self.s(z).is_finite() {
            return Err(KfpError::NonFinite(format!("coefficients at t = {}", z.t)));
        }
        let (lo, hi) = symmetric_eigen_range(&a);
        let tol = 1e-12 * self.big_lambda;
        if lo < self.lambda - tol || hi > self.big_lambda + tol {
            return Err(KfpError::InvalidArgument(format!(
                "eigenvalues of A in [{lo}, {hi}] leave [{}, {}]",
                self.lambda, self.big_lambda
            )));
        }
        let v2: f64 = z.v.iter().map(|x| x * x).sum();
        if b.norm() > self.big_lambda * (1.0 + v2) * (1.0 + 1e-12) {
            return Err(KfpError::InvalidArgument(format!("|B| = {} exceeds Λ(1+|v|²)", b.norm())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Central2nd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilConfig {
    pub dt: f64,
    pub dx: f64,
    pub dv: f64,
    pub scheme: Scheme,
}

impl StencilConfig {
    pub fn new(dt: f64, dx: f64, dv: f64) -> Result<Self> {
        if !(dt > 0.0 && dx > 0.0 && dv > 0.0) {
            return Err(KfpError::InvalidArgument(format!("stencil steps must be positive: {dt}, {dx}, {dv}")));
        }
        Ok(Self { dt, dx, dv, scheme: Scheme::Central2nd })
    }

    /// Kinetically scaled steps: `dv = 1e-4·extent`, `dx = dv³`, `dt = dv²`.
    pub fn for_velocity_extent(extent: f64) -> Self {
        let dv = 1e-4 * extent;
        Self { dt: dv * dv, dx: dv * dv * dv, dv, scheme: Scheme::Central2nd }
    }
}

/// The separate pieces of a finite-difference evaluation of `L f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdParts {
    pub time: f64,
    pub transport: f64,
    /// `A : D²v f`.
    pub diffusion: f64,
    /// `B · ∇v f`.
    pub drift: f64,
    pub grad_v: Vec<f64>,
}

impl FdParts {
    pub fn operator(&self) -> f64 {
        self.time + self.transport - self.diffusion - self.drift
    }
}

pub fn fd_parts<F>(coeff: &CoefficientField, f: F, z: &PhasePoint, st: &StencilConfig) -> Result<FdParts>
where
    F: Fn(&PhasePoint) -> Result<f64>,
{
    let d = z.dim();
    if d != coeff.dim {
        return Err(KfpError::DimensionMismatch { expected: coeff.dim, got: d });
    }
    let eval = |p: &PhasePoint| -> Result<f64> {
        match f(p) {
            Ok(y) if y.is_finite() => Ok(y),
            Ok(y) => Err(KfpError::StencilDomain(format!("f = {y} at {p:?}"))),
            Err(e) => Err(KfpError::StencilDomain(format!("{p:?}: {e}"))),
        }
    };
    let f0 = eval(z)?;
    let mut p = z.clone();
    p.t -= st.dt;
    let time = (f0 - eval(&p)?) / st.dt;

    let mut transport = 0.0;
    for i in 0..d {
        let mut p = z.clone();
        p.x[i] += st.dx;
        let fp = eval(&p)?;
        p.x[i] = z.x[i] - st.dx;
        let fm = eval(&p)?;
        transport += z.v[i] * (fp - fm) / (2.0 * st.dx);
    }

    let h = st.dv;
    let shifted = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
        let mut p = z.clone();
        p.v[i] += si * h;
        p.v[j] += sj * h;
        eval(&p)
    };
    let mut grad_v = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = shifted(i, 1.0, i, 0.0)?;
        let fm = shifted(i, -1.0, i, 0.0)?;
        grad_v[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            let m = (shifted(i, 1.0, j, 1.0)? - shifted(i, 1.0, j, -1.0)? - shifted(i, -1.0, j, 1.0)?
                + shifted(i, -1.0, j, -1.0)?)
                / (4.0 * h * h);
            hess[(i, j)] = m;
            hess[(j, i)] = m;
        }
    }
    let a = coeff.a(z);
    let b = coeff.b(z);
    let diffusion = a.component_mul(&hess).sum();
    let drift = b.iter().zip(&grad_v).map(|(x, y)| x * y).sum();
    Ok(FdParts { time, transport, diffusion, drift, grad_v })
}

/// `L f (z)` by finite differences.
pub fn apply_l_fd<F>(coeff: &CoefficientField, f: F, z: &PhasePoint, st: &StencilConfig) -> Result<f64>
where
    F: Fn(&PhasePoint) -> Result<f64>,
{
    fd_parts(coeff, f, z, st).map(|p| p.operator())
}

/// Raw result of a sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOutcome {
    pub samples: usize,
    pub proposals: u64,
    pub violations: usize,
    pub min_margin: f64,
    pub argmin: Option<PhasePoint>,
}

const BATCH: usize = 4096;
pub const MAX_PROPOSALS: u64 = 10_000_000;

/// Draws `n` points from `propose` (rejection sampler returning `None` on a
/// miss) and evaluates `lhs - bound` at each.
///
/// Each batch of 4096 points owns a random stream, so the outcome does not
/// depend on `exec`.
pub fn certify_region<P, L, B>(propose: P, lhs: L, bound: B, n: usize, seed: u64, exec: Execution) -> Result<RegionOutcome>
where
    P: Fn(&mut ChaCha8Rng) -> Option<PhasePoint> + Sync + Send,
    L: Fn(&PhasePoint) -> Result<f64> + Sync + Send,
    B: Fn(&PhasePoint) -> f64 + Sync + Send,
{
    let plan = batches(n, BATCH);
    let cap_per_point = MAX_PROPOSALS as f64 / n.max(1) as f64;
    let parts = map_indexed(exec, plan.len(), |bi| -> Result<RegionOutcome> {
        let (_, len) = plan[bi];
        let cap = (cap_per_point * len as f64).ceil() as u64;
        let mut rng = stream(seed, bi as u64);
        let mut out = RegionOutcome { samples: 0, proposals: 0, violations: 0, min_margin: f64::INFINITY, argmin: None };
        while out.samples < len {
            if out.proposals >= cap {
                return Err(KfpError::SamplerStarvation { proposals: out.proposals });
            }
            out.proposals += 1;
            let Some(z) = propose(&mut rng) else { continue };
            out.samples += 1;
            let margin = lhs(&z)? - bound(&z);
            if !(margin >= 0.0) {
                out.violations += 1;
            }
            // NaN margins count as violations and pin the minimum
            if margin.is_nan() || margin < out.min_margin {
                out.min_margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
                out.argmin = Some(z);
            }
        }
        Ok(out)
    });
    let mut total = RegionOutcome { samples: 0, proposals: 0, violations: 0, min_margin: f64::INFINITY, argmin: None };
    let mut starved = 0u64;
    for part in parts {
        match part {
            Ok(p) => {
                total.samples += p.samples;
                total.proposals += p.proposals;
                total.violations += p.violations;
                if p.min_margin < total.min_margin {
                    total.min_margin = p.min_margin;
                    total.argmin = p.argmin;
                }
            }
            Err(KfpError::SamplerStarvation { proposals }) => starved += proposals,
            Err(e) => return Err(e),
        }
    }
    if starved > 0 {
        return Err(KfpError::SamplerStarvation { proposals: total.proposals + starved });
    }
    Ok(total)
}

/// Rejection sampler for `P_T` (or `[t_lo, 0] x P`) over the range box
/// inflated by 10%.
#[derive(Debug, Clone)]
pub struct BarrierRegion {
    pub params: BarrierParams,
    pub anchor: AnchorPoint,
    /// Use `ρ_t` (true) or `ρ` (false).
    pub shifted: bool,
    /// Lower end of the time window (`t ∈ (t_window, 0]`).
    pub t_window: f64,
    t_lo: f64,
    x_lo: f64,
    x_hi: f64,
    v_half: f64,
    xp_half: f64,
}

impl BarrierRegion {
    /// `window` is the length of the time interval; `None` leaves it
    /// unbounded (only the shifted region then stays bounded).
    pub fn new(params: BarrierParams, anchor: AnchorPoint, window: Option<f64>, shifted: bool) -> Result<Self> {
        let r = params.r_tilde;
        let (centre, half) = (-2.5 * r, 1.5 * r * 1.1);
        let x_lo = centre - half;
        let x_hi = centre + half;
        let v_half = params.velocity_extent() * 1.1;
        let xp_half = 4.0 * r / params.kappa * 1.1;
        let t_window = -window.unwrap_or(f64::INFINITY);
        let speed = params.h * params.v_tilde_d.abs();
        let t_feasible = if shifted && speed > 0.0 { -((-x_lo - anchor.xi_d).max(0.0) / speed) } else { f64::NEG_INFINITY };
        let t_lo = t_window.max(t_feasible);
        if !t_lo.is_finite() {
            return Err(KfpError::InvalidArgument("time window of the region is unbounded".into()));
        }
        Ok(Self { params, anchor, shifted, t_window, t_lo, x_lo, x_hi, v_half, xp_half })
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn contains(&self, z: &PhasePoint) -> bool {
        if !(z.t <= 0.0 && (z.t > self.t_window || z.t == 0.0)) || z.x_d() > 0.0 {
            return false;
        }
        let rr = if self.shifted {
            rho_t(&self.params, &self.anchor, z.t, &z.x, &z.v)
        } else {
            rho(&self.params, &self.anchor, &z.x, &z.v)
        };
        let r0 = self.anchor.rho0;
        matches!(rr, Ok(r) if r >= r0 * (1.0 - 1e-12) && r <= 3.0 * r0 * (1.0 + 1e-12))
    }

    pub fn propose(&self, rng: &mut ChaCha8Rng) -> Option<PhasePoint> {
        let d = self.dim();
        let u: f64 = rng.random();
        let t = self.t_lo * u;
        let big_x = self.x_lo + (self.x_hi - self.x_lo) * rng.random::<f64>();
        let big_v = self.v_half * (2.0 * rng.random::<f64>() - 1.0);
        let mut x = Vec::with_capacity(d);
        let mut v = Vec::with_capacity(d);
        for _ in 1..d {
            x.push(self.xp_half * (2.0 * rng.random::<f64>() - 1.0));
            v.push(self.v_half * (2.0 * rng.random::<f64>() - 1.0));
        }
        let shift = if self.shifted { self.params.h * self.params.v_tilde_d * t } else { 0.0 };
        x.push(big_x + self.anchor.xi_d + shift);
        v.push(big_v + self.anchor.eta_d);
        let z = PhasePoint { t, x, v };
        self.contains(&z).then_some(z)
    }
}

/// Closed-form `L q` and `A:∇v q ⊗ ∇v q` of the inner function `q`.
#[derive(Debug, Clone, Copy)]
pub struct InnerValues {
    pub q: f64,
    pub lq: f64,
    pub grad_sq: f64,
    /// Sum of the magnitudes of the terms of `L q`, used as the scale of
    /// the finite-difference comparison.
    pub scale: f64,
}

struct Local {
    w: DVector<f64>,
    /// `κ²a v'·x' + v_d (aX - bV)`.
    transport: f64,
    tr_a: f64,
    waw: f64,
    bw: f64,
    dt_gx: f64,
}

fn local(p: &BarrierParams, an: &AnchorPoint, coeff: &CoefficientField, z: &PhasePoint, shifted: bool) -> Local {
    let d = z.dim();
    let shift = if shifted { p.h * p.v_tilde_d * z.t } else { 0.0 };
    let big_x = z.x_d() - shift - an.xi_d;
    let big_v = z.v_d() - an.eta_d;
    let gx = p.a * big_x - p.b * big_v;
    let mut w = DVector::zeros(d);
    let mut transport = z.v_d() * gx;
    for i in 0..d - 1 {
        w[i] = p.c * z.v[i];
        transport += p.kappa * p.kappa * p.a * z.x[i] * z.v[i];
    }
    w[d - 1] = p.c * big_v - p.b * big_x;
    let a = coeff.a(z);
    let b = coeff.b(z);
    Local {
        transport,
        tr_a: a.trace(),
        waw: w.dot(&(&a * &w)),
        bw: b.dot(&w),
        dt_gx: if shifted { -p.h * p.v_tilde_d * gx } else { 0.0 },
        w,
    }
}

/// `q = ρ_t²`.
pub fn inner_rho_t_sq(p: &BarrierParams, an: &AnchorPoint, coeff: &CoefficientField, z: &PhasePoint) -> Result<InnerValues> {
    let l = local(p, an, coeff, z, true);
    let q = rho_t(p, an, z.t, &z.x, &z.v)?.powi(2);
    let terms = [2.0 * l.dt_gx, 2.0 * l.transport, -2.0 * p.c * l.tr_a, -2.0 * l.bw];
    Ok(InnerValues {
        q,
        lq: terms.iter().sum(),
        grad_sq: 4.0 * l.waw,
        scale: terms.iter().map(|t| t.abs()).sum(),
    })
}

/// `q = ρ - h t`.
pub fn inner_rho_minus_ht(
    p: &BarrierParams,
    an: &AnchorPoint,
    coeff: &CoefficientField,
    z: &PhasePoint,
) -> Result<InnerValues> {
    let l = local(p, an, coeff, z, false);
    let r = rho(p, an, &z.x, &z.v)?;
    let terms = [-p.h, l.transport / r, -p.c * l.tr_a / r, l.waw / (r * r * r), -l.bw / r];
    Ok(InnerValues {
        q: r - p.h * z.t,
        lq: terms.iter().sum(),
        grad_sq: l.waw / (r * r),
        scale: terms.iter().map(|t| t.abs()).sum(),
    })
}

fn inner_gradient(p: &BarrierParams, an: &AnchorPoint, coeff: &CoefficientField, z: &PhasePoint, lemma: Lemma) -> Result<Vec<f64>> {
    let l = local(p, an, coeff, z, lemma != Lemma::BarrierG);
    Ok(match lemma {
        Lemma::BarrierG => {
            let r = rho(p, an, &z.x, &z.v)?;
            l.w.iter().map(|w| w / r).collect()
        }
        _ => l.w.iter().map(|w| 2.0 * w).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma {
    PhaseProp,
    BarrierSs,
    BarrierG,
    Hypodist,
}

impl Lemma {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phase-prop" => Ok(Self::PhaseProp),
            "barrier-ss" => Ok(Self::BarrierSs),
            "barrier-g" => Ok(Self::BarrierG),
            "hypodist" => Ok(Self::Hypodist),
            _ => Err(KfpError::InvalidArgument(format!("unknown lemma '{s}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PhaseProp => "phase-prop",
            Self::BarrierSs => "barrier-ss",
            Self::BarrierG => "barrier-g",
            Self::Hypodist => "hypodist",
        }
    }

    /// Recipe mode a lemma is stated for.
    pub fn default_mode(self) -> BarrierMode {
        match self {
            Self::PhaseProp => BarrierMode::IncomingGradient,
            Self::BarrierSs | Self::Hypodist => BarrierMode::Exponential,
            Self::BarrierG => BarrierMode::Grazing,
        }
    }

    pub fn for_mode(mode: BarrierMode) -> Self {
        match mode {
            BarrierMode::IncomingGradient => Self::PhaseProp,
            BarrierMode::Exponential => Self::BarrierSs,
            BarrierMode::Grazing => Self::BarrierG,
        }
    }

    fn inequality(self) -> &'static str {
        match self {
            Self::PhaseProp => "L(Φ∘ρ_t²) >= |ṽ_d|/(8 r̃) with Φ(τ) = τ/ρ0² - 1 on Q",
            Self::BarrierSs => "L(Φ∘ρ_t²) >= 0 with Φ'' τ² = Θ Φ', Θ = C0 |ṽ_d|^5, on P_T",
            Self::BarrierG => "L(φ(ρ - h t)) >= φ'/48 on (-10 r̃^(2/3)/θ0, 0] x P",
            Self::Hypodist => "range bounds and coercivity of (aX - bV) on P",
        }
    }

    fn margin_units(self) -> &'static str {
        match self {
            Self::PhaseProp => "absolute",
            Self::BarrierSs => "per unit Φ'(ρ_t²)",
            Self::BarrierG => "per unit φ'(ρ - h t)",
            Self::Hypodist => "relative slack of the tightest inequality",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyConfig {
    pub lemma: Lemma,
    pub mode: BarrierMode,
    pub r_tilde: f64,
    pub v_tilde_d: f64,
    pub v0_weight: f64,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    /// Starting `θ0`; `None` picks the mode default (raised to the smallest
    /// admissible dyadic value when the window requires it).
    pub theta0: Option<f64>,
    pub fd_points: usize,
    pub exec: Execution,
}

impl CertifyConfig {
    pub fn new(lemma: Lemma, r_tilde: f64, v_tilde_d: f64) -> Self {
        Self {
            lemma,
            mode: lemma.default_mode(),
            r_tilde,
            v_tilde_d,
            v0_weight: 1.0,
            dim: 1,
            samples: 100_000,
            seed: 0,
            theta0: None,
            fd_points: 200,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The constraint gate or the admissibility window rejected the parameters.
    Refused,
    /// Sampling or evaluation failed.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub theta0: f64,
    pub constant: Option<f64>,
    pub violations: usize,
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdCheck {
    pub points: usize,
    pub max_rel_diff_operator: f64,
    pub max_rel_diff_gradient: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionCheck {
    pub c1: f64,
    pub c2: f64,
    pub inner_samples: usize,
    /// Points of `G_r` found outside `Q`.
    pub inner_violations: usize,
    pub outer_samples: usize,
    /// Points of `Q` found outside `G_R`.
    pub outer_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub lemma: Lemma,
    pub inequality: String,
    pub mode: BarrierMode,
    pub params: BarrierParams,
    pub anchor: Option<AnchorPoint>,
    pub constraints: ConstraintVerdict,
    pub samples: usize,
    pub proposals: u64,
    pub violations: usize,
    pub min_margin: f64,
    pub margin_units: String,
    pub argmin: Option<PhasePoint>,
    pub theta0_used: f64,
    pub feasible_constants: BTreeMap<String, f64>,
    pub attempts: Vec<Attempt>,
    pub fd_check: Option<FdCheck>,
    pub inclusion: Option<InclusionCheck>,
    pub seed: u64,
    pub verdict: Verdict,
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// JSON with the wall time zeroed, identical across runs with one seed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        Ok(serde_json::to_string_pretty(&r)?)
    }
}

const FD_TOL: f64 = 1e-4;
const PHASE_C1: f64 = 1.0 / 8.0;
const PHASE_C2: f64 = 8.0;

fn dyadic_at_least(x: f64) -> f64 {
    2f64.powf(x.log2().ceil())
}

/// Certifies one lemma. Never panics on bad parameters: refusals and
/// failures are recorded in the report's verdict.
pub fn certify(cfg: &CertifyConfig, coeff: &CoefficientField) -> CertificateReport {
    let start = Instant::now();
    let mode = if cfg.lemma == Lemma::Hypodist { cfg.mode } else { cfg.lemma.default_mode() };
    let mut theta0 = cfg.theta0.unwrap_or_else(|| mode.default_theta0());
    if cfg.theta0.is_none() {
        if let Some(min) = minimal_theta0(mode, cfg.r_tilde, cfg.v_tilde_d, cfg.v0_weight) {
            if min > theta0 {
                theta0 = dyadic_at_least(min);
            }
        }
    }
    let params = recipe_params(mode, cfg.r_tilde, cfg.v_tilde_d, cfg.v0_weight, theta0).with_dim(cfg.dim);
    let mut report = CertificateReport {
        lemma: cfg.lemma,
        inequality: cfg.lemma.inequality().into(),
        mode,
        constraints: check_constraints(&params),
        params,
        anchor: None,
        samples: 0,
        proposals: 0,
        violations: 0,
        min_margin: f64::NAN,
        margin_units: cfg.lemma.margin_units().into(),
        argmin: None,
        theta0_used: theta0,
        feasible_constants: BTreeMap::new(),
        attempts: Vec::new(),
        fd_check: None,
        inclusion: None,
        seed: cfg.seed,
        verdict: Verdict::Error,
        error: None,
        wall_ms: 0.0,
    };
    if let Err(e) = run(cfg, coeff, &mut report) {
        report.verdict = match e {
            KfpError::Window(_) | KfpError::Constraint(_) | KfpError::InvalidArgument(_) => Verdict::Refused,
            _ => Verdict::Error,
        };
        report.error = Some(e.to_string());
    }
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    report
}

fn gate(p: &BarrierParams, v: &ConstraintVerdict) -> Result<()> {
    if p.mode == BarrierMode::Grazing && p.theta0 > 1.0 / 16.0 {
        return Err(KfpError::Window(format!("θ0 = {} > 1/16", p.theta0)));
    }
    if !(p.theta0 <= 1.0 / 16.0) {
        return Err(KfpError::Window(format!("admissible θ0 = {} exceeds 1/16", p.theta0)));
    }
    check_window(p.mode, p.r_tilde, p.v_tilde_d, p.v0_weight, p.theta0).map_err(KfpError::Window)?;
    if !v.passed {
        return Err(KfpError::Constraint(format!("{v:?}")));
    }
    Ok(())
}

fn run(cfg: &CertifyConfig, coeff: &CoefficientField, report: &mut CertificateReport) -> Result<()> {
    if coeff.dim != cfg.dim {
        return Err(KfpError::DimensionMismatch { expected: cfg.dim, got: coeff.dim });
    }
    if cfg.samples == 0 {
        return Err(KfpError::InvalidArgument("sample count must be positive".into()));
    }
    gate(&report.params, &report.constraints)?;
    match cfg.lemma {
        Lemma::PhaseProp => run_phase_prop(cfg, coeff, report),
        Lemma::BarrierSs => run_barrier_ss(cfg, coeff, report),
        Lemma::BarrierG => run_barrier_g(cfg, coeff, report),
        Lemma::Hypodist => run_hypodist(cfg, report),
    }
}

fn record(report: &mut CertificateReport, out: &RegionOutcome) {
    report.samples = out.samples;
    report.proposals = out.proposals;
    report.violations = out.violations;
    report.min_margin = out.min_margin;
    report.argmin = out.argmin.clone();
    report.verdict = if out.violations == 0 { Verdict::Pass } else { Verdict::Fail };
}

type InnerFn = fn(&BarrierParams, &AnchorPoint, &CoefficientField, &PhasePoint) -> Result<InnerValues>;

fn fd_check(
    cfg: &CertifyConfig,
    coeff: &CoefficientField,
    region: &BarrierRegion,
    inner: InnerFn,
    seed: u64,
) -> Result<FdCheck> {
    let p = &region.params;
    let an = &region.anchor;
    let st = StencilConfig::for_velocity_extent(p.velocity_extent());
    let mut rng = stream(seed, u64::MAX);
    let mut points = 0;
    let mut proposals = 0u64;
    let (mut op, mut gr) = (0.0f64, 0.0f64);
    while points < cfg.fd_points && proposals < MAX_PROPOSALS {
        proposals += 1;
        let Some(z) = region.propose(&mut rng) else { continue };
        points += 1;
        let exact = inner(p, an, coeff, &z)?;
        let q = |y: &PhasePoint| -> Result<f64> {
            if region.shifted {
                Ok(rho_t(p, an, y.t, &y.x, &y.v)?.powi(2))
            } else {
                Ok(rho(p, an, &y.x, &y.v)? - p.h * y.t)
            }
        };
        let parts = fd_parts(coeff, q, &z, &st)?;
        op = op.max((parts.operator() - exact.lq).abs() / exact.scale);
        let lemma = if region.shifted { Lemma::PhaseProp } else { Lemma::BarrierG };
        let g = inner_gradient(p, an, coeff, &z, lemma)?;
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = g.iter().zip(&parts.grad_v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        gr = gr.max(diff / gnorm.max(f64::MIN_POSITIVE));
    }
    Ok(FdCheck {
        points,
        max_rel_diff_operator: op,
        max_rel_diff_gradient: gr,
        tolerance: FD_TOL,
        passed: op <= FD_TOL && gr <= FD_TOL,
    })
}

fn finish_with_fd(report: &mut CertificateReport, fd: FdCheck) {
    if !fd.passed && report.verdict == Verdict::Pass {
        report.verdict = Verdict::Fail;
        report.error = Some("finite-difference cross-check disagrees with the closed-form operator".into());
    }
    report.fd_check = Some(fd);
}

fn run_phase_prop(cfg: &CertifyConfig, coeff: &CoefficientField, report: &mut CertificateReport) -> Result<()> {
    let p = report.params.clone();
    let an = anchor_point(&p)?;
    report.anchor = Some(an);
    let window = 10.0 * p.r_tilde.powf(2.0 / 3.0);
    let region = BarrierRegion::new(p.clone(), an, Some(window), true)?;
    let phi1 = 1.0 / (an.rho0 * an.rho0);
    let bound = p.v_tilde_d.abs() / (8.0 * p.r_tilde);
    let out = certify_region(
        |rng| region.propose(rng),
        |z| Ok(phi1 * inner_rho_t_sq(&p, &an, coeff, z)?.lq),
        |_| bound,
        cfg.samples,
        cfg.seed,
        cfg.exec,
    )?;
    record(report, &out);
    report.attempts.push(Attempt { theta0: p.theta0, constant: None, violations: out.violations, min_margin: out.min_margin });
    report.feasible_constants.insert("c1".into(), PHASE_C1);
    report.feasible_constants.insert("c2".into(), PHASE_C2);
    report.inclusion = Some(inclusion_check(cfg, &region)?);
    let fd = fd_check(cfg, coeff, &region, inner_rho_t_sq, cfg.seed)?;
    finish_with_fd(report, fd);
    Ok(())
}

/// Samples `G_r(z̃) ⊂ Q ⊂ G_R(z̃)` with `r = c1 r̃^(1/3)`, `R = c2 r̃^(1/3)`.
fn inclusion_check(cfg: &CertifyConfig, region: &BarrierRegion) -> Result<InclusionCheck> {
    let p = &region.params;
    let d = p.dim;
    let mut centre_v = vec![0.0; d];
    centre_v[d - 1] = p.v_tilde_d;
    let centre = PhasePoint { t: 0.0, x: vec![0.0; d], v: centre_v };
    let r13 = p.r_tilde.cbrt();
    let small = KineticCylinder::new(centre.clone(), PHASE_C1 * r13)?;
    let big = KineticCylinder::new(centre, PHASE_C2 * r13)?;
    let n = cfg.samples.min(20_000);
    let mut rng = stream(cfg.seed ^ 0x1c1, 0);
    let (mut inner_n, mut inner_bad) = (0, 0);
    let mut tries = 0u64;
    while inner_n < n && tries < MAX_PROPOSALS {
        tries += 1;
        let w = PhasePoint {
            t: -rng.random::<f64>(),
            x: (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            v: (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
        };
        let z = small.from_unit(&w);
        if z.x_d() > 0.0 || !small.contains_group_form(&z) {
            continue;
        }
        inner_n += 1;
        if !region.contains(&z) {
            inner_bad += 1;
        }
    }
    let (mut outer_n, mut outer_bad) = (0, 0);
    tries = 0;
    while outer_n < n && tries < MAX_PROPOSALS {
        tries += 1;
        let Some(z) = region.propose(&mut rng) else { continue };
        outer_n += 1;
        if !big.contains_group_form(&z) {
            outer_bad += 1;
        }
    }
    Ok(InclusionCheck {
        c1: PHASE_C1,
        c2: PHASE_C2,
        inner_samples: inner_n,
        inner_violations: inner_bad,
        outer_samples: outer_n,
        outer_violations: outer_bad,
    })
}

fn run_barrier_ss(cfg: &CertifyConfig, coeff: &CoefficientField, report: &mut CertificateReport) -> Result<()> {
    let p = report.params.clone();
    let an = anchor_point(&p)?;
    report.anchor = Some(an);
    // P_T itself has no time cut-off; x_d <= 0 bounds it
    let region = BarrierRegion::new(p.clone(), an, None, true)?;
    let vt5 = p.v_tilde_d.abs().powi(5);
    report.feasible_constants.insert("tau0".into(), an.rho0 * an.rho0);
    let mut c0 = 2f64.powi(-10);
    let mut last = None;
    while c0 >= 2f64.powi(-30) {
        let theta = c0 * vt5;
        let out = certify_region(
            |rng| region.propose(rng),
            |z| {
                let iv = inner_rho_t_sq(&p, &an, coeff, z)?;
                Ok(iv.lq - theta / (iv.q * iv.q) * iv.grad_sq)
            },
            |_| 0.0,
            cfg.samples,
            cfg.seed,
            cfg.exec,
        )?;
        report.attempts.push(Attempt { theta0: p.theta0, constant: Some(c0), violations: out.violations, min_margin: out.min_margin });
        let pass = out.violations == 0;
        last = Some((c0, out));
        if pass {
            break;
        }
        c0 /= 2.0;
    }
    let (c0, out) = last.expect("at least one attempt");
    record(report, &out);
    report.feasible_constants.insert("C0".into(), c0);
    report.feasible_constants.insert("Theta".into(), c0 * vt5);
    let fd = fd_check(cfg, coeff, &region, inner_rho_t_sq, cfg.seed)?;
    finish_with_fd(report, fd);
    Ok(())
}

fn run_barrier_g(cfg: &CertifyConfig, coeff: &CoefficientField, report: &mut CertificateReport) -> Result<()> {
    let mut theta0 = report.params.theta0;
    let mut last = None;
    while theta0 >= 2f64.powi(-12) {
        let p = recipe_params(BarrierMode::Grazing, cfg.r_tilde, cfg.v_tilde_d, cfg.v0_weight, theta0).with_dim(cfg.dim);
        let verdict = check_constraints(&p);
        gate(&p, &verdict)?;
        let an = anchor_point(&p)?;
        let m = p.grazing_exponent(coeff.lambda);
        let window = 10.0 * p.r_tilde.powf(2.0 / 3.0) / theta0;
        let region = BarrierRegion::new(p.clone(), an, Some(window), false)?;
        let out = certify_region(
            |rng| region.propose(rng),
            |z| {
                let iv = inner_rho_minus_ht(&p, &an, coeff, z)?;
                // φ''/φ' = -(m + 1)/s at s = ρ - h t
                Ok(iv.lq + (m + 1.0) / iv.q * iv.grad_sq)
            },
            |_| 1.0 / 48.0,
            cfg.samples,
            cfg.seed,
            cfg.exec,
        )?;
        report.attempts.push(Attempt { theta0, constant: Some(m), violations: out.violations, min_margin: out.min_margin });
        let pass = out.violations == 0;
        last = Some((p, an, m, region, out));
        if pass {
            break;
        }
        theta0 /= 2.0;
    }
    let (p, an, m, region, out) = last.ok_or_else(|| KfpError::InvalidArgument("θ0 below search floor".into()))?;
    report.theta0_used = p.theta0;
    report.constraints = check_constraints(&p);
    report.params = p;
    report.anchor = Some(an);
    record(report, &out);
    report.feasible_constants.insert("m".into(), m);
    let fd = fd_check(cfg, coeff, &region, inner_rho_minus_ht, cfg.seed)?;
    finish_with_fd(report, fd);
    Ok(())
}

/// Slack of the range and coercivity inequalities at a point of `P`, each
/// normalized by its right-hand side.
pub fn hypodist_margin(p: &BarrierParams, an: &AnchorPoint, z: &PhasePoint, verdict: &ConstraintVerdict) -> f64 {
    let r = p.r_tilde;
    let d = z.dim();
    let big_x = z.x_d() - an.xi_d;
    let big_v = z.v_d() - an.eta_d;
    let xp = z.x[..d - 1].iter().map(|y| y * y).sum::<f64>().sqrt();
    let vp = z.v[..d - 1].iter().map(|y| y * y).sum::<f64>().sqrt();
    let ext = p.velocity_extent();
    let gx = p.a * big_x - p.b * big_v;
    let coerc = p.a * r * p.v_tilde_d.abs() / 4.0;
    let mut m = (big_x.abs() - r * (1.0 - 1e-9)) / r;
    m = m.min((4.0 * r - (p.kappa * xp).max(big_x.abs())) / r);
    m = m.min((ext - vp.max(big_v.abs())) / ext);
    if verdict.vr {
        m = m.min((an.eta_d * gx - coerc) / coerc);
    }
    if verdict.vrs {
        m = m.min((z.v_d().abs() - p.v_tilde_d.abs() / 2.0) / p.v_tilde_d.abs());
        m = m.min((z.v_d() * gx - coerc) / coerc);
    }
    m
}

fn run_hypodist(cfg: &CertifyConfig, report: &mut CertificateReport) -> Result<()> {
    let p = report.params.clone();
    let an = anchor_point(&p)?;
    report.anchor = Some(an);
    let verdict = report.constraints.clone();
    let region = BarrierRegion::new(p.clone(), an, Some(0.0), false)?;
    let out = certify_region(
        |rng| region.propose(rng),
        |z| Ok(hypodist_margin(&p, &an, z, &verdict)),
        |_| 0.0,
        cfg.samples,
        cfg.seed,
        cfg.exec,
    )?;
    record(report, &out);
    report.attempts.push(Attempt { theta0: p.theta0, constant: None, violations: out.violations, min_margin: out.min_margin });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::grazing_psi;
    use approx::assert_relative_eq;

    fn st() -> StencilConfig {
        StencilConfig::new(1e-6, 1e-6, 1e-3).unwrap()
    }

    #[test]
    fn fd_trivial_examples() {
        let id = CoefficientField::identity(1);
        let z = PhasePoint::one_d(-0.3, -0.2, 0.7);
        assert_relative_eq!(apply_l_fd(&id, |z| Ok(z.t), &z, &st()).unwrap(), 1.0, max_relative = 1e-9);
        let f = |z: &PhasePoint| Ok(-2.0 * z.v[0] - z.v[0] * z.v[0] - z.t);
        assert_relative_eq!(apply_l_fd(&id, f, &z, &st()).unwrap(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn fd_exact_on_low_degree_polynomials() {
        // kinetic degree <= 2: 1, t, v_i, v_i v_j
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.5]);
        let b = DVector::from_vec(vec![0.3, -0.7]);
        let (a2, b2) = (a.clone(), b.clone());
        let coeff = CoefficientField::new(2, 1.0, 3.0, move |_| a2.clone(), move |_| b2.clone(), |_| 0.0, "test").unwrap();
        let f = |z: &PhasePoint| Ok(3.0 + 2.0 * z.t - z.v[0] + 4.0 * z.v[1] + z.v[0] * z.v[1] - 2.0 * z.v[1] * z.v[1]);
        let z = PhasePoint::new(-0.4, vec![0.1, -0.3], vec![0.2, -0.5]).unwrap();
        let s = StencilConfig::new(1e-4, 1e-6, 1e-2).unwrap();
        let grad = [-1.0 + z.v[1], 4.0 + z.v[0] - 4.0 * z.v[1]];
        let exact = 2.0 - (2.0 * a[(0, 1)] * 1.0 + a[(1, 1)] * -4.0) - (b[0] * grad[0] + b[1] * grad[1]);
        let got = apply_l_fd(&coeff, f, &z, &s).unwrap();
        assert!((got - exact).abs() <= 1e-9 * exact.abs(), "{got} vs {exact}");
    }

    #[test]
    fn fd_on_grazing_barrier() {
        let id = CoefficientField::identity(1);
        let s = StencilConfig::new(1e-6, 1e-9, 1e-3).unwrap();
        for (x, v) in [(-0.5, 0.3), (-0.2, -0.4), (-1.0, 1.2), (-0.3, 0.0)] {
            let z = PhasePoint::one_d(-0.1, x, v);
            let l = apply_l_fd(&id, |z| grazing_psi(z.t, z.x[0], z.v[0]), &z, &s).unwrap();
            assert!((l - 1.0).abs() < 1e-4, "L Ψ = {l} at ({x}, {v})");
        }
    }

    #[test]
    fn fd_reports_domain_exit() {
        let id = CoefficientField::identity(1);
        let z = PhasePoint::one_d(0.0, 0.0, 0.0);
        let e = apply_l_fd(&id, |z| if z.v[0] > 0.0 { Err(KfpError::Domain("v > 0".into())) } else { Ok(1.0) }, &z, &st());
        assert!(matches!(e, Err(KfpError::StencilDomain(_))));
    }

    #[test]
    fn ellipticity_check() {
        let c = CoefficientField::constant(2, 0.5, 0.1, 0.0).unwrap();
        assert!(c.check_at(&PhasePoint::origin(2)).is_ok());
        let bad = CoefficientField::new(1, 1.0, 2.0, |_| DMatrix::from_element(1, 1, 3.0), |_| DVector::zeros(1), |_| 0.0, "bad").unwrap();
        assert!(bad.check_at(&PhasePoint::origin(1)).is_err());
    }

    #[test]
    fn sampler_stays_in_region_and_is_deterministic() {
        let p = crate::barriers::select_params(BarrierMode::Exponential, 1e-4, -0.5, 1.0, 1.0 / 16.0).unwrap().with_dim(2);
        let an = anchor_point(&p).unwrap();
        let region = BarrierRegion::new(p, an, None, true).unwrap();
        let out1 = certify_region(|r| region.propose(r), |z| Ok(z.t), |_| 0.0, 5000, 9, Execution::Parallel).unwrap();
        let out2 = certify_region(|r| region.propose(r), |z| Ok(z.t), |_| 0.0, 5000, 9, Execution::Sequential).unwrap();
        assert_eq!(out1, out2);
        assert_eq!(out1.samples, 5000);
        // t <= 0 everywhere, so every nonzero t is a "violation" of t >= 0
        assert!(out1.violations > 0 && out1.min_margin < 0.0);
    }

    #[test]
    fn starvation_is_reported() {
        let e = certify_region(|_| None, |_| Ok(0.0), |_| 0.0, 10, 1, Execution::Sequential);
        assert!(matches!(e, Err(KfpError::SamplerStarvation { .. })));
    }

    #[test]
    fn phase_prop_small_run() {
        let mut cfg = CertifyConfig::new(Lemma::PhaseProp, 1e-6, -0.3);
        cfg.samples = 5000;
        let rep = certify(&cfg, &CoefficientField::identity(1));
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
        assert!(rep.min_margin >= 0.0);
        assert!(rep.fd_check.as_ref().unwrap().passed);
    }

    #[test]
    fn refused_when_window_fails() {
        let mut cfg = CertifyConfig::new(Lemma::PhaseProp, 1e-4, -0.3);
        cfg.samples = 100;
        let rep = certify(&cfg, &CoefficientField::identity(1));
        assert_eq!(rep.verdict, Verdict::Refused);
        assert!(rep.error.is_some());
    }

    #[test]
    fn report_json_is_deterministic() {
        let mut cfg = CertifyConfig::new(Lemma::Hypodist, 1e-4, -0.5);
        cfg.samples = 3000;
        let a = certify(&cfg, &CoefficientField::identity(1));
        cfg.exec = Execution::Sequential;
        let b = certify(&cfg, &CoefficientField::identity(1));
        assert_eq!(a.deterministic_json().unwrap(), b.deterministic_json().unwrap());
        assert_eq!(a.verdict, Verdict::Pass, "{a:?}");
    }
}
