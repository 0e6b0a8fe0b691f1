//! Kinetic geometry: the Galilean group, kinetic scaling, the gauge, kinetic
//! cylinders, multi-index degree, exponent fitting and boundary flattening.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KfpError, Result};
use crate::parallel::{self, Execution};
use crate::rng;

/// A point `(t, x, v)` of phase space-time `R x R^d x R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(t: f64, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() || x.is_empty() {
            return Err(KfpError::DimensionMismatch { expected: x.len().max(1), got: v.len() });
        }
        Ok(Self { t, x, v })
    }

    /// Convenience constructor for `d = 1`.
    pub fn one_d(t: f64, x: f64, v: f64) -> Self {
        Self { t, x: vec![x], v: vec![v] }
    }

    pub fn origin(d: usize) -> Self {
        Self { t: 0.0, x: vec![0.0; d], v: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Last spatial component `x_d`.
    pub fn x_d(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Last velocity component `v_d`.
    pub fn v_d(&self) -> f64 {
        self.v[self.v.len() - 1]
    }

    fn check_dim(&self, other: &PhasePoint) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(KfpError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Galilean composition `z0 ∘ z = (t + t0, x + x0 + t v0, v + v0)`.
pub fn compose(z0: &PhasePoint, z: &PhasePoint) -> Result<PhasePoint> {
    z0.check_dim(z)?;
    let x = z.x.iter().zip(&z0.x).zip(&z0.v).map(|((x, x0), v0)| x + x0 + z.t * v0).collect();
    let v = z.v.iter().zip(&z0.v).map(|(v, v0)| v + v0).collect();
    Ok(PhasePoint { t: z.t + z0.t, x, v })
}

/// Group inverse `(-t, -x + t v, -v)`.
pub fn inverse(z: &PhasePoint) -> PhasePoint {
    PhasePoint {
        t: -z.t,
        x: z.x.iter().zip(&z.v).map(|(x, v)| -x + z.t * v).collect(),
        v: z.v.iter().map(|v| -v).collect(),
    }
}

/// Kinetic dilation `S_r(z) = (r^2 t, r^3 x, r v)`.
pub fn kinetic_scale(z: &PhasePoint, r: f64) -> Result<PhasePoint> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(KfpError::InvalidArgument(format!("scaling factor must be positive, got {r}")));
    }
    let r3 = r * r * r;
    Ok(PhasePoint {
        t: r * r * z.t,
        x: z.x.iter().map(|x| r3 * x).collect(),
        v: z.v.iter().map(|v| r * v).collect(),
    })
}

/// Kinetic gauge `max{|t|^(1/2), |x|^(1/3), |v|}`.
pub fn gauge(z: &PhasePoint) -> f64 {
    z.t.abs().sqrt().max(norm(&z.x).cbrt()).max(norm(&z.v))
}

/// Kinetic cylinder `Q_r(z0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticCylinder {
    pub center: PhasePoint,
    pub radius: f64,
}

impl KineticCylinder {
    pub fn new(center: PhasePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(KfpError::InvalidArgument(format!("cylinder radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Membership through the group form `{z0 ∘ S_r(w) : w ∈ (-1,0] x B1 x B1}`.
    pub fn contains_group_form(&self, z: &PhasePoint) -> bool {
        if self.center.dim() != z.dim() {
            return false;
        }
        let rel = compose(&inverse(&self.center), z).expect("dimensions checked");
        let w = kinetic_scale(&rel, 1.0 / self.radius).expect("radius positive");
        w.t > -1.0 && w.t <= 0.0 && norm(&w.x) < 1.0 && norm(&w.v) < 1.0
    }

    /// Maps a point of the unit cylinder into this cylinder.
    pub fn from_unit(&self, w: &PhasePoint) -> PhasePoint {
        let s = kinetic_scale(w, self.radius).expect("radius positive");
        compose(&self.center, &s).expect("dimensions checked")
    }
}

/// Membership by the explicit inequalities
/// `t0 - r^2 < t <= t0`, `|x - x0 - (t - t0) v0| < r^3`, `|v - v0| < r`.
pub fn cylinder_contains(c: &KineticCylinder, z: &PhasePoint) -> bool {
    let z0 = &c.center;
    if z0.dim() != z.dim() {
        return false;
    }
    let r = c.radius;
    let dt = z.t - z0.t;
    if !(dt > -r * r && dt <= 0.0) {
        return false;
    }
    let dx: Vec<f64> = z.x.iter().zip(&z0.x).zip(&z0.v).map(|((x, x0), v0)| x - x0 - dt * v0).collect();
    let dv: Vec<f64> = z.v.iter().zip(&z0.v).map(|(v, v0)| v - v0).collect();
    norm(&dx) < r * r * r && norm(&dv) < r
}

/// Multi-index `(l_t, l_x, l_v)` on `N^(1+2d)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndex {
    pub l_t: u32,
    pub l_x: Vec<u32>,
    pub l_v: Vec<u32>,
}

/// Weighted degree `2 l_t + 3 |l_x| + |l_v|`.
pub fn kinetic_degree(m: &MultiIndex) -> u32 {
    2 * m.l_t + 3 * m.l_x.iter().sum::<u32>() + m.l_v.iter().sum::<u32>()
}

/// Result of a log-log least-squares fit `log ω = β log r + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    /// Samples dropped for non-positive radius or oscillation.
    pub dropped: usize,
}

/// Ordinary least squares of `y` against `x`: `(slope, intercept, r^2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fits the Hölder exponent from `(r, ω(r))` samples.
pub fn fit_holder_exponent(samples: &[(f64, f64)]) -> Result<HolderFit> {
    let usable: Vec<(f64, f64)> =
        samples.iter().copied().filter(|&(r, w)| r > 0.0 && w > 0.0 && r.is_finite() && w.is_finite()).collect();
    let dropped = samples.len() - usable.len();
    if dropped > 0 {
        log::warn!("fit_holder_exponent: dropped {dropped} non-positive samples");
    }
    if usable.len() < 3 {
        return Err(KfpError::InsufficientData(format!(
            "need at least 3 usable samples, have {} ({} dropped)",
            usable.len(),
            dropped
        )));
    }
    let mut radii: Vec<f64> = usable.iter().map(|s| s.0).collect();
    radii.sort_by(|a, b| a.total_cmp(b));
    if radii.windows(2).any(|w| w[0] == w[1]) {
        return Err(KfpError::InvalidArgument("radii must be distinct".into()));
    }
    let xs: Vec<f64> = usable.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|s| s.1.ln()).collect();
    let (exponent, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(HolderFit { exponent, intercept, r_squared, used: usable.len(), dropped })
}

/// Oscillation estimate of a callable over a (possibly half-space restricted)
/// kinetic cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub min: f64,
    pub max: f64,
    pub samples: usize,
}

impl Oscillation {
    pub fn value(&self) -> f64 {
        self.max - self.min
    }
}

const OSC_BATCH: usize = 4096;

fn unit_ball_point<R: Rng>(rng: &mut R, d: usize, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for o in out.iter_mut().take(d) {
            *o = rng.random_range(-1.0..1.0);
            s += *o * *o;
        }
        if s < 1.0 {
            return;
        }
    }
}

/// Samples `n` points uniformly in `Q_r(center)`, optionally restricted to
/// `{x_d <= 0}` (the set `G_r`), and returns min and max of `f`.
///
/// Every batch draws from its own counter-based stream, so the result is the
/// same for sequential and parallel execution.
pub fn sample_oscillation<F>(
    f: F,
    cyl: &KineticCylinder,
    half_space: bool,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Oscillation
where
    F: Fn(&PhasePoint) -> f64 + Sync + Send,
{
    let d = cyl.center.dim();
    let chunks = parallel::batches(n, OSC_BATCH);
    let parts = parallel::map_indexed(exec, chunks.len(), |b| {
        let (_, len) = chunks[b];
        let mut rng = rng::stream(seed, b as u64);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut w = PhasePoint::origin(d);
        let mut count = 0;
        let mut attempts = 0usize;
        while count < len && attempts < 1000 * len {
            attempts += 1;
            w.t = -rng.random::<f64>();
            unit_ball_point(&mut rng, d, &mut w.x);
            unit_ball_point(&mut rng, d, &mut w.v);
            let z = cyl.from_unit(&w);
            if half_space && z.x_d() > 0.0 {
                continue;
            }
            let val = f(&z);
            if val.is_finite() {
                lo = lo.min(val);
                hi = hi.max(val);
            }
            count += 1;
        }
        (lo, hi, count)
    });
    let (min, max, samples) = parts
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY, 0), |acc, p| (acc.0.min(p.0), acc.1.max(p.1), acc.2 + p.2));
    Oscillation { min, max, samples }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Step used for central-difference Hessians of a graph profile.
pub const PROFILE_FD_STEP: f64 = 1e-5;

/// Domain `{x_d <= P(x')}` described locally as the subgraph of a profile.
pub struct GraphDomain {
    dim: usize,
    profile: ScalarFn,
    gradient: VectorFn,
    hessian: Option<MatrixFn>,
    fd_hessian: bool,
    pub validity_radius: f64,
}

impl std::fmt::Debug for GraphDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphDomain")
            .field("dim", &self.dim)
            .field("analytic_hessian", &self.hessian.is_some())
            .field("fd_hessian", &self.fd_hessian)
            .field("validity_radius", &self.validity_radius)
            .finish()
    }
}

impl GraphDomain {
    /// `dim` is the spatial dimension `d`; the profile acts on `R^(d-1)`.
    pub fn new(
        dim: usize,
        profile: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        validity_radius: f64,
    ) -> Self {
        Self {
            dim,
            profile: Box::new(profile),
            gradient: Box::new(gradient),
            hessian: None,
            fd_hessian: false,
            validity_radius,
        }
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }

    /// Allows second derivatives by central differences of the gradient.
    pub fn with_fd_hessian(mut self) -> Self {
        self.fd_hessian = true;
        self
    }

    /// The flat boundary `x_d = 0`.
    pub fn flat(dim: usize) -> Self {
        let m = dim - 1;
        Self::new(dim, |_| 0.0, move |_| vec![0.0; m], f64::INFINITY)
            .with_hessian(move |_| DMatrix::zeros(m, m))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self, xp: &[f64]) -> f64 {
        (self.profile)(xp)
    }

    pub fn hessian(&self, xp: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.dim - 1;
        if let Some(h) = &self.hessian {
            return Ok(h(xp));
        }
        if !self.fd_hessian {
            return Err(KfpError::InvalidArgument("graph profile provides no second derivatives".into()));
        }
        let mut h = DMatrix::zeros(m, m);
        let mut p = xp.to_vec();
        for j in 0..m {
            p[j] = xp[j] + PROFILE_FD_STEP;
            let gp = (self.gradient)(&p);
            p[j] = xp[j] - PROFILE_FD_STEP;
            let gm = (self.gradient)(&p);
            p[j] = xp[j];
            for i in 0..m {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * PROFILE_FD_STEP);
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Jacobian `P'` of the flattening map `(x', x_d) -> (x', x_d - P(x'))`.
    pub fn jacobian(&self, xp: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let g = (self.gradient)(xp);
        let mut j = DMatrix::identity(d, d);
        for (i, gi) in g.iter().enumerate() {
            j[(d - 1, i)] = -gi;
        }
        j
    }
}

/// Coefficients after boundary flattening.
#[derive(Debug, Clone)]
pub struct Flattened {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DVector<f64>,
    pub z_hat: PhasePoint,
    pub jacobian: DMatrix<f64>,
    /// `C_Ω = max(|P'|^2, |P'^-1|^2)` in spectral norm at this point.
    pub chart_constant: f64,
}

/// Transforms `(A, B, z)` under the flattening chart of `dom`:
/// `ẑ = (t, P(x), P'v)`, `Â = P' A P'^T`, `B̂ = P'B - v⊗v : D²P`.
pub fn flatten_coefficients(
    dom: &GraphDomain,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &PhasePoint,
) -> Result<Flattened> {
    let d = dom.dim;
    if z.dim() != d {
        return Err(KfpError::DimensionMismatch { expected: d, got: z.dim() });
    }
    if a.nrows() != d || a.ncols() != d || b.len() != d {
        return Err(KfpError::DimensionMismatch { expected: d, got: a.nrows() });
    }
    let xp = &z.x[..d - 1];
    if norm(xp) > dom.validity_radius {
        return Err(KfpError::OutsideChart(format!("|x'| = {} exceeds chart radius {}", norm(xp), dom.validity_radius)));
    }
    let hess = dom.hessian(xp)?;
    let jac = dom.jacobian(xp);

    let mut y = z.x.clone();
    y[d - 1] = z.x[d - 1] - dom.profile(xp);
    let v = DVector::from_column_slice(&z.v);
    let w = &jac * &v;

    let a_hat = &jac * a * jac.transpose();
    let a_hat = (&a_hat + a_hat.transpose()) * 0.5;

    // Only the last component of P is nonlinear: D²P_d = -D²P(x').
    let vp = DVector::from_column_slice(&z.v[..d - 1]);
    let curvature = (vp.transpose() * &hess * &vp)[(0, 0)];
    let mut b_hat = &jac * b;
    b_hat[d - 1] += curvature;

    let mut inv = jac.clone();
    for i in 0..d - 1 {
        inv[(d - 1, i)] = -jac[(d - 1, i)];
    }
    let s_fwd = jac.clone().svd(false, false).singular_values.max();
    let s_inv = inv.svd(false, false).singular_values.max();
    let chart_constant = (s_fwd * s_fwd).max(s_inv * s_inv).max(1.0);

    Ok(Flattened {
        a_hat,
        b_hat,
        z_hat: PhasePoint { t: z.t, x: y, v: w.iter().copied().collect() },
        jacobian: jac,
        chart_constant,
    })
}

/// Eigenvalue range of a symmetric matrix.
pub fn symmetric_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let e = m.clone().symmetric_eigen().eigenvalues;
    (e.min(), e.max())
}
