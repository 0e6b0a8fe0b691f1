//! Feynman–Kac Monte Carlo: time-reversed characteristics stopped on the
//! kinetic boundary of the computational box.
//!
//! Along the backward clock `τ`, `X` moves with `dX = -V dτ` and
//! `dV = B dτ + √(2A) dW`; with this drift `f(t - τ, X, V) + ∫S` is a
//! martingale for solutions of `∂t f + v ∂x f = A ∂v² f + B ∂v f + S`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BoundaryData, HalfSpaceGrid};
use crate::certifier::CoefficientField;
use crate::error::{KfpError, Result};
use crate::geometry::PhasePoint;
use crate::parallel::{map_indexed, Execution};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n_particles: usize,
    pub seed: u64,
    /// Backward time step; `None` uses `1e-4` of each point's horizon.
    pub dt_mc: Option<f64>,
    pub exec: Execution,
}

impl McOptions {
    pub fn new(n_particles: usize, seed: u64) -> Self {
        Self { n_particles, seed, dt_mc: None, exec: Execution::Parallel }
    }
}

/// Where the particles of one estimate stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExitCounts {
    pub inflow: usize,
    pub far_field: usize,
    pub initial: usize,
    pub truncation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub exits: ExitCounts,
}

enum Exit {
    Inflow,
    FarField,
    Initial,
    Truncation,
}

/// One particle; returns the collected value and how it stopped.
fn walk(
    z: &PhasePoint,
    grid: &HalfSpaceGrid,
    coeff: &CoefficientField,
    bdata: &BoundaryData,
    dt: f64,
    rng: &mut impl rand::Rng,
) -> (f64, Exit) {
    let horizon = z.t - grid.t0;
    let (xm, vm) = (grid.x_max, grid.v_max);
    let mut p = z.clone();
    let (mut tau, mut x, mut v) = (0.0, z.x[0], z.v[0]);
    let mut acc = 0.0;
    loop {
        let h = dt.min(horizon - tau);
        p.t = z.t - tau;
        p.x[0] = x;
        p.v[0] = v;
        let [a, b, s] = coeff.scalar_1d(&p);
        let xi: f64 = StandardNormal.sample(rng);
        let x_new = x - v * h;
        let v_new = v + b * h + (2.0 * a * h).sqrt() * xi;

        // earliest crossing within the step, as a fraction of h
        let mut first: Option<(f64, Exit)> = None;
        let mut consider = |frac: f64, e: Exit| {
            if first.as_ref().is_none_or(|(f, _)| frac < *f) {
                first = Some((frac, e));
            }
        };
        if x_new > 0.0 {
            consider(x / (x - x_new), Exit::Inflow);
        }
        if x_new < -xm {
            consider((x + xm) / (x - x_new), Exit::FarField);
        }
        if v_new.abs() >= vm {
            let wall = vm.copysign(v_new);
            consider((wall - v) / (v_new - v), Exit::Truncation);
        }
        if let Some((frac, e)) = first {
            let frac = frac.clamp(0.0, 1.0);
            let tc = z.t - (tau + frac * h);
            let xc = x + frac * (x_new - x);
            let vc = v + frac * (v_new - v);
            acc += s * frac * h;
            let g = match e {
                Exit::Inflow => (bdata.inflow)(tc, vc.min(-f64::MIN_POSITIVE)),
                Exit::FarField => (bdata.far_field)(tc, vc.max(f64::MIN_POSITIVE)),
                Exit::Truncation => (bdata.truncation)(tc, xc, vm.copysign(v_new)),
                Exit::Initial => unreachable!(),
            };
            return (g + acc, e);
        }
        acc += s * h;
        tau += h;
        x = x_new;
        v = v_new;
        if tau >= horizon - 1e-15 * horizon.abs().max(1.0) {
            return ((bdata.initial)(x, v) + acc, Exit::Initial);
        }
    }
}

/// Estimates `f` at each query point.
pub fn solve_mc(
    points: &[PhasePoint],
    grid: &HalfSpaceGrid,
    coeff: &CoefficientField,
    bdata: &BoundaryData,
    opts: McOptions,
) -> Result<Vec<McEstimate>> {
    if opts.n_particles == 0 {
        return Err(KfpError::InvalidArgument("n_particles must be positive".into()));
    }
    if let Some(dt) = opts.dt_mc {
        if !(dt > 0.0) {
            return Err(KfpError::InvalidArgument(format!("dt_mc must be positive, got {dt}")));
        }
    }
    if coeff.dim != 1 {
        return Err(KfpError::DimensionMismatch { expected: 1, got: coeff.dim });
    }
    let mut out = Vec::with_capacity(points.len());
    for (k, z) in points.iter().enumerate() {
        if z.dim() != 1 {
            return Err(KfpError::DimensionMismatch { expected: 1, got: z.dim() });
        }
        if !(z.t > grid.t0 && z.t <= 0.0 && z.x[0] < 0.0 && z.x[0] > -grid.x_max && z.v[0].abs() < grid.v_max) {
            return Err(KfpError::InvalidArgument(format!("query point {z:?} is not interior")));
        }
        let dt = opts.dt_mc.unwrap_or(1e-4 * (z.t - grid.t0));
        let runs = map_indexed(opts.exec, opts.n_particles, |i| {
            let mut rng = stream(opts.seed, ((k as u64) << 32) | i as u64);
            walk(z, grid, coeff, bdata, dt, &mut rng)
        });
        let n = runs.len() as f64;
        let mut exits = ExitCounts::default();
        let mut mean = 0.0;
        for (g, e) in &runs {
            mean += g;
            match e {
                Exit::Inflow => exits.inflow += 1,
                Exit::FarField => exits.far_field += 1,
                Exit::Initial => exits.initial += 1,
                Exit::Truncation => exits.truncation += 1,
            }
        }
        mean /= n;
        let var = if runs.len() > 1 { runs.iter().map(|(g, _)| (g - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        if !mean.is_finite() {
            return Err(KfpError::NonFinite(format!("Monte Carlo mean at {z:?}")));
        }
        out.push(McEstimate { mean, std_error: (var / n).sqrt(), n: runs.len(), exits });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> HalfSpaceGrid {
        HalfSpaceGrid::new(1.0, 2.0, -0.5, 16, 16, 16).unwrap()
    }

    #[test]
    fn constant_data() {
        let g = grid();
        let z = [PhasePoint::one_d(0.0, -0.3, -0.2), PhasePoint::one_d(-0.1, -0.9, 1.5)];
        let est = solve_mc(&z, &g, &CoefficientField::identity(1), &BoundaryData::constant(1.0), McOptions::new(200, 3)).unwrap();
        for e in &est {
            assert_eq!(e.mean, 1.0);
            assert_eq!(e.std_error, 0.0);
        }
        let est = solve_mc(&z, &g, &CoefficientField::identity(1), &BoundaryData::constant(0.0), McOptions::new(200, 3)).unwrap();
        assert!(est.iter().all(|e| e.mean == 0.0));
    }

    #[test]
    fn source_only_gives_mean_exit_time() {
        // S = 1 and zero data: f = E[stopping time] <= horizon
        let g = grid();
        let coeff = CoefficientField::constant(1, 1.0, 0.0, 1.0).unwrap();
        let z = [PhasePoint::one_d(0.0, -0.5, 0.1)];
        let e = &solve_mc(&z, &g, &coeff, &BoundaryData::constant(0.0), McOptions::new(500, 1)).unwrap()[0];
        assert!(e.mean > 0.0 && e.mean <= 0.5 + 1e-12);
    }

    #[test]
    fn deterministic_under_partitioning() {
        let g = grid();
        let z = [PhasePoint::one_d(0.0, -0.3, -0.2)];
        let bd = BoundaryData::zero_inflow_bump(&g).with_initial(|x, v| x + v);
        let mut o = McOptions::new(300, 11);
        let a = solve_mc(&z, &g, &CoefficientField::identity(1), &bd, o).unwrap();
        o.exec = Execution::Sequential;
        let b = solve_mc(&z, &g, &CoefficientField::identity(1), &bd, o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_options() {
        let g = grid();
        let z = [PhasePoint::one_d(0.0, -0.3, -0.2)];
        let id = CoefficientField::identity(1);
        let bd = BoundaryData::constant(1.0);
        assert!(solve_mc(&z, &g, &id, &bd, McOptions::new(0, 1)).is_err());
        let mut o = McOptions::new(10, 1);
        o.dt_mc = Some(0.0);
        assert!(solve_mc(&z, &g, &id, &bd, o).is_err());
        assert!(solve_mc(&[PhasePoint::one_d(0.0, 0.1, 0.0)], &g, &id, &bd, McOptions::new(10, 1)).is_err());
    }
}
