//! The explicit stationary solution `ψ(x, v) = (-x)^{1/6} Υ(-v³/(9x))` of
//! `v ∂_x ψ = ∂_v² ψ` on the half-line `x <= 0`, its profile `Υ`, and the
//! region classification near the grazing point.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gamma::{gamma_fn, rgamma};
use super::hypergeometric::{kummer_m, tricomi_u, u_asymptotic_scaled};
use crate::error::{KfpError, Result};
use crate::parallel::{self, Execution};
use crate::rng;

const A_POS: f64 = -1.0 / 6.0;
const A_NEG: f64 = 5.0 / 6.0;
const B: f64 = 2.0 / 3.0;

/// Below this `|τ|`, `Υ` is evaluated from one entire-function expression
/// valid on both sides of zero.
pub const SMOOTH_LIMIT: f64 = 4.0;
const ASYMPTOTIC_FROM: f64 = 30.0;

struct Coefficients {
    c0: f64,
    c1: f64,
}

fn coefficients() -> &'static Coefficients {
    static C: OnceLock<Coefficients> = OnceLock::new();
    C.get_or_init(|| Coefficients {
        c0: gamma_fn(1.0 / 3.0).expect("regular point") * rgamma(1.0 / 6.0),
        c1: gamma_fn(-1.0 / 3.0).expect("regular point") * rgamma(-1.0 / 6.0),
    })
}

/// `Υ(0) = Γ(1/3)/Γ(1/6)`.
pub fn upsilon_zero() -> f64 {
    coefficients().c0
}

/// Coefficient of the `τ^{1/3}` component of `Υ`, `Γ(-1/3)/Γ(-1/6)`.
///
/// Because of this component `Υ'` is unbounded at `τ = 0`, while `Υ` is a
/// smooth function of `s = τ^{1/3}` with `dΥ/ds(0)` equal to this value.
pub fn upsilon_cbrt_coefficient() -> f64 {
    coefficients().c1
}

/// `Υ` from its literal two-branch definition:
/// `U(-1/6, 2/3, τ)` for `τ >= 0` and `(e^τ/6) U(5/6, 2/3, -τ)` for `τ <= 0`.
pub fn upsilon_branches(tau: f64) -> Result<f64> {
    if tau >= 0.0 {
        tricomi_u(A_POS, B, tau)
    } else {
        Ok(tau.exp() / 6.0 * tricomi_u(A_NEG, B, -tau)?)
    }
}

/// `c0 M(-1/6, 2/3, τ) + c1 τ^{1/3} M(1/6, 4/3, τ)`, valid for all real `τ`.
fn upsilon_entire(tau: f64) -> f64 {
    let c = coefficients();
    c.c0 * kummer_m(A_POS, B, tau) + c.c1 * tau.cbrt() * kummer_m(1.0 / 6.0, 4.0 / 3.0, tau)
}

/// The profile `Υ(τ)`, strictly positive on the real line.
pub fn upsilon(tau: f64) -> Result<f64> {
    if tau.is_nan() {
        return Err(KfpError::Domain("Υ of NaN".into()));
    }
    if tau.abs() <= SMOOTH_LIMIT {
        Ok(upsilon_entire(tau))
    } else {
        upsilon_branches(tau)
    }
}

/// `ln Υ(τ)`, finite far beyond the range where `Υ` underflows.
pub fn ln_upsilon(tau: f64) -> Result<f64> {
    if tau < -SMOOTH_LIMIT {
        return Ok(tau - 6f64.ln() + tricomi_u(A_NEG, B, -tau)?.ln());
    }
    Ok(upsilon(tau)?.ln())
}

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 || x.is_nan() {
        return Err(KfpError::Domain(format!("ψ is defined on x <= 0, got x = {x}")));
    }
    Ok(())
}

/// Boundary value `9^{-1/6} √v` for `v > 0`, zero otherwise.
pub fn psi_boundary(v: f64) -> f64 {
    if v > 0.0 {
        9f64.powf(-1.0 / 6.0) * v.sqrt()
    } else {
        0.0
    }
}

/// `ψ(x, v) = (-x)^{1/6} Υ(-v³/(9x))`, continuously extended to `x = 0`.
pub fn psi_exact(x: f64, v: f64) -> Result<f64> {
    check_x(x)?;
    if x == 0.0 {
        return Ok(psi_boundary(v));
    }
    let tau = -v * v * v / (9.0 * x);
    if tau >= ASYMPTOTIC_FROM {
        // (-x)^{1/6} τ^{1/6} = (v³/9)^{1/6}; keeps τ -> ∞ finite
        return Ok((v * v * v / 9.0).powf(1.0 / 6.0) * u_asymptotic_scaled(A_POS, B, tau));
    }
    Ok((-x).powf(1.0 / 6.0) * upsilon(tau)?)
}

/// `ln ψ(x, v)`; `-∞` where `ψ` vanishes.
pub fn ln_psi(x: f64, v: f64) -> Result<f64> {
    check_x(x)?;
    if x == 0.0 {
        return Ok(psi_boundary(v).ln());
    }
    let tau = -v * v * v / (9.0 * x);
    if tau >= ASYMPTOTIC_FROM {
        return Ok(psi_exact(x, v)?.ln());
    }
    Ok((-x).ln() / 6.0 + ln_upsilon(tau)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionTag {
    R0,
    Rplus,
    Rminus,
    Outside,
}

impl RegionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionTag::R0 => "R0",
            RegionTag::Rplus => "Rplus",
            RegionTag::Rminus => "Rminus",
            RegionTag::Outside => "outside",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiRegion {
    pub tag: RegionTag,
    pub c_star: f64,
}

/// Classifies `(x, v)` in the unit box into the asymptotic regions of `ψ`.
///
/// The three regions are taken literally, so `R0` only contains `v >= 0`.
/// The incoming wedge `{v < 0, |c* v|³ < -x}` belongs to none of them and
/// is tagged `Outside`, like points outside the unit box. Ties resolve as
/// `R0 > Rplus > Rminus`.
pub fn classify_region(x: f64, v: f64, c_star: f64) -> PsiRegion {
    let tag = if !((-1.0..=0.0).contains(&x) && v.abs() <= 1.0) {
        RegionTag::Outside
    } else {
        let cv3 = (c_star * v).powi(3);
        if cv3 >= 0.0 && cv3 <= -x {
            RegionTag::R0
        } else if cv3 >= 0.0 && -x <= cv3 {
            RegionTag::Rplus
        } else if -x > 0.0 && -x <= -cv3 {
            RegionTag::Rminus
        } else {
            RegionTag::Outside
        }
    };
    PsiRegion { tag, c_star }
}

/// Empirical bounds `c <= ψ / reference <= C` on one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBounds {
    pub region: RegionTag,
    pub samples: usize,
    pub lower: f64,
    pub upper: f64,
    /// `C / c`.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub c_star: f64,
    pub regions: Vec<RegionBounds>,
    /// Spread on `R-` against the reference `√|v| e^τ` without the `1/|τ|`
    /// factor; grows without bound as the sample approaches `x = 0`.
    pub rminus_spread_without_tau_factor: f64,
}

impl Comparability {
    pub fn max_spread(&self) -> f64 {
        self.regions.iter().map(|r| r.spread).fold(0.0, f64::max)
    }
}

/// Spread bound used to calibrate `c*`.
pub const COMPARABILITY_BOUND: f64 = 10.0;

/// Reference profiles (as logarithms) for the three regions. The `R-`
/// reference carries the `1/|τ|` factor from `U(5/6, 2/3, s) ~ s^{-5/6}`.
fn ln_reference(tag: RegionTag, x: f64, v: f64) -> f64 {
    match tag {
        RegionTag::R0 => (-x).ln() / 6.0,
        RegionTag::Rplus => 0.5 * v.ln(),
        _ => {
            let tau = -v * v * v / (9.0 * x);
            0.5 * v.abs().ln() + tau - tau.abs().ln()
        }
    }
}

fn sample_region<R: Rng>(rng: &mut R, tag: RegionTag, c: f64) -> (f64, f64) {
    match tag {
        RegionTag::R0 => {
            let v: f64 = rng.random_range(0.0..=1.0);
            let edge = (c * v).powi(3);
            (-(edge + rng.random::<f64>() * (1.0 - edge)), v)
        }
        RegionTag::Rplus => {
            let v = 1.0 - rng.random::<f64>();
            (-rng.random::<f64>() * (c * v).powi(3), v)
        }
        _ => {
            let v = -(1.0 - rng.random::<f64>());
            (-(1.0 - rng.random::<f64>()) * (c * v).abs().powi(3), v)
        }
    }
}

/// Samples `n` points in each region and reports the comparability spreads.
pub fn comparability(c_star: f64, n: usize, seed: u64, exec: Execution) -> Result<Comparability> {
    if !(c_star > 0.0 && c_star < 1.0) {
        return Err(KfpError::InvalidArgument(format!("c* must lie in (0,1), got {c_star}")));
    }
    let tags = [RegionTag::R0, RegionTag::Rplus, RegionTag::Rminus];
    let mut regions = Vec::new();
    let mut literal_spread = 0.0;
    for (ti, &tag) in tags.iter().enumerate() {
        let chunks = parallel::batches(n, 1024);
        let parts = parallel::map_indexed(exec, chunks.len(), |bi| {
            let mut rng = rng::stream(rng::derive_seed(seed, ti as u64), bi as u64);
            let mut acc = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for _ in 0..chunks[bi].1 {
                let (x, v) = sample_region(&mut rng, tag, c_star);
                let lp = ln_psi(x, v).expect("x <= 0 by construction");
                let r = lp - ln_reference(tag, x, v);
                acc.0 = acc.0.min(r);
                acc.1 = acc.1.max(r);
                if tag == RegionTag::Rminus {
                    let tau = -v * v * v / (9.0 * x);
                    let p = lp - 0.5 * v.abs().ln() - tau;
                    acc.2 = acc.2.min(p);
                    acc.3 = acc.3.max(p);
                }
            }
            acc
        });
        let (lo, hi, plo, phi) = parts.into_iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |a, p| (a.0.min(p.0), a.1.max(p.1), a.2.min(p.2), a.3.max(p.3)),
        );
        if tag == RegionTag::Rminus {
            literal_spread = (phi - plo).exp();
        }
        regions.push(RegionBounds { region: tag, samples: n, lower: lo.exp(), upper: hi.exp(), spread: (hi - lo).exp() });
    }
    Ok(Comparability { c_star, regions, rminus_spread_without_tau_factor: literal_spread })
}

/// Largest `c* = 2^{-k}` whose comparability spreads all stay below
/// [`COMPARABILITY_BOUND`].
pub fn calibrate_c_star(n: usize, seed: u64, exec: Execution) -> Result<Comparability> {
    for k in 1..=16 {
        let c = 0.5f64.powi(k);
        let rep = comparability(c, n, seed, exec)?;
        if rep.max_spread() <= COMPARABILITY_BOUND {
            return Ok(rep);
        }
    }
    Err(KfpError::InsufficientData("no dyadic c* down to 2^-16 meets the comparability bound".into()))
}
