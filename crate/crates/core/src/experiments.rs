//! Scripted experiments probing the boundary behaviour of solutions, and
//! their JSON/CSV reports.
//!
//! Every experiment first certifies the barrier family it leans on; a failed
//! certificate aborts the run. Results are deterministic in `(config, seed)`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barriers::BarrierMode;
use crate::certifier::{certify, CertifyConfig, Lemma, Verdict};
use crate::config::{GridDefaults, RunConfig};
use crate::error::{KfpError, Result};
use crate::geometry::{fit_holder_exponent, linear_fit, sample_oscillation, KineticCylinder, PhasePoint};
use crate::rng::derive_seed;
use crate::solver::{boundary_profile, solve_grid, BoundaryData, HalfSpaceGrid, SolutionField, SolveOptions};
use crate::special::{ln_psi, psi_exact};

/// Trace values at or below this are left out of logarithmic fits.
pub const TRACE_FLOOR: f64 = 1e-300;
pub const R2_MIN: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Vanishing,
    Gradient,
    Oscillation,
    Holder,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vanishing" => Ok(Self::Vanishing),
            "gradient" => Ok(Self::Gradient),
            "oscillation" => Ok(Self::Oscillation),
            "holder" => Ok(Self::Holder),
            _ => Err(KfpError::InvalidArgument(format!(
                "unknown experiment `{s}` (vanishing | gradient | oscillation | holder)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vanishing => "vanishing",
            Self::Gradient => "gradient",
            Self::Oscillation => "oscillation",
            Self::Holder => "holder",
        }
    }

    /// The boundary-regularity statement this experiment probes.
    pub fn claim(self) -> &'static str {
        match self {
            Self::Vanishing => {
                "infinite-order vanishing at incoming points with zero inflow: \
                 |f| <= exp(1 - c |n.v0|^3 / dist); the rate of log|f| in 1/|x| scales like |v|^3"
            }
            Self::Gradient => {
                "Lipschitz bound at incoming points where the data vanish: \
                 |f(z)| <= C (|t - t0| + |x - x0| + |v - v0|)"
            }
            Self::Oscillation => {
                "oscillation decay osc(G_{r/2}) <= delta osc(G_r) with delta < 1 at the grazing point; \
                 sharp kinetic Hölder exponent 1/2 of the explicit stationary solution"
            }
            Self::Holder => {
                "interior-type smoothness away from the grazing set; difference quotients \
                 may grow without bound only at grazing"
            }
        }
    }

    fn lemma(self) -> Lemma {
        match self {
            Self::Vanishing => Lemma::BarrierSs,
            Self::Gradient => Lemma::PhaseProp,
            Self::Oscillation => Lemma::BarrierG,
            Self::Holder => Lemma::Hypodist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentVerdict {
    Pass,
    ClaimBandFail,
    CertificateFail,
    Degenerate,
}

impl ExperimentVerdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::ClaimBandFail => 2,
            Self::CertificateFail => 3,
            Self::Degenerate => 4,
        }
    }
}

/// One least-squares line `y = slope x + intercept` and the points it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub label: String,
    pub x: String,
    pub y: String,
    pub points: Vec<[f64; 2]>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Samples dropped (trace at or below the floor).
    pub excluded: usize,
}

impl FitRecord {
    fn new(label: impl Into<String>, x: &str, y: &str, points: Vec<[f64; 2]>, excluded: usize) -> Result<Self> {
        let label = label.into();
        if points.len() < 3 {
            return Err(KfpError::InsufficientData(format!(
                "fit `{label}` has {} usable points ({excluded} excluded)",
                points.len()
            )));
        }
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
        Ok(Self { label, x: x.into(), y: y.into(), points, slope, intercept, r_squared, excluded })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub passed: bool,
}

impl BandCheck {
    pub fn new(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, lo, hi, passed: value >= lo && value <= hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub lemma: Lemma,
    pub mode: BarrierMode,
    pub r_tilde: f64,
    pub v_tilde_d: f64,
    pub samples: usize,
    pub violations: usize,
    pub min_margin: Option<f64>,
    pub theta0_used: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traceability {
    pub experiment: String,
    pub claim: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub traceability: Traceability,
    pub mode: String,
    pub inputs: serde_json::Value,
    pub seed: u64,
    pub certificates: Vec<CertificateSummary>,
    pub fits: Vec<FitRecord>,
    pub quantities: BTreeMap<String, f64>,
    pub bands: Vec<BandCheck>,
    pub flags: Vec<String>,
    pub verdict: ExperimentVerdict,
    pub wall_ms: f64,
    /// SHA-256 of the report with `wall_ms` and `hash` blanked.
    pub hash: String,
}

impl ExperimentReport {
    fn new(kind: ExperimentKind, cfg: &RunConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            experiment: kind,
            traceability: Traceability { experiment: kind.as_str().into(), claim: kind.claim().into() },
            mode: cfg.mode.clone(),
            inputs: serde_json::to_value(cfg)?,
            seed,
            certificates: Vec::new(),
            fits: Vec::new(),
            quantities: BTreeMap::new(),
            bands: Vec::new(),
            flags: Vec::new(),
            verdict: ExperimentVerdict::Pass,
            wall_ms: 0.0,
            hash: String::new(),
        })
    }

    /// Records a finite quantity; non-finite values become flags so the
    /// JSON stays lossless.
    fn put(&mut self, key: impl Into<String>, value: f64) {
        let key = key.into();
        if value.is_finite() {
            self.quantities.insert(key, value);
        } else {
            self.flags.push(format!("{key} is not finite ({value})"));
        }
    }

    fn band(&mut self, name: impl Into<String>, value: f64, lo: f64, hi: f64) {
        self.bands.push(BandCheck::new(name, value, lo, hi));
    }

    pub fn compute_hash(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        r.hash = String::new();
        let bytes = serde_json::to_vec(&r)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    fn finish(mut self, start: Instant) -> Result<Self> {
        if self.verdict == ExperimentVerdict::Pass && self.bands.iter().any(|b| !b.passed) {
            self.verdict = ExperimentVerdict::ClaimBandFail;
        }
        self.hash = self.compute_hash()?;
        self.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(self)
    }

    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(KfpError::InvalidArgument(format!("unknown report format `{s}` (json | csv)"))),
        }
    }
}

pub const CSV_HEADER: &str = "experiment,fit,x,y";

/// Writes `<dir>/<experiment>.json` or `<dir>/<experiment>.csv` (one row
/// per fitted point) and returns the path.
pub fn write_report(report: &ExperimentReport, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let name = report.experiment.as_str();
    match format {
        ReportFormat::Json => {
            let path = dir.join(format!("{name}.json"));
            let mut w = BufWriter::new(File::create(&path)?);
            serde_json::to_writer_pretty(&mut w, report)?;
            writeln!(w)?;
            w.flush()?;
            Ok(path)
        }
        ReportFormat::Csv => {
            let path = dir.join(format!("{name}.csv"));
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "{CSV_HEADER}")?;
            for fit in &report.fits {
                for p in &fit.points {
                    writeln!(w, "{name},{},{},{}", fit.label, p[0], p[1])?;
                }
            }
            w.flush()?;
            Ok(path)
        }
    }
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

/// Runs one experiment end to end.
pub fn run_experiment(kind: ExperimentKind, cfg: &RunConfig, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut rep = ExperimentReport::new(kind, cfg, seed)?;
    let cert_velocities: Vec<f64> = match kind {
        ExperimentKind::Vanishing => cfg.velocities.clone(),
        _ => vec![cfg.probe_velocity],
    };
    for (k, &v) in cert_velocities.iter().enumerate() {
        let mut cc = CertifyConfig::new(kind.lemma(), cfg.cert_r_tilde, v);
        cc.samples = cfg.cert_samples;
        cc.seed = derive_seed(seed, k as u64);
        cc.exec = cfg.exec();
        let r = certify(&cc, &crate::certifier::CoefficientField::identity(1));
        rep.certificates.push(CertificateSummary {
            lemma: r.lemma,
            mode: r.mode,
            r_tilde: cfg.cert_r_tilde,
            v_tilde_d: v,
            samples: r.samples,
            violations: r.violations,
            min_margin: r.min_margin.is_finite().then_some(r.min_margin),
            theta0_used: r.theta0_used,
            verdict: r.verdict,
        });
    }
    if rep.certificates.iter().any(|c| c.verdict != Verdict::Pass) {
        rep.verdict = ExperimentVerdict::CertificateFail;
        rep.flags.push("barrier certificate did not pass; experiment aborted".into());
        return rep.finish(start);
    }
    match kind {
        ExperimentKind::Vanishing => vanishing(cfg, &mut rep)?,
        ExperimentKind::Gradient => gradient(cfg, &mut rep)?,
        ExperimentKind::Oscillation => oscillation(cfg, seed, &mut rep)?,
        ExperimentKind::Holder => holder(cfg, &mut rep)?,
    }
    rep.finish(start)
}

fn key(name: &str, v: f64) -> String {
    format!("{name}[{v}]")
}

fn all_zero(sol: &SolutionField) -> bool {
    sol.data.iter().all(|&y| y == 0.0)
}

/// Rate `-d log|f| / d(1/|x|)` over `|v|³/|x| ∈ [lo, hi]`.
fn rate_fit(label: String, samples: &[(f64, f64)], v_abs3: f64, lo: f64, hi: f64) -> Result<FitRecord> {
    let mut pts = Vec::new();
    let mut excluded = 0;
    for &(x, f) in samples {
        let q = v_abs3 / x.abs();
        if !(lo..=hi).contains(&q) {
            continue;
        }
        if f.abs() <= TRACE_FLOOR {
            excluded += 1;
            continue;
        }
        pts.push([1.0 / x.abs(), f.abs().ln()]);
    }
    FitRecord::new(label, "1/|x|", "ln|f|", pts, excluded)
}

fn vanishing_grid(cfg: &RunConfig) -> Result<HalfSpaceGrid> {
    let vmax = cfg.velocities.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    cfg.grid(GridDefaults { x_max: 0.6, v_max: (4.0 * vmax).max(3.2), t0: -0.5, n_x: 1024, n_v: 128 })
}

/// Per-velocity rate fits of one solver field; returns `(|v| on the grid, fit)`.
fn solver_rates(sol: &SolutionField, cfg: &RunConfig, tag: &str) -> Result<Vec<(f64, FitRecord)>> {
    let g = &sol.grid;
    let mut out = Vec::new();
    for &v in &cfg.velocities {
        let prof = boundary_profile(sol, v)?;
        let j = (((v + g.v_max) / g.dv() - 0.5).round().max(0.0) as usize).min(g.n_v - 1);
        let vs = g.v_at(j).abs();
        let fit = rate_fit(format!("{tag}rate v={v}"), &prof, vs.powi(3), cfg.fit_lo, cfg.fit_hi)?;
        out.push((vs, fit));
    }
    Ok(out)
}

fn power_fit(label: &str, rates: &[(f64, FitRecord)]) -> Result<FitRecord> {
    let pts = rates.iter().filter(|(_, f)| f.slope < 0.0).map(|(v, f)| [v.ln(), (-f.slope).ln()]).collect::<Vec<_>>();
    let dropped = rates.len() - pts.len();
    if pts.len() < 2 {
        return Err(KfpError::InsufficientData(format!("power fit needs two decaying traces, have {}", pts.len())));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(FitRecord {
        label: label.into(),
        x: "ln|v|".into(),
        y: "ln rate".into(),
        points: pts,
        slope,
        intercept,
        r_squared,
        excluded: dropped,
    })
}

fn vanishing(cfg: &RunConfig, rep: &mut ExperimentReport) -> Result<()> {
    if cfg.velocities.len() < 2 || cfg.velocities.iter().any(|&v| !(v < 0.0)) {
        return Err(KfpError::Config("vanishing needs at least two negative velocities".into()));
    }
    if !(cfg.fit_lo > 0.0 && cfg.fit_hi > cfg.fit_lo) {
        return Err(KfpError::Config(format!("bad fit window [{}, {}]", cfg.fit_lo, cfg.fit_hi)));
    }
    let rates = match cfg.mode.as_str() {
        "exact" => exact_rates(cfg, rep)?,
        "solver" => {
            let grid = vanishing_grid(cfg)?;
            let vmax = cfg.velocities.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if grid.v_max < 4.0 * vmax {
                rep.flags.push(format!("v_max = {} is below 4 max|v| = {}", grid.v_max, 4.0 * vmax));
            }
            let coeff = cfg.coefficient_field(&grid)?;
            let bd = cfg.boundary_data(&grid, "bump")?;
            let sol = solve_grid(&grid, &coeff, &bd, SolveOptions { snapshots: 2, exec: cfg.exec() })?;
            if all_zero(&sol) {
                rep.verdict = ExperimentVerdict::Degenerate;
                rep.flags.push("solution is identically zero".into());
                return Ok(());
            }
            rep.put("dx", grid.dx());
            rep.put("dv", grid.dv());
            rep.put("n_t", grid.n_t as f64);
            let rates = solver_rates(&sol, cfg, "")?;
            if cfg.truncation_check {
                truncation_check(cfg, &grid, &rates, rep)?;
            }
            rates
        }
        other => return Err(KfpError::Config(format!("unknown mode `{other}` (solver | exact)"))),
    };
    for (&v, (vs, fit)) in cfg.velocities.iter().zip(&rates) {
        rep.put(key("velocity_on_grid", v), -vs);
        rep.put(key("rate", v), -fit.slope);
        rep.put(key("rate_ratio", v), -fit.slope * 9.0 / vs.powi(3));
        rep.band(format!("r2 {}", fit.label), fit.r_squared, R2_MIN, 1.0);
    }
    let p = power_fit("power", &rates)?;
    rep.put("power", p.slope);
    rep.band("power p", p.slope, 2.5, 3.5);
    if p.points.len() > 2 {
        rep.band("r2 power", p.r_squared, R2_MIN, 1.0);
    }
    rep.fits.extend(rates.into_iter().map(|(_, f)| f));
    rep.fits.push(p);
    Ok(())
}

/// `ln ψ` sampled uniformly in `1/|x|` across the window (no solver).
fn exact_rates(cfg: &RunConfig, rep: &mut ExperimentReport) -> Result<Vec<(f64, FitRecord)>> {
    const N: usize = 64;
    let sample = |v: f64, lo: f64, hi: f64| -> Result<Vec<(f64, f64)>> {
        let a = v.abs().powi(3);
        (0..N)
            .map(|k| {
                let u = (lo + (hi - lo) * k as f64 / (N - 1) as f64) / a;
                let x = -1.0 / u;
                Ok((x, ln_psi(x, v)?.exp()))
            })
            .collect()
    };
    let mut out = Vec::new();
    for &v in &cfg.velocities {
        let a = v.abs().powi(3);
        let fit = rate_fit(format!("exact rate v={v}"), &sample(v, cfg.fit_lo, cfg.fit_hi)?, a, cfg.fit_lo, cfg.fit_hi)?;
        rep.band(format!("rate*9/|v|^3 v={v}"), -fit.slope * 9.0 / a, 0.98, 1.02);
        // diagnostics: deeper decade, and a fit that allows the |x| prefactor
        let deep = rate_fit(String::new(), &sample(v, 10.0 * cfg.fit_lo, 10.0 * cfg.fit_hi)?, a, 10.0 * cfg.fit_lo, 10.0 * cfg.fit_hi)?;
        rep.put(key("deep_window_rate_ratio", v), -deep.slope * 9.0 / a);
        for (name, lo, hi) in [("prefactor_rate_ratio", cfg.fit_lo, cfg.fit_hi), ("deep_prefactor_rate_ratio", 10.0 * cfg.fit_lo, 10.0 * cfg.fit_hi)] {
            let pts: Vec<(f64, f64)> = sample(v, lo, hi)?.into_iter().map(|(x, f)| (x, f / x.abs())).collect();
            let corr = rate_fit(String::new(), &pts, a, lo, hi)?;
            rep.put(key(name, v), -corr.slope * 9.0 / a);
        }
        out.push((v.abs(), fit));
    }
    Ok(out)
}

/// Reruns with `2V` (same `Δv`) and compares fitted rates.
fn truncation_check(cfg: &RunConfig, grid: &HalfSpaceGrid, rates: &[(f64, FitRecord)], rep: &mut ExperimentReport) -> Result<()> {
    let wide = match cfg.n_t {
        Some(n_t) => HalfSpaceGrid::new(grid.x_max, 2.0 * grid.v_max, grid.t0, grid.n_x, 2 * grid.n_v, 2 * n_t)?,
        None => HalfSpaceGrid::with_cfl(grid.x_max, 2.0 * grid.v_max, grid.t0, grid.n_x, 2 * grid.n_v, cfg.cfl)?,
    };
    let coeff = cfg.coefficient_field(&wide)?;
    let bd = cfg.boundary_data(&wide, "bump")?;
    let sol = solve_grid(&wide, &coeff, &bd, SolveOptions { snapshots: 2, exec: cfg.exec() })?;
    let wide_rates = solver_rates(&sol, cfg, "2V ")?;
    let mut worst = 0.0f64;
    for ((_, a), (_, b)) in rates.iter().zip(&wide_rates) {
        worst = worst.max((b.slope / a.slope - 1.0).abs());
    }
    rep.put("truncation_max_rate_change", worst);
    rep.band("truncation V vs 2V rate change", worst, 0.0, 0.05);
    rep.fits.extend(wide_rates.into_iter().map(|(_, f)| f));
    Ok(())
}

fn log_log(label: &str, x: &str, pts: impl IntoIterator<Item = (f64, f64)>) -> Result<FitRecord> {
    let mut out = Vec::new();
    let mut excluded = 0;
    for (d, f) in pts {
        if f.abs() <= TRACE_FLOOR || d <= 0.0 {
            excluded += 1;
        } else {
            out.push([d.ln(), f.abs().ln()]);
        }
    }
    FitRecord::new(label, x, "ln|f - f0|", out, excluded)
}

fn gradient(cfg: &RunConfig, rep: &mut ExperimentReport) -> Result<()> {
    if !(cfg.probe_velocity < 0.0) {
        return Err(KfpError::Config("probe_velocity must be incoming (negative)".into()));
    }
    let grid = cfg.grid(GridDefaults { x_max: 0.25, v_max: 2.4, t0: -0.25, n_x: 1024, n_v: 128 })?;
    let jp = (((cfg.probe_velocity + grid.v_max) / grid.dv() - 0.5).round().max(0.0) as usize).min(grid.n_v - 1);
    let vp = grid.v_at(jp);
    if !(vp < 0.0) || jp + 8 >= grid.n_v / 2 {
        return Err(KfpError::Config(format!("probe velocity {vp} leaves no room for velocity offsets")));
    }
    rep.put("probe_velocity_on_grid", vp);
    // the data vanish linearly at the probe: f = (v - vp) - t
    let coeff = cfg.coefficient_field_with_source(&grid, 1.0)?;
    let bd = if cfg.boundary == "auto" {
        BoundaryData::from_field(format!("linear(v - {vp}) - t"), move |t, _, v| (v - vp) - t, &grid)
    } else {
        cfg.boundary_data(&grid, "zero")?
    };
    let snaps = 65;
    let sol = solve_grid(&grid, &coeff, &bd, SolveOptions { snapshots: snaps, exec: cfg.exec() })?;
    if all_zero(&sol) {
        rep.verdict = ExperimentVerdict::Degenerate;
        rep.flags.push("solution is identically zero".into());
        return Ok(());
    }
    let (nx, dx, dv) = (grid.n_x, grid.dx(), grid.dv());
    let i1 = nx - 1;
    let at = |k: usize, i: usize, j: usize| sol.slice(k)[i * grid.n_v + j];
    let last = sol.n_slices() - 1;

    let xs = (0..nx).filter(|&i| (4.0 * dx..=32.0 * dx).contains(&grid.x_at(i).abs()));
    let fx = log_log("x-offset", "ln|x - x0|", xs.map(|i| (grid.x_at(i).abs(), at(last, i, jp))))?;
    let f0 = at(last, i1, jp);
    let fv = log_log("v-offset", "ln|v - v0|", (1..=8).map(|k| (k as f64 * dv, at(last, i1, jp + k) - f0)))?;
    let ft = log_log(
        "t-offset",
        "ln|t - t0|",
        (1..=8).filter(|&k| k <= last).map(|k| (-sol.times[last - k], at(last - k, i1, jp) - f0)),
    )?;
    for (name, fit) in [("x", &fx), ("v", &fv)] {
        rep.put(format!("exponent_{name}"), fit.slope);
        rep.band(format!("{name}-offset exponent"), fit.slope, 0.8, 1.2);
        rep.band(format!("r2 {name}-offset"), fit.r_squared, R2_MIN, 1.0);
    }
    rep.put("exponent_t", ft.slope);
    rep.fits.extend([fx, fv, ft]);
    Ok(())
}

/// `osc(G_r)` at `r0 2^{-k}`, `k = 0..=levels`, all levels sharing one
/// sample set (scaled), so exact homogeneity shows up exactly.
fn oscillations<F>(f: F, cfg: &RunConfig, seed: u64) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&PhasePoint) -> f64 + Sync + Send,
{
    let mut out = Vec::new();
    for k in 0..=cfg.osc_levels {
        let r = cfg.osc_radius * 0.5f64.powi(k as i32);
        let cyl = KineticCylinder::new(PhasePoint::origin(1), r)?;
        let o = sample_oscillation(&f, &cyl, true, cfg.osc_samples, seed, cfg.exec());
        out.push((r, o.value()));
    }
    Ok(out)
}

fn oscillation(cfg: &RunConfig, seed: u64, rep: &mut ExperimentReport) -> Result<()> {
    if !(cfg.osc_radius > 0.0) || cfg.osc_levels < 2 {
        return Err(KfpError::Config("oscillation needs osc_radius > 0 and osc_levels >= 2".into()));
    }
    let r0 = cfg.osc_radius;
    let osc_seed = derive_seed(seed, 0x05C);
    let osc = match cfg.mode.as_str() {
        "exact" => oscillations(|z: &PhasePoint| psi_exact(z.x[0].min(0.0), z.v[0]).unwrap_or(f64::NAN), cfg, osc_seed)?,
        "solver" => {
            let grid = cfg.grid(GridDefaults {
                x_max: 1.25 * r0.powi(3),
                v_max: 2.0 * r0,
                t0: -1.25 * r0 * r0,
                n_x: 1024,
                n_v: 256,
            })?;
            if grid.x_max < r0.powi(3) || grid.v_max < r0 || -grid.t0 < r0 * r0 {
                return Err(KfpError::Config(format!("grid does not contain G_{r0}")));
            }
            let coeff = cfg.coefficient_field(&grid)?;
            let bd = cfg.boundary_data(&grid, "bump")?;
            let sol = solve_grid(&grid, &coeff, &bd, SolveOptions { snapshots: 65, exec: cfg.exec() })?;
            let dt_snap = -grid.t0 / (sol.n_slices() - 1) as f64;
            for k in 0..=cfg.osc_levels {
                let r = r0 * 0.5f64.powi(k as i32);
                if r.powi(3) < grid.dx() || r < 2.0 * grid.dv() || r * r < 2.0 * dt_snap {
                    rep.flags.push(format!("level {k} (r = {r}) is below the grid resolution in some direction"));
                }
            }
            oscillations(|z: &PhasePoint| sol.interpolate(z.t, z.x[0], z.v[0]), cfg, osc_seed)?
        }
        other => return Err(KfpError::Config(format!("unknown mode `{other}` (solver | exact)"))),
    };
    let top = osc[0].1;
    if !(top > 0.0) {
        rep.verdict = ExperimentVerdict::Degenerate;
        rep.flags.push("oscillation vanishes on the largest cylinder (constant field)".into());
        return Ok(());
    }
    let floor = 1e-13 * top.max(1.0);
    let mut delta_hat = 0.0f64;
    for (k, w) in osc.windows(2).enumerate() {
        if w[1].1 <= floor {
            rep.flags.push(format!("oscillation at level {} below resolution floor", k + 1));
        }
        let ratio = w[1].1 / w[0].1;
        rep.put(format!("ratio[{k}]"), ratio);
        delta_hat = delta_hat.max(ratio);
    }
    rep.put("delta_hat", delta_hat);
    rep.band("delta_hat", delta_hat, 0.0, 0.95);
    let h = fit_holder_exponent(&osc)?;
    rep.put("holder_exponent", h.exponent);
    if cfg.mode == "exact" {
        rep.band("exact holder exponent", h.exponent, 0.45, 0.55);
    }
    rep.fits.push(FitRecord {
        label: "oscillation".into(),
        x: "ln r".into(),
        y: "ln osc".into(),
        points: osc.iter().filter(|p| p.1 > 0.0).map(|&(r, w)| [r.ln(), w.ln()]).collect(),
        slope: h.exponent,
        intercept: h.intercept,
        r_squared: h.r_squared,
        excluded: h.dropped,
    });
    Ok(())
}

/// Largest `|∂v f|`, `|∂v² f|`, `|∂x f|` (centred differences on the final
/// slice) over cells selected by `keep(x, v)`.
fn derivative_maxima(sol: &SolutionField, keep: impl Fn(f64, f64) -> bool) -> [f64; 3] {
    let g = &sol.grid;
    let (dx, dv) = (g.dx(), g.dv());
    let f = |i: usize, j: usize| sol.final_value(i, j);
    let mut m = [0.0f64; 3];
    for i in 1..g.n_x - 1 {
        for j in 1..g.n_v - 1 {
            if !keep(g.x_at(i), g.v_at(j)) {
                continue;
            }
            let dvf = (f(i, j + 1) - f(i, j - 1)) / (2.0 * dv);
            let dvv = (f(i, j + 1) - 2.0 * f(i, j) + f(i, j - 1)) / (dv * dv);
            let dxf = (f(i + 1, j) - f(i - 1, j)) / (2.0 * dx);
            for (mk, d) in m.iter_mut().zip([dvf, dvv, dxf]) {
                *mk = mk.max(d.abs());
            }
        }
    }
    m
}

fn holder(cfg: &RunConfig, rep: &mut ExperimentReport) -> Result<()> {
    let coarse = cfg.grid(GridDefaults { x_max: 1.0, v_max: 2.0, t0: -1.0, n_x: 128, n_v: 128 })?;
    let fine = match cfg.n_t {
        Some(_) => coarse.refined(),
        None => HalfSpaceGrid::with_cfl(coarse.x_max, coarse.v_max, coarse.t0, 2 * coarse.n_x, 2 * coarse.n_v, cfg.cfl)?,
    };
    let mut sols = Vec::new();
    for g in [coarse, fine] {
        let coeff = cfg.coefficient_field(&g)?;
        let bd = cfg.boundary_data(&g, "psi")?;
        sols.push(solve_grid(&g, &coeff, &bd, SolveOptions { snapshots: 2, exec: cfg.exec() })?);
    }
    if all_zero(&sols[1]) {
        rep.verdict = ExperimentVerdict::Degenerate;
        rep.flags.push("solution is identically zero".into());
        return Ok(());
    }
    let (xm, vm) = (coarse.x_max, coarse.v_max);
    let kdist = |x: f64, v: f64| x.abs().cbrt().max(v.abs());
    // away from grazing and from the artificial walls of the box
    let away = |x: f64, v: f64| kdist(x, v) >= 0.5 && x > -0.75 * xm && v.abs() < 0.75 * vm;
    let near = |x: f64, v: f64| kdist(x, v) < 0.3;
    let names = ["dv", "dvv", "dx"];
    let (ac, af) = (derivative_maxima(&sols[0], away), derivative_maxima(&sols[1], away));
    let (nc, nf) = (derivative_maxima(&sols[0], near), derivative_maxima(&sols[1], near));
    for k in 0..3 {
        if !(af[k].is_finite() && ac[k].is_finite()) {
            return Err(KfpError::NonFinite(format!("{} derivative away from grazing", names[k])));
        }
        let growth = af[k] / ac[k].max(f64::MIN_POSITIVE);
        rep.put(format!("away_max_{}", names[k]), af[k]);
        rep.put(format!("away_growth_{}", names[k]), growth);
        rep.band(format!("away-from-grazing {} bounded under refinement", names[k]), growth, 0.0, 1.5);
        if nc[k] > 0.0 {
            rep.put(format!("near_growth_{}", names[k]), nf[k] / nc[k]);
        }
    }
    // kinetic Hölder quotient at the grazing point on the final slice, over
    // boxes |x| < r³, |v| < r that still hold a few x cells
    let sol = &sols[1];
    let g = &sol.grid;
    let mut samples = Vec::new();
    let mut r: f64 = 0.6;
    while r.powi(3) >= 4.0 * g.dx() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..g.n_x {
            for j in 0..g.n_v {
                if g.x_at(i).abs() < r.powi(3) && g.v_at(j).abs() < r {
                    let y = sol.final_value(i, j);
                    lo = lo.min(y);
                    hi = hi.max(y);
                }
            }
        }
        samples.push((r, hi - lo));
        r *= 0.85;
    }
    if let Ok(h) = fit_holder_exponent(&samples) {
        rep.put("grazing_holder_exponent", h.exponent);
    }
    Ok(())
}
