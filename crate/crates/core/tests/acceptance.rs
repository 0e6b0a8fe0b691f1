//! Acceptance run: one PASS/FAIL line per criterion, with sub-checks
//! indented beneath it. A failing criterion is reported, not panicked on.

use std::time::Instant;

use rand::Rng;

use kfp_core::barriers::{grazing_psi, phi_ode_barrier, BarrierMode};
use kfp_core::certifier::{certify, CertifyConfig, CoefficientField, Lemma};
use kfp_core::config::RunConfig;
use kfp_core::experiments::{run_experiment, ExperimentKind, ExperimentReport, ExperimentVerdict};
use kfp_core::geometry::{compose, cylinder_contains, gauge, inverse, kinetic_scale, KineticCylinder};
use kfp_core::rng;
use kfp_core::solver::{solve_grid, solve_mc, BoundaryData, HalfSpaceGrid, McOptions, SolutionField, SolveOptions};
use kfp_core::special::{gamma_fn, psi_exact, upsilon, upsilon_zero};
use kfp_core::{Execution, PhasePoint};

/// Γ(1/3)/Γ(1/6) to 50 digits, from an independent arbitrary-precision evaluation.
const UPSILON0_50: &str = "0.48127676076079076379456027591456314364051261509820";

struct Criterion {
    id: u32,
    name: &'static str,
    checks: Vec<(String, Option<bool>)>,
}

impl Criterion {
    fn new(id: u32, name: &'static str) -> Self {
        Self { id, name, checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        self.checks.push((msg.into(), Some(ok)));
    }

    fn note(&mut self, msg: impl Into<String>) {
        self.checks.push((msg.into(), None));
    }

    fn passed(&self) -> bool {
        self.checks.iter().any(|c| c.1.is_some()) && self.checks.iter().all(|c| c.1 != Some(false))
    }

    fn report(&self, secs: f64) -> bool {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {} ({secs:.1} s)", self.id, self.name);
        for (msg, ok) in &self.checks {
            let tag = match ok {
                Some(true) => "ok  ",
                Some(false) => "FAIL",
                None => "info",
            };
            println!("       {tag} {msg}");
        }
        self.passed()
    }
}

fn run(id: u32, name: &'static str, body: impl FnOnce(&mut Criterion)) -> bool {
    let mut c = Criterion::new(id, name);
    let start = Instant::now();
    let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| body(&mut c)));
    if res.is_err() {
        c.check(false, "evaluation panicked");
    }
    c.report(start.elapsed().as_secs_f64())
}

fn random_point<R: Rng>(r: &mut R, d: usize, scale: f64) -> PhasePoint {
    let mut f = |_| r.random_range(-scale..scale);
    let t = f(0);
    let x = (0..d).map(&mut f).collect();
    let v = (0..d).map(&mut f).collect();
    PhasePoint::new(t, x, v).unwrap()
}

fn max_diff(a: &PhasePoint, b: &PhasePoint) -> f64 {
    let mut m = (a.t - b.t).abs();
    for (p, q) in a.x.iter().zip(&b.x).chain(a.v.iter().zip(&b.v)) {
        m = m.max((p - q).abs());
    }
    m
}

fn geometry(c: &mut Criterion) {
    const N: usize = 10_000;
    let start = Instant::now();
    let mut r = rng::stream(101, 0);
    let (mut assoc, mut ident, mut homog, mut tri, mut inv, mut cyl) = (0, 0, 0, 0, 0, 0);
    let k = 2f64.powf(1.0 / 3.0);
    for i in 0..N {
        let d = 1 + i % 3;
        let (a, b, z) = (random_point(&mut r, d, 2.0), random_point(&mut r, d, 2.0), random_point(&mut r, d, 2.0));
        let l = compose(&compose(&a, &b).unwrap(), &z).unwrap();
        let rr = compose(&a, &compose(&b, &z).unwrap()).unwrap();
        assoc += (max_diff(&l, &rr) > 1e-10) as usize;
        let e = PhasePoint::origin(d);
        ident += (max_diff(&compose(&a, &inverse(&a)).unwrap(), &e) > 1e-12
            || max_diff(&compose(&e, &a).unwrap(), &a) != 0.0) as usize;
        let s = r.random_range(0.01..100.0);
        let g = gauge(&kinetic_scale(&a, s).unwrap());
        homog += ((g - s * gauge(&a)).abs() > 1e-12 * g.max(1.0)) as usize;
        tri += (gauge(&compose(&a, &b).unwrap()) > (gauge(&a) + gauge(&b)) * (1.0 + 1e-14)) as usize;
        let (ga, gi) = (gauge(&a), gauge(&inverse(&a)));
        inv += (gi > k * ga * (1.0 + 1e-14) || gi < ga / k * (1.0 - 1e-14)) as usize;
        let cy = KineticCylinder::new(random_point(&mut r, d, 1.0), r.random_range(0.1..2.0)).unwrap();
        cyl += (cy.contains_group_form(&z) != cylinder_contains(&cy, &z)) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    for (name, v) in [
        ("associativity (1e-10)", assoc),
        ("identity and inverse laws", ident),
        ("gauge homogeneity", homog),
        ("gauge triangle inequality", tri),
        ("gauge inversion bounds 2^(±1/3)", inv),
        ("cylinder equivalence", cyl),
    ] {
        c.check(v == 0, format!("{name}: {v} violations / {N}"));
    }
    c.check(secs < 5.0, format!("runtime {secs:.2} s < 5 s"));
}

fn special(c: &mut Criterion) {
    let start = Instant::now();
    let reference: f64 = UPSILON0_50.parse().unwrap();
    let ratio = gamma_fn(1.0 / 3.0).unwrap() / gamma_fn(1.0 / 6.0).unwrap();
    let rel = (upsilon_zero() / reference - 1.0).abs().max((ratio / reference - 1.0).abs());
    c.check(rel <= 1e-8, format!("Υ(0) = Γ(1/3)/Γ(1/6) vs 50-digit reference: rel err {rel:.1e} ≤ 1e-8"));

    let h = 1e-3;
    let f = |s: f64| upsilon(s).unwrap();
    let mut worst: f64 = 0.0;
    for tau in [-5.0, -1.0, 1.0, 5.0] {
        let d1 = (f(tau - 2.0 * h) - 8.0 * f(tau - h) + 8.0 * f(tau + h) - f(tau + 2.0 * h)) / (12.0 * h);
        let d2 = (-f(tau - 2.0 * h) + 16.0 * f(tau - h) - 30.0 * f(tau) + 16.0 * f(tau + h) - f(tau + 2.0 * h))
            / (12.0 * h * h);
        worst = worst.max((tau * d2 + (2.0 / 3.0 - tau) * d1 + f(tau) / 6.0).abs());
    }
    c.check(worst <= 1e-6, format!("Υ ODE residual at τ ∈ {{-5,-1,1,5}}: {worst:.1e} ≤ 1e-6"));

    let h = 1e-4;
    let mut r = rng::stream(202, 0);
    let mut worst: f64 = 0.0;
    let p = |x: f64, v: f64| psi_exact(x, v).unwrap();
    for _ in 0..1000 {
        let x = -r.random_range(0.05..1.0);
        let v = r.random_range(-1.0..1.0);
        let dx = (p(x + h, v) - p(x - h, v)) / (2.0 * h);
        let dvv = (p(x, v + h) - 2.0 * p(x, v) + p(x, v - h)) / (h * h);
        worst = worst.max((v * dx - dvv).abs());
    }
    c.check(worst <= 1e-5, format!("ψ transport–diffusion residual at 10³ points: {worst:.1e} ≤ 1e-5"));
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 10.0, format!("runtime {secs:.2} s < 10 s"));
}

fn barriers(c: &mut Criterion) {
    let start = Instant::now();
    let coeff = CoefficientField::identity(1);
    for (mode, lemma) in [
        (BarrierMode::IncomingGradient, Lemma::PhaseProp),
        (BarrierMode::Exponential, Lemma::BarrierSs),
        (BarrierMode::Grazing, Lemma::BarrierG),
    ] {
        for r in [1e-4, 1e-6] {
            for vd in [-0.3, -0.6] {
                let mut cfg = CertifyConfig::new(lemma, r, vd);
                cfg.samples = 100_000;
                cfg.seed = 7;
                let rep = certify(&cfg, &coeff);
                let detail = match &rep.error {
                    Some(e) if !rep.passed() => format!(": {e}"),
                    _ => String::new(),
                };
                c.check(
                    rep.passed() && rep.violations == 0,
                    format!(
                        "{:<17} {:<10} r̃={r:.0e} ṽ={vd}: {:?}, {} violations / {}, min margin {:.3e}, θ0 {}{detail}",
                        mode.as_str(),
                        lemma.as_str(),
                        rep.verdict,
                        rep.violations,
                        rep.samples,
                        rep.min_margin,
                        rep.theta0_used
                    ),
                );
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 120.0, format!("runtime {secs:.1} s < 120 s"));
}

fn exp_barrier(c: &mut Criterion) {
    for (theta, tau0) in [(1.0, 0.01), (10.0, 0.1), (5.0, 1.0)] {
        let st = phi_ode_barrier(theta, tau0).unwrap();
        let bound = (1.0 + theta / tau0) * (-theta / (8.0 * tau0)).exp();
        let v = st.eval(4.0 * tau0);
        let mut worst: f64 = 0.0;
        for i in 0..=1000 {
            let tau = tau0 * (1.0 + 8.0 * i as f64 / 1000.0);
            let d1 = st.d1(tau);
            worst = worst.max((tau * tau * st.d2(tau) - theta * d1).abs() / (theta * d1));
        }
        c.check(v <= bound, format!("(Θ, τ0) = ({theta}, {tau0}): Φ(4τ0) = {v:.4e} ≤ {bound:.4e}"));
        c.check(worst <= 1e-10, format!("(Θ, τ0) = ({theta}, {tau0}): relative ODE residual {worst:.1e} ≤ 1e-10"));
    }
}

/// Max-norm error over the final slice, restricted to cells at kinetic
/// distance at least `away` from the grazing point.
fn sup_error(sol: &SolutionField, exact: impl Fn(f64, f64) -> f64, away: f64) -> f64 {
    let g = &sol.grid;
    let mut e: f64 = 0.0;
    for i in 0..g.n_x {
        for j in 0..g.n_v {
            let (x, v) = (g.x_at(i), g.v_at(j));
            if x.abs().cbrt().max(v.abs()) < away {
                continue;
            }
            e = e.max((sol.final_value(i, j) - exact(x, v)).abs());
        }
    }
    e
}

fn seq(snapshots: usize) -> SolveOptions {
    SolveOptions { snapshots, exec: Execution::Parallel }
}

/// Grid (Δ/2) against MC at 20 points; the allowance is the grid's own
/// discretisation error estimate `|f_Δ - f_{Δ/2}|`.
fn grid_vs_mc(c: &mut Criterion, name: &str, grid: &HalfSpaceGrid, coeff: &CoefficientField, bd: &BoundaryData) {
    let coarse = solve_grid(grid, coeff, bd, seq(2)).unwrap();
    let fine = solve_grid(&grid.refined(), coeff, bd, seq(2)).unwrap();
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..4 {
            let x = -grid.x_max * (0.1 + 0.18 * i as f64);
            let v = grid.v_max * (-0.45 + 0.3 * j as f64);
            pts.push(PhasePoint::one_d(0.0, x, v));
        }
    }
    let mc = solve_mc(&pts, grid, coeff, bd, McOptions::new(1000, 31)).unwrap();
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for (z, est) in pts.iter().zip(&mc) {
        let (x, v) = (z.x[0], z.v[0]);
        let f = fine.interpolate_final(x, v);
        let allowance = (coarse.interpolate_final(x, v) - f).abs();
        let dev = (est.mean - f).abs();
        let ok = dev <= 3.0 * est.std_error + allowance + 1e-12;
        bad += (!ok) as usize;
        worst = worst.max(dev / (3.0 * est.std_error + allowance + 1e-12));
    }
    c.check(bad == 0, format!("grid vs MC, {name}: {bad} / {} outside 3σ + allowance (worst ratio {worst:.2})", pts.len()));
}

fn solver(c: &mut Criterion) {
    let identity = CoefficientField::identity(1);

    let grid = HalfSpaceGrid::with_cfl(1.0, 3.0, -0.5, 64, 64, 0.9).unwrap();
    let mut exact_const = true;
    for k in [-1.5, 0.0, 2.25] {
        let sol = solve_grid(&grid, &identity, &BoundaryData::constant(k), seq(3)).unwrap();
        exact_const &= sol.data.iter().all(|&f| f == k);
    }
    c.check(exact_const, "constants preserved bit-exactly");

    let src = CoefficientField::constant(1, 1.0, 0.0, 1.0).unwrap();
    let base = HalfSpaceGrid::with_cfl(1.0, 2.0, -0.5, 64, 64, 0.9).unwrap();
    let bd = BoundaryData::manufactured_psi(&base);
    let exact = |x: f64, v: f64| grazing_psi(0.0, x, v).unwrap();
    let s1 = solve_grid(&base, &src, &bd, seq(2)).unwrap();
    let s2 = solve_grid(&base.refined(), &src, &bd, seq(2)).unwrap();
    let (e1, e2) = (sup_error(&s1, exact, 0.0), sup_error(&s2, exact, 0.0));
    c.check(
        e1 / e2 >= 1.7,
        format!("manufactured Ψ: max error {e1:.3e} -> {e2:.3e}, ratio {:.3} ≥ 1.7", e1 / e2),
    );
    let (a1, a2) = (sup_error(&s1, exact, 0.5), sup_error(&s2, exact, 0.5));
    c.note(format!(
        "manufactured Ψ at kinetic distance ≥ 0.5 from grazing: {a1:.3e} -> {a2:.3e}, ratio {:.3}; 2^(1/6) = {:.3}",
        a1 / a2,
        2f64.powf(1.0 / 6.0)
    ));

    let grid = HalfSpaceGrid::new(1.0, 3.0, -1.0, 256, 256, 2000).unwrap();
    let start = Instant::now();
    let bd = BoundaryData::constant(0.3).with_initial(move |x, _| kfp_core::solver::bump(x, 1.0));
    let sol = solve_grid(&grid, &identity, &bd, seq(2)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (lo, hi) = sol.min_max();
    c.check(
        lo >= -1e-12 && hi <= 1.0 + 1e-12,
        format!("maximum principle: field in [{lo:.3e}, {hi:.6}] ⊂ [0, 1] ± 1e-12"),
    );
    c.check(secs < 300.0, format!("256×256×2000 solve: {secs:.1} s < 300 s"));

    let grid = HalfSpaceGrid::with_cfl(1.0, 3.0, -0.5, 64, 64, 0.9).unwrap();
    grid_vs_mc(c, "constant", &grid, &identity, &BoundaryData::constant(0.7));
    let mgrid = HalfSpaceGrid::with_cfl(1.0, 2.0, -0.5, 64, 64, 0.9).unwrap();
    grid_vs_mc(c, "manufactured Ψ", &mgrid, &src, &BoundaryData::manufactured_psi(&mgrid));
    grid_vs_mc(c, "zero-inflow decay", &grid, &identity, &BoundaryData::zero_inflow_bump(&grid));
}

fn experiment(kind: ExperimentKind, extra: &str) -> ExperimentReport {
    let cfg = RunConfig::parse(extra).unwrap();
    run_experiment(kind, &cfg, 7).unwrap()
}

fn bands(c: &mut Criterion, label: &str, rep: &ExperimentReport) {
    c.check(rep.verdict == ExperimentVerdict::Pass, format!("{label}: verdict {:?}", rep.verdict));
    for b in &rep.bands {
        c.check(b.passed, format!("{label}: {} = {:.4} in [{}, {}]", b.name, b.value, b.lo, b.hi));
    }
}

fn vanishing(c: &mut Criterion) {
    bands(c, "exact ψ", &experiment(ExperimentKind::Vanishing, "mode = \"exact\""));
    bands(c, "solver", &experiment(ExperimentKind::Vanishing, ""));
}

fn gradient(c: &mut Criterion) {
    bands(c, "solver", &experiment(ExperimentKind::Gradient, ""));
}

fn oscillation(c: &mut Criterion) {
    bands(c, "solver", &experiment(ExperimentKind::Oscillation, ""));
    bands(c, "exact ψ", &experiment(ExperimentKind::Oscillation, "mode = \"exact\""));
    bands(c, "smoothness sanity", &experiment(ExperimentKind::Holder, ""));
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; only a name filter matters here
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    type Body = fn(&mut Criterion);
    let all: [(u32, &'static str, Body); 8] = [
        (1, "geometry suite", geometry),
        (2, "special functions", special),
        (3, "barrier certification", barriers),
        (4, "exponential barrier bound", exp_barrier),
        (5, "solver correctness", solver),
        (6, "infinite-order vanishing", vanishing),
        (7, "gradient estimate", gradient),
        (8, "oscillation decay and sharp exponent", oscillation),
    ];
    let mut passed = 0;
    let mut total = 0;
    for (id, name, body) in all {
        if filter.as_deref().is_some_and(|f| !name.contains(f) && f != id.to_string()) {
            continue;
        }
        total += 1;
        passed += run(id, name, body) as usize;
    }
    println!("acceptance: {passed}/{total} criteria pass");
}
