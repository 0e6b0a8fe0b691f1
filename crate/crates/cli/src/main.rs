use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kfp_core::barriers::{anchor_point, check_constraints, recipe_params, region_p_membership, rho, rho_t, select_params, BarrierMode};
use kfp_core::certifier::{certify, inner_rho_minus_ht, inner_rho_t_sq, CoefficientField, CertifyConfig, Lemma};
use kfp_core::config::{GridDefaults, RunConfig};
use kfp_core::experiments::{run_experiment, write_report, ExperimentKind, ReportFormat};
use kfp_core::solver::io::{write_field_dump, write_final_csv, write_traces_csv};
use kfp_core::solver::{solve_grid, SolveOptions};
use kfp_core::special::{classify_region, ln_psi, psi_exact};
use kfp_core::{Execution, PhasePoint};

/// Boundary-regularity laboratory for kinetic Fokker–Planck equations.
#[derive(Parser)]
#[command(name = "kfplab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// The explicit stationary solution ψ.
    Psi {
        #[command(subcommand)]
        op: PsiOp,
    },
    /// Quasi-distance barrier parameters and values.
    Barrier {
        #[command(subcommand)]
        op: BarrierOp,
    },
    /// Certify a barrier inequality by sampling.
    Certify(CertifyArgs),
    /// Run the grid solver from a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scripted experiment. Exit code: 0 pass, 2 claim-band fail,
    /// 3 certificate fail, 4 degenerate input.
    Experiment {
        #[arg(value_parser = ["vanishing", "gradient", "oscillation", "holder"])]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PsiOp {
    Eval {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        v: f64,
    },
}

#[derive(Subcommand)]
enum BarrierOp {
    Eval {
        /// incoming-gradient | exponential | grazing
        #[arg(long)]
        mode: String,
        #[arg(long)]
        rtilde: f64,
        #[arg(long, allow_hyphen_values = true)]
        vd: f64,
        #[arg(long)]
        theta0: Option<f64>,
        /// Evaluate at `t x v` (d = 1).
        #[arg(long, num_args = 3, value_names = ["T", "X", "V"], allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct CertifyArgs {
    /// phase-prop | barrier-ss | barrier-g | hypodist
    #[arg(long)]
    lemma: String,
    #[arg(long)]
    rtilde: f64,
    #[arg(long, allow_hyphen_values = true)]
    vd: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Barrier mode for `hypodist` (other lemmas fix their own).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors exit with 1 so that 2 stays reserved for a claim-band failure
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn print(v: &serde_json::Value) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Psi { op: PsiOp::Eval { x, v } } => {
            let tau = if x < 0.0 { Some(-v * v * v / (9.0 * x)) } else { None };
            print(&json!({
                "x": x,
                "v": v,
                "tau": tau,
                "psi": psi_exact(x, v)?,
                "ln_psi": ln_psi(x, v).ok().filter(|y| y.is_finite()),
                "region": classify_region(x, v, 0.5),
            }))?;
            Ok(0)
        }
        Cmd::Barrier { op: BarrierOp::Eval { mode, rtilde, vd, theta0, point } } => {
            let mode = BarrierMode::parse(&mode)?;
            let th = theta0.unwrap_or_else(|| mode.default_theta0());
            let (params, window) = match select_params(mode, rtilde, vd, 1.0, th) {
                Ok(p) => (p, None),
                Err(e) => (recipe_params(mode, rtilde, vd, 1.0, th), Some(e.to_string())),
            };
            let constraints = check_constraints(&params);
            let anchor = anchor_point(&params).ok();
            let mut out = json!({
                "params": params,
                "window_error": window,
                "constraints": constraints,
                "anchor": anchor,
            });
            if let (Some(p), Some(an)) = (point, anchor) {
                let z = PhasePoint::one_d(p[0], p[1], p[2]);
                let id = CoefficientField::identity(1);
                let inner = match mode {
                    BarrierMode::Grazing => inner_rho_minus_ht(&params, &an, &id, &z)?,
                    _ => inner_rho_t_sq(&params, &an, &id, &z)?,
                };
                out["point"] = json!({
                    "t": z.t, "x": z.x[0], "v": z.v[0],
                    "rho": rho(&params, &an, &z.x, &z.v)?,
                    "rho_t": rho_t(&params, &an, z.t, &z.x, &z.v)?,
                    "in_region_p": region_p_membership(&params, &an, z.t, &z.x, &z.v),
                    "inner_q": inner.q,
                    "inner_lq": inner.lq,
                    "inner_grad_sq": inner.grad_sq,
                });
            }
            print(&out)?;
            Ok(0)
        }
        Cmd::Certify(a) => {
            let lemma = Lemma::parse(&a.lemma)?;
            let mut cfg = CertifyConfig::new(lemma, a.rtilde, a.vd);
            cfg.samples = a.samples;
            cfg.seed = a.seed;
            cfg.theta0 = a.theta0;
            if let Some(m) = &a.mode {
                cfg.mode = BarrierMode::parse(m)?;
            }
            if a.sequential {
                cfg.exec = Execution::Sequential;
            }
            let report = certify(&cfg, &CoefficientField::identity(1));
            let text = serde_json::to_string_pretty(&report)?;
            match &a.out {
                Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => print(&serde_json::from_str(&text)?)?,
            }
            eprintln!(
                "{} r̃={} ṽ={}: {:?}, {} violations in {} samples, min margin {:.3e}, θ0 {}",
                lemma.as_str(),
                a.rtilde,
                a.vd,
                report.verdict,
                report.violations,
                report.samples,
                report.min_margin,
                report.theta0_used
            );
            Ok(if report.passed() { 0 } else { 3 })
        }
        Cmd::Solve { config, out } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let grid = cfg.grid(GridDefaults::default())?;
            let coeff = cfg.coefficient_field(&grid)?;
            let bd = cfg.boundary_data(&grid, "bump")?;
            let sol = solve_grid(&grid, &coeff, &bd, SolveOptions { snapshots: cfg.snapshots, exec: cfg.exec() })?;
            std::fs::create_dir_all(&out)?;
            write_field_dump(&out.join("field.bin"), &sol)?;
            let traces: Vec<f64> = cfg.traces.iter().copied().filter(|v| *v < 0.0 && v.abs() < grid.v_max).collect();
            write_traces_csv(&out.join("traces.csv"), &sol, &traces)?;
            write_final_csv(&out.join("final.csv"), &sol)?;
            let (lo, hi) = sol.min_max();
            let meta = json!({ "grid": grid, "meta": sol.meta, "times": sol.times, "min": lo, "max": hi });
            std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
            eprintln!(
                "solved {}x{}x{} (cfl {:.3}), f in [{lo:.6}, {hi:.6}] -> {}",
                grid.n_x,
                grid.n_v,
                grid.n_t,
                grid.cfl(),
                out.display()
            );
            Ok(0)
        }
        Cmd::Experiment { kind, config, seed, out } => {
            let kind = ExperimentKind::parse(&kind)?;
            let cfg = match &config {
                Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
                None => RunConfig::default(),
            };
            let report = run_experiment(kind, &cfg, seed)?;
            let json_path = write_report(&report, &out, ReportFormat::Json)?;
            write_report(&report, &out, ReportFormat::Csv)?;
            for b in &report.bands {
                eprintln!("  {:<48} {:>12.6} in [{}, {}] {}", b.name, b.value, b.lo, b.hi, if b.passed { "ok" } else { "FAIL" });
            }
            for f in &report.flags {
                eprintln!("  note: {f}");
            }
            eprintln!("{}: {:?} (hash {}) -> {}", kind.as_str(), report.verdict, &report.hash[..16], json_path.display());
            let code = report.exit_code();
            if !(0..=255).contains(&code) {
                bail!("exit code {code} out of range");
            }
            Ok(code as u8)
        }
    }
}
