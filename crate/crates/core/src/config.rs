//! Plain key-value run configuration (flat TOML) and the named registries
//! for coefficients and boundary data.
//!
//! ```toml
//! x_max = 1.0
//! v_max = 3.0
//! t0 = -1.0
//! n_x = 128
//! n_v = 128
//! coefficients = "velocity-affine"   # constant | velocity-affine | table
//! a = 1.0
//! a1 = 0.25
//! boundary = "bump"                   # zero | one | psi | manufactured-psi | bump | table
//! ```
//!
//! Table files are CSV with a header; paths are relative to the config file.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certifier::CoefficientField;
use crate::error::{KfpError, Result};
use crate::parallel::Execution;
use crate::solver::{BoundaryData, HalfSpaceGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub x_max: Option<f64>,
    pub v_max: Option<f64>,
    pub t0: Option<f64>,
    pub n_x: Option<usize>,
    pub n_v: Option<usize>,
    /// Derived from `cfl` when absent.
    pub n_t: Option<usize>,
    pub cfl: f64,
    pub snapshots: usize,
    pub parallel: bool,

    pub coefficients: String,
    pub a: f64,
    pub b: f64,
    /// Unset means zero, except where an experiment needs its own source.
    pub s: Option<f64>,
    pub a1: f64,
    pub b1: f64,
    /// Columns `v,a,b,s`.
    pub coefficient_table: Option<PathBuf>,

    /// `auto` lets an experiment choose its own data.
    pub boundary: String,
    /// Columns `v,f`: inflow profile for `boundary = "table"`.
    pub boundary_table: Option<PathBuf>,
    /// Value of the remaining data for `boundary = "table"`.
    pub fill: f64,
    pub traces: Vec<f64>,

    // experiments
    pub mode: String,
    pub velocities: Vec<f64>,
    pub probe_velocity: f64,
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub truncation_check: bool,
    pub cert_samples: usize,
    pub cert_r_tilde: f64,
    pub osc_radius: f64,
    pub osc_levels: usize,
    pub osc_samples: usize,

    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            x_max: None,
            v_max: None,
            t0: None,
            n_x: None,
            n_v: None,
            n_t: None,
            cfl: 0.9,
            snapshots: 2,
            parallel: true,
            coefficients: "constant".into(),
            a: 1.0,
            b: 0.0,
            s: None,
            a1: 0.0,
            b1: 0.0,
            coefficient_table: None,
            boundary: "auto".into(),
            boundary_table: None,
            fill: 0.0,
            traces: vec![-0.4, -0.6, -0.8],
            mode: "solver".into(),
            velocities: vec![-0.4, -0.6, -0.8],
            probe_velocity: -0.6,
            fit_lo: 5.0,
            fit_hi: 50.0,
            truncation_check: true,
            cert_samples: 20_000,
            cert_r_tilde: 1e-6,
            osc_radius: 1.0,
            osc_levels: 4,
            osc_samples: 20_000,
            base_dir: PathBuf::new(),
        }
    }
}

/// Grid used when the config leaves a field unset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDefaults {
    pub x_max: f64,
    pub v_max: f64,
    pub t0: f64,
    pub n_x: usize,
    pub n_v: usize,
}

impl Default for GridDefaults {
    fn default() -> Self {
        Self { x_max: 1.0, v_max: 3.0, t0: -1.0, n_x: 128, n_v: 128 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| KfpError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn exec(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn grid(&self, d: GridDefaults) -> Result<HalfSpaceGrid> {
        let x_max = self.x_max.unwrap_or(d.x_max);
        let v_max = self.v_max.unwrap_or(d.v_max);
        let t0 = self.t0.unwrap_or(d.t0);
        let n_x = self.n_x.unwrap_or(d.n_x);
        let n_v = self.n_v.unwrap_or(d.n_v);
        match self.n_t {
            Some(n_t) => HalfSpaceGrid::new(x_max, v_max, t0, n_x, n_v, n_t),
            None => HalfSpaceGrid::with_cfl(x_max, v_max, t0, n_x, n_v, self.cfl),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Coefficients from the registry, validated on the velocity range of `grid`.
    pub fn coefficient_field(&self, grid: &HalfSpaceGrid) -> Result<CoefficientField> {
        self.coefficient_field_with_source(grid, 0.0)
    }

    /// As [`Self::coefficient_field`], with `default_s` used when `s` is unset.
    pub fn coefficient_field_with_source(&self, grid: &HalfSpaceGrid, default_s: f64) -> Result<CoefficientField> {
        let s = self.s.unwrap_or(default_s);
        match self.coefficients.as_str() {
            "constant" => CoefficientField::constant(1, self.a, self.b, s),
            "velocity-affine" => velocity_affine(self.a, self.a1, self.b, self.b1, s, grid.v_max),
            "table" => {
                let p = self.coefficient_table.as_ref().ok_or_else(|| {
                    KfpError::Config("coefficients = \"table\" needs coefficient_table".into())
                })?;
                let t = Table::load(&self.resolve(p), &["v", "a", "b", "s"])?;
                table_coefficients(t, grid.v_max)
            }
            other => Err(KfpError::Config(format!(
                "unknown coefficients `{other}` (constant | velocity-affine | table)"
            ))),
        }
    }

    /// Boundary data from the registry; `auto` falls back to `fallback`.
    pub fn boundary_data(&self, grid: &HalfSpaceGrid, fallback: &str) -> Result<BoundaryData> {
        let name = if self.boundary == "auto" { fallback } else { self.boundary.as_str() };
        match name {
            "zero" => Ok(BoundaryData::constant(0.0).with_label("zero")),
            "one" => Ok(BoundaryData::constant(1.0).with_label("one")),
            "psi" => Ok(BoundaryData::stationary_psi(grid)),
            "manufactured-psi" => Ok(BoundaryData::manufactured_psi(grid)),
            "bump" => Ok(BoundaryData::zero_inflow_bump(grid)),
            "table" => {
                let p = self
                    .boundary_table
                    .as_ref()
                    .ok_or_else(|| KfpError::Config("boundary = \"table\" needs boundary_table".into()))?;
                let t = Table::load(&self.resolve(p), &["v", "f"])?;
                let fill = self.fill;
                Ok(BoundaryData::constant(fill)
                    .with_inflow(move |_, v| t.eval(1, v))
                    .with_label(format!("table({}, fill={fill})", p.display())))
            }
            other => Err(KfpError::Config(format!(
                "unknown boundary `{other}` (zero | one | psi | manufactured-psi | bump | table)"
            ))),
        }
    }
}

/// `A = a + a1 v`, `B = b + b1 v`, `S = s`.
pub fn velocity_affine(a: f64, a1: f64, b: f64, b1: f64, s: f64, v_max: f64) -> Result<CoefficientField> {
    let lambda = a - a1.abs() * v_max;
    if !(lambda > 0.0) {
        return Err(KfpError::Config(format!("A = {a} + {a1} v is not positive on |v| <= {v_max}")));
    }
    let big = (a + a1.abs() * v_max).max(b.abs() + b1.abs() * v_max).max(1.0);
    CoefficientField::new(
        1,
        lambda,
        big,
        move |z| DMatrix::from_element(1, 1, a + a1 * z.v[0].clamp(-v_max, v_max)),
        move |z| DVector::from_element(1, b + b1 * z.v[0].clamp(-v_max, v_max)),
        move |_| s,
        format!("velocity-affine(a={a}, a1={a1}, b={b}, b1={b1}, s={s})"),
    )
}

fn table_coefficients(t: Table, v_max: f64) -> Result<CoefficientField> {
    let lambda = t.cols[1].iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda > 0.0) {
        return Err(KfpError::Config("coefficient table has a non-positive diffusion entry".into()));
    }
    let big = t.cols[1]
        .iter()
        .chain(&t.cols[2])
        .fold(1.0f64, |m, y| m.max(y.abs()))
        .max(lambda);
    let t = std::sync::Arc::new(t);
    let (ta, tb, ts) = (t.clone(), t.clone(), t);
    CoefficientField::new(
        1,
        lambda,
        big,
        move |z| DMatrix::from_element(1, 1, ta.eval(1, z.v[0].clamp(-v_max, v_max))),
        move |z| DVector::from_element(1, tb.eval(2, z.v[0].clamp(-v_max, v_max))),
        move |z| ts.eval(3, z.v[0].clamp(-v_max, v_max)),
        "table",
    )
}

/// Columns of a CSV file, the first one increasing; piecewise-linear in it
/// and constant beyond its ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub cols: Vec<Vec<f64>>,
}

impl Table {
    pub fn load(path: &Path, header: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
        let got: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        if got != header {
            return Err(KfpError::Config(format!(
                "{}: expected header {}, found {}",
                path.display(),
                header.join(","),
                got.join(",")
            )));
        }
        let mut cols = vec![Vec::new(); header.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            for (c, field) in cols.iter_mut().zip(rec.iter()) {
                let y: f64 = field
                    .parse()
                    .map_err(|_| KfpError::Config(format!("{}: bad number `{field}`", path.display())))?;
                c.push(y);
            }
        }
        Self::new(cols)
    }

    pub fn new(cols: Vec<Vec<f64>>) -> Result<Self> {
        let n = cols.first().map_or(0, Vec::len);
        if n < 2 || cols.iter().any(|c| c.len() != n) {
            return Err(KfpError::Config("table needs at least two complete rows".into()));
        }
        if cols[0].windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KfpError::Config("first table column must be strictly increasing".into()));
        }
        if cols.iter().flatten().any(|y| !y.is_finite()) {
            return Err(KfpError::Config("table holds non-finite values".into()));
        }
        Ok(Self { cols })
    }

    pub fn eval(&self, col: usize, x: f64) -> f64 {
        let xs = &self.cols[0];
        let ys = &self.cols[col];
        let n = xs.len();
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[n - 1] {
            return ys[n - 1];
        }
        let k = xs.partition_point(|&s| s <= x);
        let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
        (1.0 - w) * ys[k - 1] + w * ys[k]
    }
}

fn csv_err(e: csv::Error) -> KfpError {
    KfpError::Config(e.to_string())
}
