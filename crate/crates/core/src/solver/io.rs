//! Field dumps and CSV traces.
//!
//! Dump layout (little endian):
//!
//! ```text
//! magic   b"KFPFIELD"
//! u64     n_t, n_x, n_v           (stored slices, x cells, v cells)
//! f64     times[n_t], x[n_x], v[n_v]   (cell centres)
//! f64     data[n_t][n_x][n_v]     (row-major, t-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{boundary_profile, SolutionField};
use crate::error::{KfpError, Result};

pub const MAGIC: &[u8; 8] = b"KFPFIELD";

/// Contents of a dump file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub data: Vec<f64>,
}

impl FieldDump {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.times.len(), self.x.len(), self.v.len())
    }

    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        let (_, nx, nv) = self.dims();
        self.data[(k * nx + i) * nv + j]
    }
}

pub fn write_field_dump(path: &Path, sol: &SolutionField) -> Result<()> {
    let g = &sol.grid;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for n in [sol.n_slices(), g.n_x, g.n_v] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    let xs = (0..g.n_x).map(|i| g.x_at(i));
    let vs = (0..g.n_v).map(|j| g.v_at(j));
    for y in sol.times.iter().copied().chain(xs).chain(vs).chain(sol.data.iter().copied()) {
        w.write_all(&y.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_dump(path: &Path) -> Result<FieldDump> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(KfpError::InvalidArgument(format!("{} is not a field dump", path.display())));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *d = u64::from_le_bytes(b) as usize;
    }
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    };
    let [nt, nx, nv] = dims;
    Ok(FieldDump { times: take(nt)?, x: take(nx)?, v: take(nv)?, data: take(nt * nx * nv)? })
}

/// Final-time traces `x, v, f` at the requested incoming velocities.
pub fn write_traces_csv(path: &Path, sol: &SolutionField, v_queries: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "v_query,x,f")?;
    for &vq in v_queries {
        for (x, f) in boundary_profile(sol, vq)? {
            writeln!(w, "{vq},{x},{f}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Final slice as `x, v, f` rows.
pub fn write_final_csv(path: &Path, sol: &SolutionField) -> Result<()> {
    let g = &sol.grid;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,v,f")?;
    for i in 0..g.n_x {
        for j in 0..g.n_v {
            writeln!(w, "{},{},{}", g.x_at(i), g.v_at(j), sol.final_value(i, j))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::HalfSpaceGrid;

    #[test]
    fn dump_round_trip() {
        let g = HalfSpaceGrid::new(1.0, 1.0, -1.0, 4, 6, 4).unwrap();
        let sol = SolutionField::from_function(g, "xv", |x, v| x * 10.0 + v);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        write_field_dump(&p, &sol).unwrap();
        let d = read_field_dump(&p).unwrap();
        assert_eq!(d.dims(), (1, 4, 6));
        assert_eq!(d.data, sol.data);
        assert_eq!(d.at(0, 2, 3), g.x_at(2) * 10.0 + g.v_at(3));
        let len = std::fs::metadata(&p).unwrap().len();
        assert_eq!(len, 8 + 24 + 8 * (1 + 4 + 6 + 24));
    }

    #[test]
    fn traces_csv_has_fixed_header() {
        let g = HalfSpaceGrid::new(1.0, 1.0, -1.0, 4, 6, 4).unwrap();
        let sol = SolutionField::from_function(g, "one", |_, _| 1.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_traces_csv(&p, &sol, &[-0.5]).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert!(s.starts_with("v_query,x,f\n"));
        assert_eq!(s.lines().count(), 1 + 4);
    }
}
