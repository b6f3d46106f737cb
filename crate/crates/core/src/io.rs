//! File formats: CSV tables, JSON reports, and binary field snapshots.
//!
//! Every CSV writer accepts an optional manifest string which is emitted as a
//! single leading `#` comment line; the header row follows. Floats are
//! written with the shortest round-trip representation, so identical inputs
//! produce bit-identical files.
//!
//! Binary snapshot layout (little endian):
//! header `n_interior: u64, n_steps: u64, horizon: f64, spacing: f64,
//! n_fields: u64`, then per field `n_rows: u64` followed by
//! `n_rows * n_interior` doubles in row-major order. Trajectories store two
//! fields (y then z) with `n_steps + 1` rows; controls store one field with
//! `n_steps` rows.

use crate::carleman::CarlemanWeights;
use crate::error::{Error, Result};
use crate::fixedpoint::IterateRecord;
use crate::hum::SweepTable;
use crate::model::{ControlRegion, Grid, KernelSpec, TimeGrid};
use crate::solver::{ControlSignal, StateTrajectory};
use ndarray::Array2;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn manifest_line(out: &mut impl Write, manifest: Option<&str>) -> Result<()> {
    if let Some(m) = manifest {
        writeln!(out, "# {m}")?;
    }
    Ok(())
}

/// Weight table as `x,t,sigma,alpha,xi` rows over interior times.
pub fn write_weights_csv(
    path: &Path,
    weights: &CarlemanWeights,
    manifest: Option<&str>,
) -> Result<()> {
    let mut out = writer(path)?;
    manifest_line(&mut out, manifest)?;
    writeln!(out, "x,t,sigma,alpha,xi")?;
    for (x, t, sigma, alpha, xi) in weights.tabulate() {
        writeln!(out, "{x},{t},{sigma},{alpha},{xi}")?;
    }
    out.flush()?;
    Ok(())
}

/// Trajectory as `t,x,y,z` rows, time-major.
pub fn write_trajectory_csv(
    path: &Path,
    traj: &StateTrajectory,
    manifest: Option<&str>,
) -> Result<()> {
    let mut out = writer(path)?;
    manifest_line(&mut out, manifest)?;
    writeln!(out, "t,x,y,z")?;
    let grid = traj.grid();
    let tgrid = traj.time_grid();
    for m in 0..tgrid.n_nodes() {
        let t = tgrid.node(m);
        for i in 0..grid.n_interior() {
            let x = grid.node(i);
            writeln!(out, "{t},{x},{},{}", traj.y[[m, i]], traj.z[[m, i]])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Control as `t,x,nu` rows; `t` is the midpoint of the slab the value acts on.
pub fn write_control_csv(
    path: &Path,
    control: &ControlSignal,
    manifest: Option<&str>,
) -> Result<()> {
    let mut out = writer(path)?;
    manifest_line(&mut out, manifest)?;
    writeln!(out, "t,x,nu")?;
    let grid = control.grid();
    let tgrid = control.time_grid();
    for step in 0..tgrid.n_steps() {
        let t = tgrid.midpoint(step);
        for i in 0..grid.n_interior() {
            writeln!(out, "{t},{},{}", grid.node(i), control.values()[[step, i]])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Epsilon-sweep table as
/// `epsilon,control_norm,terminal_norm_sq,empirical_c,cg_iterations` rows.
pub fn write_sweep_csv(path: &Path, table: &SweepTable, manifest: Option<&str>) -> Result<()> {
    let mut out = writer(path)?;
    manifest_line(&mut out, manifest)?;
    writeln!(out, "epsilon,control_norm,terminal_norm_sq,empirical_c,cg_iterations")?;
    for row in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.epsilon, row.control_norm, row.terminal_norm_sq, row.empirical_c, row.cg_iterations
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Boundary traces as `t,h1,h2` rows.
pub fn write_boundary_csv(
    path: &Path,
    h1: &[f64],
    h2: &[f64],
    tgrid: &TimeGrid,
    manifest: Option<&str>,
) -> Result<()> {
    let mut out = writer(path)?;
    manifest_line(&mut out, manifest)?;
    writeln!(out, "t,h1,h2")?;
    for m in 0..tgrid.n_nodes() {
        writeln!(out, "{},{},{}", tgrid.node(m), h1[m], h2[m])?;
    }
    out.flush()?;
    Ok(())
}

/// Kernel table as `z,j` rows.
pub fn write_kernel_csv(path: &Path, kernel: &KernelSpec, manifest: Option<&str>) -> Result<()> {
    let mut out = writer(path)?;
    manifest_line(&mut out, manifest)?;
    writeln!(out, "z,j")?;
    for (z, j) in kernel.table() {
        writeln!(out, "{z},{j}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a two-column `z,J(z)` CSV (comment lines and a header allowed).
pub fn read_kernel_samples(path: &Path) -> Result<Vec<(f64, f64)>> {
    let file = File::open(path)?;
    let mut samples = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split(',');
        let a = parts.next().map(str::trim);
        let b = parts.next().map(str::trim);
        match (a.and_then(|v| v.parse::<f64>().ok()), b.and_then(|v| v.parse::<f64>().ok())) {
            (Some(z), Some(j)) => samples.push((z, j)),
            // Tolerate one non-numeric header row.
            _ if samples.is_empty() => continue,
            _ => {
                return Err(Error::MalformedFile {
                    path: path.display().to_string(),
                    reason: format!("cannot parse row: {trimmed}"),
                })
            }
        }
    }
    if samples.len() < 2 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "need at least two kernel samples".into(),
        });
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "kernel samples must have strictly increasing z".into(),
        });
    }
    Ok(samples)
}

/// Serializes any report as pretty JSON.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = writer(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("serialization failed: {e}")))?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Appends per-iterate diagnostics as JSON lines.
pub fn write_iterate_log_jsonl(path: &Path, records: &[IterateRecord]) -> Result<()> {
    let mut out = writer(path)?;
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::InvalidConfig(format!("serialization failed: {e}")))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn write_header(
    out: &mut impl Write,
    n_interior: usize,
    n_steps: usize,
    horizon: f64,
    spacing: f64,
    n_fields: u64,
) -> Result<()> {
    out.write_all(&(n_interior as u64).to_le_bytes())?;
    out.write_all(&(n_steps as u64).to_le_bytes())?;
    out.write_all(&horizon.to_le_bytes())?;
    out.write_all(&spacing.to_le_bytes())?;
    out.write_all(&n_fields.to_le_bytes())?;
    Ok(())
}

fn write_field(out: &mut impl Write, field: &Array2<f64>) -> Result<()> {
    out.write_all(&(field.nrows() as u64).to_le_bytes())?;
    for v in field.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Trajectory snapshot in the documented binary layout.
pub fn write_trajectory_binary(path: &Path, traj: &StateTrajectory) -> Result<()> {
    let mut out = writer(path)?;
    let grid = traj.grid();
    let tgrid = traj.time_grid();
    write_header(&mut out, grid.n_interior(), tgrid.n_steps(), tgrid.horizon(), grid.h(), 2)?;
    write_field(&mut out, &traj.y)?;
    write_field(&mut out, &traj.z)?;
    out.flush()?;
    Ok(())
}

/// Control snapshot in the trajectory binary format (single field).
pub fn write_control_binary(path: &Path, control: &ControlSignal) -> Result<()> {
    let mut out = writer(path)?;
    let grid = control.grid();
    let tgrid = control.time_grid();
    write_header(&mut out, grid.n_interior(), tgrid.n_steps(), tgrid.horizon(), grid.h(), 1)?;
    write_field(&mut out, control.values())?;
    out.flush()?;
    Ok(())
}

struct BinReader<R: Read> {
    inner: R,
    path: String,
}

impl<R: Read> BinReader<R> {
    fn u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.inner.read_exact(&mut buf).map_err(|_| Error::MalformedFile {
            path: self.path.clone(),
            reason: "truncated header".into(),
        })?;
        Ok(u64::from_le_bytes(buf))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn field(&mut self, n_cols: usize) -> Result<Array2<f64>> {
        let n_rows = self.u64()? as usize;
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for _ in 0..n_rows * n_cols {
            data.push(self.f64()?);
        }
        Array2::from_shape_vec((n_rows, n_cols), data).map_err(|_| Error::MalformedFile {
            path: self.path.clone(),
            reason: "field shape mismatch".into(),
        })
    }
}

/// Reads a trajectory snapshot back.
pub fn read_trajectory_binary(path: &Path) -> Result<StateTrajectory> {
    let file = File::open(path)?;
    let mut r = BinReader { inner: BufReader::new(file), path: path.display().to_string() };
    let n_interior = r.u64()? as usize;
    let n_steps = r.u64()? as usize;
    let horizon = r.f64()?;
    let spacing = r.f64()?;
    let n_fields = r.u64()?;
    if n_fields != 2 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: format!("expected 2 fields, found {n_fields}"),
        });
    }
    let grid = Grid::from_spacing(n_interior, spacing)?;
    let tgrid = TimeGrid::new(n_steps, horizon)?;
    let y = r.field(n_interior)?;
    let z = r.field(n_interior)?;
    if y.dim() != (n_steps + 1, n_interior) || z.dim() != y.dim() {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "trajectory field shapes inconsistent with header".into(),
        });
    }
    Ok(StateTrajectory::from_parts(y, z, grid, tgrid))
}

/// Reads a control snapshot back; the region must be supplied by the caller
/// (the mask is applied on load).
pub fn read_control_binary(path: &Path, region: ControlRegion) -> Result<ControlSignal> {
    let file = File::open(path)?;
    let mut r = BinReader { inner: BufReader::new(file), path: path.display().to_string() };
    let n_interior = r.u64()? as usize;
    let n_steps = r.u64()? as usize;
    let horizon = r.f64()?;
    let spacing = r.f64()?;
    let n_fields = r.u64()?;
    if n_fields != 1 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: format!("expected 1 field, found {n_fields}"),
        });
    }
    let grid = Grid::from_spacing(n_interior, spacing)?;
    let tgrid = TimeGrid::new(n_steps, horizon)?;
    let values = r.field(n_interior)?;
    if values.nrows() != n_steps {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "control rows inconsistent with header".into(),
        });
    }
    ControlSignal::from_values(values, region, grid, tgrid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelShape, LambdaProfile};
    use tempfile::tempdir;

    #[test]
    fn trajectory_binary_round_trip_is_bit_exact() {
        let grid = Grid::unit(7).unwrap();
        let tgrid = TimeGrid::new(5, 0.7).unwrap();
        let mut traj = StateTrajectory::zeros(grid, tgrid);
        for m in 0..6 {
            for i in 0..7 {
                traj.y[[m, i]] = (m as f64 * 1.7 + i as f64).sin();
                traj.z[[m, i]] = (m as f64 - 2.5 * i as f64).cos();
            }
        }
        let dir = tempdir().unwrap();
        let path = dir.path().join("traj.bin");
        write_trajectory_binary(&path, &traj).unwrap();
        let back = read_trajectory_binary(&path).unwrap();
        assert_eq!(traj.y, back.y);
        assert_eq!(traj.z, back.z);
        assert_eq!(back.grid().h(), grid.h());
    }

    #[test]
    fn control_binary_round_trip() {
        let grid = Grid::unit(9).unwrap();
        let tgrid = TimeGrid::new(4, 1.0).unwrap();
        let region = ControlRegion::new(0.3, 0.7, &grid).unwrap();
        let mut c = ControlSignal::zeros(region.clone(), grid, tgrid);
        c.set_step_from_masked(2, &vec![1.5; 9]);
        let dir = tempdir().unwrap();
        let path = dir.path().join("control.bin");
        write_control_binary(&path, &c).unwrap();
        let back = read_control_binary(&path, region).unwrap();
        assert_eq!(c.values(), back.values());
    }

    #[test]
    fn kernel_csv_round_trip_via_samples() {
        let grid = Grid::unit(9).unwrap();
        let k = KernelSpec::new(
            KernelShape::Gaussian { height: 1.0, center: 0.0, width: 0.4, scale: 1.0 },
            LambdaProfile::Constant(1.0),
            &grid,
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("kernel.csv");
        write_kernel_csv(&path, &k, Some("test")).unwrap();
        let samples = read_kernel_samples(&path).unwrap();
        assert_eq!(samples.len(), 21);
        let k2 = KernelSpec::new(KernelShape::Samples(samples), LambdaProfile::Constant(1.0), &grid)
            .unwrap();
        for (a, b) in k.table().iter().zip(k2.table().iter()) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_kernel_csv_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "z,j\n0.5,1.0\n0.1,2.0\n").unwrap();
        assert!(read_kernel_samples(&path).is_err());
        std::fs::write(&path, "z,j\n0.5,abc\n").unwrap();
        assert!(read_kernel_samples(&path).is_err());
    }
}
