//! File formats: grid function CSV (row-major nodes, 17 significant digits),
//! free boundary CSV with a segment index file, solution JSON sidecars,
//! cascade JSON, and the sampled coefficient table loader.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde_json::json;

use crate::analysis::FreeBoundary;
use crate::error::{Error, Result};
use crate::flatness::CascadeResult;
use crate::grid::{Grid, GridFunction};
use crate::kernel::SampledTable;
use crate::minimizer::Solution;

/// 17 significant digits: enough to round-trip any f64 bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Grid function CSV: header `x,y,value` (`x,value` in 1-D), row-major nodes.
pub fn grid_function_csv(u: &GridFunction) -> String {
    let g = &u.grid;
    let mut out = String::new();
    if g.dim == 1 {
        out.push_str("x,value\n");
        for k in 0..g.num_nodes() {
            let p = g.node_point(k);
            let _ = writeln!(out, "{},{}", fmt_f64(p[0]), fmt_f64(u.values[k]));
        }
    } else {
        out.push_str("x,y,value\n");
        for k in 0..g.num_nodes() {
            let p = g.node_point(k);
            let _ = writeln!(out, "{},{},{}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(u.values[k]));
        }
    }
    out
}

pub fn write_grid_function(path: &Path, u: &GridFunction) -> Result<()> {
    std::fs::write(path, grid_function_csv(u))?;
    Ok(())
}

/// Reads a grid function CSV back onto a known grid, verifying coordinates.
pub fn read_grid_function(path: &Path, grid: &Arc<Grid>) -> Result<GridFunction> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse("empty csv".into()))?;
    let expect_cols = if grid.dim == 1 { 2 } else { 3 };
    if header.split(',').count() != expect_cols {
        return Err(Error::Parse(format!("header `{header}` does not match grid dim {}", grid.dim)));
    }
    let mut values = vec![0.0; grid.num_nodes()];
    let mut count = 0usize;
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != expect_cols {
            return Err(Error::Parse(format!("row {row}: expected {expect_cols} columns")));
        }
        if row >= grid.num_nodes() {
            return Err(Error::Parse("more rows than grid nodes".into()));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {row}: {e}")))
        };
        let x = parse(cols[0])?;
        let p = grid.node_point(row);
        if (x - p[0]).abs() > 1e-9 * (1.0 + p[0].abs()) {
            return Err(Error::Parse(format!("row {row}: x = {x} does not match node {}", p[0])));
        }
        if grid.dim == 2 {
            let y = parse(cols[1])?;
            if (y - p[1]).abs() > 1e-9 * (1.0 + p[1].abs()) {
                return Err(Error::Parse(format!("row {row}: y = {y} does not match node {}", p[1])));
            }
        }
        values[row] = parse(cols[expect_cols - 1])?;
        count += 1;
    }
    if count != grid.num_nodes() {
        return Err(Error::Parse(format!(
            "expected {} rows, got {count}",
            grid.num_nodes()
        )));
    }
    Ok(GridFunction { grid: grid.clone(), values })
}

/// Free boundary CSV `x,y,nx,ny`.
pub fn free_boundary_csv(fb: &FreeBoundary) -> String {
    let mut out = String::from("x,y,nx,ny\n");
    for (p, n) in fb.points.iter().zip(&fb.normals) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            fmt_f64(n[0]),
            fmt_f64(n[1])
        );
    }
    out
}

/// Segment index file `a,b` into the point list.
pub fn free_boundary_segments_csv(fb: &FreeBoundary) -> String {
    let mut out = String::from("a,b\n");
    for s in &fb.segments {
        let _ = writeln!(out, "{},{}", s[0], s[1]);
    }
    out
}

/// Solution JSON sidecar: convergence metadata next to the nodal CSV.
pub fn solution_sidecar_json(sol: &Solution) -> String {
    let v = json!({
        "converged": sol.converged,
        "sweeps_used": sol.sweeps_used,
        "final_energy": sol.final_energy(),
        "energy_trace": sol.energy_trace,
        "options": sol.options_description,
        "kernel": sol.kernel_description,
        "grid": sol.grid_description,
    });
    serde_json::to_string_pretty(&v).expect("sidecar serialization")
}

/// Cascade JSON: levels, decay fit, drift and the hypothesis report.
pub fn cascade_json(res: &CascadeResult) -> String {
    let levels: Vec<_> = res
        .records
        .iter()
        .map(|rec| {
            json!({
                "r": rec.radius,
                "nu": [rec.direction[0], rec.direction[1]],
                "epsilon": rec.epsilon,
            })
        })
        .collect();
    let v = json!({
        "center": [res.center[0], res.center[1]],
        "rtilde": res.rtilde,
        "levels": levels,
        "gamma_fit": res.gamma_fit,
        "planar_tag": res.gamma_fit.is_none(),
        "drift": res.direction_drift,
        "hypothesis_report": res.hypothesis.to_value(),
        "truncated": res.truncated,
    });
    serde_json::to_string_pretty(&v).expect("cascade serialization")
}

/// Loads the sampled coefficient table `x,y,a11,a12,a22,f,Q` (row-major over
/// a uniform grid inferred from the coordinates).
pub fn read_sampled_table(path: &Path) -> Result<Arc<SampledTable>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse("empty table".into()))?;
    let cols: Vec<&str> = header.split(',').map(|s| s.trim()).collect();
    if cols != ["x", "y", "a11", "a12", "a22", "f", "Q"] {
        return Err(Error::Parse(format!("unexpected table header `{header}`")));
    }
    let mut rows: Vec<[f64; 7]> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {i}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(Error::Parse(format!("row {i}: expected 7 columns")));
        }
        rows.push([vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]]);
    }
    if rows.is_empty() {
        return Err(Error::Parse("table has no data rows".into()));
    }
    // infer the uniform grid: unique sorted coordinates
    let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let (nx, ny) = (xs.len(), ys.len());
    if nx * ny != rows.len() {
        return Err(Error::Parse(format!(
            "table is not a full lattice: {nx} x {ny} != {} rows",
            rows.len()
        )));
    }
    let grid = Grid::build(
        2,
        [xs[0], ys[0]],
        [xs[nx - 1] - xs[0], ys[ny - 1] - ys[0]],
        [nx, ny],
    )?;
    let mut a11 = vec![0.0; nx * ny];
    let mut a12 = vec![0.0; nx * ny];
    let mut a22 = vec![0.0; nx * ny];
    let mut f = vec![0.0; nx * ny];
    let mut q = vec![0.0; nx * ny];
    for r in &rows {
        let i = xs.iter().position(|x| (x - r[0]).abs() < 1e-9).unwrap();
        let j = ys.iter().position(|y| (y - r[1]).abs() < 1e-9).unwrap();
        let k = grid.node_index(i, j);
        a11[k] = r[2];
        a12[k] = r[3];
        a22[k] = r[4];
        f[k] = r[5];
        q[k] = r[6];
    }
    let gf = |values: Vec<f64>| GridFunction { grid: grid.clone(), values };
    Ok(Arc::new(SampledTable {
        grid: grid.clone(),
        a11: gf(a11),
        a12: gf(a12),
        a22: gf(a22),
        f: gf(f),
        q: gf(q),
    }))
}
