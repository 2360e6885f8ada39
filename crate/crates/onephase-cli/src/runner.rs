//! Experiment pipeline: solve, analyze, flatness, artifact emission and the
//! content-hash MANIFEST. One run owns its artifact directory exclusively;
//! identical config + seed reproduces byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use onephase::analysis::{
    density_profile, extract_free_boundary, fbc_check, lambda_measure, linear_growth_constant,
    nondegeneracy_profile, norm_report, perimeter_profile, FreeBoundary,
};
use onephase::flatness::improvement_cascade;
use onephase::geom::{self, Vec2};
use onephase::grid::NodeMask;
use onephase::io;
use onephase::minimizer::{reseed_diagnostic, solve, Solution};
use onephase::report::Report;

use crate::config::ExperimentConfig;

pub struct RunOutcome {
    pub dir: PathBuf,
    pub converged: bool,
}

/// Files written by a run, hashed into the MANIFEST.
struct Artifacts {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), content)?;
        let mut hasher = Sha256::new();
        hasher.update(content.as_bytes());
        self.entries.push((name.to_string(), format!("{:x}", hasher.finalize())));
        Ok(())
    }

    fn finish(mut self) -> std::io::Result<()> {
        self.entries.sort();
        let mut manifest = String::new();
        for (name, hash) in &self.entries {
            let _ = writeln!(manifest, "{hash}  {name}");
        }
        std::fs::write(self.dir.join("MANIFEST"), manifest)
    }
}

/// Default dyadic radii ladder at a free boundary point: 8h, 16h, ... capped
/// by half the distance to the hull.
fn default_radii(h: f64, z: Vec2, sol: &Solution) -> Vec<f64> {
    let cap = sol.u.grid.distance_to_hull(z) / 2.0;
    let mut radii = Vec::new();
    let mut r = 8.0 * h;
    while r <= cap && radii.len() < 5 {
        radii.push(r);
        r *= 2.0;
    }
    radii
}

/// Free boundary points suitable as measurement centers: at least `margin`
/// from the hull, deterministically subsampled to `count`.
pub fn sample_centers(fb: &FreeBoundary, sol: &Solution, count: usize, margin: f64) -> Vec<Vec2> {
    let eligible: Vec<Vec2> = fb
        .points
        .iter()
        .cloned()
        .filter(|p| sol.u.grid.distance_to_hull(*p) >= margin)
        .collect();
    if eligible.is_empty() || count == 0 {
        return Vec::new();
    }
    let stride = (eligible.len() / count.max(1)).max(1);
    eligible.into_iter().step_by(stride).take(count).collect()
}

pub fn analysis_report(cfg: &ExperimentConfig, sol: &Solution) -> Report {
    let grid = &sol.u.grid;
    let h = grid.h;
    let kernel = &cfg.problem.kernel;
    let fb = extract_free_boundary(sol);
    let mut rep = Report::new();
    rep.push_flag("converged", sol.converged);
    rep.push_scalar("final_energy", sol.final_energy());
    rep.push_scalar("fb_points", fb.points.len() as f64);

    let centers = sample_centers(&fb, sol, cfg.fb_samples, 10.0 * h);
    for check in &cfg.analysis_checks {
        match check.as_str() {
            "norms" => {
                let mask = NodeMask::interior_margin(grid.clone(), 2.0 * h);
                if let Ok(nr) = norm_report(sol, &mask) {
                    rep.push_scalar("sup_u", nr.scalar("sup_u").unwrap_or(f64::NAN));
                    rep.push_scalar("sup_grad", nr.scalar("sup_grad").unwrap_or(f64::NAN));
                    rep.push_scalar(
                        "sup_grad_near_fb",
                        nr.scalar("sup_grad_near_fb").unwrap_or(f64::NAN),
                    );
                }
                if let Ok(c) = linear_growth_constant(sol, &NodeMask::all(grid.clone()), (8.0 * h).max(0.1)) {
                    rep.push_scalar("linear_growth_constant", c);
                }
            }
            "fbc" => {
                if let Ok(fr) = fbc_check(sol, kernel) {
                    for name in [
                        "points_measured",
                        "slope_measured_mean",
                        "ratio_to_formula_mean",
                        "ratio_to_oracle_mean",
                        "kappa_best_fit",
                    ] {
                        if let Some(v) = fr.scalar(name) {
                            rep.push_scalar(&format!("fbc.{name}"), v);
                        }
                    }
                }
            }
            "density" | "nondegeneracy" | "perimeter" => {
                for (ci, z) in centers.iter().enumerate() {
                    let radii = cfg.radii_spec.clone().unwrap_or_else(|| default_radii(h, *z, sol));
                    if radii.is_empty() {
                        continue;
                    }
                    let prof = match check.as_str() {
                        "density" => density_profile(sol, *z, &radii),
                        "nondegeneracy" => nondegeneracy_profile(sol, *z, &radii),
                        _ => perimeter_profile(sol, *z, &radii),
                    };
                    if let Ok(p) = prof {
                        rep.push_profile(&format!("{check}.{ci}"), p.center, p.radii, p.values);
                    }
                }
            }
            "lambda" => {
                for (ci, z) in centers.iter().enumerate() {
                    let radii = cfg.radii_spec.clone().unwrap_or_else(|| default_radii(h, *z, sol));
                    let mut vals = Vec::new();
                    let mut rs = Vec::new();
                    for &r in &radii {
                        if let Ok(v) = lambda_measure(sol, kernel, *z, r) {
                            rs.push(r);
                            vals.push(v);
                        }
                    }
                    if !rs.is_empty() {
                        rep.push_profile(&format!("lambda.{ci}"), *z, rs, vals);
                    }
                }
            }
            "residual" => {
                if let Ok(res) = onephase::analysis::euler_lagrange_residual(sol, kernel) {
                    rep.push_scalar("el_residual_sup", res.sup_applicable());
                    rep.push_scalar("el_residual_nodes", res.count_applicable() as f64);
                }
            }
            "reseed" => {
                if let Ok((energies, spread)) = reseed_diagnostic(&cfg.problem, &cfg.options, &[1, 2, 3]) {
                    rep.push_scalar("reseed_energy_spread", spread);
                    rep.push_table(
                        "reseed_energies",
                        vec!["energy".into()],
                        energies.into_iter().map(|e| vec![e]).collect(),
                    );
                }
            }
            "blowup" => {
                for (ci, z) in centers.iter().enumerate().take(3) {
                    let rmax = grid.distance_to_hull(*z) * 0.8;
                    if rmax < 16.0 * h {
                        continue;
                    }
                    let radii = [rmax, rmax / 2.0, rmax / 4.0];
                    let mut diffs = Vec::new();
                    let mut prev: Option<onephase::grid::GridFunction> = None;
                    for &r in &radii {
                        if let Ok(v) = onephase::analysis::blow_up(sol, *z, r) {
                            if let Some(pv) = &prev {
                                let d = pv
                                    .values
                                    .iter()
                                    .zip(&v.values)
                                    .map(|(a, b)| (a - b).abs())
                                    .fold(0.0, f64::max);
                                diffs.push(vec![r, d]);
                            }
                            prev = Some(v);
                        }
                    }
                    if !diffs.is_empty() {
                        rep.push_table(
                            &format!("blowup_cauchy.{ci}"),
                            vec!["r".into(), "sup_diff_to_previous".into()],
                            diffs,
                        );
                    }
                }
            }
            _ => {}
        }
    }
    rep
}

/// Full pipeline: solve, write solution + free boundary + analysis (+ flatness)
/// + summary + MANIFEST into the artifact directory.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, String> {
    let sol = solve(&cfg.problem, &cfg.options).map_err(|e| e.to_string())?;
    let mut artifacts = Artifacts::new(dir).map_err(|e| e.to_string())?;

    artifacts
        .write("solution.csv", &io::grid_function_csv(&sol.u))
        .map_err(|e| e.to_string())?;
    artifacts
        .write("solution.json", &io::solution_sidecar_json(&sol))
        .map_err(|e| e.to_string())?;

    let fb = extract_free_boundary(&sol);
    artifacts
        .write("free_boundary.csv", &io::free_boundary_csv(&fb))
        .map_err(|e| e.to_string())?;
    artifacts
        .write("fb_segments.csv", &io::free_boundary_segments_csv(&fb))
        .map_err(|e| e.to_string())?;

    let rep = analysis_report(cfg, &sol);
    artifacts
        .write("analysis.json", &rep.to_json_pretty())
        .map_err(|e| e.to_string())?;

    if cfg.flatness_enabled {
        let content = flatness_json(cfg, &sol, &fb)?;
        artifacts.write("flatness.json", &content).map_err(|e| e.to_string())?;
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "converged: {}", sol.converged);
    let _ = writeln!(summary, "sweeps: {}", sol.sweeps_used);
    let _ = writeln!(summary, "final energy: {}", sol.final_energy());
    let _ = writeln!(summary, "free boundary points: {}", fb.points.len());
    let _ = writeln!(summary, "kernel: {}", sol.kernel_description);
    let _ = writeln!(summary, "grid: {}", sol.grid_description);
    let _ = writeln!(summary, "options: {}", sol.options_description);
    artifacts.write("summary.txt", &summary).map_err(|e| e.to_string())?;
    artifacts.finish().map_err(|e| e.to_string())?;

    Ok(RunOutcome { dir: dir.to_path_buf(), converged: sol.converged })
}

pub fn flatness_json(
    cfg: &ExperimentConfig,
    sol: &Solution,
    fb: &FreeBoundary,
) -> Result<String, String> {
    let grid = &sol.u.grid;
    let center = match cfg.flatness_center {
        Some(c) => c,
        None => {
            // deepest interior free boundary point
            let mut best = None;
            let mut bd = 0.0;
            for p in &fb.points {
                let d = grid.distance_to_hull(*p);
                if d > bd {
                    bd = d;
                    best = Some(*p);
                }
            }
            best.ok_or("empty free boundary; no cascade center")?
        }
    };
    let r0 = cfg
        .flatness_r0
        .unwrap_or_else(|| (grid.distance_to_hull(center) * 0.9).max(8.0 * grid.h));
    let res = improvement_cascade(sol, &cfg.problem.kernel, center, r0, cfg.flatness_rtilde, cfg.flatness_levels)
        .map_err(|e| e.to_string())?;
    Ok(io::cascade_json(&res))
}

/// Rebuilds a `Solution` from a previously written artifact directory.
pub fn load_solution(cfg: &ExperimentConfig, dir: &Path) -> Result<Solution, String> {
    let csv = dir.join("solution.csv");
    let sidecar = dir.join("solution.json");
    if !csv.exists() || !sidecar.exists() {
        return Err(format!(
            "missing solution artifacts in {}: run solve first",
            dir.display()
        ));
    }
    let u = io::read_grid_function(&csv, &cfg.problem.grid).map_err(|e| e.to_string())?;
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&sidecar).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let phase = u.values.iter().map(|v| *v > 0.0).collect();
    let energy_trace: Vec<f64> = meta["energy_trace"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
        .unwrap_or_else(|| vec![0.0]);
    Ok(Solution {
        phase,
        energy_trace: if energy_trace.is_empty() { vec![0.0] } else { energy_trace },
        sweeps_used: meta["sweeps_used"].as_u64().unwrap_or(0) as usize,
        converged: meta["converged"].as_bool().unwrap_or(false),
        kernel_description: meta["kernel"].as_str().unwrap_or("").to_string(),
        grid_description: meta["grid"].as_str().unwrap_or("").to_string(),
        options_description: meta["options"].as_str().unwrap_or("").to_string(),
        u,
    })
}

/// Oracle subcommand payload.
pub fn oracle_json(
    p: f64,
    q: f64,
    b: f64,
    length: f64,
    f_const: f64,
    m: f64,
    nodes: Option<usize>,
) -> Result<String, String> {
    let o = onephase::oracle::oracle_1d(p, q, b, length, f_const, m).map_err(|e| e.to_string())?;
    let mut v = json!({
        "inputs": { "p": p, "q": q, "b": b, "L": length, "f": f_const, "m": m },
        "slope": o.slope,
        "fb_position": o.fb_position,
        "energy": o.energy,
        "branch": o.branch,
    });
    if let Some(n) = nodes {
        let d = onephase::oracle::brute_force_1d(p, q, b, length, f_const, m, n)
            .map_err(|e| e.to_string())?;
        v["brute_force"] = json!({
            "nodes": n,
            "fb_index": d.fb_index,
            "fb_position": d.fb_position,
            "slope": d.slope,
            "energy": d.energy,
            "skipped_supports": d.skipped_supports.len(),
        });
    }
    serde_json::to_string_pretty(&v).map_err(|e| e.to_string())
}

/// Kernel verification over the experiment grid's bounding box.
pub fn verify_kernel_report(cfg: &ExperimentConfig) -> Result<Report, String> {
    let g = &cfg.problem.grid;
    let spec = onephase::kernel::SamplingSpec {
        point_count: 1000,
        sphere_resolution: 10,
        lo: g.origin,
        hi: geom::add(g.origin, g.extent),
        seed: cfg.seed,
    };
    onephase::kernel::verify_structural_conditions(&cfg.problem.kernel, &spec)
        .map_err(|e| e.to_string())
}
