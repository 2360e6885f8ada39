//! Flat key = value experiment configuration with a typed schema.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys, missing
//! required keys and invariant violations are reported with the offending
//! key path so runs fail fast and explicitly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use onephase::geom::{SymMat2, Vec2};
use onephase::grid::{BoundaryData, Grid};
use onephase::io::read_sampled_table;
use onephase::kernel::{
    Kernel, KernelForm, MatrixField, SampledColumn, ScalarField, StructuralParams,
};
use onephase::minimizer::{Problem, SolveOptions, SweepOrder};

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { key: key.into(), message: message.into() })
}

/// Raw parsed key tree plus consumption tracking for unknown-key detection.
pub struct RawConfig {
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
    pub base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse_file(path: &Path) -> Result<RawConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { key: path.display().to_string(), message: e.to_string() })?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse_str(&text, base_dir)
    }

    pub fn parse_str(text: &str, base_dir: PathBuf) -> Result<RawConfig, ConfigError> {
        let mut values = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(&format!("line {}", ln + 1), format!("expected `key = value`, got `{raw}`"));
            };
            let key = k.trim().to_string();
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return err(&key, "duplicate key");
            }
        }
        Ok(RawConfig { values, consumed: Default::default(), base_dir })
    }

    fn get(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or(ConfigError { key: key.into(), message: "missing required key".into() })
    }

    fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.require(key)?.parse().map_err(|e| ConfigError { key: key.into(), message: format!("{e}") })
    }

    fn f64_opt(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|e| ConfigError { key: key.into(), message: format!("{e}") }),
        }
    }

    fn usize_req(&self, key: &str) -> Result<usize, ConfigError> {
        self.require(key)?.parse().map_err(|e| ConfigError { key: key.into(), message: format!("{e}") })
    }

    fn usize_opt(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|e| ConfigError { key: key.into(), message: format!("{e}") }),
        }
    }

    fn pair(&self, key: &str) -> Result<Vec2, ConfigError> {
        let s = self.require(key)?;
        let parts: Vec<&str> = s.split(',').map(|p| p.trim()).collect();
        match parts.len() {
            1 => Ok([parts[0].parse().map_err(|e| ConfigError { key: key.into(), message: format!("{e}") })?, 0.0]),
            2 => Ok([
                parts[0].parse().map_err(|e| ConfigError { key: key.into(), message: format!("{e}") })?,
                parts[1].parse().map_err(|e| ConfigError { key: key.into(), message: format!("{e}") })?,
            ]),
            _ => err(key, "expected `x` or `x,y`"),
        }
    }

    fn finish(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        for key in self.values.keys() {
            if !consumed.contains(key) {
                return err(key, "unknown key");
            }
        }
        Ok(())
    }
}

/// Fully validated experiment description.
#[derive(Debug)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub options: SolveOptions,
    pub analysis_checks: Vec<String>,
    pub fb_samples: usize,
    pub radii_spec: Option<Vec<f64>>,
    pub flatness_enabled: bool,
    pub flatness_center: Option<Vec2>,
    pub flatness_r0: Option<f64>,
    pub flatness_rtilde: f64,
    pub flatness_levels: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

const KNOWN_CHECKS: &[&str] = &[
    "norms",
    "fbc",
    "density",
    "nondegeneracy",
    "perimeter",
    "lambda",
    "blowup",
    "residual",
    "reseed",
];

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let raw = RawConfig::parse_file(path)?;
    build(&raw)
}

pub fn build(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
    // kernel
    let form = match raw.require("kernel.form")? {
        "prototype" => KernelForm::Prototype,
        "jetflow" => KernelForm::JetFlow,
        other => return err("kernel.form", format!("unknown form `{other}`")),
    };
    let p = raw.f64_req("kernel.p")?;
    let m = raw.f64_req("kernel.m")?;
    let lambda = raw.f64_req("kernel.lambda")?;
    let k_bound = raw.f64_req("kernel.K")?;
    let eps_q = raw.f64_req("kernel.eps_Q")?;
    let beta_q = raw.f64_opt("kernel.beta_Q", 1.0)?;
    let params = match StructuralParams::new(p, m, lambda, k_bound, eps_q, beta_q) {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            let key = if msg.contains("m must") {
                "kernel.m"
            } else if msg.contains("p must") {
                "kernel.p"
            } else if msg.contains("lambda") {
                "kernel.lambda"
            } else if msg.contains("eps_Q") {
                "kernel.eps_Q"
            } else if msg.contains("beta_Q") {
                "kernel.beta_Q"
            } else {
                "kernel.K"
            };
            return err(key, msg);
        }
    };

    let table = match raw.get("kernel.fields.table") {
        Some(rel) => {
            let path = raw.base_dir.join(rel);
            Some(read_sampled_table(&path).map_err(|e| ConfigError {
                key: "kernel.fields.table".into(),
                message: e.to_string(),
            })?)
        }
        None => None,
    };

    let a_field = match raw.get("kernel.A.family").unwrap_or("identity") {
        "identity" => MatrixField::Identity,
        "constant" => MatrixField::Constant(SymMat2 {
            a11: raw.f64_req("kernel.A.a11")?,
            a12: raw.f64_opt("kernel.A.a12", 0.0)?,
            a22: raw.f64_req("kernel.A.a22")?,
        }),
        "rotated-anisotropic" => MatrixField::RotatedAnisotropic {
            l1: raw.f64_req("kernel.A.l1")?,
            l2: raw.f64_req("kernel.A.l2")?,
            theta: raw.f64_req("kernel.A.theta")?,
        },
        "sampled" => match &table {
            Some(t) => MatrixField::Sampled { table: Arc::clone(t) },
            None => return err("kernel.A.family", "sampled family needs kernel.fields.table"),
        },
        other => return err("kernel.A.family", format!("unknown family `{other}`")),
    };

    let scalar_field = |prefix: &str, column: SampledColumn| -> Result<ScalarField, ConfigError> {
        let fam_key = format!("{prefix}.family");
        match raw.get(&fam_key).unwrap_or("constant") {
            "constant" => Ok(ScalarField::Constant(raw.f64_req(&format!("{prefix}.value"))?)),
            "affine" => Ok(ScalarField::Affine {
                c0: raw.f64_req(&format!("{prefix}.c0"))?,
                gx: raw.f64_opt(&format!("{prefix}.gx"), 0.0)?,
                gy: raw.f64_opt(&format!("{prefix}.gy"), 0.0)?,
            }),
            "sinusoidal" => Ok(ScalarField::Sinusoidal {
                base: raw.f64_req(&format!("{prefix}.base"))?,
                amp: raw.f64_req(&format!("{prefix}.amp"))?,
                kx: raw.f64_opt(&format!("{prefix}.kx"), 0.0)?,
                ky: raw.f64_opt(&format!("{prefix}.ky"), 0.0)?,
                phase: raw.f64_opt(&format!("{prefix}.phase"), 0.0)?,
            }),
            "sampled" => match &table {
                Some(t) => Ok(ScalarField::Sampled { table: Arc::clone(t), column }),
                None => err(&fam_key, "sampled family needs kernel.fields.table"),
            },
            other => err(&fam_key, format!("unknown family `{other}`")),
        }
    };
    let f_field = scalar_field("kernel.f", SampledColumn::F)?;
    let q_field = scalar_field("kernel.Q", SampledColumn::Q)?;

    let mut kernel = Kernel::new(params, form, a_field, f_field, q_field)
        .map_err(|e| ConfigError { key: "kernel.form".into(), message: e.to_string() })?;
    kernel.kappa = raw.f64_opt("kernel.kappa", 1.0)?;

    // grid
    let dim = raw.usize_req("grid.dim")?;
    let origin = if dim == 2 { raw.pair("grid.origin")? } else { [raw.f64_opt("grid.origin", 0.0)?, 0.0] };
    let extent = raw.pair("grid.extent")?;
    let nodes_pair = raw.pair("grid.nodes")?;
    let nodes = [nodes_pair[0] as usize, if dim == 2 { nodes_pair[1] as usize } else { 1 }];
    let grid = Grid::build(dim, origin, extent, nodes)
        .map_err(|e| ConfigError { key: "grid.nodes".into(), message: e.to_string() })?;

    // boundary
    let boundary = match raw.require("boundary.family")? {
        "planar-trace" => {
            let alpha = raw.f64_req("boundary.alpha")?;
            let nu = raw.pair("boundary.nu")?;
            let norm = (nu[0] * nu[0] + nu[1] * nu[1]).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return err("boundary.nu", format!("must be a unit vector, |nu| = {norm}"));
            }
            let offset = raw.f64_req("boundary.offset")?;
            BoundaryData::from_fn(grid.clone(), move |pt| {
                alpha * (pt[0] * nu[0] + pt[1] * nu[1] - offset).max(0.0)
            })
        }
        "edge-constant" => {
            let bottom = raw.f64_opt("boundary.bottom", 0.0)?;
            let top = raw.f64_opt("boundary.top", 0.0)?;
            let left = raw.f64_opt("boundary.left", 0.0)?;
            let right = raw.f64_opt("boundary.right", 0.0)?;
            let g = grid.clone();
            BoundaryData::from_fn(grid.clone(), move |pt| {
                let tol = 1e-12;
                if g.dim == 1 {
                    return if (pt[0] - g.origin[0]).abs() < tol { left } else { right };
                }
                if (pt[1] - g.origin[1]).abs() < tol {
                    bottom
                } else if (pt[1] - (g.origin[1] + g.extent[1])).abs() < tol {
                    top
                } else if (pt[0] - g.origin[0]).abs() < tol {
                    left
                } else {
                    right
                }
            })
        }
        "table" => {
            let rel = raw.require("boundary.file")?;
            let path = raw.base_dir.join(rel);
            let gf = onephase::io::read_grid_function(&path, &grid)
                .map_err(|e| ConfigError { key: "boundary.file".into(), message: e.to_string() })?;
            BoundaryData::from_fn(grid.clone(), move |pt| {
                onephase::grid::interpolate(&gf, pt).unwrap_or(0.0)
            })
        }
        other => return err("boundary.family", format!("unknown family `{other}`")),
    }
    .map_err(|e| ConfigError { key: "boundary.family".into(), message: e.to_string() })?;

    let problem = Problem::new(kernel, grid, boundary)
        .map_err(|e| ConfigError { key: "grid.dim".into(), message: e.to_string() })?;

    // solver options
    let seed = raw.usize_opt("seed", 0)? as u64;
    let mut options = SolveOptions::defaults_for(&problem);
    options.tol = raw.f64_opt("solve.tol", options.tol)?;
    options.max_sweeps = raw.usize_opt("solve.max_sweeps", options.max_sweeps)?;
    options.line_search_tol = raw.f64_opt("solve.line_search_tol", options.line_search_tol)?;
    options.continuation_levels = raw.usize_opt("solve.continuation_levels", 1)?;
    options.over_relaxation = raw.f64_opt("solve.over_relaxation", 1.0)?;
    options.mollify_steps = raw.usize_opt("solve.mollify_steps", 0)?;
    options.sweep_order = match raw.get("solve.order").unwrap_or("two-color") {
        "two-color" | "colored" => SweepOrder::Colored,
        "lexicographic" => SweepOrder::Lexicographic,
        "randomized" => SweepOrder::Randomized(seed),
        other => return err("solve.order", format!("unknown order `{other}`")),
    };
    if !(options.over_relaxation > 0.0 && options.over_relaxation <= 2.0) {
        return err("solve.over_relaxation", "must lie in (0, 2]");
    }

    // analysis plan
    let checks_raw = raw.get("analysis.checks").unwrap_or("norms,fbc,density,nondegeneracy,perimeter,lambda").to_string();
    let mut analysis_checks = Vec::new();
    for c in checks_raw.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()) {
        if !KNOWN_CHECKS.contains(&c) {
            return err("analysis.checks", format!("unknown check `{c}`"));
        }
        analysis_checks.push(c.to_string());
    }
    let fb_samples = raw.usize_opt("analysis.fb_samples", 5)?;
    let radii_spec = match raw.get("analysis.radii") {
        None => None,
        Some(s) => {
            let mut v = Vec::new();
            for part in s.split(',') {
                v.push(part.trim().parse::<f64>().map_err(|e| ConfigError {
                    key: "analysis.radii".into(),
                    message: format!("{e}"),
                })?);
            }
            Some(v)
        }
    };

    // flatness plan
    let flatness_enabled = match raw.get("flatness.enabled").unwrap_or("false") {
        "true" => true,
        "false" => false,
        other => return err("flatness.enabled", format!("expected true/false, got `{other}`")),
    };
    let flatness_center = match raw.get("flatness.center") {
        None => None,
        Some(_) => Some(raw.pair("flatness.center")?),
    };
    let flatness_r0 = match raw.get("flatness.r0") {
        None => None,
        Some(_) => Some(raw.f64_req("flatness.r0")?),
    };
    let flatness_rtilde = raw.f64_opt("flatness.rtilde", 0.5)?;
    let flatness_levels = raw.usize_opt("flatness.levels", 4)?;

    // output
    let output_dir = match raw.get("output.dir") {
        Some(dir) => raw.base_dir.join(dir),
        None => match std::env::var("ONEPHASE_OUTPUT_ROOT") {
            Ok(root) => PathBuf::from(root),
            Err(_) => raw.base_dir.join("runs"),
        },
    };

    raw.finish()?;
    Ok(ExperimentConfig {
        problem,
        options,
        analysis_checks,
        fb_samples,
        radii_spec,
        flatness_enabled,
        flatness_center,
        flatness_r0,
        flatness_rtilde,
        flatness_levels,
        output_dir,
        seed,
    })
}
