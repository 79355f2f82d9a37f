//! Run configuration: a TOML file with `[mesh]`, `[problem]`, `[optimizer]`
//! and `[output]` sections.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use topopt_core::fem::MedDomain;
use topopt_core::fixtures::nodal;
use topopt_core::grad::DirectionKind;
use topopt_core::mesh::{generate_rect_mesh, load_mesh, polygon_disk, Mesh, Point, Rect};
use topopt_core::optimize::OptimizerConfig;
use topopt_core::{Expr, Objective, OrbitMode, Problem, TraceOptions};

use crate::CliError;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Mesh file in the plain-text format; relative to the config file.
    pub file: Option<PathBuf>,
    /// `[x0, x1, y0, y1]` of the generated rectangle.
    pub bounds: Option<[f64; 4]>,
    /// Cells per axis, `n` or `[nx, ny]`.
    pub cells: Option<Cells>,
    /// Observation polygon vertices.
    pub obs_polygon: Option<Vec<Point>>,
    /// Regular polygon approximating a disk, used when `obs_polygon` is absent.
    pub obs_center: Option<Point>,
    pub obs_radius: Option<f64>,
    #[serde(default = "default_sides")]
    pub obs_sides: usize,
}

fn default_sides() -> usize {
    32
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Cells {
    Square(usize),
    Rect([usize; 2]),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub f: String,
    pub yd: String,
    pub eps: f64,
    pub g0: String,
    #[serde(default = "default_u0")]
    pub u0: String,
    /// Cost integrand `j(x, y)` and its derivative in `y`; default tracking.
    pub j: Option<String>,
    pub j2: Option<String>,
    /// Integration domain of the observation mass matrix, `"D"` or `"E"`.
    #[serde(default = "default_med")]
    pub med_domain: String,
}

fn default_u0() -> String {
    "0".into()
}

fn default_med() -> String {
    "D".into()
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub tol: f64,
    pub lambda0: f64,
    pub rho: f64,
    pub trials: usize,
    pub projection_value: f64,
    pub max_iters: usize,
    pub direction: String,
    pub dt: f64,
    pub fixed_m: Option<usize>,
    pub max_steps: usize,
    pub min_steps: usize,
    pub closure_factor: f64,
    pub cg_tol: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        let t = TraceOptions::default();
        Self {
            tol: o.tol,
            lambda0: o.lambda0,
            rho: o.rho,
            trials: o.trials,
            projection_value: o.projection_value,
            max_iters: o.max_iters,
            direction: o.direction.name().into(),
            dt: t.dt,
            fixed_m: t.fixed_m,
            max_steps: t.max_steps,
            min_steps: t.min_steps,
            closure_factor: t.closure_factor,
            cg_tol: topopt_core::CgOptions::default().rel_tol,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; relative to the working directory.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Command-line overrides shared by several subcommands.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub fixed_m: Option<usize>,
    pub direction: Option<DirectionKind>,
    pub out: Option<PathBuf>,
}

/// Fully resolved configuration.
#[derive(Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub problem: Problem,
    pub g0: Vec<f64>,
    pub u0: Vec<f64>,
    pub optimizer: OptimizerConfig,
    pub trace: TraceOptions,
    pub out_dir: PathBuf,
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {}", e.message())))
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn config_err(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

fn expr(field: &str, src: &str) -> Result<Expr, CliError> {
    Expr::parse(src).map_err(|e| config_err(field, e))
}

impl RunConfig {
    pub fn build_mesh(&self, base: &Path) -> Result<Mesh, CliError> {
        let m = &self.mesh;
        if let Some(file) = &m.file {
            let path = if file.is_absolute() { file.clone() } else { base.join(file) };
            return load_mesh(&path).map_err(|e| config_err(&format!("mesh.file {}", path.display()), e));
        }
        let b = m.bounds.ok_or_else(|| CliError::Config("mesh: either `file` or `bounds` is required".into()))?;
        let (nx, ny) = match m.cells.ok_or_else(|| CliError::Config("mesh.cells is required with bounds".into()))? {
            Cells::Square(n) => (n, n),
            Cells::Rect([nx, ny]) => (nx, ny),
        };
        let polygon = match (&m.obs_polygon, m.obs_center, m.obs_radius) {
            (Some(p), _, _) => p.clone(),
            (None, Some(c), Some(r)) => polygon_disk(c, r, m.obs_sides),
            (None, None, None) => Vec::new(),
            _ => return Err(CliError::Config("mesh: obs_center and obs_radius must be given together".into())),
        };
        generate_rect_mesh(Rect::new(b[0], b[1], b[2], b[3]), nx, ny, &polygon).map_err(|e| config_err("mesh", e))
    }

    pub fn trace_options(&self, ov: &Overrides) -> Result<TraceOptions, CliError> {
        let o = &self.optimizer;
        let t = TraceOptions {
            dt: ov.dt.unwrap_or(o.dt),
            max_steps: o.max_steps,
            min_steps: o.min_steps,
            closure_factor: o.closure_factor,
            fixed_m: ov.fixed_m.or(o.fixed_m),
        };
        if !(t.dt > 0.0) {
            return Err(CliError::Config("optimizer.dt must be positive".into()));
        }
        if t.fixed_m == Some(0) {
            return Err(CliError::Config("optimizer.fixed_m must be at least 1".into()));
        }
        Ok(t)
    }

    pub fn optimizer_config(&self, ov: &Overrides) -> Result<OptimizerConfig, CliError> {
        let o = &self.optimizer;
        let direction = match ov.direction {
            Some(d) => d,
            None => o.direction.parse().map_err(|e| config_err("optimizer.direction", e))?,
        };
        let cfg = OptimizerConfig {
            tol: o.tol,
            lambda0: o.lambda0,
            rho: o.rho,
            trials: o.trials,
            projection_value: o.projection_value,
            max_iters: o.max_iters,
            direction,
            threads: None,
        };
        cfg.validate().map_err(|e| config_err("optimizer", e))?;
        Ok(cfg)
    }

    /// Builds mesh, problem and initial fields. `base` resolves relative
    /// mesh paths.
    pub fn load(self, base: &Path, ov: &Overrides) -> Result<Loaded, CliError> {
        let mesh = self.build_mesh(base)?;
        let p = &self.problem;
        let f = expr("problem.f", &p.f)?;
        let yd = expr("problem.yd", &p.yd)?;
        let objective = match (&p.j, &p.j2) {
            (None, None) => Objective::tracking(yd),
            (Some(j), Some(j2)) => Objective { j: expr("problem.j", j)?, j2: expr("problem.j2", j2)?, yd },
            _ => return Err(CliError::Config("problem: j and j2 must be given together".into())),
        };
        let med = match p.med_domain.as_str() {
            "D" => MedDomain::D,
            "E" => MedDomain::E,
            other => return Err(config_err("problem.med_domain", format!("expected D or E, got '{other}'"))),
        };
        if !(p.eps > 0.0) {
            return Err(config_err("problem.eps", "must be positive"));
        }
        let g0 = nodal(&mesh, &p.g0).map_err(|e| config_err("problem.g0", e))?;
        let u0 = nodal(&mesh, &p.u0).map_err(|e| config_err("problem.u0", e))?;
        let trace = self.trace_options(ov)?;
        let optimizer = self.optimizer_config(ov)?;
        let cg = topopt_core::CgOptions { rel_tol: self.optimizer.cg_tol, max_iter: None };
        let problem = Problem::new(mesh, &f, objective, p.eps, med, OrbitMode::Detect(trace))
            .map_err(|e| config_err("problem", e))?
            .with_cg(cg);
        let out_dir = ov.out.clone().unwrap_or_else(|| self.output.dir.clone());
        Ok(Loaded { config: self, problem, g0, u0, optimizer, trace, out_dir })
    }
}

/// Reads and resolves a config file.
pub fn load(path: &Path, ov: &Overrides) -> Result<Loaded, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_config(path)?.load(base, ov)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[mesh]
bounds = [-3, 3, -3, 3]
cells = 12
obs_center = [0, 0]
obs_radius = 0.5

[problem]
f = "4"
yd = "1-x1^2-x2^2"
eps = 0.1
g0 = "sqrt(x1^2+x2^2)-1.5"
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.optimizer, OptimizerSection::default());
        assert_eq!(c.problem.u0, "0");
        let l = c.load(Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(l.problem.mesh.n_vertices(), 169);
        assert_eq!(l.optimizer.trials, 31);
        assert_eq!(l.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn missing_eps_names_the_field() {
        let text = MINIMAL.replace("eps = 0.1\n", "");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("eps"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(parse_config(&MINIMAL.replace("eps = 0.1", "eps = 0.1\nepsilon = 2")).is_err());
        let c = parse_config(&MINIMAL.replace("f = \"4\"", "f = \"4 +\"")).unwrap();
        let err = c.load(Path::new("."), &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("problem.f"), "{err}");
        let c = parse_config(&format!("{MINIMAL}\n[optimizer]\ndirection = \"newton\"\n")).unwrap();
        assert!(c.load(Path::new("."), &Overrides::default()).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let c = parse_config(MINIMAL).unwrap();
        let ov = Overrides {
            dt: Some(0.05),
            fixed_m: Some(40),
            direction: Some(DirectionKind::Full42),
            out: Some("elsewhere".into()),
        };
        let l = c.load(Path::new("."), &ov).unwrap();
        assert_eq!((l.trace.dt, l.trace.fixed_m), (0.05, Some(40)));
        assert_eq!(l.optimizer.direction, DirectionKind::Full42);
        assert_eq!(l.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn rectangular_cells_and_polygon() {
        let text = MINIMAL
            .replace("cells = 12", "cells = [6, 4]\nobs_polygon = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]")
            .replace("obs_center = [0, 0]\nobs_radius = 0.5\n", "");
        let l = parse_config(&text).unwrap().load(Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(l.problem.mesh.n_vertices(), 35);
    }
}
