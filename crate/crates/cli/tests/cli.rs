use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use topopt_core::artifacts::{load_history, load_orbits};
use topopt_core::mesh::{load_mesh, read_vtk};

const SMALL: &str = r#"
[mesh]
bounds = [-3, 3, -3, 3]
cells = 20
obs_center = [0, 0]
obs_radius = 0.5
obs_sides = 16

[problem]
f = "4"
yd = "1-x1^2-x2^2"
eps = 0.1
g0 = "max(sqrt(x1^2+x2^2)-2.5, 0.5-sqrt((x1+1)^2+(x2+1)^2))"

[optimizer]
max_iters = 3
dt = 0.02
"#;

fn topopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topopt")).args(args).env("TOPOPT_THREADS", "2").output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

#[test]
fn missing_eps_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", &SMALL.replace("eps = 0.1\n", ""));
    let out = topopt(&["solve", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps"));
}

#[test]
fn positive_level_set_exits_with_numerical_error() {
    let dir = TempDir::new().unwrap();
    let g0 = "g0 = \"max(sqrt(x1^2+x2^2)-2.5, 0.5-sqrt((x1+1)^2+(x2+1)^2))\"";
    let cfg = write_config(dir.path(), "pos.cfg", &SMALL.replace(g0, "g0 = \"1\""));
    let out = topopt(&["solve", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("admissib"));
}

#[test]
fn trace_of_circle_has_one_orbit_of_period_pi() {
    let dir = TempDir::new().unwrap();
    let out = topopt(&["trace", "--config", s(&shipped("circle.cfg")), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = load_orbits(&dir.path().join("orbits.csv")).unwrap();
    assert!(rows.iter().all(|r| r.component == 0));
    let period = rows.iter().map(|r| r.t).fold(0.0, f64::max);
    assert!((period - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.02, "{period}");
}

#[test]
fn state_with_zero_data_is_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "zero.cfg", &SMALL.replace("f = \"4\"", "f = \"0\""));
    let out = topopt(&["state", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let vtk = read_vtk(dir.path().join("state.vtk")).unwrap();
    assert!(vtk.field("y").unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn grad_check_fixture_is_within_tolerance() {
    let out = topopt(&["grad-check", "--fixture", "--directions", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with("max relative FD error")).unwrap();
    let err: f64 = line.rsplit('=').next().unwrap().trim().parse().unwrap();
    assert!(err <= 1e-4, "{text}");
}

#[test]
fn solve_then_compare_round_trips_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let run = dir.path().join("run");
    let out = topopt(&["solve", "--config", s(&cfg), "--out", s(&run), "--dump-orbits", "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let history = load_history(&run.join("history.csv")).unwrap();
    assert!(history.len() >= 2);
    assert!(history.windows(2).all(|w| w[1].total <= w[0].total));
    let orbits = load_orbits(&run.join("orbits.csv")).unwrap();
    assert!(!orbits.is_empty());
    assert!(!load_orbits(&run.join("orbits_iterations.csv")).unwrap().is_empty());
    let state = read_vtk(run.join("final_state.vtk")).unwrap();
    for f in ["y", "u", "g"] {
        assert_eq!(state.field(f).unwrap().len(), state.points.len());
    }
    assert_eq!(state.to_mesh().unwrap().n_triangles(), 800);
    assert!(read_vtk(run.join("final_g.vtk")).unwrap().field("g").is_some());
    let report = fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(report.contains("J1") && report.contains("penalty") && report.contains("stop:"));
    assert!(fs::read_to_string(run.join("y_zero_level.csv")).unwrap().starts_with("x1a,x2a,x1b,x2b"));

    let cmp = dir.path().join("cmp");
    let out = topopt(&["compare", "--config", s(&cfg), "--run", s(&run), "--out", s(&cmp)]);
    let text = fs::read_to_string(cmp.join("compare.txt")).unwrap();
    assert!(text.contains("penalized J1") && text.contains("omega_g"), "{text}");
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    if out.status.success() {
        assert!(read_vtk(cmp.join("compare_omega_g.vtk")).is_ok());
    }
}

#[test]
fn mesh_command_writes_readable_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out = topopt(&["mesh", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success());
    let m = load_mesh(dir.path().join("mesh.txt")).unwrap();
    assert_eq!(m.n_vertices(), 441);
    assert_eq!(read_vtk(dir.path().join("mesh.vtk")).unwrap().points.len(), 441);
    assert!(String::from_utf8_lossy(&out.stdout).contains("triangles = 800"));
}

#[test]
fn shipped_configs_load() {
    for name in ["example1.cfg", "example2.cfg", "example3.cfg", "circle.cfg"] {
        let cfg = topopt_cli::config::read_config(&shipped(name)).unwrap();
        cfg.mesh.bounds.expect(name);
    }
}

#[test]
fn unknown_direction_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out = topopt(&["solve", "--config", s(&cfg), "--direction", "newton"]);
    assert!(!out.status.success());
}
