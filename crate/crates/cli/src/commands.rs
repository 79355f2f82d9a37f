//! Subcommand implementations. Each writes its artifacts into the output
//! directory and returns a printable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topopt_core::artifacts::{orbit_rows, save_history, save_orbits, HistoryRow, OrbitRow};
use topopt_core::compare::{omega_g_cost, zero_level_cost, DomainCost};
use topopt_core::cost::eval_j1;
use topopt_core::fixtures::{gradient_fixture, smooth_direction};
use topopt_core::grad::{dj_assembled, dj_operator, fd_derivative, GradientState, OperatorData};
use topopt_core::levelset::{zero_level_segments, Trajectory};
use topopt_core::mesh::{read_vtk, write_mesh, write_vtk};
use topopt_core::optimize::{run, StopReason};
use topopt_core::{Evaluation, FixedOrbit, OrbitMode, Problem};

use crate::config::Loaded;
use crate::CliError;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn vtk(path: &Path, problem: &Problem, fields: &[(&str, &[f64])]) -> Result<(), CliError> {
    write_vtk(path, &problem.mesh, fields).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Human-readable cost summary of an evaluation.
pub fn cost_report(ev: &Evaluation) -> String {
    let c = &ev.cost;
    let mut s = String::new();
    let _ = writeln!(s, "J          = {:.10e}", c.total);
    let _ = writeln!(s, "J1         = {:.10e}", c.j1);
    let _ = writeln!(s, "penalty    = {:.10e}  (sum over components of Y'N(Z)Y / eps)", c.penalty_sum() / c.eps);
    for (k, p) in c.penalties.iter().enumerate() {
        let t = &ev.orbits[k];
        let _ = writeln!(
            s,
            "  component {k}: Y'N(Z)Y = {p:.10e}, m = {}, dt = {:.6e}, length = {:.6}",
            t.m(),
            t.dt,
            t.length()
        );
    }
    let _ = writeln!(s, "components = {}", ev.orbits.len());
    let _ = writeln!(s, "boundary length = {:.6}", ev.boundary_length());
    s
}

fn zero_level_csv(problem: &Problem, y_full: &[f64]) -> String {
    let mut s = String::from("x1a,x2a,x1b,x2b\n");
    for seg in zero_level_segments(&problem.mesh, y_full) {
        let _ = writeln!(s, "{},{},{},{}", seg[0][0], seg[0][1], seg[1][0], seg[1][1]);
    }
    s
}

/// Runs the optimizer and writes `history.csv`, `final_state.vtk`,
/// `final_g.vtk`, `orbits.csv`, `y_zero_level.csv` and `report.txt`.
pub fn solve(l: &Loaded, dump_orbits: bool, quiet: bool) -> Result<String, CliError> {
    ensure_dir(&l.out_dir)?;
    let mut rows: Vec<HistoryRow> = Vec::new();
    let mut dumps: Vec<OrbitRow> = Vec::new();
    let res = run(&l.problem, &l.g0, &l.u0, &l.optimizer, |rec, ev| {
        if !quiet {
            println!(
                "iter {:4}  J {:.8e}  J1 {:.6e}  penalty {:.6e}  lambda {:.3e}  components {}",
                rec.iter,
                rec.cost.total,
                rec.cost.j1,
                rec.cost.penalty_sum() / rec.cost.eps,
                rec.lambda,
                rec.components
            );
        }
        rows.push(HistoryRow::from(rec));
        if dump_orbits {
            dumps.extend(orbit_rows(rec.iter, &ev.orbits));
        }
    })?;
    let out = &l.out_dir;
    let core_io = |e: topopt_core::Error| CliError::from(e);
    save_history(&out.join("history.csv"), &rows).map_err(core_io)?;
    if dump_orbits {
        save_orbits(&out.join("orbits_iterations.csv"), &dumps).map_err(core_io)?;
    }
    let ev = &res.final_eval;
    let y_full = l.problem.mesh.extend_interior(&ev.y);
    vtk(&out.join("final_state.vtk"), &l.problem, &[("y", &y_full), ("u", &ev.u), ("g", &ev.g)])?;
    vtk(&out.join("final_g.vtk"), &l.problem, &[("g", &ev.g)])?;
    let last = res.history.last().map_or(0, |r| r.iter);
    save_orbits(&out.join("orbits.csv"), &orbit_rows(last, &ev.orbits)).map_err(core_io)?;
    write_text(&out.join("y_zero_level.csv"), &zero_level_csv(&l.problem, &y_full))?;
    let h = &res.history;
    let mut report = String::new();
    let _ = writeln!(report, "stop: {}", res.stop);
    let _ = writeln!(report, "iterations = {}", last);
    let _ = writeln!(report, "initial J  = {:.10e}", h[0].cost.total);
    report.push_str(&cost_report(ev));
    let _ = writeln!(report, "elapsed    = {:.3} s", h.last().map_or(0.0, |r| r.elapsed));
    write_text(&out.join("report.txt"), &report)?;
    if let StopReason::Failed(msg) = &res.stop {
        return Err(CliError::Numerical(format!("{msg} (artifacts of the last consistent iterate written)")));
    }
    Ok(report)
}

fn domain_line(name: &str, d: &Result<DomainCost, topopt_core::Error>) -> String {
    match d {
        Ok(d) => format!(
            "{name}: cost = {:.10e}, triangles = {}, area = {:.6}\n",
            d.cost, d.triangles, d.area
        ),
        Err(e) => format!("{name}: {e}\n"),
    }
}

/// Dirichlet solves on the optimized domain and on the zero-level domain of
/// `y`, from the artifacts of a finished run in `run_dir`.
pub fn compare(l: &Loaded, run_dir: &Path) -> Result<String, CliError> {
    let path = run_dir.join("final_state.vtk");
    let data = read_vtk(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let n = l.problem.mesh.n_vertices();
    if data.points.len() != n {
        return Err(CliError::Config(format!(
            "{} has {} vertices but the configured mesh has {n}",
            path.display(),
            data.points.len()
        )));
    }
    let field = |name: &str| {
        data.field(name)
            .map(|f| f.to_vec())
            .ok_or_else(|| CliError::Config(format!("{} lacks field '{name}'", path.display())))
    };
    let (g, y) = (field("g")?, field("y")?);
    let p = &l.problem;
    let j1 = eval_j1(&p.mesh, &p.mesh.restrict_interior(&y), &p.objective).map_err(topopt_core::Error::from)?;
    let a = omega_g_cost(p, &g);
    let b = zero_level_cost(p, &y);
    ensure_dir(&l.out_dir)?;
    for (name, d) in [("omega_g", &a), ("zero_level", &b)] {
        if let Ok(d) = d {
            let file = l.out_dir.join(format!("compare_{name}.vtk"));
            write_vtk(&file, &d.submesh, &[("y", &d.y)]).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "penalized J1 = {j1:.10e}");
    s.push_str(&domain_line("omega_g (g < 0, component containing E)", &a));
    s.push_str(&domain_line("zero level of y (component containing E)", &b));
    s.push_str("domains are unions of mesh triangles; geometric error is O(h)\n");
    write_text(&l.out_dir.join("compare.txt"), &s)?;
    match (a, b) {
        (Ok(_), Ok(_)) => Ok(s),
        (Err(e), _) | (_, Err(e)) => {
            print!("{s}");
            Err(e.into())
        }
    }
}

fn orbit_summary(mesh_problem: &Problem, g: &[f64], orbits: &[Trajectory]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "components = {}", orbits.len());
    for t in orbits {
        let _ = writeln!(
            s,
            "component {}: seed = ({:.6}, {:.6}), m = {}, dt = {:.6e}, period = {:.8}, length = {:.6}, drift = {:.3e}",
            t.component,
            t.seed[0],
            t.seed[1],
            t.m(),
            t.dt,
            t.period(),
            t.length(),
            t.drift(&mesh_problem.mesh, g)
        );
    }
    s
}

/// Orbits of the zero level set of `g0`, written to `orbits.csv`.
pub fn trace(l: &Loaded) -> Result<String, CliError> {
    let p = &l.problem;
    let fields = p.ops.derivative_fields(&l.g0);
    let orbits = p.trace(&l.g0, &fields)?;
    ensure_dir(&l.out_dir)?;
    save_orbits(&l.out_dir.join("orbits.csv"), &orbit_rows(0, &orbits))?;
    Ok(orbit_summary(p, &l.g0, &orbits))
}

/// State for `(g0, u0)`, written to `state.vtk`, with its cost when the
/// orbits can be traced.
pub fn state(l: &Loaded) -> Result<String, CliError> {
    let p = &l.problem;
    let y = topopt_core::fem::solve_state(&p.mesh, &p.stiffness, &p.load, &l.g0, &l.u0, p.eps, &p.cg)
        .map_err(topopt_core::Error::from)?;
    let y_full = p.mesh.extend_interior(&y);
    ensure_dir(&l.out_dir)?;
    vtk(&l.out_dir.join("state.vtk"), p, &[("y", &y_full), ("g", &l.g0), ("u", &l.u0)])?;
    let mut s = format!(
        "max |y| = {:.6e}\n",
        y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    );
    match p.evaluate(&l.g0, &l.u0) {
        Ok(ev) => s.push_str(&cost_report(&ev)),
        Err(e) => {
            let j1 = eval_j1(&p.mesh, &y, &p.objective).map_err(topopt_core::Error::from)?;
            let _ = writeln!(s, "J1 = {j1:.10e}\npenalty unavailable: {e}");
        }
    }
    Ok(s)
}

/// Settings of the derivative check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub lambda: f64,
    pub directions: usize,
    pub seed: u64,
}

/// Compares both derivative forms with central differences at `(g, u)`
/// with the orbits frozen at their current seeds, steps and interval counts.
pub fn grad_check(problem: &Problem, g: &[f64], u: &[f64], opts: &GradCheck) -> Result<(String, f64), CliError> {
    let ev0 = problem.evaluate(g, u)?;
    let fixed: Vec<FixedOrbit> = ev0.orbits.iter().map(|t| FixedOrbit { seed: t.seed, m: t.m(), dt: t.dt }).collect();
    let mut p = problem.clone();
    p.orbits = OrbitMode::Fixed(fixed);
    let ev = p.evaluate(g, u)?;
    let gs = GradientState::new(&p, &ev)?;
    let od = OperatorData::new(&p, &ev, &gs, false);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>4} {:>20} {:>20} {:>20} {:>12} {:>12}",
        "dir", "dJ_assembled", "dJ_operator", "finite_diff", "rel_fd", "rel_forms"
    );
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    for k in 0..opts.directions {
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = smooth_direction(&p.mesh, &c);
        let v: Vec<f64> = (0..p.mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = dj_assembled(&p, &ev, &gs, &r, &v)?.total();
        let o = dj_operator(&p, &gs, &od, &r, &v);
        let fd = fd_derivative(&p, g, u, &r, &v, opts.lambda)?;
        worst = worst.max(rel(a, fd));
        let _ = writeln!(s, "{k:>4} {a:>20.12e} {o:>20.12e} {fd:>20.12e} {:>12.3e} {:>12.3e}", rel(a, fd), rel(a, o));
    }
    let _ = writeln!(s, "max relative FD error = {worst:.3e}");
    Ok((s, worst))
}

/// Derivative check on the built-in manufactured configuration.
pub fn grad_check_fixture(opts: &GradCheck) -> Result<(String, f64), CliError> {
    let fx = gradient_fixture(30, 600)?;
    grad_check(&fx.problem, &fx.g, &fx.u, opts)
}

/// Writes `mesh.txt` and `mesh.vtk`.
pub fn mesh(l: &Loaded) -> Result<String, CliError> {
    let m = &l.problem.mesh;
    ensure_dir(&l.out_dir)?;
    let txt = l.out_dir.join("mesh.txt");
    write_mesh(&txt, m).map_err(|e| CliError::Config(format!("{}: {e}", txt.display())))?;
    let region: Vec<f64> = (0..m.n_vertices()).map(|i| f64::from(u8::from(m.obs_index(i).is_some()))).collect();
    vtk(&l.out_dir.join("mesh.vtk"), &l.problem, &[("observation_vertex", &region), ("g0", &l.g0)])?;
    Ok(format!(
        "vertices = {}\ninterior vertices = {}\nobservation vertices = {}\ntriangles = {}\nobservation area = {:.6}\nh = {:.6}\n",
        m.n_vertices(),
        m.n_interior(),
        m.n_obs(),
        m.n_triangles(),
        m.obs_area(),
        m.h()
    ))
}
