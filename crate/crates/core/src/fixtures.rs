//! Reference problems: the three worked examples on `]-3,3[²` and a
//! manufactured configuration on which the assembled derivative is exact.

use crate::cost::Objective;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::{solve_spd, assemble_b1, CgOptions, MedDomain};
use crate::levelset::TraceOptions;
use crate::mesh::{generate_rect_mesh, polygon_disk, Mesh, Point, Rect};
use crate::problem::{FixedOrbit, OrbitMode, Problem};

/// Problem data of one worked example before meshing.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleSpec {
    pub bounds: Rect,
    pub obs_center: Point,
    pub obs_radius: f64,
    pub obs_sides: usize,
    pub f: String,
    pub yd: String,
    pub eps: f64,
    pub g0: String,
    pub u0: String,
    /// Fixed interval count per orbit, if the example prescribes one.
    pub fixed_m: Option<usize>,
}

/// Disk of radius 2.5 with a hole of radius 0.5 at `(-1,-1)`.
pub const TWO_CIRCLE_G0: &str = "max(sqrt(x1^2+x2^2)-2.5, 0.5-sqrt((x1+1)^2+(x2+1)^2))";

/// Worked example `1`, `2` or `3`.
pub fn example_spec(which: u32) -> Result<ExampleSpec> {
    let base = ExampleSpec {
        bounds: Rect::square(-3.0, 3.0),
        obs_center: [0.0, 0.0],
        obs_radius: 0.5,
        obs_sides: 32,
        f: "4".into(),
        yd: "1-x1^2-x2^2".into(),
        eps: 0.1,
        g0: TWO_CIRCLE_G0.into(),
        u0: "0".into(),
        fixed_m: None,
    };
    match which {
        1 => Ok(ExampleSpec {
            f: "1".into(),
            yd: "-(x1-0.5)^2-(x2-0.5)^2+1/16".into(),
            eps: 1e-3,
            ..base
        }),
        2 => Ok(base),
        3 => Ok(ExampleSpec { g0: "sqrt(x1^2+x2^2)-1.5".into(), fixed_m: Some(30), ..base }),
        other => Err(Error::Parameter(format!("unknown example {other} (expected 1, 2 or 3)"))),
    }
}

/// Meshed example with initial `(G, U)`.
#[derive(Clone, Debug)]
pub struct ExampleSetup {
    pub problem: Problem,
    pub g0: Vec<f64>,
    pub u0: Vec<f64>,
}

impl ExampleSpec {
    /// Builds the problem on a `cells × cells` criss-cross mesh.
    pub fn build(&self, cells: usize, trace: TraceOptions) -> Result<ExampleSetup> {
        let obs = polygon_disk(self.obs_center, self.obs_radius, self.obs_sides);
        let mesh = generate_rect_mesh(self.bounds, cells, cells, &obs)?;
        let f = Expr::parse(&self.f)?;
        let objective = Objective::tracking(Expr::parse(&self.yd)?);
        let g0 = nodal(&mesh, &self.g0)?;
        let u0 = nodal(&mesh, &self.u0)?;
        let trace = TraceOptions { fixed_m: self.fixed_m.or(trace.fixed_m), ..trace };
        let problem = Problem::new(mesh, &f, objective, self.eps, MedDomain::D, OrbitMode::Detect(trace))?;
        Ok(ExampleSetup { problem, g0, u0 })
    }
}

/// Nodal interpolant of an expression in `x1`, `x2`.
pub fn nodal(mesh: &Mesh, src: &str) -> Result<Vec<f64>> {
    let e = Expr::parse(src)?;
    mesh.vertices().iter().map(|&p| e.eval(p).map_err(Error::from)).collect()
}

/// Manufactured configuration with fixed orbit, for exact derivative checks.
#[derive(Clone, Debug)]
pub struct GradientFixture {
    pub problem: Problem,
    pub g: Vec<f64>,
    pub u: Vec<f64>,
    /// Exact state `Y` on `I₀`.
    pub y: Vec<f64>,
}

/// `D = [-2,2]²`, `g = x1²+x2²−1`, `ε = 1.5`, state `Y = x2` near the unit
/// circle, one orbit seeded at `(1,0)` with `m` intervals.
///
/// On the uniform criss-cross mesh every interior vertex star is point
/// symmetric, so `Π` reproduces the gradient of `g` exactly and the Euler map
/// is a rotation by `atan(2Δt)` followed by a dilation. `Δt` is chosen so
/// that `Z_{m-1}` lands on the positive `x1` axis, where `Y` vanishes, which
/// removes the contribution of the closing interval. `Y` is affine on a band
/// around the orbit, `j` is quadratic with affine `y_d` and `M_ED` integrates
/// over `E`, so every discrete term of the derivative is exact.
pub fn gradient_fixture(cells: usize, m: usize) -> Result<GradientFixture> {
    if m < 3 {
        return Err(Error::Parameter("gradient fixture needs m >= 3".into()));
    }
    let obs = polygon_disk([0.0, 0.0], 0.3, 16);
    let mesh = generate_rect_mesh(Rect::square(-2.0, 2.0), cells, cells, &obs)?;
    let f = Expr::parse("1")?;
    let objective = Objective::tracking(Expr::parse("0.5+0.2*x1-0.1*x2")?);
    let eps = 1.5;
    let dt = (2.0 * std::f64::consts::PI / (m - 1) as f64).tan() / 2.0;
    let orbit = FixedOrbit { seed: [1.0, 0.0], m, dt };
    let g = mesh.interpolate(|p| p[0] * p[0] + p[1] * p[1] - 1.0);
    let y_full = mesh.interpolate(|p| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        p[1] * smooth_cutoff(r, 1.4, 1.85)
    });
    let y = mesh.restrict_interior(&y_full);
    let cg = CgOptions { rel_tol: 1e-13, max_iter: None };
    let problem = Problem::new(mesh, &f, objective, eps, MedDomain::E, OrbitMode::Fixed(vec![orbit]))?.with_cg(cg);
    // choose U on I₀ so that Y solves the state equation exactly
    let mesh = &problem.mesh;
    let b1 = assemble_b1(mesh, &g, eps).select_columns(mesh.interior_nodes());
    let mut rhs = problem.stiffness.mul_vec(&y);
    rhs.iter_mut().zip(&problem.load).for_each(|(r, f)| *r -= f);
    let u = mesh.extend_interior(&solve_spd(&b1, &rhs, &cg)?);
    Ok(GradientFixture { problem, g, u, y })
}

/// `1` below `a`, `0` above `b`, cubic smoothstep in between.
fn smooth_cutoff(r: f64, a: f64, b: f64) -> f64 {
    let t = ((r - a) / (b - a)).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

/// Smooth direction `Σ_k c_k b_k(x)` over a fixed family of low-order
/// modes, with as many modes as coefficients (at most 8).
pub fn smooth_direction(mesh: &Mesh, coeffs: &[f64]) -> Vec<f64> {
    let modes: [fn(Point) -> f64; 8] = [
        |_| 1.0,
        |p| p[0],
        |p| p[1],
        |p| p[0] * p[1],
        |p| p[0] * p[0] - p[1] * p[1],
        |p| (1.3 * p[0]).sin(),
        |p| (0.9 * p[1]).cos(),
        |p| (0.7 * (p[0] + p[1])).sin(),
    ];
    assert!(coeffs.len() <= modes.len(), "at most 8 mode coefficients");
    mesh.interpolate(|p| coeffs.iter().zip(&modes).map(|(c, b)| c * b(p)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_state_is_exact() {
        let fx = gradient_fixture(20, 100).unwrap();
        let ev = fx.problem.evaluate(&fx.g, &fx.u).unwrap();
        let err = ev.y.iter().zip(&fx.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "state mismatch {err}");
        let t = &ev.orbits[0];
        // Z_{m-1} on the positive x1 axis
        let z = t.points[t.m() - 1];
        assert!(z[1].abs() < 1e-12 && z[0] > 1.0, "{z:?}");
    }

    #[test]
    fn example_specs() {
        for k in 1..=3 {
            let s = example_spec(k).unwrap();
            let setup = s.build(12, TraceOptions::default()).unwrap();
            assert_eq!(setup.g0.len(), setup.problem.mesh.n_vertices());
        }
        assert!(example_spec(4).is_err());
    }
}
