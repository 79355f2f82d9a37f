//! Penalized objective `J = J₁(Y) + (1/ε) Σ_c Yᵀ N(Z_c) Y` and the curve
//! matrices built from the orbit polylines.

use crate::expr::{Env, Expr, ExprError};
use crate::fem::{midpoint_values, midpoints};
use crate::levelset::{TraceError, Trajectory};
use crate::mesh::{dist, Location, Mesh, Region};
use crate::sparse::CsrMatrix;

/// Three-point Gauss rule on `[0, 1]`: nodes and weights.
pub const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Cost integrand `j(x, y)`, its partial derivative in `y`, and the target
/// `y_d`. `j` and `j2` may use `x1`, `x2`, `y`, `yd`.
#[derive(Clone, Debug)]
pub struct Objective {
    pub j: Expr,
    pub j2: Expr,
    pub yd: Expr,
}

impl Objective {
    /// Tracking cost `j = (y − y_d)²`.
    pub fn tracking(yd: Expr) -> Self {
        Self {
            j: Expr::parse("(y-yd)^2").expect("valid"),
            j2: Expr::parse("2*(y-yd)").expect("valid"),
            yd,
        }
    }
}

/// One Gauss node on one orbit segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveSample {
    pub loc: Location,
    /// Position in the segment, equal to the hat function `ψ_{k+1}`.
    pub tau: f64,
    /// Gauss weight times the segment length, so that a sum over samples
    /// approximates `∫ · |Z′(t)| dt`.
    pub weight: f64,
}

/// Quadrature data of one orbit and the matrix `N(Z)` (`n₀ × n₀`).
#[derive(Clone, Debug)]
pub struct CurveMatrices {
    pub samples: Vec<[CurveSample; 3]>,
    pub seg_len: Vec<f64>,
    pub n: CsrMatrix,
}

impl CurveMatrices {
    pub fn m(&self) -> usize {
        self.samples.len()
    }

    /// Sum over samples of `c(k, sample) φ_i φ_j` with rows in `I₀` and
    /// columns in `I₀` (or `I` when `full_cols`).
    fn assemble(&self, mesh: &Mesh, full_cols: bool, mut coef: impl FnMut(usize, &CurveSample) -> f64) -> CsrMatrix {
        let ncols = if full_cols { mesh.n_vertices() } else { mesh.n_interior() };
        let mut trip = Vec::with_capacity(27 * self.m());
        for (k, seg) in self.samples.iter().enumerate() {
            for s in seg {
                let c = coef(k, s);
                if c == 0.0 {
                    continue;
                }
                let tri = mesh.triangle(s.loc.tri);
                for a in 0..3 {
                    let Some(i) = mesh.interior_index(tri[a]) else { continue };
                    for b in 0..3 {
                        let j = if full_cols { Some(tri[b]) } else { mesh.interior_index(tri[b]) };
                        if let Some(j) = j {
                            trip.push((i, j, c * s.loc.bary[a] * s.loc.bary[b]));
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(mesh.n_interior(), ncols, &trip)
    }

    /// `N_k^{[k,k+1]}`, `n₀ × n`.
    pub fn n_left(&self, mesh: &Mesh, k: usize) -> CsrMatrix {
        self.assemble(mesh, true, |kk, s| if kk == k { s.weight * (1.0 - s.tau) } else { 0.0 })
    }

    /// `N_{k+1}^{[k,k+1]}`, `n₀ × n`.
    pub fn n_right(&self, mesh: &Mesh, k: usize) -> CsrMatrix {
        self.assemble(mesh, true, |kk, s| if kk == k { s.weight * s.tau } else { 0.0 })
    }

    /// `R_k(Z)`, `n₀ × n₀`.
    pub fn r_k(&self, mesh: &Mesh, k: usize) -> CsrMatrix {
        self.assemble(mesh, false, |kk, s| if kk == k { s.weight } else { 0.0 })
    }

    /// `T(Z)ω = Σ_k (ω_k N_k^{[k,k+1]} + ω_{k+1} N_{k+1}^{[k,k+1]})`, `n₀ × n`,
    /// for one component `ω` of `W` given at `k = 0..m`. Serves as both `T¹`
    /// and `T²`.
    pub fn apply_t(&self, mesh: &Mesh, omega: &[f64]) -> CsrMatrix {
        assert_eq!(omega.len(), self.m() + 1, "W must be given at k = 0..m");
        self.assemble(mesh, true, |k, s| s.weight * ((1.0 - s.tau) * omega[k] + s.tau * omega[k + 1]))
    }

    /// `T³(Z)W = Σ_k (ΔZ_k·ΔW_k / |ΔZ_k|²) R_k(Z)`, `n₀ × n₀`.
    pub fn apply_t3(&self, mesh: &Mesh, traj: &Trajectory, w: &[[f64; 2]]) -> Result<CsrMatrix, TraceError> {
        assert_eq!(w.len(), self.m() + 1, "W must be given at k = 0..m");
        let coefs = t3_coefficients(traj, w)?;
        Ok(self.assemble(mesh, false, |k, s| s.weight * coefs[k]))
    }
}

/// `ΔZ_k·ΔW_k / |ΔZ_k|²` per segment.
pub fn t3_coefficients(traj: &Trajectory, w: &[[f64; 2]]) -> Result<Vec<f64>, TraceError> {
    (0..traj.m())
        .map(|k| {
            let (a, b) = (traj.points[k], traj.points[k + 1]);
            let dz = [b[0] - a[0], b[1] - a[1]];
            let l2 = dz[0] * dz[0] + dz[1] * dz[1];
            if l2 == 0.0 {
                return Err(TraceError::DegenerateSegment { k });
            }
            let dw = [w[k + 1][0] - w[k][0], w[k + 1][1] - w[k][1]];
            Ok((dz[0] * dw[0] + dz[1] * dw[1]) / l2)
        })
        .collect()
}

/// Gauss samples for every segment and the assembled `N(Z)`.
pub fn assemble_curve_matrices(mesh: &Mesh, traj: &Trajectory) -> Result<CurveMatrices, TraceError> {
    let m = traj.m();
    let mut samples = Vec::with_capacity(m);
    let mut seg_len = Vec::with_capacity(m);
    for k in 0..m {
        let (a, b) = (traj.points[k], traj.points[k + 1]);
        let len = dist(a, b);
        let mut hint = traj.locations[k].tri;
        let seg = GAUSS3.map(|(tau, w)| {
            let p = [a[0] + tau * (b[0] - a[0]), a[1] + tau * (b[1] - a[1])];
            let loc = mesh.locate_point(p, hint).map_err(|_| TraceError::Escape { step: k, x: p[0], y: p[1] });
            if let Ok(l) = &loc {
                hint = l.tri;
            }
            loc.map(|loc| CurveSample { loc, tau, weight: w * len })
        });
        let [s0, s1, s2] = seg;
        samples.push([s0?, s1?, s2?]);
        seg_len.push(len);
    }
    let mut cm = CurveMatrices { samples, seg_len, n: CsrMatrix::zeros(0, 0) };
    cm.n = cm.assemble(mesh, false, |_, s| s.weight);
    Ok(cm)
}

/// Sum of `N(Z_c)` over components.
pub fn total_n(mesh: &Mesh, curves: &[CurveMatrices]) -> CsrMatrix {
    let n0 = mesh.n_interior();
    curves.iter().fold(CsrMatrix::zeros(n0, n0), |acc, c| acc.add_scaled(&c.n, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    pub j1: f64,
    /// `Yᵀ N(Z_c) Y` per component, before division by `ε`.
    pub penalties: Vec<f64>,
    pub total: f64,
    pub eps: f64,
}

impl CostBreakdown {
    pub fn penalty_sum(&self) -> f64 {
        self.penalties.iter().sum()
    }
}

/// `J₁(Y) = ∫_E j(x, y_h)` by the edge-midpoint rule over observation
/// triangles. `y` is on `I₀`.
pub fn eval_j1(mesh: &Mesh, y: &[f64], obj: &Objective) -> Result<f64, ExprError> {
    let yf = mesh.extend_interior(y);
    let mut s = 0.0;
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) != Region::Observation {
            continue;
        }
        let yv = midpoint_values(mesh, t, &yf);
        let w = mesh.area(t) / 3.0;
        for (q, x) in midpoints(mesh, t).iter().enumerate() {
            let yd = obj.yd.eval(*x)?;
            s += w * obj.j.eval_env(&Env { x1: x[0], x2: x[1], y: yv[q], yd })?;
        }
    }
    Ok(s)
}

pub fn eval_cost(
    mesh: &Mesh,
    y: &[f64],
    curves: &[CurveMatrices],
    eps: f64,
    obj: &Objective,
) -> Result<CostBreakdown, ExprError> {
    let j1 = eval_j1(mesh, y, obj)?;
    let penalties: Vec<f64> = curves.iter().map(|c| c.n.bilinear(y, y)).collect();
    let total = j1 + penalties.iter().sum::<f64>() / eps;
    Ok(CostBreakdown { j1, penalties, total, eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::trace_fixed;
    use crate::mesh::{generate_rect_mesh, polygon_disk, DiscreteDerivativeOps, Rect};

    fn circle(cells: usize, m: usize) -> (Mesh, Trajectory) {
        let mesh = generate_rect_mesh(Rect::square(-2.0, 2.0), cells, cells, &polygon_disk([0.0, 0.0], 0.3, 16)).unwrap();
        let ops = DiscreteDerivativeOps::build(&mesh);
        let g = mesh.interpolate(|p| p[0] * p[0] + p[1] * p[1] - 1.0);
        let f = ops.derivative_fields(&g);
        let t = trace_fixed(&mesh, &f, [1.0, 0.0], m, std::f64::consts::PI / m as f64).unwrap();
        (mesh, t)
    }

    #[test]
    fn gauss_rule_is_degree_five() {
        for p in 0..6 {
            let s: f64 = GAUSS3.iter().map(|(x, w)| w * x.powi(p)).sum();
            assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_field_gives_length() {
        let (mesh, t) = circle(16, 64);
        let cm = assemble_curve_matrices(&mesh, &t).unwrap();
        // y ≡ 1 on the interior set, the curve stays away from ∂D
        let ones = vec![1.0; mesh.n_interior()];
        assert!((cm.n.bilinear(&ones, &ones) - t.length()).abs() < 1e-12);
        assert!(cm.n.is_symmetric(1e-15));
    }

    #[test]
    fn interval_pieces_sum_to_n() {
        let (mesh, t) = circle(8, 80);
        let cm = assemble_curve_matrices(&mesh, &t).unwrap();
        let ones = vec![1.0; t.m() + 1];
        let tfull = cm.apply_t(&mesh, &ones);
        let restricted = tfull.select_columns(mesh.interior_nodes());
        assert!(restricted.max_abs_diff(&cm.n) < 1e-14);
        let mut sum = CsrMatrix::zeros(mesh.n_interior(), mesh.n_vertices());
        for k in 0..t.m() {
            sum = sum.add_scaled(&cm.n_left(&mesh, k), 1.0).add_scaled(&cm.n_right(&mesh, k), 1.0);
        }
        assert!(sum.max_abs_diff(&tfull) < 1e-14);
    }

    #[test]
    fn t3_special_cases() {
        let (mesh, t) = circle(8, 80);
        let cm = assemble_curve_matrices(&mesh, &t).unwrap();
        let constant = vec![[0.3, -0.2]; t.m() + 1];
        assert_eq!(cm.apply_t3(&mesh, &t, &constant).unwrap().max_abs(), 0.0);
        let shifted: Vec<[f64; 2]> = t.points.iter().map(|p| [p[0] - 1.0, p[1]]).collect();
        let t3 = cm.apply_t3(&mesh, &t, &shifted).unwrap();
        let mut sum = CsrMatrix::zeros(mesh.n_interior(), mesh.n_interior());
        for k in 0..t.m() {
            sum = sum.add_scaled(&cm.r_k(&mesh, k), 1.0);
        }
        assert!(t3.max_abs_diff(&sum) < 1e-14);
    }

    #[test]
    fn cost_of_zero_state() {
        let (mesh, t) = circle(8, 80);
        let cm = assemble_curve_matrices(&mesh, &t).unwrap();
        let obj = Objective::tracking(Expr::parse("0").unwrap());
        let c = eval_cost(&mesh, &vec![0.0; mesh.n_interior()], &[cm], 0.1, &obj).unwrap();
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn penalty_halving_dt_is_second_order() {
        let mut vals = Vec::new();
        for m in [50, 100, 200, 400] {
            let (mesh, t) = circle(24, m);
            let cm = assemble_curve_matrices(&mesh, &t).unwrap();
            let y: Vec<f64> = mesh.interior_nodes().iter().map(|&i| mesh.vertex(i)[0] + 0.5).collect();
            vals.push(cm.n.bilinear(&y, &y));
        }
        let d1 = (vals[1] - vals[0]).abs();
        let d2 = (vals[2] - vals[1]).abs();
        let d3 = (vals[3] - vals[2]).abs();
        assert!(d2 < d1 && d3 < d2, "{vals:?}");
    }
}
