//! Discrete directional derivative of the penalized cost in assembled and
//! operator form, and the descent directions built from them.

use crate::cost::Objective;
use crate::error::Result;
use crate::expr::{Env, ExprError};
use crate::fem::{adjoint_rhs, assemble_b1, assemble_c1, solve_spd};
use crate::levelset::{build_orbit_operators, variation_path, OrbitOperators};
use crate::mesh::{Mesh, Point};
use crate::problem::{Evaluation, Problem};
use crate::sparse::{dot, norm2, CsrMatrix};

/// `L(Y)_i = ∂₂j(A_i, y_h(A_i))` for `i ∈ I_E`.
pub fn eval_l(mesh: &Mesh, y: &[f64], obj: &Objective) -> Result<Vec<f64>, ExprError> {
    let yf = mesh.extend_interior(y);
    mesh.obs_nodes()
        .iter()
        .map(|&i| {
            let x = mesh.vertex(i);
            let yd = obj.yd.eval(x)?;
            obj.j2.eval_env(&Env { x1: x[0], x2: x[1], y: yf[i], yd })
        })
        .collect()
}

/// Quantities shared by all derivative evaluations at one `(G, U)`.
#[derive(Clone, Debug)]
pub struct GradientState {
    /// `L(Y)` on `I_E`.
    pub l: Vec<f64>,
    /// `N(Z)` summed over components.
    pub n_total: CsrMatrix,
    /// Adjoint state `P` on `I₀`.
    pub p: Vec<f64>,
    pub b1: CsrMatrix,
    pub c1: CsrMatrix,
    /// `Y` extended by zero to the full index set.
    pub y_full: Vec<f64>,
    /// `Π¹Y`, `Π²Y`.
    pub pi_y: [Vec<f64>; 2],
}

impl GradientState {
    pub fn new(problem: &Problem, eval: &Evaluation) -> Result<Self> {
        let mesh = &problem.mesh;
        let l = eval_l(mesh, &eval.y, &problem.objective)?;
        let n_total = eval.n_total(mesh);
        let rhs = adjoint_rhs(&problem.med, &l, &n_total, &eval.y, problem.eps);
        let p = solve_spd(&problem.stiffness, &rhs, &problem.cg)?;
        let y_full = mesh.extend_interior(&eval.y);
        let pi_y = [problem.ops.pi1.mul_vec(&y_full), problem.ops.pi2.mul_vec(&y_full)];
        Ok(Self {
            l,
            n_total,
            p,
            b1: assemble_b1(mesh, &eval.g, problem.eps),
            c1: assemble_c1(mesh, &eval.g, problem.eps, &eval.u),
            y_full,
            pi_y,
        })
    }

    /// `Pᵀ(B¹V + C¹R)`, the first two derivative terms.
    pub fn first_terms(&self, r: &[f64], v: &[f64]) -> f64 {
        self.b1.bilinear(&self.p, v) + self.c1.bilinear(&self.p, r)
    }
}

/// The five terms of the assembled derivative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DjTerms {
    /// `L(Y)ᵀ M_ED Q`
    pub observation: f64,
    /// `(2/ε) Yᵀ N(Z) Q`
    pub curve_state: f64,
    /// `(2/ε) Yᵀ (T¹W¹)(Π¹Y)`
    pub t1: f64,
    /// `(2/ε) Yᵀ (T²W²)(Π²Y)`
    pub t2: f64,
    /// `(1/ε) Yᵀ (T³W) Y`
    pub t3: f64,
}

impl DjTerms {
    pub fn total(&self) -> f64 {
        self.observation + self.curve_state + self.t1 + self.t2 + self.t3
    }

    /// The two terms driven by the state variation `Q`.
    pub fn first_two(&self) -> f64 {
        self.observation + self.curve_state
    }
}

/// Assembled derivative `dJ_(G,U)(R, V)` from `Q` and the variation paths.
pub fn dj_assembled(problem: &Problem, eval: &Evaluation, gs: &GradientState, r: &[f64], v: &[f64]) -> Result<DjTerms> {
    let mesh = &problem.mesh;
    let eps = problem.eps;
    let mut rhs = gs.b1.mul_vec(v);
    rhs.iter_mut().zip(gs.c1.mul_vec(r)).for_each(|(a, b)| *a += b);
    let q = solve_spd(&problem.stiffness, &rhs, &problem.cg)?;
    let mut terms = DjTerms {
        observation: dot(&gs.l, &problem.med.mul_vec(&q)),
        curve_state: 2.0 / eps * gs.n_total.bilinear(&eval.y, &q),
        ..Default::default()
    };
    for (traj, curve) in eval.orbits.iter().zip(&eval.curves) {
        let w = variation_path(mesh, &problem.ops, &eval.fields, traj, r);
        let w1: Vec<f64> = w.w.iter().map(|p| p[0]).collect();
        let w2: Vec<f64> = w.w.iter().map(|p| p[1]).collect();
        terms.t1 += 2.0 / eps * curve.apply_t(mesh, &w1).bilinear(&eval.y, &gs.pi_y[0]);
        terms.t2 += 2.0 / eps * curve.apply_t(mesh, &w2).bilinear(&eval.y, &gs.pi_y[1]);
        terms.t3 += 1.0 / eps * curve.apply_t3(mesh, traj, &w.w)?.bilinear(&eval.y, &eval.y);
    }
    Ok(terms)
}

/// Trapezoid-weighted `Λ̃` vectors of one orbit. `l1`, `l3` are indexed by
/// `k = 1..m`; `l2` lives on the full vertex index set.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaVectors {
    pub l1: [Vec<f64>; 2],
    pub l2: [Vec<f64>; 2],
    pub l3: [Vec<f64>; 2],
}

/// Per-interval trapezoid weights: on interval `k` both endpoints use the
/// interval velocity `v_k = (Z_{k+1} − Z_k)/Δt`. The `k = 0` entries are
/// dropped since `W_0 = 0`.
pub fn lambda_vectors(problem: &Problem, eval: &Evaluation, gs: &GradientState) -> Vec<LambdaVectors> {
    let mesh = &problem.mesh;
    let f = &eval.fields;
    let n = mesh.n_vertices();
    eval.orbits
        .iter()
        .map(|traj| {
            let m = traj.m();
            let dt = traj.dt;
            let mut lv = LambdaVectors {
                l1: [vec![0.0; m], vec![0.0; m]],
                l2: [vec![0.0; n], vec![0.0; n]],
                l3: [vec![0.0; m], vec![0.0; m]],
            };
            for k in 0..m {
                let (a, b) = (traj.points[k], traj.points[k + 1]);
                let vel: Point = [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt];
                let s = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
                for e in [k, k + 1] {
                    let loc = &traj.locations[e];
                    let y = mesh.eval_at(&gs.y_full, loc);
                    let dy = [mesh.eval_at(&gs.pi_y[0], loc), mesh.eval_at(&gs.pi_y[1], loc)];
                    let h11 = mesh.eval_at(&f.d11, loc);
                    let h12 = mesh.eval_at(&f.d12, loc);
                    let h21 = mesh.eval_at(&f.d21, loc);
                    let h22 = mesh.eval_at(&f.d22, loc);
                    let c = [-vel[0] * h12 + vel[1] * h11, -vel[0] * h22 + vel[1] * h21];
                    let y2s = y * y / s;
                    if e >= 1 {
                        for d in 0..2 {
                            lv.l1[d][e - 1] += dt * y * dy[d] * s;
                            lv.l3[d][e - 1] += 0.5 * dt * y2s * c[d];
                        }
                    }
                    let tri = mesh.triangle(loc.tri);
                    for d in 0..2 {
                        let coef = 0.5 * dt * y2s * vel[d];
                        for q in 0..3 {
                            lv.l2[d][tri[q]] += coef * loc.bary[q];
                        }
                    }
                }
            }
            lv
        })
        .collect()
}

/// Λ̃ vectors and orbit operators of every component.
#[derive(Clone, Debug)]
pub struct OperatorData {
    pub lambdas: Vec<LambdaVectors>,
    pub orbit_ops: Vec<OrbitOperators>,
}

impl OperatorData {
    /// `explicit` also forms the stacked `B²`, `B³` matrices.
    pub fn new(problem: &Problem, eval: &Evaluation, gs: &GradientState, explicit: bool) -> Self {
        let orbit_ops = eval
            .orbits
            .iter()
            .map(|t| build_orbit_operators(&problem.mesh, &problem.ops, &eval.fields, t, explicit))
            .collect();
        Self { lambdas: lambda_vectors(problem, eval, gs), orbit_ops }
    }
}

/// Operator-form derivative: the first two terms through the adjoint state
/// and the orbit terms through the `Λ̃` vectors with `W = (B²R, B³R)`.
pub fn dj_operator(problem: &Problem, gs: &GradientState, od: &OperatorData, r: &[f64], v: &[f64]) -> f64 {
    let pi1r = problem.ops.pi1.mul_vec(r);
    let pi2r = problem.ops.pi2.mul_vec(r);
    let mut orbit = 0.0;
    for (lv, oo) in od.lambdas.iter().zip(&od.orbit_ops) {
        let w = oo.apply(r);
        let (w1, w2) = (w.w1(), w.w2());
        orbit += dot(&lv.l1[0], &w1) + dot(&lv.l1[1], &w2);
        orbit += -dot(&lv.l2[0], &pi2r) + dot(&lv.l2[1], &pi1r);
        orbit += dot(&lv.l3[0], &w1) + dot(&lv.l3[1], &w2);
    }
    gs.first_terms(r, v) + orbit / problem.eps
}

/// Gradient of the operator form: `dj_operator(R, V) = g_Rᵀ R + g_Vᵀ V`.
pub fn operator_gradient(problem: &Problem, gs: &GradientState, od: &OperatorData) -> (Vec<f64>, Vec<f64>) {
    let n = problem.mesh.n_vertices();
    let mut g_r = gs.c1.tr_mul_vec(&gs.p);
    let g_v = gs.b1.tr_mul_vec(&gs.p);
    let inv = 1.0 / problem.eps;
    for (lv, oo) in od.lambdas.iter().zip(&od.orbit_ops) {
        let a: Vec<f64> = lv.l1[0].iter().zip(&lv.l3[0]).map(|(x, y)| x + y).collect();
        let b: Vec<f64> = lv.l1[1].iter().zip(&lv.l3[1]).map(|(x, y)| x + y).collect();
        let sweep = oo.transpose_apply(&a, &b, n);
        let p2 = problem.ops.pi2.tr_mul_vec(&lv.l2[0]);
        let p1 = problem.ops.pi1.tr_mul_vec(&lv.l2[1]);
        for j in 0..n {
            g_r[j] += inv * (sweep[j] - p2[j] + p1[j]);
        }
    }
    (g_r, g_v)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectionKind {
    /// `r = −p u`, `v = −p`.
    #[default]
    Adjoint41,
    /// Steepest descent for the two state-variation terms.
    RStar,
    /// Steepest descent for the full operator-form derivative.
    Full42,
}

impl DirectionKind {
    pub fn name(self) -> &'static str {
        match self {
            DirectionKind::Adjoint41 => "adjoint41",
            DirectionKind::RStar => "rstar",
            DirectionKind::Full42 => "full42",
        }
    }
}

impl std::str::FromStr for DirectionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adjoint41" => Ok(DirectionKind::Adjoint41),
            "rstar" => Ok(DirectionKind::RStar),
            "full42" => Ok(DirectionKind::Full42),
            other => Err(format!("unknown direction '{other}' (expected adjoint41, rstar or full42)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentDirection {
    pub kind: DirectionKind,
    /// Direction for `G`, full index set.
    pub r: Vec<f64>,
    /// Direction for `U`, full index set.
    pub v: Vec<f64>,
    /// Predicted slope. For `Adjoint41` and `RStar` this covers only the two
    /// state-variation terms.
    pub slope: f64,
}

/// `R = −P⊙U`, `V = −P`, both zero on `∂D`.
pub fn direction_adjoint_41(problem: &Problem, eval: &Evaluation, gs: &GradientState) -> DescentDirection {
    let mesh = &problem.mesh;
    let p = mesh.extend_interior(&gs.p);
    let v: Vec<f64> = p.iter().map(|x| -x).collect();
    let r: Vec<f64> = p.iter().zip(&eval.u).map(|(p, u)| -p * u).collect();
    let slope = gs.first_terms(&r, &v);
    DescentDirection { kind: DirectionKind::Adjoint41, r, v, slope }
}

/// `V* = −B¹ᵀP`, `R* = −C¹ᵀP`.
pub fn direction_operator_rstar(gs: &GradientState) -> DescentDirection {
    let v: Vec<f64> = gs.b1.tr_mul_vec(&gs.p).iter().map(|x| -x).collect();
    let r: Vec<f64> = gs.c1.tr_mul_vec(&gs.p).iter().map(|x| -x).collect();
    let slope = -dot(&v, &v) - dot(&r, &r);
    DescentDirection { kind: DirectionKind::RStar, r, v, slope }
}

/// `V* = −B¹ᵀP` and `R**` the negated full operator-form gradient in `R`.
pub fn direction_full_42(problem: &Problem, gs: &GradientState, od: &OperatorData) -> DescentDirection {
    let (g_r, g_v) = operator_gradient(problem, gs, od);
    let r: Vec<f64> = g_r.iter().map(|x| -x).collect();
    let v: Vec<f64> = g_v.iter().map(|x| -x).collect();
    let slope = -norm2(&v).powi(2) - norm2(&r).powi(2);
    DescentDirection { kind: DirectionKind::Full42, r, v, slope }
}

/// Builds the requested direction at an evaluated point.
pub fn descent_direction(
    problem: &Problem,
    eval: &Evaluation,
    kind: DirectionKind,
) -> Result<(DescentDirection, GradientState)> {
    let gs = GradientState::new(problem, eval)?;
    let d = match kind {
        DirectionKind::Adjoint41 => direction_adjoint_41(problem, eval, &gs),
        DirectionKind::RStar => direction_operator_rstar(&gs),
        DirectionKind::Full42 => {
            let od = OperatorData::new(problem, eval, &gs, false);
            direction_full_42(problem, &gs, &od)
        }
    };
    Ok((d, gs))
}

/// Central difference `(J(G+λR, U+λV) − J(G−λR, U−λV)) / 2λ` with orbits
/// and state recomputed at both points.
pub fn fd_derivative(problem: &Problem, g: &[f64], u: &[f64], r: &[f64], v: &[f64], lambda: f64) -> Result<f64> {
    let shift = |s: f64| {
        let gp: Vec<f64> = g.iter().zip(r).map(|(a, b)| a + s * b).collect();
        let up: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + s * b).collect();
        problem.cost(&gp, &up)
    };
    Ok((shift(lambda)? - shift(-lambda)?) / (2.0 * lambda))
}
