//! P1 assembly over the hold-all domain and the three elliptic solves.

use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::mesh::{Mesh, Point, Region};
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("linear system has non-finite data")]
    NonFinite,
}

/// Index set a nodal coefficient vector lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexSet {
    /// All vertices `I`.
    Full,
    /// Vertices off `∂D`, `I₀`.
    Interior,
    /// Vertices of observation triangles, `I_E`.
    Observation,
}

/// Coefficient vector of a P1 function together with its index set.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    pub set: IndexSet,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: &Mesh, set: IndexSet, values: Vec<f64>) -> Self {
        let n = match set {
            IndexSet::Full => mesh.n_vertices(),
            IndexSet::Interior => mesh.n_interior(),
            IndexSet::Observation => mesh.n_obs(),
        };
        assert_eq!(values.len(), n, "nodal field length does not match its index set");
        Self { set, values }
    }

    /// Full-index coefficients; entries outside the field's set are zero.
    pub fn to_full(&self, mesh: &Mesh) -> Vec<f64> {
        match self.set {
            IndexSet::Full => self.values.clone(),
            IndexSet::Interior => mesh.extend_interior(&self.values),
            IndexSet::Observation => {
                let mut out = vec![0.0; mesh.n_vertices()];
                for (k, &i) in mesh.obs_nodes().iter().enumerate() {
                    out[i] = self.values[k];
                }
                out
            }
        }
    }
}

/// Edge-midpoint rule on a triangle: the quadrature node opposite local
/// vertex `a` is the midpoint of the edge `(a+1, a+2)`, each with weight `|T|/3`.
pub const MIDPOINT_EDGES: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];

/// Physical coordinates of the three edge-midpoint quadrature nodes.
pub fn midpoints(mesh: &Mesh, t: usize) -> [Point; 3] {
    let tri = mesh.triangle(t);
    MIDPOINT_EDGES.map(|(a, b)| {
        let (p, q) = (mesh.vertex(tri[a]), mesh.vertex(tri[b]));
        [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]
    })
}

/// Values of a P1 field (full index set) at the three midpoint nodes.
pub fn midpoint_values(mesh: &Mesh, t: usize, g: &[f64]) -> [f64; 3] {
    let tri = mesh.triangle(t);
    MIDPOINT_EDGES.map(|(a, b)| 0.5 * (g[tri[a]] + g[tri[b]]))
}

/// `K_ij = ∫_D ∇φ_j·∇φ_i`, `i, j ∈ I₀`.
pub fn assemble_stiffness(mesh: &Mesh) -> CsrMatrix {
    let n0 = mesh.n_interior();
    let mut trip = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let gr = mesh.basis_gradients(t);
        let area = mesh.area(t);
        for a in 0..3 {
            let Some(i) = mesh.interior_index(tri[a]) else { continue };
            for b in 0..3 {
                let Some(j) = mesh.interior_index(tri[b]) else { continue };
                trip.push((i, j, area * (gr[a][0] * gr[b][0] + gr[a][1] * gr[b][1])));
            }
        }
    }
    CsrMatrix::from_triplets(n0, n0, &trip)
}

/// `F_i = ∫_D f φ_i`, `i ∈ I₀`, by the edge-midpoint rule.
pub fn assemble_load(mesh: &Mesh, f: &Expr) -> Result<Vec<f64>, ExprError> {
    let mut out = vec![0.0; mesh.n_interior()];
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let w = mesh.area(t) / 3.0;
        for (q, x) in midpoints(mesh, t).iter().enumerate() {
            let fx = f.eval(*x)?;
            let (a, b) = MIDPOINT_EDGES[q];
            for v in [tri[a], tri[b]] {
                if let Some(i) = mesh.interior_index(v) {
                    out[i] += w * fx * 0.5;
                }
            }
        }
    }
    Ok(out)
}

/// Row selection for weighted mass matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rows {
    Interior,
    Full,
}

/// `∫ w φ_j φ_i` with `w` given at the midpoint nodes of each triangle.
/// Columns span the full index set.
fn weighted_mass(mesh: &Mesh, rows: Rows, mut weight: impl FnMut(usize) -> [f64; 3]) -> CsrMatrix {
    let nrows = match rows {
        Rows::Interior => mesh.n_interior(),
        Rows::Full => mesh.n_vertices(),
    };
    let row_of = |v: usize| match rows {
        Rows::Interior => mesh.interior_index(v),
        Rows::Full => Some(v),
    };
    let mut trip = Vec::with_capacity(12 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let w = weight(t);
        if w.iter().all(|&x| x == 0.0) {
            continue;
        }
        let tri = mesh.triangle(t);
        let c0 = mesh.area(t) / 12.0;
        for (q, &(a, b)) in MIDPOINT_EDGES.iter().enumerate() {
            let c = c0 * w[q];
            if c == 0.0 {
                continue;
            }
            let (p, s) = (tri[a], tri[b]);
            for i in [p, s] {
                if let Some(r) = row_of(i) {
                    trip.push((r, p, c));
                    trip.push((r, s, c));
                }
            }
        }
    }
    CsrMatrix::from_triplets(nrows, mesh.n_vertices(), &trip)
}

/// Plain mass matrix over `D`, `n × n`.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    weighted_mass(mesh, Rows::Full, |_| [1.0; 3])
}

/// `B¹_ij = ∫_D (g_h+ε)_+² φ_j φ_i`, `i ∈ I₀`, `j ∈ I`.
pub fn assemble_b1(mesh: &Mesh, g: &[f64], eps: f64) -> CsrMatrix {
    assert_eq!(g.len(), mesh.n_vertices());
    weighted_mass(mesh, Rows::Interior, |t| {
        midpoint_values(mesh, t, g).map(|v| (v + eps).max(0.0).powi(2))
    })
}

/// `C¹_ij = ∫_D 2(g_h+ε)_+ u_h φ_j φ_i`, `i ∈ I₀`, `j ∈ I`.
pub fn assemble_c1(mesh: &Mesh, g: &[f64], eps: f64, u: &[f64]) -> CsrMatrix {
    assert_eq!(g.len(), mesh.n_vertices());
    assert_eq!(u.len(), mesh.n_vertices());
    weighted_mass(mesh, Rows::Interior, |t| {
        let gv = midpoint_values(mesh, t, g);
        let uv = midpoint_values(mesh, t, u);
        [0, 1, 2].map(|q| 2.0 * (gv[q] + eps).max(0.0) * uv[q])
    })
}

/// Integration domain of the observation mass matrix `M_ED`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MedDomain {
    /// Integrate over the whole hold-all.
    #[default]
    D,
    /// Integrate over observation triangles only.
    E,
}

/// `M_ED = (∫ φ_i φ_j)`, `i ∈ I_E`, `j ∈ I₀`.
pub fn assemble_med(mesh: &Mesh, domain: MedDomain) -> CsrMatrix {
    let mut trip = Vec::new();
    for t in 0..mesh.n_triangles() {
        if domain == MedDomain::E && mesh.label(t) != Region::Observation {
            continue;
        }
        let tri = mesh.triangle(t);
        let area = mesh.area(t);
        for a in 0..3 {
            let Some(i) = mesh.obs_index(tri[a]) else { continue };
            for b in 0..3 {
                let Some(j) = mesh.interior_index(tri[b]) else { continue };
                let m = if a == b { area / 6.0 } else { area / 12.0 };
                trip.push((i, j, m));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_obs(), mesh.n_interior(), &trip)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Stop when `‖b − Ax‖ ≤ rel_tol·‖b‖`.
    pub rel_tol: f64,
    /// Iteration cap; `None` means `10·n`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: None }
    }
}

/// Jacobi-preconditioned conjugate gradient for a symmetric positive
/// definite matrix.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &CgOptions) -> Result<Vec<f64>, SolveError> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(a.ncols(), n);
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if !bnorm.is_finite() {
        return Err(SolveError::NonFinite);
    }
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let target = opts.rel_tol * bnorm;
    for _ in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap.is_finite()) || pap <= 0.0 {
            return Err(SolveError::NonFinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= target {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // the recursive residual can drift; accept if the true residual is fine
    let true_res = residual_norm(a, &x, b);
    if true_res <= target {
        return Ok(x);
    }
    Err(SolveError::NotConverged { iterations: max_iter, residual: true_res / bnorm })
}

fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// State system `KY = F + B¹(G,ε)U`; returns `Y` on `I₀`.
pub fn solve_state(
    mesh: &Mesh,
    k: &CsrMatrix,
    load: &[f64],
    g: &[f64],
    u: &[f64],
    eps: f64,
    cg: &CgOptions,
) -> Result<Vec<f64>, SolveError> {
    let b1 = assemble_b1(mesh, g, eps);
    let mut rhs = b1.mul_vec(u);
    rhs.iter_mut().zip(load).for_each(|(r, f)| *r += f);
    solve_spd(k, &rhs, cg)
}

/// Variation system `KQ = B¹V + C¹R`; returns `Q` on `I₀`.
#[allow(clippy::too_many_arguments)]
pub fn solve_variation(
    mesh: &Mesh,
    k: &CsrMatrix,
    g: &[f64],
    u: &[f64],
    eps: f64,
    r: &[f64],
    v: &[f64],
    cg: &CgOptions,
) -> Result<Vec<f64>, SolveError> {
    let b1 = assemble_b1(mesh, g, eps);
    let c1 = assemble_c1(mesh, g, eps, u);
    let mut rhs = b1.mul_vec(v);
    rhs.iter_mut().zip(c1.mul_vec(r)).for_each(|(a, b)| *a += b);
    solve_spd(k, &rhs, cg)
}

/// Right-hand side of the adjoint system, `M_EDᵀL + (2/ε) N Y`, where `N`
/// is the curve matrix summed over all components.
pub fn adjoint_rhs(med: &CsrMatrix, l: &[f64], n_z: &CsrMatrix, y: &[f64], eps: f64) -> Vec<f64> {
    let mut rhs = med.tr_mul_vec(l);
    let ny = n_z.mul_vec(y);
    rhs.iter_mut().zip(ny).for_each(|(a, b)| *a += 2.0 / eps * b);
    rhs
}

/// Adjoint system `KP = M_EDᵀL(Y) + (2/ε)N(Z)Y`; returns `P` on `I₀`.
pub fn solve_adjoint(
    k: &CsrMatrix,
    med: &CsrMatrix,
    l: &[f64],
    n_z: &CsrMatrix,
    y: &[f64],
    eps: f64,
    cg: &CgOptions,
) -> Result<Vec<f64>, SolveError> {
    solve_spd(k, &adjoint_rhs(med, l, n_z, y, eps), cg)
}

/// Degree-4 six-point rule on the reference triangle: barycentric nodes and
/// weights (summing to 1).
const DUNAVANT4: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445948490915965;
    const B: f64 = 0.091576213509771;
    const WA: f64 = 0.223381589678011;
    const WB: f64 = 0.109951743655322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// `‖y_h − y‖_{L²(D)}` for a full-index P1 field against a closure.
pub fn l2_error(mesh: &Mesh, y: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let pts = tri.map(|v| mesh.vertex(v));
        for (bary, w) in DUNAVANT4 {
            let x = [
                bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0],
                bary[0] * pts[0][1] + bary[1] * pts[1][1] + bary[2] * pts[2][1],
            ];
            let yh = bary[0] * y[tri[0]] + bary[1] * y[tri[1]] + bary[2] * y[tri[2]];
            s += w * mesh.area(t) * (yh - exact(x)).powi(2);
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_disk_mesh, generate_rect_mesh, polygon_disk, Rect};

    fn unit3() -> Mesh {
        generate_rect_mesh(Rect::square(0.0, 1.0), 2, 2, &[]).unwrap()
    }

    #[test]
    fn single_interior_node() {
        let m = unit3();
        let k = assemble_stiffness(&m);
        assert_eq!(k.nrows(), 1);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-14);
        let y = solve_spd(&k, &[1.0], &CgOptions::default()).unwrap();
        assert!((y[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn stiffness_symmetric_and_kills_affine() {
        let m = generate_rect_mesh(Rect::new(-1.0, 2.0, 0.0, 1.0), 9, 4, &[]).unwrap();
        let k = assemble_stiffness(&m);
        assert!(k.is_symmetric(1e-12));
        // full-index stiffness applied to an affine field vanishes at interior rows
        let g = m.interpolate(|p| 1.0 + 2.0 * p[0] - p[1]);
        let mut trip = Vec::new();
        for t in 0..m.n_triangles() {
            let tri = m.triangle(t);
            let gr = m.basis_gradients(t);
            for a in 0..3 {
                for b in 0..3 {
                    trip.push((tri[a], tri[b], m.area(t) * (gr[a][0] * gr[b][0] + gr[a][1] * gr[b][1])));
                }
            }
        }
        let kf = CsrMatrix::from_triplets(m.n_vertices(), m.n_vertices(), &trip);
        let r = kf.mul_vec(&g);
        for &i in m.interior_nodes() {
            assert!(r[i].abs() < 1e-12);
        }
    }

    #[test]
    fn load_of_unit_source() {
        let m = generate_rect_mesh(Rect::square(0.0, 1.0), 5, 3, &[]).unwrap();
        let f = assemble_load(&m, &Expr::parse("1").unwrap()).unwrap();
        for (k, &i) in m.interior_nodes().iter().enumerate() {
            let star: f64 = m.vertex_star(i).iter().map(|&t| m.area(t)).sum();
            assert!((f[k] - star / 3.0).abs() < 1e-15);
        }
        let f4 = assemble_load(&m, &Expr::parse("4").unwrap()).unwrap();
        assert!(f4.iter().zip(&f).all(|(a, b)| (a - 4.0 * b).abs() < 1e-15));
        let f0 = assemble_load(&m, &Expr::parse("0").unwrap()).unwrap();
        assert!(f0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weighted_masses() {
        let m = generate_rect_mesh(Rect::square(-1.0, 1.0), 6, 6, &[]).unwrap();
        let eps = 0.2;
        let n = m.n_vertices();
        assert_eq!(assemble_b1(&m, &vec![-eps - 0.1; n], eps).nnz(), 0);
        let mass = assemble_mass(&m).to_dense();
        let rows: Vec<&Vec<f64>> = m.interior_nodes().iter().map(|&i| &mass[i]).collect();
        let c = 1.7;
        let b1 = assemble_b1(&m, &vec![c - eps; n], eps).to_dense();
        let c1 = assemble_c1(&m, &vec![1.0 - eps; n], eps, &vec![1.0; n]).to_dense();
        for (k, row) in rows.iter().enumerate() {
            for j in 0..n {
                assert!((b1[k][j] - c * c * row[j]).abs() < 1e-14);
                assert!((c1[k][j] - 2.0 * row[j]).abs() < 1e-14);
            }
        }
        assert_eq!(assemble_c1(&m, &vec![0.3; n], eps, &vec![0.0; n]).max_abs(), 0.0);
    }

    #[test]
    fn quadratic_weight_is_integrated_exactly() {
        // summing over all i, j reduces the matrix to ∫ w over the square
        let m = generate_rect_mesh(Rect::square(0.0, 1.0), 4, 4, &[]).unwrap();
        let g = m.interpolate(|p| p[0] + p[1]);
        let b = weighted_mass(&m, Rows::Full, |t| midpoint_values(&m, t, &g).map(|v| (v + 1.0).powi(2)));
        let ones = vec![1.0; m.n_vertices()];
        let total = b.bilinear(&ones, &ones);
        // ∫(x+y)^2 = 7/6, ∫2(x+y) = 2, ∫1 = 1
        let exact = 7.0 / 6.0 + 2.0 + 1.0;
        assert!((total - exact).abs() < 1e-13);
    }

    #[test]
    fn med_bounds_and_domains() {
        let e = polygon_disk([0.0, 0.0], 0.5, 16);
        let m = generate_rect_mesh(Rect::square(-2.0, 2.0), 12, 12, &e).unwrap();
        let md = assemble_med(&m, MedDomain::D);
        let me = assemble_med(&m, MedDomain::E);
        assert_eq!((md.nrows(), md.ncols()), (m.n_obs(), m.n_interior()));
        for (k, &i) in m.obs_nodes().iter().enumerate() {
            let row: f64 = md.row(k).map(|(_, v)| v).sum();
            let star: f64 = m.vertex_star(i).iter().map(|&t| m.area(t)).sum();
            assert!(row <= star / 3.0 + 1e-14);
            let row_e: f64 = me.row(k).map(|(_, v)| v).sum();
            assert!(row_e <= row + 1e-14);
        }
    }

    #[test]
    fn state_solves() {
        let m = generate_rect_mesh(Rect::square(-1.0, 1.0), 8, 8, &[]).unwrap();
        let k = assemble_stiffness(&m);
        let n = m.n_vertices();
        let zero_load = vec![0.0; m.n_interior()];
        let y = solve_state(&m, &k, &zero_load, &vec![0.5; n], &vec![0.0; n], 0.1, &CgOptions::default()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let f1 = assemble_load(&m, &Expr::parse("x1^2").unwrap()).unwrap();
        let f2 = assemble_load(&m, &Expr::parse("cos(x2)").unwrap()).unwrap();
        let f12 = assemble_load(&m, &Expr::parse("x1^2 + cos(x2)").unwrap()).unwrap();
        let g = m.interpolate(|p| p[0] - 0.2);
        let u = m.interpolate(|p| p[1]);
        let cg = CgOptions::default();
        let y1 = solve_state(&m, &k, &f1, &g, &u, 0.1, &cg).unwrap();
        let y2 = solve_state(&m, &k, &f2, &g, &vec![0.0; n], 0.1, &cg).unwrap();
        let y12 = solve_state(&m, &k, &f12, &g, &u, 0.1, &cg).unwrap();
        for i in 0..y1.len() {
            assert!((y12[i] - y1[i] - y2[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn disk_manufactured_solution() {
        let mut errs = Vec::new();
        for r in 2..5 {
            let m = generate_disk_mesh([0.0, 0.0], 1.0, r, &[]).unwrap();
            let k = assemble_stiffness(&m);
            let f = assemble_load(&m, &Expr::parse("4").unwrap()).unwrap();
            let y = solve_spd(&k, &f, &CgOptions::default()).unwrap();
            errs.push(l2_error(&m, &m.extend_interior(&y), |p| 1.0 - p[0] * p[0] - p[1] * p[1]));
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8);
        }
    }
}
