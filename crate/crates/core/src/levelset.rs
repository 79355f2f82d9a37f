//! Zero-level-set components of `g_h`, forward-Euler Hamiltonian orbits and
//! their linearization with respect to `g`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mesh::{dist, DerivativeFields, DiscreteDerivativeOps, Location, Mesh, MeshError, Point};
use crate::sparse::{CsrMatrix, SparseVec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("the zero level set of g is empty")]
    EmptyZeroSet,
    #[error("orbit left the domain at step {step}, point ({x}, {y})")]
    Escape { step: usize, x: f64, y: f64 },
    #[error("orbit stagnated at step {step}: speed {speed:e} (gradient of g vanishes on the zero set)")]
    Stagnation { step: usize, speed: f64 },
    #[error("orbit did not close within {steps} steps")]
    NoClosure { steps: usize },
    #[error("degenerate orbit segment {k}")]
    DegenerateSegment { k: usize },
    #[error("fixed step count must be at least 1")]
    BadStepCount,
}

/// Speeds below this are treated as a critical point of `g`.
pub const STAGNATION_SPEED: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    /// Uniform time step.
    pub dt: f64,
    /// Upper bound on Euler steps per orbit.
    pub max_steps: usize,
    /// Closure is only tested after this many steps.
    pub min_steps: usize,
    /// An orbit closes once it crosses the normal line through the seed
    /// within `closure_factor · dt · |v(Z₀)|` of the seed.
    pub closure_factor: f64,
    /// When set, every orbit gets exactly this many intervals; the step is
    /// rescaled to `T/m` from a pilot trace with `dt`.
    pub fixed_m: Option<usize>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { dt: 1e-2, max_steps: 1_000_000, min_steps: 10, closure_factor: 10.0, fixed_m: None }
    }
}

/// Closed Euler polyline `Z_0, …, Z_m` with `Z_m = Z_0` on the uniform
/// partition `t_k = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Point>,
    /// Location of each point, `locations[m]` equals `locations[0]`.
    pub locations: Vec<Location>,
    pub dt: f64,
    pub component: usize,
    pub seed: Point,
}

impl Trajectory {
    /// Number of time intervals.
    pub fn m(&self) -> usize {
        self.points.len() - 1
    }

    /// `T_g = t_m`.
    pub fn period(&self) -> f64 {
        self.m() as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.m()).map(|k| k as f64 * self.dt).collect()
    }

    /// Polyline length `Σ |Z_k Z_{k+1}|`.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    /// `max_k |g_h(Z_k) − g_h(Z_0)|` over the Euler points.
    pub fn drift(&self, mesh: &Mesh, g: &[f64]) -> f64 {
        let g0 = mesh.eval_at(g, &self.locations[0]);
        self.locations.iter().map(|l| (mesh.eval_at(g, l) - g0).abs()).fold(0.0, f64::max)
    }
}

/// Hamiltonian velocity `(−∂₂^h g_h, ∂₁^h g_h)` from precomputed fields.
pub struct VelocityField<'a> {
    mesh: &'a Mesh,
    d1: &'a [f64],
    d2: &'a [f64],
}

impl<'a> VelocityField<'a> {
    pub fn new(mesh: &'a Mesh, fields: &'a DerivativeFields) -> Self {
        Self { mesh, d1: &fields.d1, d2: &fields.d2 }
    }

    pub fn at(&self, loc: &Location) -> Point {
        [-self.mesh.eval_at(self.d2, loc), self.mesh.eval_at(self.d1, loc)]
    }
}

fn norm(v: Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot2(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Orbit with exactly `m` intervals: `m − 1` Euler steps from `seed` with
/// step `dt`, then the closing point `Z_m = Z_0`.
pub fn trace_fixed(
    mesh: &Mesh,
    fields: &DerivativeFields,
    seed: Point,
    m: usize,
    dt: f64,
) -> Result<Trajectory, TraceError> {
    if m == 0 {
        return Err(TraceError::BadStepCount);
    }
    let vel = VelocityField::new(mesh, fields);
    let loc0 = locate(mesh, seed, 0, 0)?;
    let mut points = vec![seed];
    let mut locations = vec![loc0];
    for k in 1..m {
        let (z, loc) = (points[k - 1], locations[k - 1]);
        let v = vel.at(&loc);
        let speed = norm(v);
        if speed < STAGNATION_SPEED {
            return Err(TraceError::Stagnation { step: k - 1, speed });
        }
        let next = [z[0] + dt * v[0], z[1] + dt * v[1]];
        locations.push(locate(mesh, next, loc.tri, k)?);
        points.push(next);
    }
    points.push(seed);
    locations.push(loc0);
    Ok(Trajectory { points, locations, dt, component: 0, seed })
}

fn locate(mesh: &Mesh, p: Point, hint: usize, step: usize) -> Result<Location, TraceError> {
    mesh.locate_point(p, hint).map_err(|e| match e {
        MeshError::Outside { x, y } => TraceError::Escape { step, x, y },
        _ => TraceError::Escape { step, x: p[0], y: p[1] },
    })
}

/// Euler orbit from `seed` with closure detection.
///
/// After `min_steps`, the orbit closes at the first step `k` whose point
/// crosses the line through `Z_0` normal to `v(Z_0)` in the direction of
/// motion while lying within `closure_factor · dt · |v(Z_0)|` of `Z_0`. Then
/// `m = k` and `Z_m` is replaced by `Z_0`. With `fixed_m`, the detected
/// period `T` is refined by interpolating the crossing, and the orbit is
/// retraced with `m` intervals of length `T/m`.
pub fn trace_orbit(
    mesh: &Mesh,
    fields: &DerivativeFields,
    seed: Point,
    opts: &TraceOptions,
) -> Result<Trajectory, TraceError> {
    let (mut traj, period) = trace_detect(mesh, fields, seed, opts)?;
    if let Some(m) = opts.fixed_m {
        traj = trace_fixed(mesh, fields, seed, m, period / m as f64)?;
    }
    Ok(traj)
}

fn trace_detect(
    mesh: &Mesh,
    fields: &DerivativeFields,
    seed: Point,
    opts: &TraceOptions,
) -> Result<(Trajectory, f64), TraceError> {
    let dt = opts.dt;
    let vel = VelocityField::new(mesh, fields);
    let loc0 = locate(mesh, seed, 0, 0)?;
    let v0 = vel.at(&loc0);
    let s0 = norm(v0);
    if s0 < STAGNATION_SPEED {
        return Err(TraceError::Stagnation { step: 0, speed: s0 });
    }
    let radius = opts.closure_factor * dt * s0;
    let mut points = vec![seed];
    let mut locations = vec![loc0];
    let mut prev_ahead = 0.0;
    for k in 1..=opts.max_steps {
        let (z, loc) = (points[k - 1], locations[k - 1]);
        let v = vel.at(&loc);
        let speed = norm(v);
        if speed < STAGNATION_SPEED {
            return Err(TraceError::Stagnation { step: k - 1, speed });
        }
        let next = [z[0] + dt * v[0], z[1] + dt * v[1]];
        let ahead = dot2(sub(next, seed), v0);
        if k >= opts.min_steps && prev_ahead < 0.0 && ahead >= 0.0 && dist(next, seed) < radius {
            let frac = -prev_ahead / (ahead - prev_ahead);
            let period = (k as f64 - 1.0 + frac) * dt;
            points.push(seed);
            locations.push(loc0);
            return Ok((Trajectory { points, locations, dt, component: 0, seed }, period));
        }
        prev_ahead = ahead;
        locations.push(locate(mesh, next, loc.tri, k)?);
        points.push(next);
    }
    Err(TraceError::NoClosure { steps: opts.max_steps })
}

/// Points where `g_h` changes sign along mesh edges, in edge order. A node
/// value of exactly zero counts as nonnegative.
pub fn zero_crossings(mesh: &Mesh, g: &[f64]) -> Vec<Point> {
    mesh.edges()
        .into_iter()
        .filter(|&(p, q)| (g[p] < 0.0) != (g[q] < 0.0))
        .map(|(p, q)| {
            let t = g[p] / (g[p] - g[q]);
            let (a, b) = (mesh.vertex(p), mesh.vertex(q));
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect()
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let l2 = dot2(ab, ab);
    let t = if l2 > 0.0 { (dot2(sub(p, a), ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Traces one orbit per connected component of the zero level set.
///
/// Starting from the first unclaimed edge crossing, an orbit is traced and
/// every crossing within `h + δ` of the resulting polyline is claimed, where
/// `δ` bounds the distance of the Euler points from the zero set estimated
/// by `|g_h(Z_k)| / |v(Z_k)|`. This repeats until all crossings are claimed.
pub fn trace_components(
    mesh: &Mesh,
    g: &[f64],
    fields: &DerivativeFields,
    opts: &TraceOptions,
) -> Result<Vec<Trajectory>, TraceError> {
    let crossings = zero_crossings(mesh, g);
    if crossings.is_empty() {
        return Err(TraceError::EmptyZeroSet);
    }
    let grid = PointGrid::new(&crossings, mesh.h());
    let mut claimed = vec![false; crossings.len()];
    let vel = VelocityField::new(mesh, fields);
    let mut out = Vec::new();
    while let Some(first) = claimed.iter().position(|&c| !c) {
        let mut traj = trace_orbit(mesh, fields, crossings[first], opts)?;
        traj.component = out.len();
        let offset = traj
            .locations
            .iter()
            .map(|l| mesh.eval_at(g, l).abs() / norm(vel.at(l)).max(STAGNATION_SPEED))
            .fold(0.0, f64::max);
        let radius = mesh.h() + offset;
        claimed[first] = true;
        for w in traj.points.windows(2) {
            grid.for_each_near(w[0], w[1], radius, |i| {
                if !claimed[i] && point_segment_distance(crossings[i], w[0], w[1]) <= radius {
                    claimed[i] = true;
                }
            });
        }
        out.push(traj);
    }
    Ok(out)
}

/// Seeds of all zero-set components, one per traced orbit.
pub fn find_seeds(
    mesh: &Mesh,
    g: &[f64],
    fields: &DerivativeFields,
    opts: &TraceOptions,
) -> Result<Vec<Point>, TraceError> {
    Ok(trace_components(mesh, g, fields, opts)?.into_iter().map(|t| t.seed).collect())
}

/// Uniform hash of points for radius queries around segments.
struct PointGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    cells: BTreeMap<(i64, i64), Vec<usize>>,
}

impl PointGrid {
    fn new(points: &[Point], cell: f64) -> Self {
        let x0 = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let y0 = points.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        let grid = Self { x0, y0, cell, cells: BTreeMap::new() };
        for (i, &p) in points.iter().enumerate() {
            cells.entry(grid.key(p)).or_default().push(i);
        }
        Self { cells, ..grid }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        (((p[0] - self.x0) / self.cell).floor() as i64, ((p[1] - self.y0) / self.cell).floor() as i64)
    }

    fn for_each_near(&self, a: Point, b: Point, r: f64, mut f: impl FnMut(usize)) {
        let lo = self.key([a[0].min(b[0]) - r, a[1].min(b[1]) - r]);
        let hi = self.key([a[0].max(b[0]) + r, a[1].max(b[1]) + r]);
        if (hi.0 - lo.0 + 1) * (hi.1 - lo.1 + 1) > 4 * self.cells.len() as i64 {
            self.cells.values().flatten().for_each(|&i| f(i));
            return;
        }
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                if let Some(v) = self.cells.get(&(i, j)) {
                    v.iter().for_each(|&k| f(k));
                }
            }
        }
    }
}

/// Zero level set of a P1 field as straight segments, one per triangle whose
/// vertex values change sign.
pub fn zero_level_segments(mesh: &Mesh, f: &[f64]) -> Vec<[Point; 2]> {
    let mut out = Vec::new();
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let mut pts = Vec::with_capacity(3);
        for a in 0..3 {
            let (i, j) = (tri[a], tri[(a + 1) % 3]);
            let (fi, fj) = (f[i], f[j]);
            if (fi < 0.0) != (fj < 0.0) {
                let s = fi / (fi - fj);
                let (p, q) = (mesh.vertex(i), mesh.vertex(j));
                pts.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
            }
        }
        if pts.len() == 2 {
            out.push([pts[0], pts[1]]);
        }
    }
    out
}

/// Pass/fail for each admissibility condition on `g_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    /// `g_h > 0` at every boundary node.
    pub positive_on_boundary: bool,
    /// `g_h < 0` at every observation node.
    pub negative_on_obs: bool,
    /// `|∇g_h| > threshold` on every triangle crossed by the zero set.
    pub nondegenerate_gradient: bool,
    pub min_gradient: f64,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.positive_on_boundary && self.negative_on_obs && self.nondegenerate_gradient
    }

    /// Human-readable list of failed conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.positive_on_boundary {
            out.push("g must be positive on the boundary of D");
        }
        if !self.negative_on_obs {
            out.push("g must be negative on the closure of E");
        }
        if !self.nondegenerate_gradient {
            out.push("the gradient of g must not vanish on the zero level set");
        }
        out
    }
}

pub const GRADIENT_THRESHOLD: f64 = 1e-8;

pub fn validate_admissible(mesh: &Mesh, g: &[f64]) -> AdmissibilityReport {
    let positive_on_boundary = (0..mesh.n_vertices()).filter(|&i| mesh.is_boundary(i)).all(|i| g[i] > 0.0);
    let negative_on_obs = mesh.obs_nodes().iter().all(|&i| g[i] < 0.0);
    let mut min_gradient = f64::INFINITY;
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let neg = tri.iter().filter(|&&v| g[v] < 0.0).count();
        if neg > 0 && neg < 3 {
            min_gradient = min_gradient.min(norm(mesh.gradient_on(g, t)));
        }
    }
    AdmissibilityReport {
        positive_on_boundary,
        negative_on_obs,
        nondegenerate_gradient: min_gradient > GRADIENT_THRESHOLD,
        min_gradient,
    }
}

/// Linearized orbit `W_0 = 0, …, W_m` for a direction `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationPath {
    pub w: Vec<Point>,
}

impl VariationPath {
    pub fn w1(&self) -> Vec<f64> {
        self.w[1..].iter().map(|w| w[0]).collect()
    }

    pub fn w2(&self) -> Vec<f64> {
        self.w[1..].iter().map(|w| w[1]).collect()
    }
}

/// Second derivatives `(h11, h12, h21, h22)` of `g_h` at an orbit point,
/// where `hab` interpolates `Π^a Π^b G`.
fn hessian_at(mesh: &Mesh, f: &DerivativeFields, loc: &Location) -> [f64; 4] {
    [
        mesh.eval_at(&f.d11, loc),
        mesh.eval_at(&f.d12, loc),
        mesh.eval_at(&f.d21, loc),
        mesh.eval_at(&f.d22, loc),
    ]
}

/// `M₂(k)` for every `k = 0..m-1`.
pub fn m2_matrices(mesh: &Mesh, fields: &DerivativeFields, traj: &Trajectory) -> Vec<[[f64; 2]; 2]> {
    let dt = traj.dt;
    traj.locations[..traj.m()]
        .iter()
        .map(|loc| {
            let [h11, h12, h21, h22] = hessian_at(mesh, fields, loc);
            [[1.0 - dt * h12, -dt * h22], [dt * h11, 1.0 + dt * h21]]
        })
        .collect()
}

/// Explicit recursion for `W` driven by the direction `R` (full index set).
pub fn variation_path(
    mesh: &Mesh,
    ops: &DiscreteDerivativeOps,
    fields: &DerivativeFields,
    traj: &Trajectory,
    r: &[f64],
) -> VariationPath {
    let r1 = ops.pi1.mul_vec(r);
    let r2 = ops.pi2.mul_vec(r);
    let dt = traj.dt;
    let m2 = m2_matrices(mesh, fields, traj);
    let mut w = vec![[0.0, 0.0]; traj.m() + 1];
    for k in 0..traj.m() {
        let loc = &traj.locations[k];
        let (dr1, dr2) = (mesh.eval_at(&r1, loc), mesh.eval_at(&r2, loc));
        let a = m2[k];
        let wk = w[k];
        w[k + 1] = [
            a[0][0] * wk[0] + a[0][1] * wk[1] - dt * dr2,
            a[1][0] * wk[0] + a[1][1] * wk[1] + dt * dr1,
        ];
    }
    VariationPath { w }
}

/// Row vector `Φᵀ(Z)·Π` as a sparse vector over the full index set.
fn phi_times(mesh: &Mesh, loc: &Location, pi: &CsrMatrix) -> SparseVec {
    let tri = mesh.triangle(loc.tri);
    let mut acc = BTreeMap::new();
    for a in 0..3 {
        if loc.bary[a] == 0.0 {
            continue;
        }
        for (j, v) in pi.row(tri[a]) {
            *acc.entry(j).or_insert(0.0) += loc.bary[a] * v;
        }
    }
    SparseVec::from_map(acc)
}

/// Linear orbit operators: `W_{k+1} = M₂(k) W_k + N₂(k) R` and the stacked
/// matrices `B²`, `B³` with `(B²R)_k = W_k¹`, `(B³R)_k = W_k²`, `k = 1..m`.
#[derive(Clone, Debug)]
pub struct OrbitOperators {
    pub m2: Vec<[[f64; 2]; 2]>,
    /// Rows `(N₂(k)₁, N₂(k)₂)` for `k = 0..m-1`.
    pub n2: Vec<[SparseVec; 2]>,
    pub b2: CsrMatrix,
    pub b3: CsrMatrix,
}

/// Builds `M₂(k)` and `N₂(k)`; the stacked matrices are formed only when
/// `explicit` is set since their fill grows quadratically with `m`.
pub fn build_orbit_operators(
    mesh: &Mesh,
    ops: &DiscreteDerivativeOps,
    fields: &DerivativeFields,
    traj: &Trajectory,
    explicit: bool,
) -> OrbitOperators {
    let dt = traj.dt;
    let m = traj.m();
    let n = mesh.n_vertices();
    let m2 = m2_matrices(mesh, fields, traj);
    let n2: Vec<[SparseVec; 2]> = traj.locations[..m]
        .iter()
        .map(|loc| {
            let p2 = phi_times(mesh, loc, &ops.pi2);
            let p1 = phi_times(mesh, loc, &ops.pi1);
            let zero = SparseVec::default();
            [SparseVec::lincomb(-dt, &p2, 0.0, &zero), SparseVec::lincomb(dt, &p1, 0.0, &zero)]
        })
        .collect();
    let (b2, b3) = if explicit {
        let mut t2 = Vec::new();
        let mut t3 = Vec::new();
        let mut w = [SparseVec::default(), SparseVec::default()];
        for k in 0..m {
            let a = m2[k];
            let n1 = SparseVec::lincomb(a[0][0], &w[0], a[0][1], &w[1]);
            let n2r = SparseVec::lincomb(a[1][0], &w[0], a[1][1], &w[1]);
            w = [
                SparseVec::lincomb(1.0, &n1, 1.0, &n2[k][0]),
                SparseVec::lincomb(1.0, &n2r, 1.0, &n2[k][1]),
            ];
            t2.extend(w[0].indices.iter().zip(&w[0].values).map(|(&j, &v)| (k, j, v)));
            t3.extend(w[1].indices.iter().zip(&w[1].values).map(|(&j, &v)| (k, j, v)));
        }
        (CsrMatrix::from_triplets(m, n, &t2), CsrMatrix::from_triplets(m, n, &t3))
    } else {
        (CsrMatrix::zeros(0, n), CsrMatrix::zeros(0, n))
    };
    OrbitOperators { m2, n2, b2, b3 }
}

impl OrbitOperators {
    pub fn m(&self) -> usize {
        self.m2.len()
    }

    /// `W` for a direction `R` via the recursion.
    pub fn apply(&self, r: &[f64]) -> VariationPath {
        let mut w = vec![[0.0, 0.0]; self.m() + 1];
        for k in 0..self.m() {
            let a = self.m2[k];
            let wk = w[k];
            w[k + 1] = [
                a[0][0] * wk[0] + a[0][1] * wk[1] + self.n2[k][0].dot_dense(r),
                a[1][0] * wk[0] + a[1][1] * wk[1] + self.n2[k][1].dot_dense(r),
            ];
        }
        VariationPath { w }
    }

    /// `(B²)ᵀ a + (B³)ᵀ b` for `a, b ∈ R^m` (indexed by `k = 1..m`), by a
    /// backward sweep of the adjoint recursion.
    pub fn transpose_apply(&self, a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let m = self.m();
        assert_eq!(a.len(), m);
        assert_eq!(b.len(), m);
        let mut out = vec![0.0; n];
        // mu holds the sensitivity of the functional to W_{k+1}
        let mut mu = [a[m - 1], b[m - 1]];
        for k in (0..m).rev() {
            self.n2[k][0].axpy_into(mu[0], &mut out);
            self.n2[k][1].axpy_into(mu[1], &mut out);
            if k > 0 {
                let t = self.m2[k];
                mu = [t[0][0] * mu[0] + t[1][0] * mu[1] + a[k - 1], t[0][1] * mu[0] + t[1][1] * mu[1] + b[k - 1]];
            }
        }
        out
    }
}

/// Derivative fields of `G` under the discrete operators.
pub fn derivative_fields(ops: &DiscreteDerivativeOps, g: &[f64]) -> DerivativeFields {
    ops.derivative_fields(g)
}
