//! Triangulations of the hold-all domain that are compatible with the
//! observation region, plus the P1 bookkeeping built on top of them.

mod generate;
pub mod io;
pub use io::{format_mesh, format_vtk, load_mesh, parse_mesh, parse_vtk, read_vtk, write_mesh, write_vtk, VtkData};
mod locate;
mod pih;

use std::collections::HashMap;

use thiserror::Error;

pub use generate::{generate_disk_mesh, generate_rect_mesh, polygon_disk, Rect};
pub use locate::Location;
pub use pih::{DerivativeFields, DiscreteDerivativeOps};

pub type Point = [f64; 2];

/// Region label carried by every triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    /// The triangle lies in the closure of the observation region.
    Observation,
    /// The triangle lies in the closure of the complement.
    Exterior,
}

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("triangle {tri} has nonpositive signed area {area:e}")]
    Orientation { tri: usize, area: f64 },
    #[error("triangle {tri} references vertex {index} but the mesh has {n} vertices")]
    IndexOutOfRange { tri: usize, index: usize, n: usize },
    #[error("triangle {tri} has no region label")]
    Unlabeled { tri: usize },
    #[error("mesh is not edge-conforming near edge ({0}, {1})")]
    NonConforming(usize, usize),
    #[error("resolution must be at least 1 cell per axis, got {0}x{1}")]
    Resolution(usize, usize),
    #[error("observation polygon must lie strictly inside the domain")]
    PolygonTouchesBoundary,
    #[error("point ({x}, {y}) lies outside the domain")]
    Outside { x: f64, y: f64 },
    #[error("malformed mesh file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty mesh")]
    Empty,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MeshError {
    fn from(e: std::io::Error) -> Self {
        MeshError::Io(e.to_string())
    }
}

/// Fixed triangulation with P1 index sets.
///
/// `I` is the full vertex range `0..n`, `I₀` the vertices off `∂D` and `I_E`
/// the vertices of observation-labeled triangles. Positions inside `I₀` and
/// `I_E` are used as row/column indices of the interior-indexed matrices.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    labels: Vec<Region>,
    on_boundary: Vec<bool>,
    interior: Vec<usize>,
    interior_pos: Vec<usize>,
    obs_nodes: Vec<usize>,
    obs_pos: Vec<usize>,
    areas: Vec<f64>,
    basis_grads: Vec<[Point; 3]>,
    vertex_tri_ptr: Vec<usize>,
    vertex_tris: Vec<usize>,
    neighbors: Vec<[Option<usize>; 3]>,
    h: f64,
    grid: locate::BucketGrid,
}

pub const NONE: usize = usize::MAX;

impl Mesh {
    /// Builds a mesh and checks its invariants. `on_boundary` flags the
    /// vertices on `∂D`.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        labels: Vec<Region>,
        on_boundary: Vec<bool>,
    ) -> Result<Self, MeshError> {
        let n = vertices.len();
        if n == 0 || triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if labels.len() != triangles.len() {
            return Err(MeshError::Unlabeled { tri: labels.len().min(triangles.len()) });
        }
        assert_eq!(on_boundary.len(), n, "boundary flags must cover every vertex");

        let mut areas = Vec::with_capacity(triangles.len());
        let mut basis_grads = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange { tri: t, index: v, n });
                }
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
            if !(area > 0.0) {
                return Err(MeshError::Orientation { tri: t, area });
            }
            areas.push(area);
            // gradient of the barycentric coordinate of vertex a is the inward
            // normal of the opposite edge scaled by its length / (2|T|)
            let inv = 1.0 / (2.0 * area);
            let g = |p: Point, q: Point| [(p[1] - q[1]) * inv, (q[0] - p[0]) * inv];
            basis_grads.push([g(b, c), g(c, a), g(a, b)]);
        }

        // edge adjacency and conformity
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize, bool)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for a in 0..3 {
                let (p, q) = (tri[(a + 1) % 3], tri[(a + 2) % 3]);
                let key = (p.min(q), p.max(q));
                edges.entry(key).or_default().push((t, a, p < q));
            }
        }
        let mut neighbors = vec![[None; 3]; triangles.len()];
        let mut h: f64 = 0.0;
        let mut keys: Vec<_> = edges.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let uses = &edges[&key];
            let (p, q) = key;
            let len = dist(vertices[p], vertices[q]);
            h = h.max(len);
            match uses.as_slice() {
                [_] => {
                    if !on_boundary[p] || !on_boundary[q] {
                        return Err(MeshError::NonConforming(p, q));
                    }
                }
                [(t1, a1, d1), (t2, a2, d2)] => {
                    if d1 == d2 {
                        return Err(MeshError::NonConforming(p, q));
                    }
                    neighbors[*t1][*a1] = Some(*t2);
                    neighbors[*t2][*a2] = Some(*t1);
                }
                _ => return Err(MeshError::NonConforming(p, q)),
            }
        }

        let mut counts = vec![0usize; n + 1];
        for tri in &triangles {
            for &v in tri {
                counts[v + 1] += 1;
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut vertex_tris = vec![0; counts[n]];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_tris[fill[v]] = t;
                fill[v] += 1;
            }
        }

        let mut interior_pos = vec![NONE; n];
        let interior: Vec<usize> = (0..n).filter(|&i| !on_boundary[i]).collect();
        for (k, &i) in interior.iter().enumerate() {
            interior_pos[i] = k;
        }
        let mut is_obs = vec![false; n];
        for (tri, l) in triangles.iter().zip(&labels) {
            if *l == Region::Observation {
                tri.iter().for_each(|&v| is_obs[v] = true);
            }
        }
        let obs_nodes: Vec<usize> = (0..n).filter(|&i| is_obs[i]).collect();
        let mut obs_pos = vec![NONE; n];
        for (k, &i) in obs_nodes.iter().enumerate() {
            obs_pos[i] = k;
        }

        let grid = locate::BucketGrid::build(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            labels,
            on_boundary,
            interior,
            interior_pos,
            obs_nodes,
            obs_pos,
            areas,
            basis_grads,
            vertex_tri_ptr: counts,
            vertex_tris,
            neighbors,
            h,
            grid,
        })
    }

    /// Builds a mesh whose boundary flags come from the topology: a vertex is
    /// on `∂D` iff it lies on an edge used by a single triangle.
    pub fn from_topology(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        labels: Vec<Region>,
    ) -> Result<Self, MeshError> {
        let mut uses: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &triangles {
            for a in 0..3 {
                let (p, q) = (tri[a], tri[(a + 1) % 3]);
                *uses.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        let mut on_boundary = vec![false; vertices.len()];
        for (&(p, q), &c) in &uses {
            if c == 1 {
                on_boundary[p] = true;
                on_boundary[q] = true;
            }
        }
        Self::new(vertices, triangles, labels, on_boundary)
    }

    /// Mesh made of the selected triangles only, with vertices renumbered in
    /// increasing original order. Boundary flags are recomputed from the
    /// topology of the subset. Returns the mesh and the new→old vertex map.
    pub fn submesh(&self, keep: &[bool]) -> Result<(Mesh, Vec<usize>), MeshError> {
        let mut used = vec![false; self.n_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            if keep[t] {
                tri.iter().for_each(|&v| used[v] = true);
            }
        }
        let old: Vec<usize> = (0..self.n_vertices()).filter(|&i| used[i]).collect();
        let mut new_of = vec![NONE; self.n_vertices()];
        for (k, &i) in old.iter().enumerate() {
            new_of[i] = k;
        }
        let mut tris = Vec::new();
        let mut labels = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if keep[t] {
                tris.push(tri.map(|v| new_of[v]));
                labels.push(self.labels[t]);
            }
        }
        let verts = old.iter().map(|&i| self.vertices[i]).collect();
        Ok((Mesh::from_topology(verts, tris, labels)?, old))
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// `n₀ = |I₀|`
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// `n_E = |I_E|`
    pub fn n_obs(&self) -> usize {
        self.obs_nodes.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn label(&self, t: usize) -> Region {
        self.labels[t]
    }

    pub fn labels(&self) -> &[Region] {
        &self.labels
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.on_boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.on_boundary
    }

    /// Global indices of `I₀`, ascending.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Position of vertex `i` inside `I₀`, or `None` on `∂D`.
    pub fn interior_index(&self, i: usize) -> Option<usize> {
        let p = self.interior_pos[i];
        (p != NONE).then_some(p)
    }

    /// Global indices of `I_E`, ascending.
    pub fn obs_nodes(&self) -> &[usize] {
        &self.obs_nodes
    }

    pub fn obs_index(&self, i: usize) -> Option<usize> {
        let p = self.obs_pos[i];
        (p != NONE).then_some(p)
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Gradients of the three barycentric coordinates on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [Point; 3] {
        self.basis_grads[t]
    }

    /// Triangles incident to vertex `i`, ascending.
    pub fn vertex_star(&self, i: usize) -> &[usize] {
        &self.vertex_tris[self.vertex_tri_ptr[i]..self.vertex_tri_ptr[i + 1]]
    }

    /// Neighbor of `t` across the edge opposite local vertex `a`.
    pub fn neighbor(&self, t: usize, a: usize) -> Option<usize> {
        self.neighbors[t][a]
    }

    /// Maximum edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn bounding_box(&self) -> Rect {
        self.grid.bounds()
    }

    /// Expands an `I₀`-indexed vector to the full index set with zeros on `∂D`.
    pub fn extend_interior(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_interior());
        let mut full = vec![0.0; self.n_vertices()];
        for (k, &i) in self.interior.iter().enumerate() {
            full[i] = y[k];
        }
        full
    }

    /// Restricts a full nodal vector to `I₀`.
    pub fn restrict_interior(&self, g: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&i| g[i]).collect()
    }

    /// Nodal interpolant of a closure.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.vertices.iter().map(|&p| f(p)).collect()
    }

    /// Value at `loc` of the P1 function with full nodal vector `g`.
    pub fn eval_at(&self, g: &[f64], loc: &Location) -> f64 {
        let tri = self.triangles[loc.tri];
        (0..3).map(|a| g[tri[a]] * loc.bary[a]).sum()
    }

    /// Per-triangle gradient of the P1 function with full nodal vector `g`.
    pub fn gradient_on(&self, g: &[f64], t: usize) -> Point {
        let tri = self.triangles[t];
        let gr = self.basis_grads[t];
        let mut out = [0.0; 2];
        for a in 0..3 {
            out[0] += g[tri[a]] * gr[a][0];
            out[1] += g[tri[a]] * gr[a][1];
        }
        out
    }

    /// Total area of observation-labeled triangles.
    pub fn obs_area(&self) -> f64 {
        (0..self.n_triangles())
            .filter(|&t| self.labels[t] == Region::Observation)
            .map(|t| self.areas[t])
            .sum()
    }

    /// Sorted list of undirected edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |a| (tri[a].min(tri[(a + 1) % 3]), tri[a].max(tri[(a + 1) % 3]))))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Even-odd rule point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square_two() -> Mesh {
        // the two-triangle square with T1 = [A1 A2 A4], T2 = [A1 A4 A3]
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let t = vec![[0, 1, 3], [0, 3, 2]];
        Mesh::new(v, t, vec![Region::Exterior; 2], vec![true; 4]).unwrap()
    }

    #[test]
    fn all_boundary_square() {
        let m = unit_square_two();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_interior(), 0);
        assert!((m.h() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.neighbor(0, 1), Some(1));
        assert_eq!(m.vertex_star(0), &[0, 1]);
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = Mesh::new(v, vec![[0, 2, 1]], vec![Region::Exterior], vec![true; 3]).unwrap_err();
        assert!(matches!(err, MeshError::Orientation { tri: 0, .. }));
    }

    #[test]
    fn hanging_node_rejected() {
        // big triangle next to two small ones sharing a midpoint
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]];
        let t = vec![[0, 1, 2], [1, 3, 4], [4, 3, 2]];
        let r = Mesh::new(v, t, vec![Region::Exterior; 3], vec![true, true, true, true, false]);
        assert!(matches!(r, Err(MeshError::NonConforming(..))));
    }

    #[test]
    fn basis_gradients_are_exact() {
        let m = unit_square_two();
        // x1 has gradient (1,0) on every triangle
        let g = m.interpolate(|p| p[0] + 2.0 * p[1] - 3.0);
        for t in 0..2 {
            let d = m.gradient_on(&g, t);
            assert!((d[0] - 1.0).abs() < 1e-15 && (d[1] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn polygon_membership() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &sq));
        assert!(!point_in_polygon([1.5, 0.5], &sq));
    }
}
