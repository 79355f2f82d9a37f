use std::collections::HashMap;

use super::{point_in_polygon, Mesh, MeshError, Point, Region};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn square(a: f64, b: f64) -> Self {
        Self::new(a, b, a, b)
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    fn strictly_contains(&self, p: Point) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }
}

/// Regular `k`-gon inscribed in the circle of given center and radius,
/// counterclockwise, first vertex on the positive x-axis.
pub fn polygon_disk(center: Point, radius: f64, k: usize) -> Vec<Point> {
    (0..k)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

fn label_by_polygon(mesh_vertices: &[Point], tris: &[[usize; 3]], poly: &[Point]) -> Vec<Region> {
    tris.iter()
        .map(|tri| {
            let c = tri.iter().fold([0.0, 0.0], |acc, &v| {
                [acc[0] + mesh_vertices[v][0] / 3.0, acc[1] + mesh_vertices[v][1] / 3.0]
            });
            if poly.len() >= 3 && point_in_polygon(c, poly) {
                Region::Observation
            } else {
                Region::Exterior
            }
        })
        .collect()
}

/// Structured criss-cross triangulation of a rectangle with `nx × ny` cells.
///
/// Each cell is split along one diagonal, alternating in a checkerboard so
/// that every interior vertex star is point-symmetric. A triangle is labeled
/// as observation iff its barycenter lies inside `obs_polygon` (which may be
/// empty for a mesh without observation region).
pub fn generate_rect_mesh(
    bounds: Rect,
    nx: usize,
    ny: usize,
    obs_polygon: &[Point],
) -> Result<Mesh, MeshError> {
    if nx < 1 || ny < 1 {
        return Err(MeshError::Resolution(nx, ny));
    }
    if obs_polygon.iter().any(|&p| !bounds.strictly_contains(p)) {
        return Err(MeshError::PolygonTouchesBoundary);
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut on_boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // endpoints are set exactly so that boundary coordinates are exact
            let x = if i == nx { bounds.x1 } else { bounds.x0 + (bounds.x1 - bounds.x0) * i as f64 / nx as f64 };
            let y = if j == ny { bounds.y1 } else { bounds.y0 + (bounds.y1 - bounds.y0) * j as f64 / ny as f64 };
            vertices.push([x, y]);
            on_boundary.push(i == 0 || j == 0 || i == nx || j == ny);
        }
    }
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                tris.push([a, b, d]);
                tris.push([a, d, c]);
            } else {
                tris.push([a, b, c]);
                tris.push([b, d, c]);
            }
        }
    }
    let labels = label_by_polygon(&vertices, &tris, obs_polygon);
    Mesh::new(vertices, tris, labels, on_boundary)
}

/// Triangulation of the polygonal disk obtained by `refinements` uniform
/// red refinements of a hexagon fan. Boundary midpoints are pushed onto the
/// circle after every refinement, so the result approximates the disk.
pub fn generate_disk_mesh(
    center: Point,
    radius: f64,
    refinements: usize,
    obs_polygon: &[Point],
) -> Result<Mesh, MeshError> {
    let mut vertices = vec![center];
    vertices.extend(polygon_disk(center, radius, 6));
    let mut tris: Vec<[usize; 3]> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
    let mut on_boundary: Vec<bool> = (0..7).map(|i| i > 0).collect();

    for _ in 0..refinements {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_uses: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &tris {
            for a in 0..3 {
                let (p, q) = (tri[a], tri[(a + 1) % 3]);
                *edge_uses.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        let mut new_tris = Vec::with_capacity(4 * tris.len());
        for tri in &tris {
            let mut m = [0usize; 3];
            for a in 0..3 {
                let (p, q) = (tri[a], tri[(a + 1) % 3]);
                let key = (p.min(q), p.max(q));
                m[a] = *mid.entry(key).or_insert_with(|| {
                    let (vp, vq) = (vertices[p], vertices[q]);
                    let mut x = [(vp[0] + vq[0]) / 2.0, (vp[1] + vq[1]) / 2.0];
                    let boundary = edge_uses[&key] == 1;
                    if boundary {
                        let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
                        let r = (dx * dx + dy * dy).sqrt();
                        x = [center[0] + radius * dx / r, center[1] + radius * dy / r];
                    }
                    vertices.push(x);
                    on_boundary.push(boundary);
                    vertices.len() - 1
                });
            }
            let [a, b, c] = *tri;
            new_tris.push([a, m[0], m[2]]);
            new_tris.push([m[0], b, m[1]]);
            new_tris.push([m[2], m[1], c]);
            new_tris.push([m[0], m[1], m[2]]);
        }
        tris = new_tris;
    }
    let labels = label_by_polygon(&vertices, &tris, obs_polygon);
    Mesh::new(vertices, tris, labels, on_boundary)
}
