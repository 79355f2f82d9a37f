use super::{Mesh, MeshError, Point, Rect};

/// Containing triangle and clamped barycentric coordinates of a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub tri: usize,
    pub bary: [f64; 3],
}

const BARY_TOL: f64 = 1e-12;

/// Uniform bucket index over triangle bounding boxes.
#[derive(Clone, Debug)]
pub(crate) struct BucketGrid {
    bounds: Rect,
    nx: usize,
    ny: usize,
    ptr: Vec<usize>,
    items: Vec<usize>,
}

impl BucketGrid {
    pub(crate) fn build(vertices: &[Point], tris: &[[usize; 3]]) -> Self {
        let mut b = Rect::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in vertices {
            b.x0 = b.x0.min(p[0]);
            b.x1 = b.x1.max(p[0]);
            b.y0 = b.y0.min(p[1]);
            b.y1 = b.y1.max(p[1]);
        }
        let side = ((tris.len() as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (side, side);
        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
        let grid = Self { bounds: b, nx, ny, ptr: Vec::new(), items: Vec::new() };
        for (t, tri) in tris.iter().enumerate() {
            let xs = tri.map(|v| vertices[v][0]);
            let ys = tri.map(|v| vertices[v][1]);
            let (i0, j0) = grid.cell([xs.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::INFINITY, f64::min)]);
            let (i1, j1) = grid.cell([xs.iter().copied().fold(f64::NEG_INFINITY, f64::max), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(t);
                }
            }
        }
        let mut ptr = vec![0];
        let mut items = Vec::new();
        for c in cells {
            items.extend(c);
            ptr.push(items.len());
        }
        Self { ptr, items, ..grid }
    }

    pub(crate) fn bounds(&self) -> Rect {
        self.bounds
    }

    fn cell(&self, p: Point) -> (usize, usize) {
        let fx = (p[0] - self.bounds.x0) / (self.bounds.x1 - self.bounds.x0);
        let fy = (p[1] - self.bounds.y0) / (self.bounds.y1 - self.bounds.y0);
        let i = ((fx * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((fy * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    fn candidates(&self, p: Point) -> &[usize] {
        let (i, j) = self.cell(p);
        let c = j * self.nx + i;
        &self.items[self.ptr[c]..self.ptr[c + 1]]
    }
}

impl Mesh {
    /// Raw barycentric coordinates of `p` in triangle `t` (may be negative).
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let tri = self.triangle(t);
        let gr = self.basis_gradients(t);
        let mut out = [0.0; 3];
        for a in 0..3 {
            // λ_a is affine with gradient gr[a] and vanishes at the next vertex
            let q = self.vertex(tri[(a + 1) % 3]);
            out[a] = gr[a][0] * (p[0] - q[0]) + gr[a][1] * (p[1] - q[1]);
        }
        out
    }

    fn contains(&self, t: usize, p: Point) -> bool {
        self.barycentric(t, p).iter().all(|&b| b >= -BARY_TOL)
    }

    /// Finds the triangle containing `p`, walking from `hint` and falling back
    /// to the bucket index. Points on shared edges or vertices resolve to the
    /// lowest containing triangle index.
    pub fn locate_point(&self, p: Point, hint: usize) -> Result<Location, MeshError> {
        let outside = MeshError::Outside { x: p[0], y: p[1] };
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(outside);
        }
        let b = self.bounding_box();
        let pad = 1e-12 * (b.x1 - b.x0).max(b.y1 - b.y0);
        if p[0] < b.x0 - pad || p[0] > b.x1 + pad || p[1] < b.y0 - pad || p[1] > b.y1 + pad {
            return Err(outside);
        }
        let found = self.walk(p, hint.min(self.n_triangles() - 1)).or_else(|| {
            self.grid.candidates(p).iter().copied().filter(|&t| self.contains(t, p)).min()
        });
        let Some(t) = found else { return Err(outside) };
        let t = self.lowest_containing(t, p);
        let mut bary = self.barycentric(t, p).map(|v| v.max(0.0));
        let s: f64 = bary.iter().sum();
        bary.iter_mut().for_each(|v| *v /= s);
        Ok(Location { tri: t, bary })
    }

    fn walk(&self, p: Point, start: usize) -> Option<usize> {
        let mut t = start;
        let max_steps = 4 * (self.n_triangles() as f64).sqrt() as usize + 64;
        for _ in 0..max_steps {
            let b = self.barycentric(t, p);
            let (a, &min) = b
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(y.1))
                .expect("three coordinates");
            if min >= -BARY_TOL {
                return Some(t);
            }
            t = self.neighbor(t, a)?;
        }
        None
    }

    fn lowest_containing(&self, t: usize, p: Point) -> usize {
        let b = self.barycentric(t, p);
        if b.iter().all(|&v| v > BARY_TOL) {
            return t;
        }
        let mut best = t;
        for &v in &self.triangle(t) {
            for &s in self.vertex_star(v) {
                if s < best && self.contains(s, p) {
                    best = s;
                }
            }
        }
        best
    }
}
