use super::Mesh;
use crate::sparse::CsrMatrix;

/// Nodal discrete derivatives: row `i` of `Π^d` averages the per-triangle
/// P1 derivative `∂_d` over the star of vertex `i`, weighted by area.
#[derive(Clone, Debug)]
pub struct DiscreteDerivativeOps {
    pub pi1: CsrMatrix,
    pub pi2: CsrMatrix,
}

impl DiscreteDerivativeOps {
    pub fn build(mesh: &Mesh) -> Self {
        let n = mesh.n_vertices();
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        for i in 0..n {
            let star = mesh.vertex_star(i);
            let total: f64 = star.iter().map(|&t| mesh.area(t)).sum();
            for &t in star {
                let w = mesh.area(t) / total;
                let tri = mesh.triangle(t);
                let gr = mesh.basis_gradients(t);
                for a in 0..3 {
                    t1.push((i, tri[a], w * gr[a][0]));
                    t2.push((i, tri[a], w * gr[a][1]));
                }
            }
        }
        Self {
            pi1: CsrMatrix::from_triplets(n, n, &t1),
            pi2: CsrMatrix::from_triplets(n, n, &t2),
        }
    }

    /// `Π^d` for `d = 1, 2`.
    pub fn pi(&self, d: usize) -> &CsrMatrix {
        match d {
            1 => &self.pi1,
            2 => &self.pi2,
            _ => panic!("derivative index must be 1 or 2"),
        }
    }

    /// Nodal vectors of `∂1 g`, `∂2 g` and the four second derivatives
    /// `∂a∂b g` composed as `Π^a Π^b G`, in the order
    /// `[d1, d2, d11, d12, d21, d22]` where `dab = Π^a Π^b G`.
    pub fn derivative_fields(&self, g: &[f64]) -> DerivativeFields {
        let d1 = self.pi1.mul_vec(g);
        let d2 = self.pi2.mul_vec(g);
        DerivativeFields {
            d11: self.pi1.mul_vec(&d1),
            d12: self.pi1.mul_vec(&d2),
            d21: self.pi2.mul_vec(&d1),
            d22: self.pi2.mul_vec(&d2),
            d1,
            d2,
        }
    }
}

/// First and second discrete derivatives of a nodal field. `dab` is the
/// nodal vector of `∂a^h ∂b^h g_h`.
#[derive(Clone, Debug)]
pub struct DerivativeFields {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d11: Vec<f64>,
    pub d12: Vec<f64>,
    pub d21: Vec<f64>,
    pub d22: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::super::tests::unit_square_two;
    use super::super::{generate_rect_mesh, Rect};
    use super::*;

    #[test]
    fn hat_function_example() {
        let m = unit_square_two();
        let ops = DiscreteDerivativeOps::build(&m);
        let d = ops.pi1.mul_vec(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(d, vec![0.5, 0.0, 1.0, 0.5]);
    }

    #[test]
    fn affine_fields_are_exact() {
        let m = generate_rect_mesh(Rect::new(-1.0, 2.0, 0.0, 1.5), 7, 5, &[]).unwrap();
        let ops = DiscreteDerivativeOps::build(&m);
        let g = m.interpolate(|p| 0.3 - 1.5 * p[0] + 2.5 * p[1]);
        let f = ops.derivative_fields(&g);
        for i in 0..m.n_vertices() {
            assert!((f.d1[i] + 1.5).abs() < 1e-12);
            assert!((f.d2[i] - 2.5).abs() < 1e-12);
            assert!(f.d11[i].abs() < 1e-11 && f.d22[i].abs() < 1e-11);
        }
    }

    #[test]
    fn row_support_is_the_vertex_star() {
        let m = generate_rect_mesh(Rect::square(0.0, 1.0), 4, 4, &[]).unwrap();
        let ops = DiscreteDerivativeOps::build(&m);
        for i in 0..m.n_vertices() {
            let mut nb: Vec<usize> = m.vertex_star(i).iter().flat_map(|&t| m.triangle(t)).collect();
            nb.sort_unstable();
            nb.dedup();
            let cols: Vec<usize> = ops.pi1.row(i).map(|(j, _)| j).collect();
            assert_eq!(cols, nb);
        }
    }

    #[test]
    fn quadratic_second_derivatives_at_interior_vertices() {
        let m = generate_rect_mesh(Rect::square(-1.0, 1.0), 10, 10, &[]).unwrap();
        let ops = DiscreteDerivativeOps::build(&m);
        let g = m.interpolate(|p| p[0] * p[0] + p[1] * p[1] - 1.0);
        let f = ops.derivative_fields(&g);
        for i in 0..m.n_vertices() {
            let p = m.vertex(i);
            if p[0].abs() < 0.75 && p[1].abs() < 0.75 {
                assert!((f.d1[i] - 2.0 * p[0]).abs() < 1e-12);
                assert!((f.d11[i] - 2.0).abs() < 1e-11);
                assert!(f.d12[i].abs() < 1e-11);
            }
        }
    }
}
