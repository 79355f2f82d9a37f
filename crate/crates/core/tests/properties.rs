use proptest::prelude::*;
use topopt_core::levelset::{build_orbit_operators, trace_fixed};
use topopt_core::mesh::generate_rect_mesh;
use topopt_core::optimize::project_e;
use topopt_core::sparse::dot;
use topopt_core::*;

fn mesh(nx: usize, ny: usize) -> Mesh {
    generate_rect_mesh(Rect::new(-1.5, 2.0, -1.0, 1.25), nx, ny, &[[-0.2, -0.2], [0.3, -0.2], [0.3, 0.3], [-0.2, 0.3]])
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pi_reproduces_affine_gradients(nx in 2usize..12, ny in 2usize..12, a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64) {
        let m = mesh(nx, ny);
        let ops = DiscreteDerivativeOps::build(&m);
        let g = m.interpolate(|p| a + b * p[0] + c * p[1]);
        let (d1, d2) = (ops.pi1.mul_vec(&g), ops.pi2.mul_vec(&g));
        for i in 0..m.n_vertices() {
            prop_assert!((d1[i] - b).abs() < 1e-12 && (d2[i] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn located_points_reproduce_coordinates(nx in 2usize..15, ny in 2usize..15, s in 0.0..1.0f64, t in 0.0..1.0f64, hint in 0usize..1000) {
        let m = mesh(nx, ny);
        let p = [-1.5 + 3.5 * s, -1.0 + 2.25 * t];
        let loc = m.locate_point(p, hint % m.n_triangles()).unwrap();
        prop_assert!(loc.bary.iter().all(|&l| (0.0..=1.0).contains(&l)));
        prop_assert!((loc.bary.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let x = m.interpolate(|q| q[0]);
        let y = m.interpolate(|q| q[1]);
        prop_assert!((m.eval_at(&x, &loc) - p[0]).abs() < 1e-12);
        prop_assert!((m.eval_at(&y, &loc) - p[1]).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent(vals in proptest::collection::vec(-2.0..2.0f64, 25)) {
        let m = generate_rect_mesh(Rect::square(-1.0, 1.0), 4, 4, &[[-0.3, -0.3], [0.3, -0.3], [0.3, 0.3], [-0.3, 0.3]]).unwrap();
        let mut g = vals.clone();
        project_e(&m, &mut g, -0.1);
        for &i in m.obs_nodes() {
            prop_assert!(g[i] <= 0.0);
        }
        let once = g.clone();
        project_e(&m, &mut g, -0.1);
        prop_assert_eq!(g, once);
    }

    #[test]
    fn orbit_transpose_sweep_is_adjoint(seed in any::<u64>(), m_steps in 2usize..40) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mesh = generate_rect_mesh(Rect::square(-2.0, 2.0), 12, 12, &[]).unwrap();
        let ops = DiscreteDerivativeOps::build(&mesh);
        let g = mesh.interpolate(|p| p[0] * p[0] + 1.3 * p[1] * p[1] - 1.0);
        let fields = ops.derivative_fields(&g);
        let traj = trace_fixed(&mesh, &fields, [1.0, 0.0], m_steps, 0.05).unwrap();
        let oo = build_orbit_operators(&mesh, &ops, &fields, &traj, false);
        let n = mesh.n_vertices();
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..m_steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m_steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = oo.apply(&r);
        let lhs = dot(&a, &w.w1()) + dot(&b, &w.w2());
        let rhs = dot(&oo.transpose_apply(&a, &b, n), &r);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn csr_transpose_identities(entries in proptest::collection::vec((0usize..7, 0usize..5, -5.0..5.0f64), 0..30),
                                x in proptest::collection::vec(-1.0..1.0f64, 5),
                                y in proptest::collection::vec(-1.0..1.0f64, 7)) {
        let a = CsrMatrix::from_triplets(7, 5, &entries);
        let at = a.transpose();
        prop_assert!((dot(&y, &a.mul_vec(&x)) - dot(&at.mul_vec(&y), &x)).abs() < 1e-12);
        prop_assert!((a.bilinear(&y, &x) - dot(&a.tr_mul_vec(&y), &x)).abs() < 1e-12);
    }

    #[test]
    fn expression_display_round_trips(a in -9.0..9.0f64, b in 0.1..4.0f64, c in -3i32..4) {
        let src = format!("min({a}*x1 - -{b}, max(x2, {b}))^{c} + sin(x1)/{b}");
        let e = Expr::parse(&src).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        for p in [[0.3, -0.4], [1.2, 0.7], [-2.0, 1.5]] {
            let (u, v) = (e.eval(p), again.eval(p));
            match (u, v) {
                (Ok(u), Ok(v)) => prop_assert!(u == v || (u.is_nan() && v.is_nan())),
                (u, v) => prop_assert_eq!(u.is_err(), v.is_err()),
            }
        }
    }

    #[test]
    fn penalized_cost_is_nonnegative(shift in -0.3..0.3f64, u in -1.0..1.0f64) {
        let spec = topopt_core::fixtures::example_spec(2).unwrap();
        let s = spec.build(14, TraceOptions { dt: 0.02, ..Default::default() }).unwrap();
        let g: Vec<f64> = s.g0.iter().map(|v| v + shift * 0.1).collect();
        let uu = vec![u; g.len()];
        if let Ok(ev) = s.problem.evaluate(&g, &uu) {
            prop_assert!(ev.cost.j1 >= 0.0);
            prop_assert!(ev.cost.penalties.iter().all(|&p| p >= -1e-14));
        }
    }
}
