//! Unpenalized Dirichlet problems on triangle-subset approximations of the
//! optimized domain, for comparison with the penalized cost.

use std::collections::VecDeque;

use crate::cost::eval_j1;
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_stiffness, solve_spd};
use crate::mesh::{Mesh, Region};
use crate::problem::{Evaluation, Problem};

/// Dirichlet solve on a submesh and its observation cost.
#[derive(Clone, Debug)]
pub struct DomainCost {
    /// `∫_E j(x, y)` for the submesh solution.
    pub cost: f64,
    pub triangles: usize,
    pub area: f64,
    pub submesh: Mesh,
    /// Submesh solution on the submesh's full index set.
    pub y: Vec<f64>,
    /// Submesh vertex to hold-all vertex.
    pub vertex_map: Vec<usize>,
}

/// Edge-connected component of the selected triangles that contains every
/// observation triangle. Observation triangles are always included.
pub fn component_containing_e(mesh: &Mesh, selected: &[bool]) -> Result<Vec<bool>> {
    let seeds: Vec<usize> = (0..mesh.n_triangles()).filter(|&t| mesh.label(t) == Region::Observation).collect();
    if seeds.is_empty() {
        return Err(Error::Compare("mesh has no observation triangles".into()));
    }
    let mut keep = vec![false; mesh.n_triangles()];
    let mut queue = VecDeque::new();
    for &t in &seeds {
        keep[t] = true;
        queue.push_back(t);
    }
    while let Some(t) = queue.pop_front() {
        for a in 0..3 {
            if let Some(s) = mesh.neighbor(t, a) {
                if !keep[s] && selected[s] {
                    keep[s] = true;
                    queue.push_back(s);
                }
            }
        }
    }
    Ok(keep)
}

/// Solves `−Δy = f` with `y = 0` on the boundary of the kept triangles and
/// evaluates the observation cost.
pub fn dirichlet_on_subset(problem: &Problem, keep: &[bool]) -> Result<DomainCost> {
    let triangles = keep.iter().filter(|&&k| k).count();
    if triangles == 0 {
        return Err(Error::Compare("empty submesh".into()));
    }
    let (sub, map) = problem.mesh.submesh(keep)?;
    let k = assemble_stiffness(&sub);
    let f = assemble_load(&sub, &problem.f)?;
    let y0 = solve_spd(&k, &f, &problem.cg)?;
    let cost = eval_j1(&sub, &y0, &problem.objective)?;
    let area = (0..sub.n_triangles()).map(|t| sub.area(t)).sum();
    Ok(DomainCost { cost, triangles, area, y: sub.extend_interior(&y0), submesh: sub, vertex_map: map })
}

/// Domain (a): triangles whose centroid value of `g_h` is negative,
/// connected to `E`.
pub fn omega_g_cost(problem: &Problem, g: &[f64]) -> Result<DomainCost> {
    let mesh = &problem.mesh;
    let selected: Vec<bool> = (0..mesh.n_triangles())
        .map(|t| mesh.triangle(t).iter().map(|&v| g[v]).sum::<f64>() < 0.0)
        .collect();
    dirichlet_on_subset(problem, &component_containing_e(mesh, &selected)?)
}

/// Domain (b): triangles where `y_h` has the sign it has on `E`, connected
/// to `E`. Fails when `y_h` has no sign on `E` or when its zero level set
/// does not separate `E` from the rest of the hold-all.
pub fn zero_level_cost(problem: &Problem, y_full: &[f64]) -> Result<DomainCost> {
    let mesh = &problem.mesh;
    let centroid_y = |t: usize| mesh.triangle(t).iter().map(|&v| y_full[v]).sum::<f64>() / 3.0;
    let on_e: f64 = (0..mesh.n_triangles())
        .filter(|&t| mesh.label(t) == Region::Observation)
        .map(|t| centroid_y(t) * mesh.area(t))
        .sum();
    if on_e == 0.0 {
        return Err(Error::Compare("y vanishes on E, zero-level domain is empty".into()));
    }
    let sign = on_e.signum();
    let selected: Vec<bool> = (0..mesh.n_triangles()).map(|t| centroid_y(t) * sign > 0.0).collect();
    let keep = component_containing_e(mesh, &selected)?;
    if keep.iter().all(|&k| k) {
        return Err(Error::Compare("zero level set of y does not enclose E, zero-level domain is empty".into()));
    }
    dirichlet_on_subset(problem, &keep)
}

/// Both comparison costs next to the penalized run's `J₁`.
#[derive(Clone, Debug)]
pub struct CompareReport {
    pub omega_g: DomainCost,
    pub zero_level: DomainCost,
    pub penalized_j1: f64,
}

pub fn compare(problem: &Problem, eval: &Evaluation) -> Result<CompareReport> {
    let omega_g = omega_g_cost(problem, &eval.g)?;
    let zero_level = zero_level_cost(problem, &problem.mesh.extend_interior(&eval.y))?;
    Ok(CompareReport { omega_g, zero_level, penalized_j1: eval.cost.j1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Objective;
    use crate::expr::Expr;
    use crate::fem::MedDomain;
    use crate::levelset::TraceOptions;
    use crate::mesh::{generate_rect_mesh, polygon_disk, Rect};
    use crate::problem::OrbitMode;

    fn disk_problem(cells: usize) -> Problem {
        let mesh = generate_rect_mesh(Rect::square(-2.0, 2.0), cells, cells, &polygon_disk([0.0, 0.0], 0.5, 32)).unwrap();
        Problem::new(
            mesh,
            &Expr::parse("4").unwrap(),
            Objective::tracking(Expr::parse("1-x1^2-x2^2").unwrap()),
            0.1,
            MedDomain::D,
            OrbitMode::Detect(TraceOptions::default()),
        )
        .unwrap()
    }

    #[test]
    fn unit_disk_cost_vanishes_with_h() {
        let mut costs = Vec::new();
        for cells in [16, 32, 64] {
            let p = disk_problem(cells);
            let g = p.mesh.interpolate(|x| (x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0);
            costs.push(omega_g_cost(&p, &g).unwrap().cost);
        }
        assert!(costs[2] < costs[1] && costs[1] < costs[0], "{costs:?}");
        assert!(costs[2] < 1e-3, "{costs:?}");
    }

    #[test]
    fn zero_level_needs_enclosure() {
        let p = disk_problem(12);
        let y = p.mesh.interpolate(|x| 1.0 + x[0] * 0.0);
        assert!(matches!(zero_level_cost(&p, &y), Err(Error::Compare(_))));
        let zero = vec![0.0; p.mesh.n_vertices()];
        assert!(matches!(zero_level_cost(&p, &zero), Err(Error::Compare(_))));
        let y = p.mesh.interpolate(|x| 1.0 - x[0] * x[0] - x[1] * x[1]);
        let d = zero_level_cost(&p, &y).unwrap();
        assert!(d.triangles < p.mesh.n_triangles());
        assert!((d.area - std::f64::consts::PI).abs() < 0.5);
    }
}
