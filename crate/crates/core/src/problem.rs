//! Assembled data shared by every evaluation of the penalized cost, and the
//! forward pipeline `(G, U) ↦ (Z, Y, J)`.

use crate::cost::{assemble_curve_matrices, eval_cost, total_n, CostBreakdown, CurveMatrices, Objective};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::{assemble_load, assemble_med, assemble_stiffness, solve_state, CgOptions, MedDomain};
use crate::levelset::{trace_components, trace_fixed, TraceOptions, Trajectory};
use crate::mesh::{DerivativeFields, DiscreteDerivativeOps, Mesh, Point};
use crate::sparse::CsrMatrix;

/// Orbit prescribed by seed, interval count and step, bypassing seed search
/// and closure detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedOrbit {
    pub seed: Point,
    pub m: usize,
    pub dt: f64,
}

/// How orbits are obtained for a given `G`.
#[derive(Clone, Debug, PartialEq)]
pub enum OrbitMode {
    /// Seeds from edge crossings, closure detection per [`TraceOptions`].
    Detect(TraceOptions),
    /// The listed orbits with fixed seeds and partitions.
    Fixed(Vec<FixedOrbit>),
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Mesh,
    pub ops: DiscreteDerivativeOps,
    /// Source term `f`.
    pub f: Expr,
    /// `K`, `n₀ × n₀`.
    pub stiffness: CsrMatrix,
    /// `F` on `I₀`.
    pub load: Vec<f64>,
    /// `M_ED`, `n_E × n₀`.
    pub med: CsrMatrix,
    pub objective: Objective,
    pub eps: f64,
    pub cg: CgOptions,
    pub orbits: OrbitMode,
}

impl Problem {
    pub fn new(
        mesh: Mesh,
        f: &Expr,
        objective: Objective,
        eps: f64,
        med_domain: MedDomain,
        orbits: OrbitMode,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
        }
        let ops = DiscreteDerivativeOps::build(&mesh);
        let stiffness = assemble_stiffness(&mesh);
        let load = assemble_load(&mesh, f)?;
        let med = assemble_med(&mesh, med_domain);
        Ok(Self { mesh, ops, f: f.clone(), stiffness, load, med, objective, eps, cg: CgOptions::default(), orbits })
    }

    pub fn with_cg(mut self, cg: CgOptions) -> Self {
        self.cg = cg;
        self
    }

    /// Orbits of the zero level set of `g_h`.
    pub fn trace(&self, g: &[f64], fields: &DerivativeFields) -> Result<Vec<Trajectory>> {
        Ok(match &self.orbits {
            OrbitMode::Detect(opts) => trace_components(&self.mesh, g, fields, opts)?,
            OrbitMode::Fixed(list) => list
                .iter()
                .enumerate()
                .map(|(c, o)| {
                    trace_fixed(&self.mesh, fields, o.seed, o.m, o.dt).map(|mut t| {
                        t.component = c;
                        t
                    })
                })
                .collect::<Result<_, _>>()?,
        })
    }

    /// Forward pipeline: orbits, curve matrices, state and cost.
    pub fn evaluate(&self, g: &[f64], u: &[f64]) -> Result<Evaluation> {
        let n = self.mesh.n_vertices();
        if g.len() != n || u.len() != n {
            return Err(Error::Parameter(format!("G and U must have {n} entries")));
        }
        let fields = self.ops.derivative_fields(g);
        let orbits = self.trace(g, &fields)?;
        let curves = orbits
            .iter()
            .map(|t| assemble_curve_matrices(&self.mesh, t))
            .collect::<Result<Vec<_>, _>>()?;
        let y = solve_state(&self.mesh, &self.stiffness, &self.load, g, u, self.eps, &self.cg)?;
        let cost = eval_cost(&self.mesh, &y, &curves, self.eps, &self.objective)?;
        Ok(Evaluation { g: g.to_vec(), u: u.to_vec(), fields, orbits, curves, y, cost })
    }

    /// Penalized cost `J(G, U)`.
    pub fn cost(&self, g: &[f64], u: &[f64]) -> Result<f64> {
        Ok(self.evaluate(g, u)?.cost.total)
    }
}

/// Everything computed by [`Problem::evaluate`] for one `(G, U)`.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub g: Vec<f64>,
    pub u: Vec<f64>,
    pub fields: DerivativeFields,
    pub orbits: Vec<Trajectory>,
    pub curves: Vec<CurveMatrices>,
    /// State on `I₀`.
    pub y: Vec<f64>,
    pub cost: CostBreakdown,
}

impl Evaluation {
    /// `N(Z)` summed over components.
    pub fn n_total(&self, mesh: &Mesh) -> CsrMatrix {
        total_n(mesh, &self.curves)
    }

    /// Sum of orbit polyline lengths.
    pub fn boundary_length(&self) -> f64 {
        self.orbits.iter().map(|t| t.length()).sum()
    }
}
