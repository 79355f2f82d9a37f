//! Fixed-domain shape and topology optimization for Dirichlet problems by
//! cost penalization, with level-set domains traced by Hamiltonian flow.

pub mod artifacts;
pub mod compare;
pub mod cost;
pub mod error;
pub mod expr;
pub mod fem;
pub mod fixtures;
pub mod grad;
pub mod levelset;
pub mod mesh;
pub mod optimize;
pub mod problem;
pub mod sparse;

pub use expr::{Env, Expr, ExprError};
pub use fem::{CgOptions, IndexSet, MedDomain, NodalField, SolveError};
pub use mesh::{DiscreteDerivativeOps, Location, Mesh, MeshError, Point, Rect, Region};
pub use sparse::{CsrMatrix, SparseVec};
pub use cost::{CostBreakdown, Objective};
pub use error::{Error, Result};
pub use grad::{DescentDirection, DirectionKind, DjTerms, GradientState, OperatorData};
pub use levelset::{TraceOptions, Trajectory};
pub use problem::{Evaluation, FixedOrbit, OrbitMode, Problem};
pub use optimize::{IterationRecord, OptimizerConfig, RunResult, StopReason};
pub use compare::{CompareReport, DomainCost};
