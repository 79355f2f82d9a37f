//! Projected descent with best-of-trials line search.

use std::time::Instant;

use rayon::prelude::*;

use crate::cost::CostBreakdown;
use crate::error::{Error, Result};
use crate::grad::{descent_direction, DirectionKind};
use crate::levelset::validate_admissible;
use crate::mesh::Mesh;
use crate::problem::{Evaluation, Problem};
use crate::sparse::norm_inf;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TOPOPT_THREADS";

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    /// Stop when `|J_{k+1} − J_k| < tol`.
    pub tol: f64,
    pub lambda0: f64,
    /// Backtracking factor.
    pub rho: f64,
    /// Number of trial steps `λ = ρⁱλ₀`, `i = 0..trials`.
    pub trials: usize,
    /// Value assigned to positive entries of `G` on observation vertices.
    pub projection_value: f64,
    pub max_iters: usize,
    pub direction: DirectionKind,
    /// Worker threads for the trial evaluations; `None` reads `TOPOPT_THREADS`
    /// and otherwise uses all cores.
    pub threads: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            lambda0: 1.0,
            rho: 0.5,
            trials: 31,
            projection_value: -0.1,
            max_iters: 100,
            direction: DirectionKind::Adjoint41,
            threads: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.into()));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.projection_value < 0.0) {
            return bad("projection_value must be negative");
        }
        if !(self.lambda0 > 0.0) {
            return bad("lambda0 must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be nonnegative");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    /// Trial steps `ρⁱλ₀`.
    pub fn steps(&self) -> Vec<f64> {
        (0..self.trials).map(|i| self.lambda0 * self.rho.powi(i as i32)).collect()
    }
}

/// Replaces positive entries at observation vertices by `value`.
pub fn project_e(mesh: &Mesh, g: &mut [f64], value: f64) {
    for &i in mesh.obs_nodes() {
        if g[i] > 0.0 {
            g[i] = value;
        }
    }
}

/// Thread pool honouring an explicit count or `TOPOPT_THREADS`.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(s) => Some(
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Parameter(format!("{THREADS_ENV} must be a positive integer, got '{s}'")))?,
            ),
            Err(_) => None,
        },
    };
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = n {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Parameter(format!("thread pool: {e}")))
}

/// Result of evaluating every trial step.
#[derive(Debug)]
pub struct LineSearch<T> {
    /// Index, step, value and payload of the best trial, if it improves on
    /// the current value.
    pub accepted: Option<(usize, f64, f64, T)>,
    /// Best trial value even when not accepted.
    pub best_value: Option<f64>,
    /// Trials whose evaluation failed, with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Evaluates `eval(λ)` for every step in parallel and keeps the minimum,
/// breaking ties by the smaller index. Accepts only a strict improvement on
/// `current`.
pub fn best_trial<T, F>(pool: &rayon::ThreadPool, steps: &[f64], current: f64, eval: F) -> LineSearch<T>
where
    T: Send,
    F: Fn(f64) -> Result<(f64, T)> + Sync,
{
    let results: Vec<Result<(f64, T)>> = pool.install(|| steps.par_iter().map(|&l| eval(l)).collect());
    let mut skipped = Vec::new();
    let mut best: Option<(usize, f64, T)> = None;
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok((j, payload)) if j.is_finite() => {
                if best.as_ref().map_or(true, |b| j < b.1) {
                    best = Some((i, j, payload));
                }
            }
            Ok((j, _)) => skipped.push((i, format!("non-finite cost {j}"))),
            Err(e) => skipped.push((i, e.to_string())),
        }
    }
    let best_value = best.as_ref().map(|b| b.1);
    let accepted = best.filter(|b| b.1 < current).map(|(i, j, p)| (i, steps[i], j, p));
    LineSearch { accepted, best_value, skipped }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: CostBreakdown,
    /// Accepted step; zero for the initial record.
    pub lambda: f64,
    /// Index `i` of the accepted trial.
    pub trial: Option<usize>,
    pub r_norm_inf: f64,
    pub v_norm_inf: f64,
    /// Predicted slope of the direction that produced this iterate.
    pub slope: f64,
    pub components: usize,
    pub boundary_length: f64,
    pub skipped_trials: usize,
    /// Seconds since the start of the run.
    pub elapsed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    Converged,
    MaxIters,
    NoImprovement,
    /// A direction or state computation failed; the last record is consistent.
    Failed(String),
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::Converged => write!(f, "converged"),
            StopReason::MaxIters => write!(f, "iteration limit reached"),
            StopReason::NoImprovement => write!(f, "no trial step improved the cost"),
            StopReason::Failed(m) => write!(f, "failed: {m}"),
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub history: Vec<IterationRecord>,
    pub final_eval: Evaluation,
    pub stop: StopReason,
}

impl RunResult {
    pub fn g(&self) -> &[f64] {
        &self.final_eval.g
    }

    pub fn u(&self) -> &[f64] {
        &self.final_eval.u
    }
}

fn record(iter: usize, ev: &Evaluation, start: Instant) -> IterationRecord {
    IterationRecord {
        iter,
        cost: ev.cost.clone(),
        lambda: 0.0,
        trial: None,
        r_norm_inf: 0.0,
        v_norm_inf: 0.0,
        slope: 0.0,
        components: ev.orbits.len(),
        boundary_length: ev.boundary_length(),
        skipped_trials: 0,
        elapsed: start.elapsed().as_secs_f64(),
    }
}

/// Runs the descent loop from `(g0, u0)`. `observer` sees every accepted
/// iterate, including the initial one.
pub fn run(
    problem: &Problem,
    g0: &[f64],
    u0: &[f64],
    cfg: &OptimizerConfig,
    mut observer: impl FnMut(&IterationRecord, &Evaluation),
) -> Result<RunResult> {
    cfg.validate()?;
    let report = validate_admissible(&problem.mesh, g0);
    if !report.passed() {
        return Err(Error::Admissibility(report.failures().into_iter().map(String::from).collect()));
    }
    let pool = thread_pool(cfg.threads)?;
    let start = Instant::now();
    let mut ev = problem.evaluate(g0, u0)?;
    let first = record(0, &ev, start);
    observer(&first, &ev);
    let mut history = vec![first];
    let steps = cfg.steps();
    let mesh = &problem.mesh;
    let stop = loop {
        let k = history.len();
        if k > cfg.max_iters {
            break StopReason::MaxIters;
        }
        let dir = match descent_direction(problem, &ev, cfg.direction) {
            Ok((d, _)) => d,
            Err(e) => break StopReason::Failed(e.to_string()),
        };
        let r_inf = norm_inf(&dir.r);
        let gamma = if r_inf > 0.0 { 1.0 / r_inf } else { 1.0 };
        let current = ev.cost.total;
        let ls = best_trial(&pool, &steps, current, |lambda| {
            let mut g: Vec<f64> = ev.g.iter().zip(&dir.r).map(|(g, r)| g + lambda * gamma * r).collect();
            project_e(mesh, &mut g, cfg.projection_value);
            let u: Vec<f64> = ev.u.iter().zip(&dir.v).map(|(u, v)| u + lambda * v).collect();
            let trial = problem.evaluate(&g, &u)?;
            Ok((trial.cost.total, trial))
        });
        let Some((i, lambda, j, next)) = ls.accepted else {
            break StopReason::NoImprovement;
        };
        let rec = IterationRecord {
            lambda,
            trial: Some(i),
            r_norm_inf: r_inf,
            v_norm_inf: norm_inf(&dir.v),
            slope: dir.slope,
            skipped_trials: ls.skipped.len(),
            ..record(k, &next, start)
        };
        ev = next;
        observer(&rec, &ev);
        history.push(rec);
        if (current - j).abs() < cfg.tol {
            break StopReason::Converged;
        }
    };
    Ok(RunResult { history, final_eval: ev, stop })
}
