//! Desk-scale solvers: dense simplex, branch-and-bound, Frank-Wolfe, activation-pattern
//! search for complementarity models, and a smooth augmented-Lagrangian method for
//! the embedded formulation.

pub mod embedded;
pub mod frank_wolfe;
pub mod lp;
pub mod milp;
pub mod pattern;
pub mod simplex;

use serde::{Deserialize, Serialize};

pub use embedded::{embedded_solve, EmbeddedOptions};
pub use frank_wolfe::{qp_frank_wolfe, FwOptions};
pub use lp::{dual_objective, lp_solve, lp_solve_relaxation};
pub use milp::{milp_solve, MilpOptions};
pub use pattern::{
    mpcc_local_solve, pattern_enumerate_solve, switches_from_complementarities, switches_from_handles, PatternOptions,
    PatternOutcome, PatternStart, Switch,
};

use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    LimitReached,
    Stalled,
}

impl SolveStatus {
    pub fn has_point(self) -> bool {
        matches!(
            self,
            SolveStatus::Optimal | SolveStatus::Feasible | SolveStatus::LimitReached | SolveStatus::Stalled
        )
    }
}

/// Outcome of any solver. `point` is indexed by variable id.
///
/// `duals[i]` is the sensitivity of the optimal objective to row `i`'s right-hand side
/// and `reduced_costs[j]` that of column `j`'s active bound, so at an LP optimum
/// `∇objective = Σ duals_i a_i + reduced_costs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub point: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub iterations: usize,
    pub nodes: usize,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub kkt_residual: Option<f64>,
    /// Frank-Wolfe duality gap at termination.
    pub gap: Option<f64>,
}

impl SolveResult {
    pub fn empty(status: SolveStatus) -> Self {
        Self {
            status,
            point: Vec::new(),
            objective: f64::NAN,
            best_bound: f64::NAN,
            iterations: 0,
            nodes: 0,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            kkt_residual: None,
            gap: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// One outer iteration of an iterative solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub primal_inf: f64,
    pub dual_inf: f64,
}

/// Objective in minimization form: `c·x + Σ q x_i x_j + constant`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct MinObjective {
    pub c: Vec<f64>,
    pub quad: Vec<(usize, usize, f64)>,
    pub constant: f64,
}

impl MinObjective {
    pub fn from_model(model: &Model) -> Self {
        let sign = lp::min_sign(model);
        let mut c = vec![0.0; model.num_vars()];
        for (v, coef) in &model.objective.linear.terms {
            c[v.0] = sign * coef;
        }
        Self {
            c,
            quad: model
                .objective
                .quadratic
                .iter()
                .map(|q| (q.i.0, q.j.0, sign * q.coeff))
                .collect(),
            constant: sign * model.objective.linear.constant,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.quad.is_empty()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.c.iter().zip(x).map(|(c, v)| c * v).sum();
        lin + self.quad_form(x) + self.constant
    }

    pub fn quad_form(&self, d: &[f64]) -> f64 {
        self.quad.iter().map(|&(i, j, q)| q * d[i] * d[j]).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.c.clone();
        for &(i, j, q) in &self.quad {
            g[i] += q * x[j];
            g[j] += q * x[i];
        }
        g
    }
}
