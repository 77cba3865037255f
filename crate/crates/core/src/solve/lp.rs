//! Linear programs built from [`Model`]s.

use nalgebra::DMatrix;

use super::simplex::{LpOutcome, LpProblem, Simplex};
use super::{SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{Model, ObjectiveSense};

/// Dense LP data of a model with integrality and complementarity dropped and the
/// quadratic objective part ignored. Costs are in min form.
pub fn relaxation(model: &Model) -> LpProblem {
    let m = model.constraints.len();
    let n = model.num_vars();
    let mut a = DMatrix::<f64>::zeros(m, n);
    let mut rhs = Vec::with_capacity(m);
    let mut senses = Vec::with_capacity(m);
    for (i, c) in model.constraints.iter().enumerate() {
        for (v, coef) in &c.expr.terms {
            a[(i, v.0)] = *coef;
        }
        rhs.push(c.normalized_rhs());
        senses.push(c.sense);
    }
    let sign = min_sign(model);
    let mut cost = vec![0.0; n];
    for (v, c) in &model.objective.linear.terms {
        cost[v.0] = sign * c;
    }
    LpProblem {
        a,
        senses,
        rhs,
        cost,
        lower: model.variables.iter().map(|v| v.lower).collect(),
        upper: model.variables.iter().map(|v| v.upper).collect(),
    }
}

/// `+1` for minimization, `-1` for maximization.
pub(crate) fn min_sign(model: &Model) -> f64 {
    match model.objective.sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    }
}

/// Solves an LP model. Binaries, complementarity pairs and quadratic terms are rejected.
pub fn lp_solve(model: &Model) -> Result<SolveResult> {
    if !model.is_lp() {
        return Err(Error::InvalidModel(
            "lp_solve needs a model without binaries, complementarities or quadratic terms".into(),
        ));
    }
    lp_solve_relaxation(model)
}

/// Solves the continuous relaxation of a linear-objective model.
pub fn lp_solve_relaxation(model: &Model) -> Result<SolveResult> {
    let problem = relaxation(model);
    let mut simplex = Simplex::new(&problem)?;
    let outcome = simplex.solve()?;
    Ok(result_from_simplex(model, &simplex, outcome))
}

pub(crate) fn result_from_simplex(model: &Model, simplex: &Simplex, outcome: LpOutcome) -> SolveResult {
    let sign = min_sign(model);
    let iterations = simplex.iterations();
    match outcome {
        LpOutcome::Optimal => {
            let point = simplex.primal();
            let objective = model.objective.value(&point);
            SolveResult {
                status: SolveStatus::Optimal,
                objective,
                best_bound: objective,
                iterations,
                duals: simplex.row_duals().into_iter().map(|y| sign * y).collect(),
                reduced_costs: simplex.reduced_costs().into_iter().map(|r| sign * r).collect(),
                point,
                ..SolveResult::empty(SolveStatus::Optimal)
            }
        }
        LpOutcome::Infeasible => SolveResult {
            iterations,
            ..SolveResult::empty(SolveStatus::Infeasible)
        },
        LpOutcome::Unbounded => SolveResult {
            iterations,
            objective: -sign * f64::INFINITY,
            best_bound: -sign * f64::INFINITY,
            ..SolveResult::empty(SolveStatus::Unbounded)
        },
        LpOutcome::IterationLimit => SolveResult {
            iterations,
            point: simplex.primal(),
            ..SolveResult::empty(SolveStatus::LimitReached)
        },
    }
}

/// Dual objective `Σ y_i (rhs_i − const_i) + Σ r_j x_j + objective constant`, using the
/// sensitivity-sign duals stored in `result`. Equals the primal objective at an optimum.
pub fn dual_objective(model: &Model, result: &SolveResult) -> f64 {
    let rows: f64 = model
        .constraints
        .iter()
        .zip(&result.duals)
        .map(|(c, y)| y * c.normalized_rhs())
        .sum();
    let cols: f64 = result
        .reduced_costs
        .iter()
        .zip(&result.point)
        .map(|(r, x)| if *r == 0.0 { 0.0 } else { r * x })
        .sum();
    rows + cols + model.objective.linear.constant
}
