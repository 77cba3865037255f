//! Away-step Frank-Wolfe for convex quadratics over polytopes, with the simplex as the
//! linear minimization oracle.

use super::lp::{min_sign, relaxation};
use super::simplex::{LpOutcome, Simplex};
use super::{MinObjective, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FwOptions {
    /// Stop once the Frank-Wolfe duality gap is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FwOutcome {
    pub x: Vec<f64>,
    /// Min-form objective value.
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Min-form row duals and reduced costs of the last oracle call.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
}

pub(crate) enum FwError {
    Infeasible,
    Unbounded,
}

fn lmo(simplex: &mut Simplex, g: &[f64]) -> Result<std::result::Result<Vec<f64>, FwError>> {
    simplex.set_cost(g);
    match simplex.solve()? {
        LpOutcome::Optimal => Ok(Ok(simplex.primal())),
        LpOutcome::Infeasible => Ok(Err(FwError::Infeasible)),
        LpOutcome::Unbounded => Ok(Err(FwError::Unbounded)),
        LpOutcome::IterationLimit => Err(Error::Numerical("oracle LP hit its iteration limit".into())),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs away-step Frank-Wolfe on the polytope encoded in `simplex` (whose bounds and
/// rows are taken as is; its cost vector is overwritten).
pub(crate) fn frank_wolfe_core(
    simplex: &mut Simplex,
    obj: &MinObjective,
    opts: FwOptions,
) -> Result<std::result::Result<FwOutcome, FwError>> {
    let g0 = obj.gradient(&vec![0.0; obj.c.len()]);
    let first = match lmo(simplex, &g0)? {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let mut vertices: Vec<Vec<f64>> = vec![first.clone()];
    let mut weights: Vec<f64> = vec![1.0];
    let mut x = first;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let g = obj.gradient(&x);
        let s = match lmo(simplex, &g)? {
            Ok(v) => v,
            Err(e) => return Ok(Err(e)),
        };
        let gx = dot(&g, &x);
        gap = gx - dot(&g, &s);
        if gap <= opts.tol {
            converged = true;
            break;
        }
        let (away_idx, away_val) = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(&g, v)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let fw_step = gap >= away_val - gx || vertices.len() == 1;
        let (d, gamma_max) = if fw_step {
            (s.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>(), 1.0)
        } else {
            let a = weights[away_idx];
            let d = x.iter().zip(&vertices[away_idx]).map(|(a, b)| a - b).collect::<Vec<_>>();
            (d, a / (1.0 - a))
        };
        let slope = dot(&g, &d);
        let curv = obj.quad_form(&d);
        let gamma = if curv > 0.0 {
            (-slope / (2.0 * curv)).clamp(0.0, gamma_max)
        } else {
            gamma_max
        };
        if gamma == 0.0 {
            // No progress possible along either direction.
            converged = gap <= opts.tol;
            break;
        }
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += gamma * di;
        }
        if fw_step {
            for w in weights.iter_mut() {
                *w *= 1.0 - gamma;
            }
            match vertices.iter().position(|v| same_vertex(v, &s)) {
                Some(i) => weights[i] += gamma,
                None => {
                    vertices.push(s);
                    weights.push(gamma);
                }
            }
            if gamma == 1.0 {
                let keep = vertices.len() - 1;
                vertices.drain(..keep);
                weights = vec![1.0];
            }
        } else {
            for w in weights.iter_mut() {
                *w *= 1.0 + gamma;
            }
            weights[away_idx] -= gamma;
            if gamma == gamma_max || weights[away_idx] <= 1e-14 {
                vertices.remove(away_idx);
                weights.remove(away_idx);
            }
        }
        // Drop numerically vanished atoms.
        let mut i = 0;
        while i < weights.len() {
            if weights[i] <= 0.0 && weights.len() > 1 {
                weights.remove(i);
                vertices.remove(i);
            } else {
                i += 1;
            }
        }
    }
    let duals = simplex.row_duals();
    let reduced_costs = simplex.reduced_costs();
    Ok(Ok(FwOutcome {
        value: obj.value(&x),
        x,
        gap,
        iterations,
        converged,
        duals,
        reduced_costs,
    }))
}

fn same_vertex(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
}

/// Minimizes (or maximizes a concave) linear-plus-quadratic objective over the model's
/// polyhedron. Binaries are relaxed; complementarity pairs are ignored.
pub fn qp_frank_wolfe(model: &Model, opts: FwOptions) -> Result<SolveResult> {
    if !model.objective.is_convex() {
        return Err(Error::InvalidModel("objective is not convex".into()));
    }
    let obj = MinObjective::from_model(model);
    let mut simplex = Simplex::new(&relaxation(model))?;
    fw_result(model, &mut simplex, &obj, opts)
}

pub(crate) fn fw_result(model: &Model, simplex: &mut Simplex, obj: &MinObjective, opts: FwOptions) -> Result<SolveResult> {
    let sign = min_sign(model);
    match frank_wolfe_core(simplex, obj, opts)? {
        Err(FwError::Infeasible) => Ok(SolveResult::empty(SolveStatus::Infeasible)),
        Err(FwError::Unbounded) => Err(Error::InvalidModel(
            "Frank-Wolfe needs a bounded feasible region".into(),
        )),
        Ok(out) => {
            let objective = model.objective.value(&out.x);
            Ok(SolveResult {
                status: if out.converged { SolveStatus::Optimal } else { SolveStatus::LimitReached },
                best_bound: sign * (out.value - out.gap),
                objective,
                iterations: out.iterations,
                gap: Some(out.gap),
                duals: out.duals.iter().map(|y| sign * y).collect(),
                reduced_costs: out.reduced_costs.iter().map(|r| sign * r).collect(),
                point: out.x,
                ..SolveResult::empty(SolveStatus::Optimal)
            })
        }
    }
}
