//! Branch-and-bound over binary variables.
//!
//! Node relaxations reuse one simplex instance: moving between nodes only changes
//! binary bounds, so every solve restarts from the previous basis. A depth-first dive
//! runs until the first integral leaf, warmstart or not, then nodes
//! are taken best-bound first. Branching is on the most fractional binary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::frank_wolfe::{frank_wolfe_core, FwError, FwOptions};
use super::lp::{min_sign, relaxation};
use super::simplex::{LpOutcome, Simplex};
use super::{MinObjective, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{Model, VarKind};

#[derive(Clone, Debug, PartialEq)]
pub struct MilpOptions {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    pub int_tol: f64,
    /// Nodes whose bound is within `gap_abs + gap_rel·|incumbent|` of the incumbent are pruned.
    pub gap_abs: f64,
    pub gap_rel: f64,
    /// Feasible starting point used as the initial incumbent.
    pub warmstart: Option<Vec<f64>>,
    /// Frank-Wolfe settings for quadratic node relaxations.
    pub fw: FwOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_limit: 200_000,
            time_limit: None,
            int_tol: 1e-6,
            gap_abs: 1e-9,
            gap_rel: 1e-9,
            warmstart: None,
            fw: FwOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fixings: Vec<(usize, f64)>,
}

/// Heap order: smallest bound first, then deepest, then oldest.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

enum Relaxed {
    Solved { x: Vec<f64>, value: f64, bound: f64 },
    Infeasible,
    Unbounded,
    Failed,
}

fn solve_relaxation(simplex: &mut Simplex, obj: &MinObjective, fw: FwOptions) -> Result<Relaxed> {
    if obj.is_linear() {
        simplex.set_cost(&obj.c);
        return Ok(match simplex.solve()? {
            LpOutcome::Optimal => {
                let x = simplex.primal();
                let value = obj.value(&x);
                Relaxed::Solved { x, value, bound: value }
            }
            LpOutcome::Infeasible => Relaxed::Infeasible,
            LpOutcome::Unbounded => Relaxed::Unbounded,
            LpOutcome::IterationLimit => Relaxed::Failed,
        });
    }
    Ok(match frank_wolfe_core(simplex, obj, fw)? {
        Ok(out) => Relaxed::Solved {
            bound: out.value - out.gap.max(0.0),
            value: out.value,
            x: out.x,
        },
        Err(FwError::Infeasible) => Relaxed::Infeasible,
        Err(FwError::Unbounded) => Relaxed::Unbounded,
    })
}

/// Solves a model with binaries and a linear or convex quadratic objective.
/// Complementarity pairs are not allowed (fix them first).
pub fn milp_solve(model: &Model, opts: &MilpOptions) -> Result<SolveResult> {
    if !model.complementarities.is_empty() {
        return Err(Error::InvalidModel(
            "branch-and-bound does not handle complementarity pairs".into(),
        ));
    }
    if !model.objective.is_convex() {
        return Err(Error::InvalidModel("objective is not convex".into()));
    }
    let start = Instant::now();
    let sign = min_sign(model);
    let obj = MinObjective::from_model(model);
    let binaries: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    let base: Vec<(f64, f64)> = binaries
        .iter()
        .map(|&j| (model.variables[j].lower, model.variables[j].upper))
        .collect();
    let mut simplex = Simplex::new(&relaxation(model))?;

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    if let Some(ws) = &opts.warmstart {
        if model.is_feasible(ws, 1e-6) {
            incumbent = Some((ws.clone(), obj.value(ws)));
        } else {
            warn!("warmstart point is infeasible (violation {:.3e}); ignored", model.violations(ws).max());
        }
    }
    let cutoff = |inc: &Option<(Vec<f64>, f64)>| {
        inc.as_ref()
            .map_or(f64::INFINITY, |(_, v)| v - opts.gap_abs - opts.gap_rel * v.abs())
    };

    let mut dive: Vec<Node> = Vec::new();
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let root = Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        id: 0,
        fixings: Vec::new(),
    };
    // The dive ends at the first integral leaf whether or not a warmstart is present,
    // so both runs visit nodes in the same order apart from pruning.
    dive.push(root);
    let mut diving = true;
    let mut next_id = 1;
    let mut nodes = 0usize;
    let mut pruned_bound = f64::INFINITY;
    let mut incomplete = false;
    let mut applied: Vec<(f64, f64)> = base.clone();
    let mut hit_limit = false;

    loop {
        let node = match dive.pop() {
            Some(n) => n,
            None => match heap.pop() {
                Some(n) => n,
                None => break,
            },
        };
        if node.bound >= cutoff(&incumbent) {
            pruned_bound = pruned_bound.min(node.bound);
            continue;
        }
        if nodes >= opts.node_limit || opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            heap.extend(dive.drain(..));
            hit_limit = true;
            break;
        }
        nodes += 1;

        let mut want = base.clone();
        for &(k, v) in &node.fixings {
            want[k] = (v, v);
        }
        let changes: Vec<(usize, f64, f64)> = binaries
            .iter()
            .enumerate()
            .filter(|(k, _)| applied[*k] != want[*k])
            .map(|(k, &j)| (j, want[k].0, want[k].1))
            .collect();
        simplex.set_bounds_many(&changes);
        applied = want;

        let (x, value, bound) = match solve_relaxation(&mut simplex, &obj, opts.fw)? {
            Relaxed::Solved { x, value, bound } => (x, value, bound.max(node.bound)),
            Relaxed::Infeasible => continue,
            Relaxed::Unbounded => {
                return Ok(SolveResult {
                    nodes,
                    iterations: simplex.iterations(),
                    objective: -sign * f64::INFINITY,
                    best_bound: -sign * f64::INFINITY,
                    ..SolveResult::empty(SolveStatus::Unbounded)
                });
            }
            Relaxed::Failed => {
                warn!("node relaxation hit its iteration limit; node dropped");
                incomplete = true;
                continue;
            }
        };
        if bound >= cutoff(&incumbent) {
            pruned_bound = pruned_bound.min(bound);
            continue;
        }

        let mut branch: Option<(usize, f64)> = None;
        for (k, &j) in binaries.iter().enumerate() {
            let v = x[j];
            let frac = v.min(1.0 - v);
            if frac > opts.int_tol && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((k, frac));
            }
        }
        match branch {
            None => {
                if incumbent.as_ref().is_none_or(|(_, v)| value < *v) {
                    debug!("incumbent {value} at node {nodes}");
                    incumbent = Some((x, value));
                }
                if diving {
                    diving = false;
                    heap.extend(dive.drain(..));
                }
            }
            Some((k, _)) => {
                let up_first = x[binaries[k]] >= 0.5;
                let mut children = Vec::with_capacity(2);
                for val in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((k, val));
                    children.push(Node {
                        bound,
                        depth: node.depth + 1,
                        id: next_id,
                        fixings,
                    });
                    next_id += 1;
                }
                if diving {
                    // Preferred child last so the dive pops it next.
                    if !up_first {
                        children.reverse();
                    }
                    dive.extend(children);
                } else {
                    heap.extend(children);
                }
            }
        }
    }

    let iterations = simplex.iterations();
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let Some((point, value)) = incumbent else {
        let status = if hit_limit || incomplete {
            SolveStatus::LimitReached
        } else {
            SolveStatus::Infeasible
        };
        return Ok(SolveResult {
            nodes,
            iterations,
            best_bound: sign * open_bound.min(pruned_bound),
            ..SolveResult::empty(status)
        });
    };
    let bound = value.min(open_bound).min(pruned_bound);
    let status = if hit_limit || incomplete {
        SolveStatus::LimitReached
    } else {
        SolveStatus::Optimal
    };
    debug!(
        "branch-and-bound finished: {nodes} nodes, {iterations} pivots, {:?}",
        start.elapsed()
    );
    Ok(SolveResult {
        status,
        objective: model.objective.value(&point),
        best_bound: sign * bound,
        point,
        iterations,
        nodes,
        ..SolveResult::empty(status)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearExpr, Objective, QuadTerm, Sense};

    /// max 5a + 4b + 3c s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, binary.
    fn knapsack() -> Model {
        let mut m = Model::new();
        let v: Vec<_> = ["a", "b", "c"].iter().map(|n| m.add_binary(*n).unwrap()).collect();
        let rows = [([2.0, 3.0, 1.0], 5.0), ([4.0, 1.0, 2.0], 11.0), ([3.0, 4.0, 2.0], 8.0)];
        for (coef, rhs) in rows {
            m.add_constraint(LinearExpr::from_terms(v.iter().copied().zip(coef)), Sense::Le, rhs, "")
                .unwrap();
        }
        m.set_objective(Objective::maximize(LinearExpr::from_terms(v.iter().copied().zip([5.0, 4.0, 3.0]))))
            .unwrap();
        m
    }

    fn brute_force(m: &Model) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for mask in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|i| f64::from((mask >> i) & 1)).collect();
            if m.is_feasible(&x, 1e-12) {
                best = best.max(m.objective.value(&x));
            }
        }
        best
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let m = knapsack();
        let r = milp_solve(&m, &MilpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - brute_force(&m)).abs() < 1e-9);
        assert!((r.objective - r.best_bound).abs() <= 1e-6 * (1.0 + r.objective.abs()));
    }

    #[test]
    fn fixed_binaries_reduce_to_lp() {
        let m = knapsack();
        let fixed = m
            .fix_binaries(&m.binaries().into_iter().map(|v| (v, v.0 != 1)).collect())
            .unwrap();
        let r = milp_solve(&fixed, &MilpOptions::default()).unwrap();
        let relaxed = {
            let mut lp = fixed.clone();
            for v in &mut lp.variables {
                v.kind = VarKind::Continuous;
            }
            crate::solve::lp_solve(&lp).unwrap()
        };
        assert_eq!(r.nodes, 1);
        assert!((r.objective - relaxed.objective).abs() < 1e-12);
    }

    #[test]
    fn warmstart_never_hurts() {
        let m = knapsack();
        let cold = milp_solve(&m, &MilpOptions::default()).unwrap();
        let warm = milp_solve(
            &m,
            &MilpOptions {
                warmstart: Some(cold.point.clone()),
                ..MilpOptions::default()
            },
        )
        .unwrap();
        assert!((warm.objective - cold.objective).abs() < 1e-12);
        assert!(warm.nodes <= cold.nodes);
    }

    #[test]
    fn infeasible_milp() {
        let mut m = Model::new();
        let a = m.add_binary("a").unwrap();
        m.add_constraint(LinearExpr::var(a), Sense::Eq, 0.5, "").unwrap();
        assert_eq!(milp_solve(&m, &MilpOptions::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn quadratic_objective_uses_frank_wolfe_nodes() {
        // min (x - 0.7)^2 + (a - 0.4)^2 with x in [0,1], binary a, x <= a.
        let mut m = Model::new();
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let a = m.add_binary("a").unwrap();
        m.add_constraint(LinearExpr::from_terms([(x, 1.0), (a, -1.0)]), Sense::Le, 0.0, "").unwrap();
        m.set_objective(
            Objective::minimize(LinearExpr::from_terms([(x, -1.4), (a, -0.8)]).with_constant(0.49 + 0.16))
                .with_quadratic(vec![QuadTerm { i: x, j: x, coeff: 1.0 }, QuadTerm { i: a, j: a, coeff: 1.0 }]),
        )
        .unwrap();
        let r = milp_solve(&m, &MilpOptions::default()).unwrap();
        // a = 1: 0.36 at x = 0.7; a = 0: 0.49 + 0.16 = 0.65 at x = 0.
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 0.36).abs() < 1e-5);
        assert!((r.point[1] - 1.0).abs() < 1e-9);
    }
}
