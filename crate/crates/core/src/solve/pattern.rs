//! Solvers that fix the on/off state of every ReLU neuron.
//!
//! Fixing a neuron active pins its slack `s` to 0, fixing it inactive pins its output
//! `y` to 0 (and sets the big-M binary accordingly), so each pattern leaves a convex
//! subproblem. Exhausting all patterns gives the global optimum; flipping one neuron
//! at a time from a starting pattern gives a local search for the complementarity form.

use std::collections::BTreeMap;

use log::debug;

use super::frank_wolfe::{fw_result, FwOptions};
use super::lp::{relaxation, result_from_simplex};
use super::milp::{milp_solve, MilpOptions};
use super::simplex::Simplex;
use super::{MinObjective, SolveResult, SolveStatus};
use crate::encode::EmbeddingHandles;
use crate::error::{Error, Result};
use crate::model::{Model, VarId};

/// The variables of one neuron whose state a pattern fixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Switch {
    pub y: VarId,
    pub s: VarId,
    /// Big-M binary, 1 when the neuron is off.
    pub z: Option<VarId>,
}

/// Switches of every neuron of the given embeddings, in embedding then neuron order.
pub fn switches_from_handles<'a>(handles: impl IntoIterator<Item = &'a EmbeddingHandles>) -> Vec<Switch> {
    handles
        .into_iter()
        .flat_map(|h| h.neuron_vars.values().map(|v| Switch { y: v.y, s: v.s, z: v.z }))
        .collect()
}

/// One switch per complementarity pair `y ⊥ s`.
pub fn switches_from_complementarities(model: &Model) -> Vec<Switch> {
    model
        .complementarities
        .iter()
        .map(|p| Switch { y: p.a, s: p.b, z: None })
        .collect()
}

/// Active flags read off a point: a neuron is active when `y > s`.
pub fn pattern_from_point(switches: &[Switch], point: &[f64]) -> Vec<bool> {
    switches.iter().map(|sw| point[sw.y.0] > point[sw.s.0]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternOptions {
    /// Largest number of switches `pattern_enumerate_solve` accepts.
    pub max_switches: usize,
    /// A neuron is a boundary candidate when both `y` and `s` are at most this.
    pub boundary_tol: f64,
    /// A flip is accepted when it lowers the objective by more than this.
    pub improve_tol: f64,
    pub max_flips: usize,
    pub fw: FwOptions,
    /// Used when binaries other than the switches' remain.
    pub milp: MilpOptions,
}

impl Default for PatternOptions {
    fn default() -> Self {
        Self {
            max_switches: 20,
            boundary_tol: 1e-7,
            improve_tol: 1e-8,
            max_flips: 10_000,
            fw: FwOptions::default(),
            milp: MilpOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternOutcome {
    pub result: SolveResult,
    /// Active flags of the returned solution's pattern, one per switch.
    pub pattern: Vec<bool>,
    /// Number of fixed-pattern subproblems solved.
    pub subproblems: usize,
}

/// Solves fixed-pattern subproblems of one model, reusing a warm simplex when the only
/// discrete choices are the switches.
pub struct PatternSubproblems<'a> {
    model: &'a Model,
    switches: &'a [Switch],
    simplex: Option<Simplex>,
    obj: MinObjective,
    opts: PatternOptions,
    pub solved: usize,
}

impl<'a> PatternSubproblems<'a> {
    pub fn new(model: &'a Model, switches: &'a [Switch], opts: PatternOptions) -> Result<Self> {
        if !model.objective.is_convex() {
            return Err(Error::InvalidModel("objective is not convex".into()));
        }
        for sw in switches {
            for v in [Some(sw.y), Some(sw.s), sw.z].into_iter().flatten() {
                if v.0 >= model.num_vars() {
                    return Err(Error::UnknownVariable(v.0));
                }
            }
        }
        let covered: Vec<VarId> = switches.iter().filter_map(|s| s.z).collect();
        let other_binaries = model.binaries().into_iter().any(|b| !covered.contains(&b));
        let simplex = if other_binaries {
            None
        } else {
            Some(Simplex::new(&relaxation(model))?)
        };
        Ok(Self {
            model,
            switches,
            simplex,
            obj: MinObjective::from_model(model),
            opts,
            solved: 0,
        })
    }

    fn bound_changes(&self, pattern: &[bool]) -> Vec<(usize, f64, f64)> {
        let mut changes = Vec::with_capacity(3 * self.switches.len());
        for (sw, &on) in self.switches.iter().zip(pattern) {
            let y = self.model.var(sw.y);
            let s = self.model.var(sw.s);
            if on {
                changes.push((sw.y.0, y.lower, y.upper));
                changes.push((sw.s.0, 0.0, 0.0));
            } else {
                changes.push((sw.y.0, 0.0, 0.0));
                changes.push((sw.s.0, s.lower, s.upper));
            }
            if let Some(z) = sw.z {
                let b = if on { 0.0 } else { 1.0 };
                changes.push((z.0, b, b));
            }
        }
        changes
    }

    /// The model with `pattern` fixed and complementarity pairs dropped.
    pub fn fixed_model(&self, pattern: &[bool]) -> Result<Model> {
        let mut m = self.model.clone();
        for (j, lo, hi) in self.bound_changes(pattern) {
            m.set_bounds(VarId(j), lo, hi)?;
        }
        m.complementarities.clear();
        Ok(m)
    }

    pub fn solve(&mut self, pattern: &[bool]) -> Result<SolveResult> {
        if pattern.len() != self.switches.len() {
            return Err(Error::dim("pattern", self.switches.len(), pattern.len()));
        }
        self.solved += 1;
        let changes = self.bound_changes(pattern);
        let Some(simplex) = self.simplex.as_mut() else {
            let fixed = self.fixed_model(pattern)?;
            return milp_solve(&fixed, &self.opts.milp);
        };
        simplex.set_bounds_many(&changes);
        if self.obj.is_linear() {
            simplex.set_cost(&self.obj.c);
            let outcome = simplex.solve()?;
            Ok(result_from_simplex(self.model, simplex, outcome))
        } else {
            fw_result(self.model, simplex, &self.obj, self.opts.fw)
        }
    }

    fn min_form(&self, r: &SolveResult) -> f64 {
        super::lp::min_sign(self.model) * r.objective
    }
}

fn feasible(r: &SolveResult) -> bool {
    matches!(r.status, SolveStatus::Optimal | SolveStatus::LimitReached | SolveStatus::Feasible) && !r.point.is_empty()
}

/// Global optimum by solving the subproblem of every pattern (in Gray-code order, so
/// consecutive solves differ in one neuron).
pub fn pattern_enumerate_solve(model: &Model, switches: &[Switch], opts: &PatternOptions) -> Result<PatternOutcome> {
    if switches.len() > opts.max_switches {
        return Err(Error::CapExceeded {
            what: "neurons for pattern enumeration",
            count: switches.len(),
            cap: opts.max_switches,
        });
    }
    let mut sub = PatternSubproblems::new(model, switches, opts.clone())?;
    let k = switches.len();
    let mut best: Option<(f64, SolveResult, Vec<bool>)> = None;
    let mut iterations = 0;
    for i in 0u64..(1u64 << k) {
        let g = i ^ (i >> 1);
        let pattern: Vec<bool> = (0..k).map(|b| g >> b & 1 == 1).collect();
        let r = sub.solve(&pattern)?;
        iterations += r.iterations;
        if r.status == SolveStatus::Unbounded {
            return Ok(PatternOutcome {
                result: SolveResult {
                    nodes: sub.solved,
                    iterations,
                    ..r
                },
                pattern,
                subproblems: sub.solved,
            });
        }
        if !feasible(&r) {
            continue;
        }
        let v = sub.min_form(&r);
        if best.as_ref().is_none_or(|(bv, _, _)| v < *bv) {
            best = Some((v, r, pattern));
        }
    }
    let subproblems = sub.solved;
    Ok(match best {
        Some((_, r, pattern)) => PatternOutcome {
            result: SolveResult {
                best_bound: r.objective,
                nodes: subproblems,
                iterations,
                ..r
            },
            pattern,
            subproblems,
        },
        None => PatternOutcome {
            result: SolveResult {
                nodes: subproblems,
                iterations,
                ..SolveResult::empty(SolveStatus::Infeasible)
            },
            pattern: vec![false; k],
            subproblems,
        },
    })
}

/// Where the local search starts.
#[derive(Clone, Debug, PartialEq)]
pub enum PatternStart {
    Pattern(Vec<bool>),
    /// A model point; its pattern is read with [`pattern_from_point`].
    Point(Vec<f64>),
}

/// Local search over patterns: solve the current pattern's subproblem, then try single
/// flips (boundary neurons with `y = s = 0` first, then the rest, each group in switch
/// order) and move to the first one that improves the objective. Stops when no flip
/// improves. The result carries the final subproblem's duals.
pub fn mpcc_local_solve(model: &Model, switches: &[Switch], start: PatternStart, opts: &PatternOptions) -> Result<PatternOutcome> {
    let mut pattern = match start {
        PatternStart::Pattern(p) => p,
        PatternStart::Point(x) => {
            if x.len() != model.num_vars() {
                return Err(Error::dim("start point", model.num_vars(), x.len()));
            }
            pattern_from_point(switches, &x)
        }
    };
    let mut sub = PatternSubproblems::new(model, switches, opts.clone())?;
    let mut current = sub.solve(&pattern)?;
    if !feasible(&current) {
        return Err(Error::NoFeasibleStart(format!(
            "starting pattern subproblem is {:?}",
            current.status
        )));
    }
    let mut iterations = current.iterations;
    let mut flips = 0;
    let mut status = SolveStatus::Optimal;
    'outer: loop {
        let value = sub.min_form(&current);
        let boundary: Vec<usize> = (0..switches.len())
            .filter(|&k| {
                let sw = switches[k];
                current.point[sw.y.0] <= opts.boundary_tol && current.point[sw.s.0] <= opts.boundary_tol
            })
            .collect();
        let rest = (0..switches.len()).filter(|k| !boundary.contains(k));
        let order: Vec<usize> = boundary.iter().copied().chain(rest).collect();
        for k in order {
            pattern[k] = !pattern[k];
            let r = sub.solve(&pattern)?;
            iterations += r.iterations;
            if feasible(&r) && sub.min_form(&r) < value - opts.improve_tol {
                debug!("flip {k}: {} -> {}", value, sub.min_form(&r));
                current = r;
                flips += 1;
                if flips >= opts.max_flips {
                    status = SolveStatus::LimitReached;
                    break 'outer;
                }
                continue 'outer;
            }
            pattern[k] = !pattern[k];
        }
        break;
    }
    if current.status != SolveStatus::Optimal {
        status = current.status;
    }
    let subproblems = sub.solved;
    Ok(PatternOutcome {
        result: SolveResult {
            status,
            iterations,
            nodes: subproblems,
            // A local optimum bounds nothing globally.
            best_bound: f64::NAN,
            ..current
        },
        pattern,
        subproblems,
    })
}

/// Map from switch index to the objective change of flipping it alone, for checking
/// that a local search result admits no improving flip.
pub fn single_flip_values(model: &Model, switches: &[Switch], pattern: &[bool], opts: &PatternOptions) -> Result<BTreeMap<usize, Option<f64>>> {
    let mut sub = PatternSubproblems::new(model, switches, opts.clone())?;
    let mut p = pattern.to_vec();
    let mut out = BTreeMap::new();
    for k in 0..switches.len() {
        p[k] = !p[k];
        let r = sub.solve(&p)?;
        out.insert(k, feasible(&r).then(|| sub.min_form(&r)));
        p[k] = !p[k];
    }
    Ok(out)
}
