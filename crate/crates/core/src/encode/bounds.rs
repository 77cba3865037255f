//! Big-M constants for the mixed-integer encoding.
//!
//! Interval propagation gives valid but loose bounds. Optimization-based tightening
//! then walks the network layer by layer: for each neuron it maximizes and minimizes
//! the preactivation over the encoding of all earlier layers (with their already
//! tightened bounds), either over the LP relaxation or exactly with branch-and-bound.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::encode_hidden;
use crate::error::{Error, Result};
use crate::model::{LinearExpr, Model, Objective};
use crate::nn::{Network, NeuronId};
use crate::solve::lp::relaxation;
use crate::solve::simplex::{LpOutcome, Simplex};
use crate::solve::{milp_solve, MilpOptions, SolveStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Interval,
    LpRelax,
    ExactMip,
}

/// Bounds of one neuron. `pre_lo`/`pre_hi` bound the preactivation;
/// `my = max(0, pre_hi)` and `ms = max(0, -pre_lo)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronBounds {
    pub my: f64,
    pub ms: f64,
    pub pre_lo: f64,
    pub pre_hi: f64,
}

impl NeuronBounds {
    pub fn from_preactivation(pre_lo: f64, pre_hi: f64) -> Self {
        Self {
            my: pre_hi.max(0.0),
            ms: (-pre_lo).max(0.0),
            pre_lo,
            pre_hi,
        }
    }

    /// Output interval of the ReLU.
    fn output(&self) -> (f64, f64) {
        (self.pre_lo.max(0.0), self.pre_hi.max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigMBounds {
    pub method: BoundMethod,
    pub neurons: BTreeMap<NeuronId, NeuronBounds>,
}

impl BigMBounds {
    pub fn get(&self, id: NeuronId) -> Option<&NeuronBounds> {
        self.neurons.get(&id)
    }
}

fn check_box(net: &Network, input_box: &[(f64, f64)]) -> Result<()> {
    if input_box.len() != net.input_dim() {
        return Err(Error::dim("input box", net.input_dim(), input_box.len()));
    }
    for (j, &(lo, hi)) in input_box.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::UnboundedBox(format!("input {j} has bounds [{lo}, {hi}]")));
        }
        if lo > hi {
            return Err(Error::BoundInversion {
                name: format!("x[{j}]"),
                lower: lo,
                upper: hi,
            });
        }
    }
    if !net.is_piecewise_linear() {
        return Err(Error::NotPiecewiseLinear);
    }
    Ok(())
}

fn propagate(w: &nalgebra::DMatrix<f64>, b: &[f64], i: usize, inputs: &[(f64, f64)]) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0, 0.0);
    for (j, &(l, h)) in inputs.iter().enumerate() {
        let c = w[(i, j)];
        lo += (c * l).min(c * h);
        hi += (c * l).max(c * h);
    }
    (lo + b[i], hi + b[i])
}

/// Interval arithmetic through every hidden ReLU layer.
pub fn interval_bounds(net: &Network, input_box: &[(f64, f64)]) -> Result<BigMBounds> {
    check_box(net, input_box)?;
    let mut neurons = BTreeMap::new();
    let mut inputs = input_box.to_vec();
    for (l, layer) in net.hidden_layers().iter().enumerate() {
        let mut next = Vec::with_capacity(layer.output_dim());
        for i in 0..layer.output_dim() {
            let (lo, hi) = propagate(layer.weights(), layer.bias(), i, &inputs);
            let nb = NeuronBounds::from_preactivation(lo, hi);
            next.push(nb.output());
            neurons.insert(NeuronId::new(l, i), nb);
        }
        inputs = next;
    }
    Ok(BigMBounds {
        method: BoundMethod::Interval,
        neurons,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TightenOptions {
    pub mode: BoundMethod,
    /// Simplex pivots per LP (lp_relax) or nodes per solve (exact_mip); on hitting the
    /// limit the neuron keeps its interval bound.
    pub per_solve_limit: usize,
    /// Worker threads for the independent neurons of one layer.
    pub threads: usize,
}

impl Default for TightenOptions {
    fn default() -> Self {
        Self {
            mode: BoundMethod::LpRelax,
            per_solve_limit: 100_000,
            threads: 1,
        }
    }
}

/// Optimization-based bound tightening. `Interval` mode returns the interval bounds.
pub fn tighten_bounds(net: &Network, input_box: &[(f64, f64)], opts: &TightenOptions) -> Result<BigMBounds> {
    let seed = interval_bounds(net, input_box)?;
    if opts.mode == BoundMethod::Interval {
        return Ok(seed);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    let mut bounds = BigMBounds {
        method: opts.mode,
        neurons: BTreeMap::new(),
    };
    for (l, layer) in net.hidden_layers().iter().enumerate() {
        let ids: Vec<NeuronId> = (0..layer.output_dim()).map(|i| NeuronId::new(l, i)).collect();
        if l == 0 {
            // Interval arithmetic is exact on the first layer.
            for id in ids {
                bounds.neurons.insert(id, seed.neurons[&id]);
            }
            continue;
        }
        let mut model = Model::new();
        let xs = super::add_inputs(&mut model, input_box, "")?;
        let (_, prev) = encode_hidden(&mut model, net, &xs, Some(&bounds), l, "")?;
        let preact = |i: usize| {
            LinearExpr::from_terms(prev.iter().enumerate().map(|(j, &v)| (v, layer.weights()[(i, j)])))
                .with_constant(layer.bias()[i])
        };
        let solve_one = |i: usize, base: Option<&Simplex>| -> Result<NeuronBounds> {
            let id = NeuronId::new(l, i);
            let interval = seed.neurons[&id];
            let expr = preact(i);
            let (lo, hi) = match opts.mode {
                BoundMethod::LpRelax => {
                    let mut s = base.cloned().expect("lp mode has a base simplex");
                    (
                        lp_extreme(&mut s, &expr, model.num_vars(), -1.0, opts.per_solve_limit, id)?,
                        lp_extreme(&mut s, &expr, model.num_vars(), 1.0, opts.per_solve_limit, id)?,
                    )
                }
                _ => (
                    mip_extreme(&model, &expr, false, opts.per_solve_limit, id)?,
                    mip_extreme(&model, &expr, true, opts.per_solve_limit, id)?,
                ),
            };
            let lo = lo.unwrap_or(interval.pre_lo).max(interval.pre_lo);
            let hi = hi.unwrap_or(interval.pre_hi).min(interval.pre_hi);
            Ok(NeuronBounds::from_preactivation(lo.min(hi), hi.max(lo)))
        };
        let base = if opts.mode == BoundMethod::LpRelax {
            let mut s = Simplex::new(&relaxation(&model))?;
            s.max_iterations = opts.per_solve_limit;
            match s.solve()? {
                LpOutcome::Infeasible => return Err(Error::InconsistentBox(ids[0])),
                _ => Some(s),
            }
        } else {
            None
        };
        let results: Vec<Result<NeuronBounds>> = if opts.threads > 1 {
            pool.install(|| (0..ids.len()).into_par_iter().map(|i| solve_one(i, base.as_ref())).collect())
        } else {
            (0..ids.len()).map(|i| solve_one(i, base.as_ref())).collect()
        };
        for (id, r) in ids.into_iter().zip(results) {
            bounds.neurons.insert(id, r?);
        }
    }
    Ok(bounds)
}

/// Optimizes `expr` over the LP in `s`: `dir = 1` maximizes, `-1` minimizes.
/// `None` when the iteration limit is hit.
fn lp_extreme(s: &mut Simplex, expr: &LinearExpr, n: usize, dir: f64, limit: usize, id: NeuronId) -> Result<Option<f64>> {
    let mut cost = vec![0.0; n];
    for (v, c) in &expr.terms {
        cost[v.0] = -dir * c;
    }
    s.set_cost(&cost);
    s.max_iterations = s.iterations() + limit;
    match s.solve()? {
        LpOutcome::Optimal => Ok(Some(expr.evaluate(&s.primal()))),
        LpOutcome::Infeasible => Err(Error::InconsistentBox(id)),
        LpOutcome::Unbounded => Err(Error::Numerical(format!("bound LP for {id} is unbounded"))),
        LpOutcome::IterationLimit => Ok(None),
    }
}

fn mip_extreme(model: &Model, expr: &LinearExpr, maximize: bool, limit: usize, id: NeuronId) -> Result<Option<f64>> {
    let mut m = model.clone();
    m.set_objective(if maximize {
        Objective::maximize(expr.clone())
    } else {
        Objective::minimize(expr.clone())
    })?;
    let r = milp_solve(
        &m,
        &MilpOptions {
            node_limit: limit,
            ..MilpOptions::default()
        },
    )?;
    match r.status {
        // The proven bound, not the incumbent, is what keeps the constant valid.
        SolveStatus::Optimal | SolveStatus::LimitReached if r.best_bound.is_finite() => Ok(Some(r.best_bound)),
        SolveStatus::Infeasible => Err(Error::InconsistentBox(id)),
        _ => Ok(None),
    }
}

/// Hex SHA-256 of the network parameters and input box, used to key bound caches.
pub fn content_hash(net: &Network, input_box: &[(f64, f64)]) -> String {
    let mut h = Sha256::new();
    h.update((net.input_dim() as u64).to_le_bytes());
    for layer in net.layers() {
        h.update(format!("{:?}", layer.activation()).as_bytes());
        h.update((layer.output_dim() as u64).to_le_bytes());
        for v in layer.weights().iter().chain(layer.bias()) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    for &(lo, hi) in input_box {
        h.update(lo.to_bits().to_le_bytes());
        h.update(hi.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}
