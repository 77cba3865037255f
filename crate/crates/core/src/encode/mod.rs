//! Compiles networks into optimization models.
//!
//! Every hidden ReLU neuron `(l, i)` is lifted to an output `y >= 0` and a slack
//! `s >= 0` with `y - s = w·y_prev + b`. The big-M form adds a binary `z` (1 when
//! the neuron is off) with `y <= My (1 - z)` and `s <= Ms z`; the complementarity form
//! instead records the pair `y ⊥ s`. The output layer is a block of equalities.

pub mod bounds;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearExpr, Model, Sense, VarId};
use crate::nn::{Network, NeuronId};

pub use bounds::{
    content_hash, interval_bounds, tighten_bounds, BigMBounds, BoundMethod, NeuronBounds, TightenOptions,
};

/// Which model family to emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Mip,
    Mpcc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeuronVars {
    pub y: VarId,
    pub s: VarId,
    pub z: Option<VarId>,
}

/// Variables and rows one network embedding added to a model.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingHandles {
    pub input_vars: Vec<VarId>,
    pub output_vars: Vec<VarId>,
    pub neuron_vars: BTreeMap<NeuronId, NeuronVars>,
    /// Index of each neuron's `y - s - w·y_prev = b` row.
    pub relu_rows: BTreeMap<NeuronId, usize>,
    /// Index of each output equality row.
    pub output_rows: Vec<usize>,
}

impl EmbeddingHandles {
    /// Writes the forward-pass values of `x` into `point`: inputs, `y`, `s`, `z` (1 when
    /// the preactivation is not positive) and outputs.
    pub fn fill_forward(&self, net: &Network, x: &[f64], point: &mut [f64]) -> Result<()> {
        let fp = net.forward_with_preactivations(x)?;
        for (v, xi) in self.input_vars.iter().zip(x) {
            point[v.0] = *xi;
        }
        for (id, vars) in &self.neuron_vars {
            let a = fp.preacts[id.layer][id.index];
            point[vars.y.0] = a.max(0.0);
            point[vars.s.0] = (-a).max(0.0);
            if let Some(z) = vars.z {
                point[z.0] = if a > 0.0 { 0.0 } else { 1.0 };
            }
        }
        for (v, o) in self.output_vars.iter().zip(&fp.output) {
            point[v.0] = *o;
        }
        Ok(())
    }

    /// Neurons whose `y` is positive at `point`.
    pub fn active_pattern(&self, point: &[f64], tol: f64) -> crate::nn::ActivationPattern {
        self.neuron_vars
            .iter()
            .filter(|(_, v)| point[v.y.0] > tol)
            .map(|(id, _)| *id)
            .collect()
    }
}

fn check_inputs(net: &Network, input_vars: &[VarId], model: &Model) -> Result<()> {
    if input_vars.len() != net.input_dim() {
        return Err(Error::dim("embedding inputs", net.input_dim(), input_vars.len()));
    }
    if let Some(v) = input_vars.iter().find(|v| v.0 >= model.num_vars()) {
        return Err(Error::UnknownVariable(v.0));
    }
    if !net.is_piecewise_linear() {
        return Err(Error::NotPiecewiseLinear);
    }
    Ok(())
}

/// Adds the neuron rows of hidden layers `0..upto` and returns the handles along with
/// the variables carrying layer `upto - 1`'s outputs.
pub(crate) fn encode_hidden(
    model: &mut Model,
    net: &Network,
    input_vars: &[VarId],
    bounds: Option<&BigMBounds>,
    upto: usize,
    prefix: &str,
) -> Result<(EmbeddingHandles, Vec<VarId>)> {
    let mut handles = EmbeddingHandles {
        input_vars: input_vars.to_vec(),
        output_vars: Vec::new(),
        neuron_vars: BTreeMap::new(),
        relu_rows: BTreeMap::new(),
        output_rows: Vec::new(),
    };
    let mut prev = input_vars.to_vec();
    for (l, layer) in net.hidden_layers().iter().enumerate().take(upto) {
        let mut cur = Vec::with_capacity(layer.output_dim());
        for i in 0..layer.output_dim() {
            let id = NeuronId::new(l, i);
            let (y_hi, s_hi) = match bounds {
                Some(b) => {
                    let nb = b.get(id).ok_or(Error::MissingBounds(id))?;
                    (nb.my, nb.ms)
                }
                None => (f64::INFINITY, f64::INFINITY),
            };
            let y = model.add_continuous(format!("{prefix}y[{l}][{i}]"), 0.0, y_hi)?;
            let s = model.add_continuous(format!("{prefix}s[{l}][{i}]"), 0.0, s_hi)?;
            let mut expr = LinearExpr::from_terms([(y, 1.0), (s, -1.0)]);
            for (j, pv) in prev.iter().enumerate() {
                expr.add_term(*pv, -layer.weights()[(i, j)]);
            }
            let row = model.add_constraint(expr, Sense::Eq, layer.bias()[i], "relu")?;
            let z = if bounds.is_some() {
                let z = model.add_binary(format!("{prefix}z[{l}][{i}]"))?;
                model.add_constraint(LinearExpr::from_terms([(y, 1.0), (z, y_hi)]), Sense::Le, y_hi, "y_on")?;
                model.add_constraint(LinearExpr::from_terms([(s, 1.0), (z, -s_hi)]), Sense::Le, 0.0, "s_off")?;
                if y_hi == 0.0 {
                    model.set_bounds(z, 1.0, 1.0)?;
                } else if s_hi == 0.0 {
                    model.set_bounds(z, 0.0, 0.0)?;
                }
                Some(z)
            } else {
                model.add_complementarity(y, s)?;
                None
            };
            handles.neuron_vars.insert(id, NeuronVars { y, s, z });
            handles.relu_rows.insert(id, row);
            cur.push(y);
        }
        prev = cur;
    }
    Ok((handles, prev))
}

fn encode(
    model: &mut Model,
    net: &Network,
    input_vars: &[VarId],
    bounds: Option<&BigMBounds>,
    prefix: &str,
) -> Result<EmbeddingHandles> {
    check_inputs(net, input_vars, model)?;
    let hidden = net.hidden_layers().len();
    let (mut handles, prev) = encode_hidden(model, net, input_vars, bounds, hidden, prefix)?;
    let last = net.layers().last().expect("validated network");
    for k in 0..last.output_dim() {
        let out = model.add_continuous(format!("{prefix}y[{hidden}][{k}]"), f64::NEG_INFINITY, f64::INFINITY)?;
        let mut expr = LinearExpr::var(out);
        for (j, pv) in prev.iter().enumerate() {
            expr.add_term(*pv, -last.weights()[(k, j)]);
        }
        handles.output_rows.push(model.add_constraint(expr, Sense::Eq, last.bias()[k], "out")?);
        handles.output_vars.push(out);
    }
    Ok(handles)
}

/// Big-M mixed-integer embedding of `net` on `input_vars`.
pub fn encode_mip(
    model: &mut Model,
    net: &Network,
    input_vars: &[VarId],
    bounds: &BigMBounds,
    prefix: &str,
) -> Result<EmbeddingHandles> {
    encode(model, net, input_vars, Some(bounds), prefix)
}

/// Complementarity-constrained embedding of `net` on `input_vars`.
pub fn encode_mpcc(model: &mut Model, net: &Network, input_vars: &[VarId], prefix: &str) -> Result<EmbeddingHandles> {
    let h = encode(model, net, input_vars, None, prefix)?;
    model.metadata.insert("complementarity".into(), "aggregated: sum(y*s) <= 0".into());
    Ok(h)
}

/// Sum of `y·s` over all complementarity pairs: the aggregated product row
/// `Σ y s <= 0` is satisfied iff this is `<= 0`.
pub fn aggregated_complementarity(model: &Model, point: &[f64]) -> f64 {
    model.complementarities.iter().map(|p| point[p.a.0] * point[p.b.0]).sum()
}

/// Restricts `input_vars` to the convex hull of `training` rows through weights
/// `λ_k >= 0`, `Σ λ_k = 1`, `x_j = Σ λ_k v_kj`. Returns the weight variables.
pub fn convex_hull_constraints(
    model: &mut Model,
    input_vars: &[VarId],
    training: &[Vec<f64>],
    prefix: &str,
) -> Result<Vec<VarId>> {
    if training.is_empty() {
        return Err(Error::InvalidSpec("convex hull needs at least one training point".into()));
    }
    if let Some(bad) = training.iter().find(|r| r.len() != input_vars.len()) {
        return Err(Error::dim("training point", input_vars.len(), bad.len()));
    }
    let lambdas: Vec<VarId> = (0..training.len())
        .map(|k| model.add_continuous(format!("{prefix}lambda[{k}]"), 0.0, f64::INFINITY))
        .collect::<Result<_>>()?;
    let sum = LinearExpr::from_terms(lambdas.iter().map(|&l| (l, 1.0)));
    model.add_constraint(sum, Sense::Eq, 1.0, "hull_sum")?;
    for (j, &x) in input_vars.iter().enumerate() {
        let mut expr = LinearExpr::var(x);
        for (k, &l) in lambdas.iter().enumerate() {
            expr.add_term(l, -training[k][j]);
        }
        model.add_constraint(expr, Sense::Eq, 0.0, "hull")?;
    }
    Ok(lambdas)
}

/// Adds `x[j]` input variables with the given box.
pub fn add_inputs(model: &mut Model, input_box: &[(f64, f64)], prefix: &str) -> Result<Vec<VarId>> {
    input_box
        .iter()
        .enumerate()
        .map(|(j, &(lo, hi))| model.add_continuous(format!("{prefix}x[{j}]"), lo, hi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};
    use crate::solve::lp_solve;
    use crate::model::Objective;

    fn single_neuron() -> Network {
        Network::new(
            1,
            vec![
                Layer::from_rows(&[vec![1.0]], vec![-1.0], Activation::Relu).unwrap(),
                Layer::from_rows(&[vec![1.0]], vec![0.0], Activation::Identity).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_neuron_mip_points() {
        let net = single_neuron();
        let bounds = interval_bounds(&net, &[(0.0, 2.0)]).unwrap();
        let mut m = Model::new();
        let x = add_inputs(&mut m, &[(0.0, 2.0)], "").unwrap();
        let h = encode_mip(&mut m, &net, &x, &bounds, "").unwrap();
        assert_eq!(m.num_binaries(), 1);
        let rows = m.constraints.iter().filter(|c| c.tag != "out").count();
        assert_eq!(rows, 3);
        let mut pt = vec![0.0; m.num_vars()];
        h.fill_forward(&net, &[2.0], &mut pt).unwrap();
        let v = h.neuron_vars[&NeuronId::new(0, 0)];
        assert_eq!((pt[v.y.0], pt[v.s.0], pt[v.z.unwrap().0]), (1.0, 0.0, 0.0));
        assert!(m.is_feasible(&pt, 1e-12));
        h.fill_forward(&net, &[0.0], &mut pt).unwrap();
        assert_eq!((pt[v.y.0], pt[v.s.0], pt[v.z.unwrap().0]), (0.0, 1.0, 1.0));
        assert!(m.is_feasible(&pt, 1e-12));
        assert_eq!(m.var(v.y).name, "y[0][0]");
    }

    #[test]
    fn mpcc_pairs_and_aggregated_row() {
        let net = single_neuron();
        let mut m = Model::new();
        let x = add_inputs(&mut m, &[(0.0, 2.0)], "").unwrap();
        let h = encode_mpcc(&mut m, &net, &x, "").unwrap();
        assert_eq!(m.num_binaries(), 0);
        assert_eq!(m.num_complementarities(), 1);
        let mut pt = vec![0.0; m.num_vars()];
        h.fill_forward(&net, &[0.3], &mut pt).unwrap();
        assert!(m.is_feasible(&pt, 1e-12));
        assert_eq!(aggregated_complementarity(&m, &pt), 0.0);
        let v = h.neuron_vars[&NeuronId::new(0, 0)];
        pt[v.y.0] = 0.5;
        pt[v.s.0] = 0.5;
        assert!(aggregated_complementarity(&m, &pt) > 0.0);
    }

    #[test]
    fn swish_net_rejected() {
        let net = single_neuron().with_hidden_activation(Activation::swish()).unwrap();
        let mut m = Model::new();
        let x = add_inputs(&mut m, &[(0.0, 2.0)], "").unwrap();
        assert!(matches!(encode_mpcc(&mut m, &net, &x, ""), Err(Error::NotPiecewiseLinear)));
    }

    #[test]
    fn hull_examples() {
        let mut m = Model::new();
        let x = add_inputs(&mut m, &[(-10.0, 10.0)], "").unwrap();
        let l = convex_hull_constraints(&mut m, &x, &[vec![0.0], vec![2.0]], "").unwrap();
        assert_eq!(l.len(), 2);
        m.set_objective(Objective::maximize(LinearExpr::var(x[0]))).unwrap();
        assert!((lp_solve(&m).unwrap().objective - 2.0).abs() < 1e-12);
        m.set_objective(Objective::minimize(LinearExpr::var(x[0]))).unwrap();
        assert!(lp_solve(&m).unwrap().objective.abs() < 1e-12);

        let mut m = Model::new();
        let x = add_inputs(&mut m, &[(-10.0, 10.0), (-10.0, 10.0)], "").unwrap();
        convex_hull_constraints(&mut m, &x, &[vec![1.5, -2.0]], "").unwrap();
        m.set_objective(Objective::maximize(LinearExpr::var(x[0]).term(x[1], 1.0))).unwrap();
        let r = lp_solve(&m).unwrap();
        assert!((r.point[0] - 1.5).abs() < 1e-12 && (r.point[1] + 2.0).abs() < 1e-12);

        assert!(convex_hull_constraints(&mut m, &x, &[vec![1.0]], "").is_err());
    }
}
