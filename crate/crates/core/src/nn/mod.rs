//! Feedforward networks with ReLU or swish hidden layers and an affine output layer.
//!
//! Weight matrices are stored neuron-major: layer `l` has an `N_l x N_{l-1}`
//! matrix whose row `i` holds the incoming weights of neuron `i`. Neuron
//! identifiers are zero-based in both the layer and the within-layer index;
//! layer 0 is the first hidden layer.
//!
//! Forward evaluation computes every preactivation as `(sum_j W[i][j] y[j]) + b[i]`
//! with the sum taken in ascending `j`. Affine pieces compose the masked layer maps
//! into one matrix and therefore agree with `forward` up to rounding only.

mod activation;
pub mod random;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use activation::{
    activation_derivative, activation_scalar, logistic, relu, swish, swish_derivative, Activation,
};

use crate::error::{Error, Result};

/// Default absolute tolerance on preactivations used to classify degenerate neurons.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    weights: DMatrix<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: DMatrix<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::dim("layer bias", weights.nrows(), bias.len()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer weights or bias".into()));
        }
        if let Activation::Swish { beta } = activation {
            if !beta.is_finite() || beta < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "swish beta must be finite and nonnegative, got {beta}"
                )));
            }
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Builds a layer from neuron-major rows.
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
            return Err(Error::dim("layer weight row", ncols, bad.len()));
        }
        let weights = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        Self::new(weights, bias, activation)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `W y + b` with the documented summation order.
    pub fn preactivate(&self, y: &[f64]) -> Vec<f64> {
        (0..self.output_dim())
            .map(|i| {
                let mut acc = 0.0;
                for (j, yj) in y.iter().enumerate() {
                    acc += self.weights[(i, j)] * yj;
                }
                acc + self.bias[i]
            })
            .collect()
    }
}

/// Identifies a neuron by zero-based layer and within-layer index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.layer, self.index)
    }
}

/// Set of hidden ReLU neurons declared active; selects one affine piece of the network.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivationPattern {
    pub active: BTreeSet<NeuronId>,
}

impl ActivationPattern {
    pub fn new(active: impl IntoIterator<Item = NeuronId>) -> Self {
        Self {
            active: active.into_iter().collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &NeuronId) -> bool {
        self.active.contains(id)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn union(&self, other: &ActivationPattern) -> ActivationPattern {
        Self {
            active: self.active.union(&other.active).copied().collect(),
        }
    }
}

impl FromIterator<NeuronId> for ActivationPattern {
    fn from_iter<I: IntoIterator<Item = NeuronId>>(iter: I) -> Self {
        Self::new(iter)
    }
}

/// Classification of hidden ReLU neurons at a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignPartition {
    pub strictly_inactive: BTreeSet<NeuronId>,
    pub degenerate: BTreeSet<NeuronId>,
    pub active: BTreeSet<NeuronId>,
    pub tolerance: f64,
}

impl SignPartition {
    /// `I^+(x)` as a pattern.
    pub fn active_pattern(&self) -> ActivationPattern {
        ActivationPattern {
            active: self.active.clone(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate.is_empty()
    }
}

/// Output of a forward pass with every layer's preactivations retained.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPass {
    pub output: Vec<f64>,
    /// `preacts[l][i]` is neuron `(l, i)`'s value before activation.
    pub preacts: Vec<Vec<f64>>,
    /// Post-activation values; the last entry equals `output`.
    pub activations: Vec<Vec<f64>>,
}

/// Affine map `x -> A x + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|i| {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += self.matrix[(i, j)] * xj;
                }
                acc + self.offset[i]
            })
            .collect()
    }
}

/// Affine form `normal . x + offset` of one neuron's preactivation.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronForm {
    pub neuron: NeuronId,
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidNetwork("input dimension must be positive".into()));
        }
        let Some(last) = layers.last() else {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        };
        if last.activation != Activation::Identity {
            return Err(Error::InvalidNetwork(
                "the final layer must have identity activation".into(),
            ));
        }
        if last.output_dim() == 0 {
            return Err(Error::InvalidNetwork("output dimension must be positive".into()));
        }
        let mut prev = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.input_dim() != prev {
                return Err(Error::dim(format!("layer {l} weight columns"), prev, layer.input_dim()));
            }
            if l + 1 < layers.len() && layer.activation == Activation::Identity {
                return Err(Error::InvalidNetwork(format!(
                    "hidden layer {l} must use relu or swish"
                )));
            }
            prev = layer.output_dim();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    /// Hidden ReLU neurons in layer-major order.
    pub fn relu_neurons(&self) -> Vec<NeuronId> {
        self.hidden_layers()
            .iter()
            .enumerate()
            .filter(|(_, layer)| layer.activation.is_relu())
            .flat_map(|(l, layer)| (0..layer.output_dim()).map(move |i| NeuronId::new(l, i)))
            .collect()
    }

    pub fn num_relu_neurons(&self) -> usize {
        self.hidden_layers()
            .iter()
            .filter(|layer| layer.activation.is_relu())
            .map(Layer::output_dim)
            .sum()
    }

    /// True when every hidden layer is ReLU, so the network is piecewise affine.
    pub fn is_piecewise_linear(&self) -> bool {
        self.hidden_layers().iter().all(|l| l.activation.is_relu())
    }

    pub fn contains_neuron(&self, id: &NeuronId) -> bool {
        id.layer + 1 < self.layers.len()
            && self.layers[id.layer].activation.is_relu()
            && id.index < self.layers[id.layer].output_dim()
    }

    pub fn validate_pattern(&self, pattern: &ActivationPattern) -> Result<()> {
        match pattern.active.iter().find(|id| !self.contains_neuron(id)) {
            Some(bad) => Err(Error::InvalidPattern(format!(
                "{bad} is not a hidden ReLU neuron of this network"
            ))),
            None => Ok(()),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::dim("network input", self.input_dim, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_preactivations(x)?.output)
    }

    pub fn forward_with_preactivations(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut y = x.to_vec();
        for layer in &self.layers {
            let a = layer.preactivate(&y);
            y = a.iter().map(|&v| layer.activation.apply(v)).collect();
            preacts.push(a);
            activations.push(y.clone());
        }
        Ok(ForwardPass {
            output: y,
            preacts,
            activations,
        })
    }

    /// Preactivations under the induced (truncated) pattern: neurons within `tol`
    /// of zero are treated as inactive when feeding later layers.
    fn truncated_preacts(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let mut y = x.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let a = layer.preactivate(&y);
            y = match layer.activation {
                Activation::Relu => a.iter().map(|&v| if v > tol { v } else { 0.0 }).collect(),
                other => a.iter().map(|&v| other.apply(v)).collect(),
            };
            out.push(a);
        }
        out
    }

    pub fn sign_partition(&self, x: &[f64], tol: f64) -> Result<SignPartition> {
        self.check_input(x)?;
        if !(tol >= 0.0) {
            return Err(Error::InvalidSpec(format!("tolerance must be nonnegative, got {tol}")));
        }
        let preacts = self.truncated_preacts(x, tol);
        let mut part = SignPartition {
            strictly_inactive: BTreeSet::new(),
            degenerate: BTreeSet::new(),
            active: BTreeSet::new(),
            tolerance: tol,
        };
        for (l, layer) in self.hidden_layers().iter().enumerate() {
            if !layer.activation.is_relu() {
                continue;
            }
            for (i, &a) in preacts[l].iter().enumerate() {
                let id = NeuronId::new(l, i);
                if a > tol {
                    part.active.insert(id);
                } else if a < -tol {
                    part.strictly_inactive.insert(id);
                } else {
                    part.degenerate.insert(id);
                }
            }
        }
        Ok(part)
    }

    /// Pattern used by the forward pass: a neuron is active iff its preactivation is positive.
    pub fn forward_pattern(&self, x: &[f64]) -> Result<ActivationPattern> {
        Ok(self.sign_partition(x, 0.0)?.active_pattern())
    }

    /// Layer-by-layer affine forms of every neuron's preactivation under `pattern`,
    /// followed by the composed map of the whole network.
    pub fn pattern_forms(&self, pattern: &ActivationPattern) -> Result<(Vec<NeuronForm>, AffineMap)> {
        if !self.is_piecewise_linear() {
            return Err(Error::NotPiecewiseLinear);
        }
        self.validate_pattern(pattern)?;
        let n = self.input_dim;
        let mut mat = DMatrix::<f64>::identity(n, n);
        let mut off = vec![0.0; n];
        let mut forms = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &layer.weights;
            let mut next = w * &mat;
            let mut next_off: Vec<f64> = (0..w.nrows())
                .map(|i| {
                    let mut acc = 0.0;
                    for (j, oj) in off.iter().enumerate() {
                        acc += w[(i, j)] * oj;
                    }
                    acc + layer.bias[i]
                })
                .collect();
            if l < last {
                for i in 0..w.nrows() {
                    let id = NeuronId::new(l, i);
                    forms.push(NeuronForm {
                        neuron: id,
                        normal: next.row(i).iter().copied().collect(),
                        offset: next_off[i],
                    });
                    if !pattern.contains(&id) {
                        next.row_mut(i).fill(0.0);
                        next_off[i] = 0.0;
                    }
                }
            }
            mat = next;
            off = next_off;
        }
        Ok((
            forms,
            AffineMap {
                matrix: mat,
                offset: off,
            },
        ))
    }

    /// The affine function `F_N` selected by `pattern`.
    pub fn affine_piece(&self, pattern: &ActivationPattern) -> Result<AffineMap> {
        Ok(self.pattern_forms(pattern)?.1)
    }

    /// Jacobian of the network at `x` (`output_dim x input_dim`).
    ///
    /// For ReLU networks `x` must be non-degenerate at `tol`; use
    /// [`crate::regions::generalized_jacobian`] at kinks.
    pub fn jacobian(&self, x: &[f64], tol: f64) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        if self.is_piecewise_linear() {
            let part = self.sign_partition(x, tol)?;
            if let Some(&neuron) = part.degenerate.iter().next() {
                let preacts = self.truncated_preacts(x, tol);
                return Err(Error::DegeneratePoint {
                    neuron,
                    preactivation: preacts[neuron.layer][neuron.index],
                });
            }
            return Ok(self.affine_piece(&part.active_pattern())?.matrix);
        }
        // Chain rule for smooth (or mixed) networks; ReLU layers must be off their kinks.
        let fp = self.forward_with_preactivations(x)?;
        let n = self.input_dim;
        let mut jac = DMatrix::<f64>::identity(n, n);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = &layer.weights * &jac;
            for (i, &a) in fp.preacts[l].iter().enumerate() {
                let d = match layer.activation {
                    Activation::Relu if a.abs() <= tol => {
                        return Err(Error::DegeneratePoint {
                            neuron: NeuronId::new(l, i),
                            preactivation: a,
                        })
                    }
                    act => act.derivative(a)?,
                };
                if d != 1.0 {
                    next.row_mut(i).scale_mut(d);
                }
            }
            jac = next;
        }
        Ok(jac)
    }

    /// Jacobian that never fails: at ReLU kinks every degenerate neuron is taken inactive,
    /// matching the forward-pass convention.
    pub fn jacobian_forward_convention(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if self.is_piecewise_linear() {
            return Ok(self.affine_piece(&self.forward_pattern(x)?)?.matrix);
        }
        self.check_input(x)?;
        let fp = self.forward_with_preactivations(x)?;
        let n = self.input_dim;
        let mut jac = DMatrix::<f64>::identity(n, n);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = &layer.weights * &jac;
            for (i, &a) in fp.preacts[l].iter().enumerate() {
                let d = match layer.activation {
                    Activation::Relu => {
                        if a > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    act => act.derivative(a)?,
                };
                if d != 1.0 {
                    next.row_mut(i).scale_mut(d);
                }
            }
            jac = next;
        }
        Ok(jac)
    }

    /// `W_L diag(κ_{L-1}) W_{L-1} ... diag(κ_0) W_0`: the Jacobian with every hidden ReLU
    /// column scaled by its κ (missing entries count as 0).
    pub fn kappa_jacobian(&self, kappa: &BTreeMap<NeuronId, f64>) -> Result<DMatrix<f64>> {
        if !self.is_piecewise_linear() {
            return Err(Error::NotPiecewiseLinear);
        }
        let n = self.input_dim;
        let mut jac = DMatrix::<f64>::identity(n, n);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = &layer.weights * &jac;
            if l < last {
                for i in 0..layer.output_dim() {
                    let k = kappa.get(&NeuronId::new(l, i)).copied().unwrap_or(0.0);
                    if k != 1.0 {
                        next.row_mut(i).scale_mut(k);
                    }
                }
            }
            jac = next;
        }
        Ok(jac)
    }

    /// Same weights with every hidden activation replaced by `activation`.
    pub fn with_hidden_activation(&self, activation: Activation) -> Result<Network> {
        let last = self.layers.len() - 1;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let act = if l < last { activation } else { Activation::Identity };
                Layer::new(layer.weights.clone(), layer.bias.clone(), act)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(self.input_dim, layers)
    }
}
