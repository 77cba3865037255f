//! First-order checks for `min f(x, y) s.t. c(x, y) <= 0, y = DNN(x)`.
//!
//! Two views are checked. The embedded view asks whether zero lies in the convex hull
//! of the chain-rule gradients of the regions meeting at `x`. The complementarity view
//! writes each hidden ReLU layer as `0 <= x^l ⊥ x^l - (W x^{l-1} + b) >= 0` and asks for
//! multipliers `μ >= 0` on `c` and `ν1` (on `x^l >= 0`), `ν2` (on `x^l - a^l >= 0`) with
//! sign restrictions only on biactive neurons. The linear output layer is folded into
//! the objective, so its gradient with respect to the last hidden layer is
//! `W_outᵀ(∇_y f + Cyᵀ μ)`.
//!
//! Gradients of `μᵀc` are written `Cxᵀ μ`, with `Cx` the constraint Jacobian (one row per
//! constraint).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::encode::EmbeddingHandles;
use crate::error::{Error, Result};
use crate::model::Sense;
use crate::nn::{Network, NeuronId, DEFAULT_DEGENERACY_TOL};
use crate::problems::{SmoothProblem, SurrogateModel, SurrogateProblem};
use crate::regions::{general_position_check, generalized_jacobian, hull_nearest_zero, DEFAULT_DEGENERATE_CAP, DEFAULT_RANK_TOL};
use crate::solve::simplex::{LpOutcome, LpProblem, Simplex};
use crate::solve::SolveResult;

/// JSON object keys must be strings, so per-neuron maps are written as entry lists.
mod neuron_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        layer: usize,
        index: usize,
        value: f64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<NeuronId, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(id, &value)| Entry {
            layer: id.layer,
            index: id.index,
            value,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<NeuronId, f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (NeuronId::new(e.layer, e.index), e.value)).collect())
    }
}

/// Tolerances shared by the checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityTol {
    /// Bound on feasibility and gradient residuals.
    pub residual: f64,
    /// Bound on `|μ_i c_i|`.
    pub complementarity: f64,
    /// Preactivations within this of zero are biactive.
    pub degeneracy: f64,
    /// Constraints with `c_i >= -active` may carry a multiplier when estimating.
    pub active: f64,
}

impl Default for StationarityTol {
    fn default() -> Self {
        Self {
            residual: 1e-6,
            complementarity: 1e-7,
            degeneracy: DEFAULT_DEGENERACY_TOL,
            active: 1e-7,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub complementarity: f64,
    pub gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityCertificate {
    pub x_star: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_estimated: bool,
    /// Column scalings read off `θ`: the weight of the vertices where each neuron is on.
    #[serde(with = "neuron_map")]
    pub kappa: BTreeMap<NeuronId, f64>,
    pub theta: Option<Vec<f64>>,
    /// Activation patterns of the hull vertices, as lists of active neurons.
    pub vertices: Vec<Vec<NeuronId>>,
    pub residuals: Residuals,
    pub general_position: bool,
    pub accepted: bool,
}

/// Network layer values `(x^0, x^1, ..., x^L)` of a complementarity-form point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpccPoint {
    pub input: Vec<f64>,
    /// Post-activation values of each hidden layer.
    pub hidden: Vec<Vec<f64>>,
}

impl MpccPoint {
    pub fn from_forward(net: &Network, x: &[f64]) -> Result<Self> {
        let fp = net.forward_with_preactivations(x)?;
        let h = net.hidden_layers().len();
        Ok(Self {
            input: x.to_vec(),
            hidden: fp.activations[..h].to_vec(),
        })
    }

    /// Reads inputs and neuron outputs `y` from a model point.
    pub fn from_model_point(net: &Network, handles: &EmbeddingHandles, point: &[f64]) -> Self {
        Self {
            input: handles.input_vars.iter().map(|v| point[v.0]).collect(),
            hidden: net
                .hidden_layers()
                .iter()
                .enumerate()
                .map(|(l, layer)| {
                    (0..layer.output_dim())
                        .map(|i| point[handles.neuron_vars[&NeuronId::new(l, i)].y.0])
                        .collect()
                })
                .collect(),
        }
    }

    fn check(&self, net: &Network) -> Result<()> {
        if self.input.len() != net.input_dim() {
            return Err(Error::dim("point input", net.input_dim(), self.input.len()));
        }
        let hidden = net.hidden_layers();
        if self.hidden.len() != hidden.len() {
            return Err(Error::dim("point layers", hidden.len(), self.hidden.len()));
        }
        for (l, layer) in hidden.iter().enumerate() {
            if self.hidden[l].len() != layer.output_dim() {
                return Err(Error::dim(format!("point layer {l}"), layer.output_dim(), self.hidden[l].len()));
            }
        }
        Ok(())
    }

    /// `a^l = W_l x^{l-1} + b_l` for every hidden layer, from the stored layer values.
    fn preacts(&self, net: &Network) -> Vec<Vec<f64>> {
        net.hidden_layers()
            .iter()
            .enumerate()
            .map(|(l, layer)| layer.preactivate(if l == 0 { &self.input } else { &self.hidden[l - 1] }))
            .collect()
    }

    /// Network output computed from the last stored layer.
    fn output(&self, net: &Network) -> Vec<f64> {
        let last = net.layers().last().expect("validated network");
        last.preactivate(self.hidden.last().unwrap_or(&self.input))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MpccMultipliers {
    pub mu: Vec<f64>,
    #[serde(with = "neuron_map")]
    pub nu1: BTreeMap<NeuronId, f64>,
    #[serde(with = "neuron_map")]
    pub nu2: BTreeMap<NeuronId, f64>,
}

/// Largest residual of each strong-stationarity condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrongResiduals {
    /// `c <= 0`, `μ >= 0` and the layer complementarities.
    pub feasibility: f64,
    /// `|μ_i c_i|`.
    pub mu_complementarity: f64,
    /// `∇_x f + Cxᵀ μ + W_0ᵀ ν2^0 = 0`.
    pub input_gradient: f64,
    /// `-ν1^l - ν2^l + W_{l+1}ᵀ ν2^{l+1} = 0` for all but the last hidden layer.
    pub hidden_gradient: f64,
    /// `W_outᵀ(∇_y f + Cyᵀ μ) - ν1 - ν2 = 0` on the last hidden layer.
    pub last_gradient: f64,
    /// `ν1 = 0` on strictly active neurons, `ν2 = 0` on strictly inactive ones.
    pub strict_signs: f64,
    /// `ν1, ν2 >= 0` on biactive neurons.
    pub biactive_signs: f64,
}

impl StrongResiduals {
    pub fn max(&self) -> f64 {
        [
            self.feasibility,
            self.mu_complementarity,
            self.input_gradient,
            self.hidden_gradient,
            self.last_gradient,
            self.strict_signs,
            self.biactive_signs,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Names of the conditions above `tol`.
    pub fn violated(&self, tol: f64) -> Vec<&'static str> {
        [
            ("feasibility", self.feasibility),
            ("mu_complementarity", self.mu_complementarity),
            ("input_gradient", self.input_gradient),
            ("hidden_gradient", self.hidden_gradient),
            ("last_gradient", self.last_gradient),
            ("strict_signs", self.strict_signs),
            ("biactive_signs", self.biactive_signs),
        ]
        .into_iter()
        .filter(|(_, v)| *v > tol)
        .map(|(n, _)| n)
        .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongStationarityReport {
    pub residuals: StrongResiduals,
    pub multipliers: MpccMultipliers,
    pub estimated: bool,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NeuronState {
    Active,
    Inactive,
    Biactive,
}

fn classify(a: f64, tol: f64) -> NeuronState {
    if a > tol {
        NeuronState::Active
    } else if a < -tol {
        NeuronState::Inactive
    } else {
        NeuronState::Biactive
    }
}

struct Derivatives {
    c: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    cx: DMatrix<f64>,
    cy: DMatrix<f64>,
}

fn derivatives(problem: &dyn SmoothProblem, x: &[f64], y: &[f64]) -> Result<Derivatives> {
    let (gx, gy) = problem.objective_gradient(x, y);
    let c = problem.constraints(x, y);
    let (cx, cy) = problem.constraint_jacobian(x, y);
    let m = problem.num_constraints();
    if gx.len() != x.len() || gy.len() != y.len() {
        return Err(Error::dim("objective gradient", x.len() + y.len(), gx.len() + gy.len()));
    }
    if c.len() != m || cx.shape() != (m, x.len()) || cy.shape() != (m, y.len()) {
        return Err(Error::dim("constraints", m, c.len()));
    }
    Ok(Derivatives { c, gx, gy, cx, cy })
}

fn check_dims(net: &Network, problem: &dyn SmoothProblem) -> Result<()> {
    if problem.input_dim() != net.input_dim() || problem.output_dim() != net.output_dim() {
        return Err(Error::dim(
            "problem dimensions",
            net.input_dim() + net.output_dim(),
            problem.input_dim() + problem.output_dim(),
        ));
    }
    Ok(())
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// `∇_x f + Cxᵀ μ` and `∇_y f + Cyᵀ μ`.
fn lagrangian_parts(d: &Derivatives, mu: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let mu = DVector::from_column_slice(mu);
    (
        DVector::from_column_slice(&d.gx) + d.cx.transpose() * &mu,
        DVector::from_column_slice(&d.gy) + d.cy.transpose() * &mu,
    )
}

/// Rows of the linear system `A u + b0 = 0` in `u = (μ, ν1, ν2)` formed by the three
/// gradient chains, with neurons in layer-major order.
struct KktSystem {
    a: DMatrix<f64>,
    b0: Vec<f64>,
    /// 0: input chain, 1: hidden chain, 2: last hidden layer.
    kind: Vec<u8>,
    neurons: Vec<NeuronId>,
}

fn kkt_system(net: &Network, d: &Derivatives) -> KktSystem {
    let neurons = net.relu_neurons();
    let h = neurons.len();
    let m = d.c.len();
    let n = net.input_dim();
    let cols = m + 2 * h;
    let index: BTreeMap<NeuronId, usize> = neurons.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let hidden = net.hidden_layers();
    let last = net.layers().last().expect("validated network");
    let wout = last.weights();
    let mut rows: Vec<(Vec<f64>, f64, u8)> = Vec::new();
    // Input chain.
    for k in 0..n {
        let mut r = vec![0.0; cols];
        let mut b = d.gx[k];
        for i in 0..m {
            r[i] = d.cx[(i, k)];
        }
        if hidden.is_empty() {
            for o in 0..wout.nrows() {
                b += wout[(o, k)] * d.gy[o];
                for i in 0..m {
                    r[i] += wout[(o, k)] * d.cy[(i, o)];
                }
            }
        } else {
            for j in 0..hidden[0].output_dim() {
                r[m + h + index[&NeuronId::new(0, j)]] = hidden[0].weights()[(j, k)];
            }
        }
        rows.push((r, b, 0));
    }
    let lh = hidden.len();
    for (l, layer) in hidden.iter().enumerate() {
        for j in 0..layer.output_dim() {
            let id = index[&NeuronId::new(l, j)];
            let mut r = vec![0.0; cols];
            let mut b = 0.0;
            r[m + id] = -1.0;
            r[m + h + id] = -1.0;
            if l + 1 < lh {
                let next = &hidden[l + 1];
                for i in 0..next.output_dim() {
                    r[m + h + index[&NeuronId::new(l + 1, i)]] += next.weights()[(i, j)];
                }
                rows.push((r, b, 1));
            } else {
                for o in 0..wout.nrows() {
                    b += wout[(o, j)] * d.gy[o];
                    for i in 0..m {
                        r[i] += wout[(o, j)] * d.cy[(i, o)];
                    }
                }
                rows.push((r, b, 2));
            }
        }
    }
    let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i].0[j]);
    KktSystem {
        a,
        b0: rows.iter().map(|r| r.1).collect(),
        kind: rows.iter().map(|r| r.2).collect(),
        neurons,
    }
}

impl KktSystem {
    fn pack(&self, mult: &MpccMultipliers) -> Vec<f64> {
        let mut u = mult.mu.clone();
        u.extend(self.neurons.iter().map(|id| mult.nu1.get(id).copied().unwrap_or(0.0)));
        u.extend(self.neurons.iter().map(|id| mult.nu2.get(id).copied().unwrap_or(0.0)));
        u
    }

    fn unpack(&self, m: usize, u: &[f64]) -> MpccMultipliers {
        let h = self.neurons.len();
        MpccMultipliers {
            mu: u[..m].to_vec(),
            nu1: self.neurons.iter().enumerate().map(|(k, id)| (*id, u[m + k])).collect(),
            nu2: self.neurons.iter().enumerate().map(|(k, id)| (*id, u[m + h + k])).collect(),
        }
    }

    /// Max residual per row kind.
    fn residuals(&self, u: &[f64]) -> [f64; 3] {
        let r = &self.a * DVector::from_column_slice(u);
        let mut out = [0.0f64; 3];
        for (i, v) in r.iter().enumerate() {
            let k = self.kind[i] as usize;
            out[k] = out[k].max((v + self.b0[i]).abs());
        }
        out
    }
}

/// Least-absolute-residual multipliers: minimizes `|A u + b0|_1` over `u = (μ, ν1, ν2)`
/// with `μ >= 0` (zero on inactive constraints) and the sign pattern each neuron's state
/// imposes, by linear programming.
fn estimate_multipliers(sys: &KktSystem, d: &Derivatives, states: &[NeuronState], tol: &StationarityTol) -> Result<MpccMultipliers> {
    let m = d.c.len();
    let h = sys.neurons.len();
    let nu = m + 2 * h;
    let rows = sys.a.nrows();
    let cols = nu + 2 * rows;
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    a.view_mut((0, 0), (rows, nu)).copy_from(&sys.a);
    for i in 0..rows {
        a[(i, nu + i)] = 1.0;
        a[(i, nu + rows + i)] = -1.0;
    }
    let mut lower = vec![0.0; cols];
    let mut upper = vec![f64::INFINITY; cols];
    for i in 0..m {
        if d.c[i] < -tol.active {
            upper[i] = 0.0;
        }
    }
    for (k, s) in states.iter().enumerate() {
        let (n1, n2) = (m + k, m + h + k);
        match s {
            NeuronState::Active => {
                upper[n1] = 0.0;
                lower[n2] = f64::NEG_INFINITY;
            }
            NeuronState::Inactive => {
                lower[n1] = f64::NEG_INFINITY;
                upper[n2] = 0.0;
            }
            NeuronState::Biactive => {}
        }
    }
    let mut cost = vec![0.0; cols];
    for c in cost.iter_mut().skip(nu) {
        *c = 1.0;
    }
    let p = LpProblem {
        a,
        senses: vec![Sense::Eq; rows],
        rhs: sys.b0.iter().map(|b| -b).collect(),
        cost,
        lower,
        upper,
    };
    let mut s = Simplex::new(&p)?;
    match s.solve()? {
        LpOutcome::Optimal => Ok(sys.unpack(m, &s.primal()[..nu])),
        other => Err(Error::Numerical(format!("multiplier estimation LP ended with {other:?}"))),
    }
}

/// Strong stationarity of the complementarity form at `point` with the given
/// multipliers, or with least-residual multipliers when none are supplied.
pub fn check_strong_stationarity(
    net: &Network,
    problem: &dyn SmoothProblem,
    point: &MpccPoint,
    multipliers: Option<&MpccMultipliers>,
    tol: &StationarityTol,
) -> Result<StrongStationarityReport> {
    if !net.is_piecewise_linear() {
        return Err(Error::NotPiecewiseLinear);
    }
    check_dims(net, problem)?;
    point.check(net)?;
    let y = point.output(net);
    let d = derivatives(problem, &point.input, &y)?;
    let sys = kkt_system(net, &d);
    let preacts = point.preacts(net);
    let states: Vec<NeuronState> = sys.neurons.iter().map(|id| classify(preacts[id.layer][id.index], tol.degeneracy)).collect();
    let (mult, estimated) = match multipliers {
        Some(mm) => {
            if mm.mu.len() != d.c.len() {
                return Err(Error::dim("constraint multipliers", d.c.len(), mm.mu.len()));
            }
            (mm.clone(), false)
        }
        None => (estimate_multipliers(&sys, &d, &states, tol)?, true),
    };
    let u = sys.pack(&mult);
    let [input_gradient, hidden_gradient, last_gradient] = sys.residuals(&u);

    let mut feasibility = d.c.iter().fold(0.0f64, |a, v| a.max(*v));
    feasibility = mult.mu.iter().fold(feasibility, |a, v| a.max(-v));
    for (l, layer) in point.hidden.iter().enumerate() {
        for (j, &x) in layer.iter().enumerate() {
            let slack = x - preacts[l][j];
            feasibility = feasibility.max(-x).max(-slack).max(x.min(slack).abs());
        }
    }
    let mu_complementarity = max_abs(mult.mu.iter().zip(&d.c).map(|(m, c)| m * c));
    let mut strict_signs = 0.0f64;
    let mut biactive_signs = 0.0f64;
    for (id, s) in sys.neurons.iter().zip(&states) {
        let n1 = mult.nu1.get(id).copied().unwrap_or(0.0);
        let n2 = mult.nu2.get(id).copied().unwrap_or(0.0);
        match s {
            NeuronState::Active => strict_signs = strict_signs.max(n1.abs()),
            NeuronState::Inactive => strict_signs = strict_signs.max(n2.abs()),
            NeuronState::Biactive => biactive_signs = biactive_signs.max(-n1).max(-n2),
        }
    }
    let residuals = StrongResiduals {
        feasibility,
        mu_complementarity,
        input_gradient,
        hidden_gradient,
        last_gradient,
        strict_signs,
        biactive_signs,
    };
    let accepted = residuals.max() <= tol.residual && mu_complementarity <= tol.complementarity.max(tol.residual);
    Ok(StrongStationarityReport {
        residuals,
        multipliers: mult,
        estimated,
        accepted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaRecovery {
    #[serde(with = "neuron_map")]
    pub kappa: BTreeMap<NeuronId, f64>,
    /// `|∇_x f + Cxᵀ μ + J_κᵀ(∇_y f + Cyᵀ μ)|_inf` with `J_κ` the κ-scaled Jacobian.
    pub identity_residual: f64,
}

/// Column scalings `κ` turning strong-stationarity multipliers into a single composed
/// gradient identity. Working back from the output: strictly active neurons get 1,
/// strictly inactive ones 0, and biactive ones `(g_j - ν1_j) / g_j` with `g` the
/// downstream gradient (0 when `|g_j| < 1e-9`).
pub fn recover_kappa(
    net: &Network,
    problem: &dyn SmoothProblem,
    point: &MpccPoint,
    multipliers: &MpccMultipliers,
    tol: &StationarityTol,
) -> Result<KappaRecovery> {
    let report = check_strong_stationarity(net, problem, point, Some(multipliers), tol)?;
    let worst = report.residuals.max();
    if worst > 1e-4 {
        return Err(Error::ResidualsTooLarge(worst));
    }
    let y = point.output(net);
    let d = derivatives(problem, &point.input, &y)?;
    let (lx, ly) = lagrangian_parts(&d, &multipliers.mu);
    let preacts = point.preacts(net);
    let hidden = net.hidden_layers();
    let last = net.layers().last().expect("validated network");
    let mut kappa = BTreeMap::new();
    let mut g = last.weights().transpose() * &ly;
    for l in (0..hidden.len()).rev() {
        let mut scaled = g.clone();
        for j in 0..hidden[l].output_dim() {
            let id = NeuronId::new(l, j);
            let k = match classify(preacts[l][j], tol.degeneracy) {
                NeuronState::Active => 1.0,
                NeuronState::Inactive => 0.0,
                NeuronState::Biactive if g[j].abs() < 1e-9 => 0.0,
                NeuronState::Biactive => {
                    let n1 = multipliers.nu1.get(&id).copied().unwrap_or(0.0);
                    ((g[j] - n1) / g[j]).clamp(0.0, 1.0)
                }
            };
            kappa.insert(id, k);
            scaled[j] *= k;
        }
        g = hidden[l].weights().transpose() * scaled;
    }
    let jac = net.kappa_jacobian(&kappa)?;
    let resid = lx + jac.transpose() * ly;
    Ok(KappaRecovery {
        kappa,
        identity_residual: max_abs(resid.iter().copied()),
    })
}

/// Stationarity of the embedded form at `x_star`: feasibility, `μᵀc = 0`, and convex
/// weights over the generalized-Jacobian vertices that zero the composed gradient.
/// Without `mu`, multipliers are estimated from the complementarity form.
pub fn check_embedded_stationarity(
    net: &Network,
    problem: &dyn SmoothProblem,
    x_star: &[f64],
    mu: Option<&[f64]>,
    tol: &StationarityTol,
) -> Result<StationarityCertificate> {
    check_dims(net, problem)?;
    let y = net.forward(x_star)?;
    let d = derivatives(problem, x_star, &y)?;
    let (mu, mu_estimated) = match mu {
        Some(m) => {
            if m.len() != d.c.len() {
                return Err(Error::dim("constraint multipliers", d.c.len(), m.len()));
            }
            (m.to_vec(), false)
        }
        None if d.c.is_empty() => (Vec::new(), false),
        None => {
            let point = MpccPoint::from_forward(net, x_star)?;
            (check_strong_stationarity(net, problem, &point, None, tol)?.multipliers.mu, true)
        }
    };
    let (lx, ly) = lagrangian_parts(&d, &mu);
    let (general_position, jacobians, patterns) = if net.is_piecewise_linear() {
        let hull = generalized_jacobian(net, x_star, DEFAULT_DEGENERATE_CAP)?;
        let gp = general_position_check(net, x_star, DEFAULT_RANK_TOL)?;
        let pats = hull.vertices.iter().map(|v| v.pattern.clone()).collect::<Vec<_>>();
        (gp, hull.vertices.into_iter().map(|v| v.jacobian).collect::<Vec<_>>(), pats)
    } else {
        (true, vec![net.jacobian(x_star, tol.degeneracy)?], Vec::new())
    };
    let vectors: Vec<Vec<f64>> = jacobians
        .iter()
        .map(|j| (&lx + j.transpose() * &ly).iter().copied().collect())
        .collect();
    let (theta, gradient) = hull_nearest_zero(&vectors)?;
    let scale = vectors.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
    let found = gradient <= tol.residual.min(1e-8 * scale).max(1e-12 * scale) || gradient <= tol.residual;
    let primal = d.c.iter().fold(0.0f64, |a, v| a.max(*v)).max(mu.iter().fold(0.0f64, |a, v| a.max(0.0 - v)));
    let complementarity = max_abs(mu.iter().zip(&d.c).map(|(m, c)| m * c));
    let kappa = net
        .relu_neurons()
        .into_iter()
        .map(|id| {
            let k: f64 = patterns.iter().zip(&theta).filter(|(p, _)| p.contains(&id)).map(|(_, t)| t).sum();
            (id, k)
        })
        .collect();
    let accepted = found && primal <= tol.residual && complementarity <= tol.complementarity.max(tol.residual);
    Ok(StationarityCertificate {
        x_star: x_star.to_vec(),
        mu,
        mu_estimated,
        kappa: if net.is_piecewise_linear() { kappa } else { BTreeMap::new() },
        theta: found.then_some(theta),
        vertices: patterns.iter().map(|p| p.active.iter().copied().collect()).collect(),
        residuals: Residuals {
            primal,
            complementarity,
            gradient,
        },
        general_position,
        accepted,
    })
}

/// Complementarity-form multipliers matching an embedded certificate: each hull vertex
/// with its 0/1 scalings defines `ν2 = κ g`, `ν1 = g - ν2` layer by layer, and the
/// vertices are mixed with the certificate's weights.
pub fn multipliers_from_certificate(net: &Network, problem: &dyn SmoothProblem, cert: &StationarityCertificate) -> Result<MpccMultipliers> {
    let theta = cert
        .theta
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("certificate has no hull weights".into()))?;
    let y = net.forward(&cert.x_star)?;
    let d = derivatives(problem, &cert.x_star, &y)?;
    let (_, ly) = lagrangian_parts(&d, &cert.mu);
    let hidden = net.hidden_layers();
    let last = net.layers().last().expect("validated network");
    let mut out = MpccMultipliers {
        mu: cert.mu.clone(),
        ..MpccMultipliers::default()
    };
    for id in net.relu_neurons() {
        out.nu1.insert(id, 0.0);
        out.nu2.insert(id, 0.0);
    }
    for (pattern, &t) in cert.vertices.iter().zip(theta) {
        let mut g = last.weights().transpose() * &ly;
        for l in (0..hidden.len()).rev() {
            let mut nu2 = g.clone();
            for j in 0..hidden[l].output_dim() {
                let id = NeuronId::new(l, j);
                if !pattern.contains(&id) {
                    nu2[j] = 0.0;
                }
                *out.nu2.get_mut(&id).expect("neuron listed") += t * nu2[j];
                *out.nu1.get_mut(&id).expect("neuron listed") += t * (g[j] - nu2[j]);
            }
            g = hidden[l].weights().transpose() * nu2;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub general_position: bool,
    pub embedded: StationarityCertificate,
    pub strong: StrongStationarityReport,
    /// Strong-stationarity check with multipliers built from the embedded certificate.
    pub strong_from_embedded: Option<StrongStationarityReport>,
    pub kappa: Option<KappaRecovery>,
    /// Whether the two acceptance decisions coincide.
    pub agree: bool,
}

/// Runs both checks at the forward-pass point of `x_star` and maps multipliers across:
/// accepted strong multipliers give κ and the embedded `μ`, an accepted embedded
/// certificate gives complementarity multipliers. Without general position the report
/// is still produced with `general_position = false`.
pub fn equivalence_roundtrip(
    net: &Network,
    problem: &dyn SmoothProblem,
    x_star: &[f64],
    multipliers: Option<&MpccMultipliers>,
    tol: &StationarityTol,
) -> Result<EquivalenceReport> {
    let point = MpccPoint::from_forward(net, x_star)?;
    let strong = check_strong_stationarity(net, problem, &point, multipliers, tol)?;
    let kappa = if strong.accepted {
        Some(recover_kappa(net, problem, &point, &strong.multipliers, tol)?)
    } else {
        None
    };
    let embedded = check_embedded_stationarity(net, problem, x_star, Some(&strong.multipliers.mu), tol)?;
    let strong_from_embedded = if embedded.accepted {
        let mm = multipliers_from_certificate(net, problem, &embedded)?;
        Some(check_strong_stationarity(net, problem, &point, Some(&mm), tol)?)
    } else {
        None
    };
    let strong_ok = strong.accepted || strong_from_embedded.as_ref().is_some_and(|r| r.accepted);
    Ok(EquivalenceReport {
        general_position: embedded.general_position,
        agree: strong_ok == embedded.accepted,
        embedded,
        strong,
        strong_from_embedded,
        kappa,
    })
}

/// Complementarity multipliers from a fixed-pattern subproblem solution of
/// `problem.build_model(..)`, ordered for `problem.box_as_constraints()`: `μ` of the
/// affine rows, then of the box rows; `ν1` the reduced cost of each neuron's `y`,
/// `ν2` the dual of its `y - s = w·x + b` row.
pub fn multipliers_from_solution(problem: &SurrogateProblem, sm: &SurrogateModel, result: &SolveResult) -> Result<MpccMultipliers> {
    if result.duals.len() != sm.model.num_constraints() || result.reduced_costs.len() != sm.model.num_vars() {
        return Err(Error::InvalidSpec("solution carries no duals".into()));
    }
    let mut mu: Vec<f64> = sm.user_rows.iter().map(|&r| (-result.duals[r]).max(0.0)).collect();
    for (v, &(lo, hi)) in sm.handles.input_vars.iter().zip(&problem.input_box) {
        let r = result.reduced_costs[v.0];
        if hi.is_finite() {
            mu.push((-r).max(0.0));
        }
        if lo.is_finite() {
            mu.push(r.max(0.0));
        }
    }
    let mut out = MpccMultipliers {
        mu,
        ..MpccMultipliers::default()
    };
    for (id, vars) in &sm.handles.neuron_vars {
        out.nu1.insert(*id, result.reduced_costs[vars.y.0]);
        out.nu2.insert(*id, result.duals[sm.handles.relu_rows[id]]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::Formulation;
    use crate::nn::{Activation, Layer};
    use crate::problems::AffineRow;
    use crate::solve::{mpcc_local_solve, switches_from_complementarities, PatternOptions, PatternStart};

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

    fn zero_bias() -> Network {
        Network::new(
            1,
            vec![
                Layer::from_rows(&[vec![1.0], vec![1.0]], vec![0.0, 0.0], Activation::Relu).unwrap(),
                Layer::from_rows(&[vec![1.0, -1.0]], vec![0.0], Activation::Identity).unwrap(),
            ],
        )
        .unwrap()
    }

    fn unconstrained(gy: f64) -> SurrogateProblem {
        SurrogateProblem::linear(vec![(f64::NEG_INFINITY, f64::INFINITY)], vec![gy])
    }

    #[test]
    fn smooth_region_zero_gradient() {
        // f(y) = y^2 with y = relu(x - 1) at x = 0.5: inactive, gradient 0.
        let p = unconstrained(0.0).with_qy(DMatrix::from_element(1, 1, 1.0));
        let c = check_embedded_stationarity(&single_neuron(), &p, &[0.5], None, &StationarityTol::default()).unwrap();
        assert!(c.accepted);
        assert_eq!(c.theta, Some(vec![1.0]));
    }

    #[test]
    fn zero_bias_everything_stationary() {
        let p = unconstrained(1.0);
        for x in [-1.0, 0.0, 2.5] {
            let c = check_embedded_stationarity(&zero_bias(), &p, &[x], None, &StationarityTol::default()).unwrap();
            assert!(c.accepted, "x = {x}");
        }
        let c = check_embedded_stationarity(&zero_bias(), &p, &[0.0], None, &StationarityTol::default()).unwrap();
        assert!(!c.general_position);
        assert_eq!(c.vertices.len(), 2);
    }

    #[test]
    fn kink_hull_contains_zero() {
        let p = unconstrained(1.0);
        let tol = StationarityTol::default();
        let c = check_embedded_stationarity(&single_neuron(), &p, &[1.0], None, &tol).unwrap();
        assert!(c.accepted);
        assert!(c.general_position);
        assert_eq!(c.kappa[&NeuronId::new(0, 0)], 0.0);
        // Away from the kink on the active side the gradient is 1.
        assert!(!check_embedded_stationarity(&single_neuron(), &p, &[1.5], None, &tol).unwrap().accepted);
    }

    #[test]
    fn reports_serialize_to_json() {
        let p = unconstrained(1.0);
        let tol = StationarityTol::default();
        let report = equivalence_roundtrip(&single_neuron(), &p, &[1.0], None, &tol).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        let back: EquivalenceReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn strong_stationarity_at_kink() {
        let p = unconstrained(1.0);
        let tol = StationarityTol::default();
        let point = MpccPoint::from_forward(&single_neuron(), &[1.0]).unwrap();
        let r = check_strong_stationarity(&single_neuron(), &p, &point, None, &tol).unwrap();
        assert!(r.accepted, "{:?}", r.residuals);
        // ν1 + ν2 = 1 with ν2 = 0 forced by the input chain.
        assert!((r.multipliers.nu1[&NeuronId::new(0, 0)] - 1.0).abs() < 1e-12);
        let k = recover_kappa(&single_neuron(), &p, &point, &r.multipliers, &tol).unwrap();
        assert_eq!(k.kappa[&NeuronId::new(0, 0)], 0.0);
        assert!(k.identity_residual < 1e-12);
    }

    #[test]
    fn biactive_with_zero_nu1_gives_kappa_one() {
        // Minimize x - relu(x - 1)... use f = y on the active side with ν1 = 0.
        let p = unconstrained(1.0).with_gx(vec![-1.0]);
        let point = MpccPoint::from_forward(&single_neuron(), &[1.0]).unwrap();
        let mult = MpccMultipliers {
            mu: vec![],
            nu1: [(NeuronId::new(0, 0), 0.0)].into(),
            nu2: [(NeuronId::new(0, 0), 1.0)].into(),
        };
        let tol = StationarityTol::default();
        let r = check_strong_stationarity(&single_neuron(), &p, &point, Some(&mult), &tol).unwrap();
        assert!(r.accepted, "{:?}", r.residuals);
        let k = recover_kappa(&single_neuron(), &p, &point, &mult, &tol).unwrap();
        assert_eq!(k.kappa[&NeuronId::new(0, 0)], 1.0);
        assert!(k.identity_residual < 1e-12);
    }

    #[test]
    fn perturbed_multipliers_rejected() {
        let p = unconstrained(1.0);
        let tol = StationarityTol::default();
        let point = MpccPoint::from_forward(&single_neuron(), &[1.0]).unwrap();
        let mut m = check_strong_stationarity(&single_neuron(), &p, &point, None, &tol).unwrap().multipliers;
        *m.nu1.get_mut(&NeuronId::new(0, 0)).unwrap() += 0.1;
        let r = check_strong_stationarity(&single_neuron(), &p, &point, Some(&m), &tol).unwrap();
        assert!(!r.accepted);
        assert_eq!(r.residuals.violated(tol.residual), vec!["last_gradient"]);
    }

    #[test]
    fn nonstationary_interior_point_rejected_by_both() {
        let p = unconstrained(1.0);
        let r = equivalence_roundtrip(&single_neuron(), &p, &[1.5], None, &StationarityTol::default()).unwrap();
        assert!(!r.embedded.accepted && !r.strong.accepted);
        assert!(r.agree);
    }

    #[test]
    fn local_solver_output_passes_both() {
        // Maximize relu(x - 1) - 0.5 x on [0, 3] subject to y <= 1.5.
        let net = single_neuron();
        let p = SurrogateProblem::linear(vec![(0.0, 3.0)], vec![-1.0]).with_gx(vec![0.5]).with_row(AffineRow {
            ax: vec![0.0],
            ay: vec![1.0],
            rhs: 1.5,
        });
        let sm = p.build_model(&net, Formulation::Mpcc, None).unwrap();
        let sw = switches_from_complementarities(&sm.model);
        let out = mpcc_local_solve(&sm.model, &sw, PatternStart::Pattern(vec![true]), &PatternOptions::default()).unwrap();
        let mult = multipliers_from_solution(&p, &sm, &out.result).unwrap();
        let full = p.box_as_constraints();
        let point = MpccPoint::from_model_point(&net, &sm.handles, &out.result.point);
        let tol = StationarityTol::default();
        let r = check_strong_stationarity(&net, &full, &point, Some(&mult), &tol).unwrap();
        assert!(r.accepted, "{:?}", r.residuals);
        let k = recover_kappa(&net, &full, &point, &mult, &tol).unwrap();
        assert!(k.identity_residual < 1e-9);
        let e = check_embedded_stationarity(&net, &full, &point.input, Some(&mult.mu), &tol).unwrap();
        assert!(e.accepted);
    }

    #[test]
    fn clarke_but_not_strong() {
        // Maximizing relu(x - 1) at the kink: 0 is in the hull {0, -1} but the biactive
        // multipliers would need ν1 + ν2 = -1.
        let p = unconstrained(-1.0);
        let r = equivalence_roundtrip(&single_neuron(), &p, &[1.0], None, &StationarityTol::default()).unwrap();
        assert!(r.embedded.accepted);
        assert!(!r.strong.accepted);
        assert!(!r.agree);
    }
}
