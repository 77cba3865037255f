//! Geometry of activation regions.
//!
//! The region `R(N)` of a pattern `N` is the set of inputs whose preactivations are
//! positive exactly on `N`, with every preactivation computed through the layer maps
//! masked by `N`. Strict inequalities are relaxed to a margin `slack` so regions can
//! be tested with an LP.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Sense;
use crate::nn::{ActivationPattern, Network, NeuronId, SignPartition, DEFAULT_DEGENERACY_TOL};
use crate::solve::simplex::{LpOutcome, LpProblem, Simplex};

pub const DEFAULT_SLACK: f64 = 1e-6;
pub const DEFAULT_ENUMERATION_CAP: usize = 20;
pub const DEFAULT_DEGENERATE_CAP: usize = 12;
/// Singular-value ratio below which normals count as dependent.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// `normal·x + offset > 0`
    Positive,
    /// `normal·x + offset < 0`
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub neuron: NeuronId,
    pub normal: Vec<f64>,
    pub offset: f64,
    pub side: Side,
}

/// One strict inequality per hidden ReLU neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionInequalities {
    pub rows: Vec<RegionRow>,
}

pub fn region_inequalities(net: &Network, pattern: &ActivationPattern) -> Result<RegionInequalities> {
    let (forms, _) = net.pattern_forms(pattern)?;
    Ok(RegionInequalities {
        rows: forms
            .into_iter()
            .map(|f| RegionRow {
                side: if pattern.contains(&f.neuron) { Side::Positive } else { Side::Negative },
                neuron: f.neuron,
                normal: f.normal,
                offset: f.offset,
            })
            .collect(),
    })
}

/// Maximizes the common margin `t` of `rows` (each normalized by its normal's max-norm),
/// with `t <= 1` and optionally `|x - center|_inf <= radius`. Returns `(t, x)` or `None`
/// when even `t = min_margin` is infeasible.
fn max_margin(rows: &[RegionRow], dim: usize, min_margin: f64, ball: Option<(&[f64], f64)>) -> Result<Option<(f64, Vec<f64>)>> {
    let m = rows.len();
    let n = dim + 1;
    let t = dim;
    let mut a = DMatrix::<f64>::zeros(m, n);
    let mut rhs = Vec::with_capacity(m);
    let mut senses = Vec::with_capacity(m);
    for (i, r) in rows.iter().enumerate() {
        let scale = r.normal.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let sign = if r.side == Side::Positive { 1.0 } else { -1.0 };
        // sign (n·x + o) / scale >= t
        for j in 0..dim {
            a[(i, j)] = sign * r.normal[j] / scale;
        }
        a[(i, t)] = -1.0;
        rhs.push(-sign * r.offset / scale);
        senses.push(Sense::Ge);
    }
    let (mut lower, mut upper) = (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n]);
    if let Some((c, radius)) = ball {
        for j in 0..dim {
            lower[j] = c[j] - radius;
            upper[j] = c[j] + radius;
        }
    }
    lower[t] = min_margin;
    upper[t] = 1.0;
    let mut cost = vec![0.0; n];
    cost[t] = -1.0;
    let p = LpProblem {
        a,
        senses,
        rhs,
        cost,
        lower,
        upper,
    };
    let mut s = Simplex::new(&p)?;
    match s.solve()? {
        LpOutcome::Optimal => {
            let x = s.primal();
            Ok(Some((x[t], x[..dim].to_vec())))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Numerical("region margin LP unbounded".into())),
        LpOutcome::IterationLimit => Err(Error::Numerical("region LP hit its iteration limit".into())),
    }
}

/// Whether `R(pattern)` contains a point with every row satisfied by at least `slack`;
/// returns a witness when it does.
pub fn region_nonempty(net: &Network, pattern: &ActivationPattern, slack: f64) -> Result<Option<Vec<f64>>> {
    if !(slack > 0.0) {
        return Err(Error::InvalidSpec(format!("slack must be positive, got {slack}")));
    }
    let ineq = region_inequalities(net, pattern)?;
    feasible_witness(&ineq.rows, net.input_dim(), slack)
}

/// Like [`max_margin`] but the margin is measured on the raw (unnormalized) rows, which
/// is what `sign_partition` sees.
fn feasible_witness(rows: &[RegionRow], dim: usize, slack: f64) -> Result<Option<Vec<f64>>> {
    let scaled: Vec<RegionRow> = rows
        .iter()
        .map(|r| {
            // Normalization inside max_margin divides by the max-norm; pre-multiplying
            // keeps the raw margin `slack` as the threshold.
            let s = r.normal.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let s = if s > 0.0 { s } else { 1.0 };
            RegionRow {
                neuron: r.neuron,
                normal: r.normal.iter().map(|v| v * s).collect(),
                offset: r.offset * s,
                side: r.side,
            }
        })
        .collect();
    let Some((t, x)) = max_margin(&scaled, dim, slack, None)? else {
        return Ok(None);
    };
    debug_assert!(t >= slack * (1.0 - 1e-9));
    Ok(Some(x))
}

/// All patterns with a nonempty region, each with a witness point, in lexicographic
/// layer-major order. Explores the sign tree depth first and prunes empty prefixes,
/// which is exhaustive because a neuron's row only depends on earlier layers.
pub fn enumerate_nonempty_patterns(net: &Network, slack: f64, max_neurons: usize) -> Result<Vec<(ActivationPattern, Vec<f64>)>> {
    if !net.is_piecewise_linear() {
        return Err(Error::NotPiecewiseLinear);
    }
    let neurons = net.relu_neurons();
    if neurons.len() > max_neurons {
        return Err(Error::CapExceeded {
            what: "hidden ReLU neurons for region enumeration",
            count: neurons.len(),
            cap: max_neurons,
        });
    }
    let mut out = Vec::new();
    let mut rows: Vec<RegionRow> = Vec::with_capacity(neurons.len());
    let mut active = ActivationPattern::empty();
    walk(net, &neurons, slack, &mut rows, &mut active, &mut out)?;
    Ok(out)
}

fn walk(
    net: &Network,
    neurons: &[NeuronId],
    slack: f64,
    rows: &mut Vec<RegionRow>,
    active: &mut ActivationPattern,
    out: &mut Vec<(ActivationPattern, Vec<f64>)>,
) -> Result<()> {
    let k = rows.len();
    if k == neurons.len() {
        if let Some(w) = feasible_witness(rows, net.input_dim(), slack)? {
            out.push((active.clone(), w));
        }
        return Ok(());
    }
    let id = neurons[k];
    // Forms of layer id.layer depend only on the pattern restricted to earlier layers.
    let (forms, _) = net.pattern_forms(active)?;
    let form = forms.into_iter().find(|f| f.neuron == id).expect("neuron has a form");
    for side in [Side::Negative, Side::Positive] {
        rows.push(RegionRow {
            neuron: id,
            normal: form.normal.clone(),
            offset: form.offset,
            side,
        });
        if side == Side::Positive {
            active.active.insert(id);
        }
        let last = k + 1 == neurons.len();
        if last || feasible_witness(rows, net.input_dim(), slack)?.is_some() {
            walk(net, neurons, slack, rows, active, out)?;
        }
        rows.pop();
        active.active.remove(&id);
    }
    Ok(())
}

/// `Σ_{i=0}^{d} C(m, i)`: regions cut by `m` hyperplanes in general position in `R^d`.
pub fn zaslavsky_count(m: u32, d: u32) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for i in 0..=d.min(m) {
        total += c;
        c = c * u128::from(m - i) / u128::from(i + 1);
    }
    total
}

fn rank_ok(rows: &[Vec<f64>], ncols: usize, rank_tol: f64) -> bool {
    if rows.is_empty() {
        return true;
    }
    if rows.len() > ncols {
        return false;
    }
    let mat = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    let sv = mat.singular_values();
    let max = sv.iter().fold(0.0f64, |a, v| a.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    max > 0.0 && min / max > rank_tol
}

/// Normals of the hyperplanes of the partition's degenerate neurons, from the truncated
/// maps of the induced pattern.
pub fn degenerate_normals(net: &Network, part: &SignPartition) -> Result<Vec<(NeuronId, Vec<f64>)>> {
    let (forms, _) = net.pattern_forms(&part.active_pattern())?;
    Ok(forms
        .into_iter()
        .filter(|f| part.degenerate.contains(&f.neuron))
        .map(|f| (f.neuron, f.normal))
        .collect())
}

/// True when the hyperplanes through `x` of its degenerate neurons have linearly
/// independent normals (vacuously true with none).
pub fn general_position_check(net: &Network, x: &[f64], rank_tol: f64) -> Result<bool> {
    let part = net.sign_partition(x, DEFAULT_DEGENERACY_TOL)?;
    if part.degenerate.is_empty() {
        return Ok(true);
    }
    if part.degenerate.len() > net.input_dim() {
        return Ok(false);
    }
    let normals: Vec<Vec<f64>> = degenerate_normals(net, &part)?.into_iter().map(|(_, n)| n).collect();
    Ok(rank_ok(&normals, net.input_dim(), rank_tol))
}

/// Global general position of a single-hidden-layer arrangement: every `k <= d`
/// hyperplanes have independent normals and no `d + 1` share a point.
pub fn arrangement_in_general_position(net: &Network, rank_tol: f64) -> Result<bool> {
    if !net.is_piecewise_linear() || net.hidden_layers().len() != 1 {
        return Err(Error::InvalidSpec("arrangement check needs one hidden ReLU layer".into()));
    }
    let layer = &net.layers()[0];
    let d = net.input_dim();
    let m = layer.output_dim();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| layer.weights().row(i).iter().copied().collect()).collect();
    let mut ok = true;
    for_each_subset(m, d + 1, &mut |subset| {
        if !ok {
            return;
        }
        if subset.len() <= d {
            let sel: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i].clone()).collect();
            ok &= rank_ok(&sel, d, rank_tol);
        } else {
            // d+1 hyperplanes meet iff [normals | offsets] has rank d.
            let sel: Vec<Vec<f64>> = subset
                .iter()
                .map(|&i| {
                    let mut r = rows[i].clone();
                    r.push(layer.bias()[i]);
                    r
                })
                .collect();
            ok &= rank_ok(&sel, d + 1, rank_tol);
        }
    });
    Ok(ok)
}

fn for_each_subset(m: usize, max_size: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, m: usize, max_size: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if !cur.is_empty() {
            f(cur);
        }
        if cur.len() == max_size {
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, max_size, cur, f);
            cur.pop();
        }
    }
    rec(0, m, max_size, &mut Vec::new(), f);
}

#[derive(Clone, Debug, PartialEq)]
pub struct HullVertex {
    pub pattern: ActivationPattern,
    pub jacobian: DMatrix<f64>,
}

/// Vertices of the generalized Jacobian at a point: one per region touching the point.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedJacobianHull {
    pub vertices: Vec<HullVertex>,
    pub base_partition: SignPartition,
}

impl GeneralizedJacobianHull {
    /// κ ∈ {0, 1} assignment of a vertex: 1 exactly on its pattern.
    pub fn vertex_kappa(&self, net: &Network, idx: usize) -> BTreeMap<NeuronId, f64> {
        net.relu_neurons()
            .into_iter()
            .map(|id| (id, if self.vertices[idx].pattern.contains(&id) { 1.0 } else { 0.0 }))
            .collect()
    }
}

/// Regions `I^+(x) ∪ M`, `M ⊆ I^0(x)`, that touch `x`, with their Jacobians.
///
/// A region counts as touching when it has positive margin inside a small box around
/// `x`; the non-degenerate neurons keep their signs there.
pub fn generalized_jacobian(net: &Network, x: &[f64], max_degenerate: usize) -> Result<GeneralizedJacobianHull> {
    if !net.is_piecewise_linear() {
        return Err(Error::NotPiecewiseLinear);
    }
    let part = net.sign_partition(x, DEFAULT_DEGENERACY_TOL)?;
    let degenerate: Vec<NeuronId> = part.degenerate.iter().copied().collect();
    if degenerate.len() > max_degenerate {
        return Err(Error::CapExceeded {
            what: "degenerate neurons for the generalized Jacobian",
            count: degenerate.len(),
            cap: max_degenerate,
        });
    }
    let base = part.active_pattern();
    if degenerate.is_empty() {
        return Ok(GeneralizedJacobianHull {
            vertices: vec![HullVertex {
                jacobian: net.affine_piece(&base)?.matrix,
                pattern: base,
            }],
            base_partition: part,
        });
    }
    let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let radius = 1e-4 * scale;
    let mut vertices = Vec::new();
    for mask in 0u64..(1u64 << degenerate.len()) {
        let mut pattern = base.clone();
        for (b, id) in degenerate.iter().enumerate() {
            if mask >> b & 1 == 1 {
                pattern.active.insert(*id);
            }
        }
        let ineq = region_inequalities(net, &pattern)?;
        if let Some((t, _)) = max_margin(&ineq.rows, net.input_dim(), 0.0, Some((x, radius)))? {
            if t > 1e-9 * radius {
                vertices.push(HullVertex {
                    jacobian: net.affine_piece(&pattern)?.matrix,
                    pattern,
                });
            }
        }
    }
    Ok(GeneralizedJacobianHull {
        vertices,
        base_partition: part,
    })
}

/// Convex weights `θ` minimizing `|Σ θ_m v_m|_inf`, with that minimum.
pub fn hull_nearest_zero(vectors: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let k = vectors.len();
    if k == 0 {
        return Err(Error::InvalidSpec("hull has no vertices".into()));
    }
    let d = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::dim("hull vertex vector", d, bad.len()));
    }
    // Variables θ_1..θ_k, t. Rows: Σθ = 1; for each j: Σθ v_j - t <= 0 and Σθ v_j + t >= 0.
    let n = k + 1;
    let mut a = DMatrix::<f64>::zeros(1 + 2 * d, n);
    let mut senses = vec![Sense::Eq];
    let mut rhs = vec![1.0];
    for m in 0..k {
        a[(0, m)] = 1.0;
    }
    for j in 0..d {
        for m in 0..k {
            a[(1 + 2 * j, m)] = vectors[m][j];
            a[(2 + 2 * j, m)] = vectors[m][j];
        }
        a[(1 + 2 * j, k)] = -1.0;
        a[(2 + 2 * j, k)] = 1.0;
        senses.extend([Sense::Le, Sense::Ge]);
        rhs.extend([0.0, 0.0]);
    }
    let mut cost = vec![0.0; n];
    cost[k] = 1.0;
    let p = LpProblem {
        a,
        senses,
        rhs,
        cost,
        lower: vec![0.0; n],
        upper: vec![f64::INFINITY; n],
    };
    let mut s = Simplex::new(&p)?;
    match s.solve()? {
        LpOutcome::Optimal => {
            let sol = s.primal();
            let theta: Vec<f64> = sol[..k].iter().map(|v| v.max(0.0)).collect();
            let total: f64 = theta.iter().sum();
            let theta: Vec<f64> = theta.iter().map(|v| v / total).collect();
            // Recompute the residual rather than trusting t.
            let resid = (0..d)
                .map(|j| theta.iter().zip(vectors).map(|(t, v)| t * v[j]).sum::<f64>().abs())
                .fold(0.0f64, f64::max);
            Ok((theta, resid))
        }
        other => Err(Error::Numerical(format!("hull LP ended with {other:?}"))),
    }
}

/// Convex weights `θ` with `Σ θ_m v_m = 0`, if they exist. The equality is accepted
/// when its max-norm residual is at most `1e-8 · max(1, max |v|)`.
pub fn hull_contains_zero(vectors: &[Vec<f64>]) -> Result<Option<Vec<f64>>> {
    let (theta, resid) = hull_nearest_zero(vectors)?;
    let vmax = vectors.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
    Ok((resid <= 1e-8 * vmax).then_some(theta))
}
