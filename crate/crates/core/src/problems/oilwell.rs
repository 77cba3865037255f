//! Production optimization on an offshore network: wells route to manifolds through
//! on/off pipelines, each manifold feeds one separator through a riser, and network
//! surrogates give well oil rates and riser outlet pressures.
//!
//! Every well connects to every manifold. Separator pressures are fixed; well and
//! manifold pressures are bounded variables.

use crate::encode::{encode_mip, encode_mpcc, interval_bounds, EmbeddingHandles, Formulation};
use crate::error::{Error, Result};
use crate::model::{LinearExpr, Model, Objective, Sense, VarId};
use crate::nn::Network;

/// Oil, gas, water.
pub const PHASES: [&str; 3] = ["oil", "gas", "wat"];

#[derive(Clone, Debug, PartialEq)]
pub struct Well {
    /// Oil rate as a function of wellhead pressure.
    pub net: Network,
    pub gor: f64,
    pub wor: f64,
    pub pressure_bounds: (f64, f64),
    /// Per-phase flow bounds on each open pipeline leaving the well.
    pub flow_lower: [f64; 3],
    pub flow_upper: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Riser {
    pub manifold: usize,
    pub separator: usize,
    /// Separator pressure from (oil, gas, water, manifold pressure).
    pub net: Network,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OilwellSpec {
    pub wells: Vec<Well>,
    pub manifold_pressure_bounds: Vec<(f64, f64)>,
    pub separator_pressures: Vec<f64>,
    pub risers: Vec<Riser>,
    /// Big-M of the pressure-drop rows of every pipeline.
    pub big_m: f64,
    /// Upper bound on the pressure drop of a pipeline (drops are nonnegative).
    pub max_drop: f64,
}

impl OilwellSpec {
    pub fn validate(&self) -> Result<()> {
        let nm = self.manifold_pressure_bounds.len();
        let ns = self.separator_pressures.len();
        if self.wells.is_empty() || nm == 0 || ns == 0 {
            return Err(Error::Topology("need at least one well, manifold and separator".into()));
        }
        for (i, w) in self.wells.iter().enumerate() {
            if w.net.input_dim() != 1 || w.net.output_dim() != 1 {
                return Err(Error::Topology(format!("well {i} network must be 1 -> 1")));
            }
            if !(w.pressure_bounds.0 <= w.pressure_bounds.1) {
                return Err(Error::InvalidSpec(format!("well {i} pressure bounds are not ordered")));
            }
            let consts = [w.gor, w.wor].into_iter().chain(w.flow_lower).chain(w.flow_upper);
            if consts.into_iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("well {i} constants")));
            }
        }
        let mut manifold_seen = vec![false; nm];
        let mut separator_seen = vec![false; ns];
        for (e, r) in self.risers.iter().enumerate() {
            if r.manifold >= nm || r.separator >= ns {
                return Err(Error::Topology(format!("riser {e} references a missing node")));
            }
            if std::mem::replace(&mut manifold_seen[r.manifold], true) {
                return Err(Error::Topology(format!("manifold {} has more than one riser", r.manifold)));
            }
            if std::mem::replace(&mut separator_seen[r.separator], true) {
                return Err(Error::Topology(format!("separator {} is fed by more than one riser", r.separator)));
            }
            if r.net.input_dim() != 4 || r.net.output_dim() != 1 {
                return Err(Error::Topology(format!("riser {e} network must be 4 -> 1")));
            }
        }
        if let Some(m) = manifold_seen.iter().position(|s| !s) {
            return Err(Error::Topology(format!("manifold {m} has no riser")));
        }
        if !self.big_m.is_finite() || self.big_m <= 0.0 || !self.max_drop.is_finite() {
            return Err(Error::InvalidSpec("big-M and drop bound must be finite and positive".into()));
        }
        Ok(())
    }

    pub fn num_relu_neurons(&self) -> usize {
        self.wells.iter().map(|w| w.net.num_relu_neurons()).sum::<usize>()
            + self.risers.iter().map(|r| r.net.num_relu_neurons()).sum::<usize>()
    }
}

/// A pipeline from a well to a manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub well: usize,
    pub manifold: usize,
    pub open: VarId,
    pub flow: [VarId; 3],
    pub drop: VarId,
}

#[derive(Clone, Debug)]
pub struct OilwellModel {
    pub model: Model,
    pub pipelines: Vec<Pipeline>,
    pub riser_flow: Vec<[VarId; 3]>,
    pub riser_drop: Vec<VarId>,
    pub well_pressure: Vec<VarId>,
    pub manifold_pressure: Vec<VarId>,
    pub separator_pressure: Vec<VarId>,
    pub well_handles: Vec<EmbeddingHandles>,
    pub riser_handles: Vec<EmbeddingHandles>,
}

impl OilwellModel {
    /// Routing binaries (one per pipeline).
    pub fn routing_binaries(&self) -> Vec<VarId> {
        self.pipelines.iter().map(|p| p.open).collect()
    }
}

fn embed(model: &mut Model, net: &Network, inputs: &[VarId], input_box: &[(f64, f64)], formulation: Formulation, prefix: &str) -> Result<EmbeddingHandles> {
    match formulation {
        Formulation::Mip => {
            let b = interval_bounds(net, input_box)?;
            encode_mip(model, net, inputs, &b, prefix)
        }
        Formulation::Mpcc => encode_mpcc(model, net, inputs, prefix),
    }
}

/// Builds the routing model. Pipeline open/close variables stay binary under both
/// formulations.
pub fn build_oilwell(spec: &OilwellSpec, formulation: Formulation) -> Result<OilwellModel> {
    spec.validate()?;
    let nm = spec.manifold_pressure_bounds.len();
    let mut model = Model::new();
    let well_pressure: Vec<VarId> = spec
        .wells
        .iter()
        .enumerate()
        .map(|(i, w)| model.add_continuous(format!("p_well[{i}]"), w.pressure_bounds.0, w.pressure_bounds.1))
        .collect::<Result<_>>()?;
    let manifold_pressure: Vec<VarId> = spec
        .manifold_pressure_bounds
        .iter()
        .enumerate()
        .map(|(m, &(lo, hi))| model.add_continuous(format!("p_man[{m}]"), lo, hi))
        .collect::<Result<_>>()?;
    let separator_pressure: Vec<VarId> = spec
        .separator_pressures
        .iter()
        .enumerate()
        .map(|(s, &p)| model.add_continuous(format!("p_sep[{s}]"), p, p))
        .collect::<Result<_>>()?;

    let mut pipelines = Vec::new();
    for (i, w) in spec.wells.iter().enumerate() {
        let mut open_vars = Vec::new();
        for m in 0..nm {
            let open = model.add_binary(format!("open[{i}][{m}]"))?;
            let mut flow = [VarId(0); 3];
            for (c, name) in PHASES.iter().enumerate() {
                let lo = w.flow_lower[c].min(0.0);
                let hi = w.flow_upper[c].max(0.0);
                flow[c] = model.add_continuous(format!("q_{name}[{i}][{m}]"), lo, hi)?;
                // q^L y <= q <= q^U y
                model.add_constraint(LinearExpr::from_terms([(flow[c], 1.0), (open, -w.flow_upper[c])]), Sense::Le, 0.0, "flow_off")?;
                model.add_constraint(LinearExpr::from_terms([(flow[c], 1.0), (open, -w.flow_lower[c])]), Sense::Ge, 0.0, "flow_off")?;
            }
            let drop = model.add_continuous(format!("dp[{i}][{m}]"), 0.0, spec.max_drop)?;
            // -M (1 - y) <= p_i - p_m - dp <= M (1 - y)
            let gap = LinearExpr::from_terms([(well_pressure[i], 1.0), (manifold_pressure[m], -1.0), (drop, -1.0)]);
            model.add_constraint(gap.clone().term(open, spec.big_m), Sense::Le, spec.big_m, "on_off")?;
            model.add_constraint(gap.term(open, -spec.big_m), Sense::Ge, -spec.big_m, "on_off")?;
            open_vars.push(open);
            pipelines.push(Pipeline {
                well: i,
                manifold: m,
                open,
                flow,
                drop,
            });
        }
        model.add_constraint(LinearExpr::from_terms(open_vars.iter().map(|&v| (v, 1.0))), Sense::Le, 1.0, "routing")?;
    }

    let mut well_handles = Vec::new();
    for (i, w) in spec.wells.iter().enumerate() {
        let h = embed(&mut model, &w.net, &[well_pressure[i]], &[w.pressure_bounds], formulation, &format!("well{i}."))?;
        let out = h.output_vars[0];
        let legs: Vec<&Pipeline> = pipelines.iter().filter(|p| p.well == i).collect();
        let mut oil = LinearExpr::from_terms(legs.iter().map(|p| (p.flow[0], 1.0)));
        oil.add_term(out, -1.0);
        model.add_constraint(oil, Sense::Eq, 0.0, "well_oil")?;
        for (c, ratio) in [(1, w.gor), (2, w.wor)] {
            let mut e = LinearExpr::new();
            for p in &legs {
                e.add_term(p.flow[c], 1.0);
                e.add_term(p.flow[0], -ratio);
            }
            model.add_constraint(e, Sense::Eq, 0.0, "ratio")?;
        }
        well_handles.push(h);
    }

    let mut riser_flow = Vec::new();
    let mut riser_drop = Vec::new();
    let mut riser_handles = Vec::new();
    let mut objective = LinearExpr::new();
    for (e, r) in spec.risers.iter().enumerate() {
        let mut flow = [VarId(0); 3];
        let mut flow_box = [(0.0, 0.0); 3];
        for (c, name) in PHASES.iter().enumerate() {
            let lo: f64 = spec.wells.iter().map(|w| w.flow_lower[c].min(0.0)).sum();
            let hi: f64 = spec.wells.iter().map(|w| w.flow_upper[c].max(0.0)).sum();
            flow[c] = model.add_continuous(format!("qr_{name}[{e}]"), lo, hi)?;
            flow_box[c] = (lo, hi);
            let mut balance = LinearExpr::var(flow[c]);
            for p in pipelines.iter().filter(|p| p.manifold == r.manifold) {
                balance.add_term(p.flow[c], -1.0);
            }
            model.add_constraint(balance, Sense::Eq, 0.0, "balance")?;
        }
        let pm = manifold_pressure[r.manifold];
        let ps = separator_pressure[r.separator];
        let inputs = [flow[0], flow[1], flow[2], pm];
        let input_box = [flow_box[0], flow_box[1], flow_box[2], spec.manifold_pressure_bounds[r.manifold]];
        let h = embed(&mut model, &r.net, &inputs, &input_box, formulation, &format!("riser{e}."))?;
        model.add_constraint(LinearExpr::from_terms([(ps, 1.0), (h.output_vars[0], -1.0)]), Sense::Eq, 0.0, "riser_p")?;
        let drop = model.add_continuous(format!("dpr[{e}]"), f64::NEG_INFINITY, f64::INFINITY)?;
        model.add_constraint(LinearExpr::from_terms([(drop, 1.0), (pm, -1.0), (ps, 1.0)]), Sense::Eq, 0.0, "riser_drop")?;
        objective.add_term(flow[0], 1.0);
        riser_flow.push(flow);
        riser_drop.push(drop);
        riser_handles.push(h);
    }
    model.set_objective(Objective::maximize(objective))?;
    Ok(OilwellModel {
        model,
        pipelines,
        riser_flow,
        riser_drop,
        well_pressure,
        manifold_pressure,
        separator_pressure,
        well_handles,
        riser_handles,
    })
}
