//! Engine design and control: pick per-step fuel and rpm plus one compression ratio to
//! meet a torque profile with minimal weighted NO + CO emissions.

use super::WarmstartSolution;
use crate::encode::{
    convex_hull_constraints, encode_mip, encode_mpcc, interval_bounds, BigMBounds, EmbeddingHandles, Formulation,
};
use crate::error::{Error, Result};
use crate::model::{LinearExpr, Model, Objective, Sense, VarId};
use crate::nn::Network;

/// Outputs of the engine network, in order.
pub const NO: usize = 0;
pub const CO: usize = 1;
pub const TORQUE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct EngineSpec {
    /// Inputs (fuel, rpm, compression); outputs (NO, CO, torque).
    pub net: Network,
    pub torque_profile: Vec<f64>,
    pub lambda: f64,
    pub dt: f64,
    pub fuel_bounds: (f64, f64),
    pub rpm_bounds: (f64, f64),
    pub compression_bounds: (f64, f64),
    /// Training inputs whose convex hull each step's `(f_t, r_t, c)` must lie in.
    pub hull_points: Option<Vec<Vec<f64>>>,
}

impl EngineSpec {
    pub fn steps(&self) -> usize {
        self.torque_profile.len()
    }

    pub fn input_box(&self) -> [(f64, f64); 3] {
        [self.fuel_bounds, self.rpm_bounds, self.compression_bounds]
    }

    pub fn validate(&self) -> Result<()> {
        if self.net.input_dim() != 3 || self.net.output_dim() != 3 {
            return Err(Error::InvalidSpec(format!(
                "engine network must map 3 inputs to 3 outputs, got {} -> {}",
                self.net.input_dim(),
                self.net.output_dim()
            )));
        }
        if self.torque_profile.is_empty() {
            return Err(Error::InvalidSpec("torque profile is empty".into()));
        }
        if self.torque_profile.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("torque profile".into()));
        }
        for (name, (lo, hi)) in [
            ("fuel", self.fuel_bounds),
            ("rpm", self.rpm_bounds),
            ("compression", self.compression_bounds),
        ] {
            if !(lo <= hi) {
                return Err(Error::InvalidSpec(format!("{name} bounds [{lo}, {hi}] are not ordered")));
            }
        }
        if !self.lambda.is_finite() || !self.dt.is_finite() {
            return Err(Error::NonFinite("engine weights".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EngineModel {
    pub model: Model,
    /// One embedding per time step.
    pub handles: Vec<EmbeddingHandles>,
    pub compression: VarId,
    pub fuel: Vec<VarId>,
    pub rpm: Vec<VarId>,
    pub torque_rows: Vec<usize>,
    /// Convex-hull weights per time step (empty without hull points).
    pub hull_weights: Vec<Vec<VarId>>,
}

/// Builds the multi-step model. The compression variable is shared by every step's
/// network embedding, so the problem does not split by time step.
pub fn build_engine(spec: &EngineSpec, formulation: Formulation, bounds: Option<&BigMBounds>) -> Result<EngineModel> {
    spec.validate()?;
    let input_box = spec.input_box();
    let owned;
    let bounds = match (formulation, bounds) {
        (Formulation::Mip, Some(b)) => Some(b),
        (Formulation::Mip, None) => {
            if input_box.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
                return Err(Error::UnboundedBox("engine controls need finite bounds for big-M".into()));
            }
            owned = interval_bounds(&spec.net, &input_box)?;
            Some(&owned)
        }
        (Formulation::Mpcc, _) => None,
    };
    let mut model = Model::new();
    let (clo, chi) = spec.compression_bounds;
    let compression = model.add_continuous("c", clo, chi)?;
    let mut out = EngineModel {
        model: Model::new(),
        handles: Vec::new(),
        compression,
        fuel: Vec::new(),
        rpm: Vec::new(),
        torque_rows: Vec::new(),
        hull_weights: Vec::new(),
    };
    let mut objective = LinearExpr::new();
    for (t, &target) in spec.torque_profile.iter().enumerate() {
        let f = model.add_continuous(format!("f[{t}]"), spec.fuel_bounds.0, spec.fuel_bounds.1)?;
        let r = model.add_continuous(format!("r[{t}]"), spec.rpm_bounds.0, spec.rpm_bounds.1)?;
        let inputs = [f, r, compression];
        let prefix = format!("t{t}.");
        let h = match bounds {
            Some(b) => encode_mip(&mut model, &spec.net, &inputs, b, &prefix)?,
            None => encode_mpcc(&mut model, &spec.net, &inputs, &prefix)?,
        };
        objective.add_term(h.output_vars[NO], spec.dt);
        objective.add_term(h.output_vars[CO], spec.lambda * spec.dt);
        let row = model.add_constraint(LinearExpr::var(h.output_vars[TORQUE]), Sense::Ge, target, "torque")?;
        if let Some(points) = &spec.hull_points {
            out.hull_weights.push(convex_hull_constraints(&mut model, &inputs, points, &prefix)?);
        }
        out.fuel.push(f);
        out.rpm.push(r);
        out.torque_rows.push(row);
        out.handles.push(h);
    }
    model.set_objective(Objective::minimize(objective))?;
    out.model = model;
    Ok(out)
}

/// Warmstart from training data with the compression ratio fixed: for each step, the
/// training input with the lowest network-predicted emissions among those whose
/// predicted torque meets the profile. Every other variable is set from the forward pass.
pub fn warmstart_engine(spec: &EngineSpec, em: &EngineModel, training_inputs: &[Vec<f64>], fixed_c: f64) -> Result<WarmstartSolution> {
    spec.validate()?;
    let input_box = spec.input_box();
    let mut candidates = Vec::new();
    for row in training_inputs {
        if row.len() != 3 {
            return Err(Error::dim("engine training row", 3, row.len()));
        }
        let inside = row.iter().zip(&input_box).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        if (row[2] - fixed_c).abs() <= 1e-9 && inside {
            let y = spec.net.forward(row)?;
            candidates.push((row.clone(), y));
        }
    }
    let mut chosen = Vec::with_capacity(spec.steps());
    for (t, &target) in spec.torque_profile.iter().enumerate() {
        let best = candidates
            .iter()
            .filter(|(_, y)| y[TORQUE] >= target)
            .min_by(|a, b| {
                let ea = a.1[NO] + spec.lambda * a.1[CO];
                let eb = b.1[NO] + spec.lambda * b.1[CO];
                ea.total_cmp(&eb)
            })
            .ok_or(Error::NoFeasibleRow(t))?;
        chosen.push(best.0.clone());
    }
    let mut point = vec![0.0; em.model.num_vars()];
    for (t, x) in chosen.iter().enumerate() {
        em.handles[t].fill_forward(&spec.net, x, &mut point)?;
        if let Some(points) = &spec.hull_points {
            let k = points
                .iter()
                .position(|p| p == x)
                .ok_or_else(|| Error::InvalidSpec("warmstart row is not one of the hull points".into()))?;
            point[em.hull_weights[t][k].0] = 1.0;
        }
    }
    // Only `c` is shared, and every chosen row carries the same value up to 1e-9.
    point[em.compression.0] = fixed_c;
    let objective = em.model.objective.value(&point);
    Ok(WarmstartSolution {
        point,
        objective,
        provenance: format!("training rows with compression {fixed_c}"),
    })
}
