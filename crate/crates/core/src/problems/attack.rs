//! Adversarial examples: the closest image a classifier assigns to a chosen label with
//! a softmax ratio of at least `alpha` against every other label.
//!
//! `σ_l / σ_i >= α` is equivalent to `y_l >= y_i + ln α` on the pre-softmax outputs,
//! which is linear.

use serde::{Deserialize, Serialize};

use super::WarmstartSolution;
use crate::encode::{encode_mip, encode_mpcc, interval_bounds, BigMBounds, EmbeddingHandles, Formulation};
use crate::error::{Error, Result};
use crate::model::{LinearExpr, Model, Objective, QuadTerm, Sense, VarId};
use crate::nn::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    /// Classifier with pre-softmax outputs.
    pub net: Network,
    /// Reference image in `[0,1]^m`.
    pub image: Vec<f64>,
    pub target_label: usize,
    pub alpha: f64,
    pub norm: Norm,
    /// Per-pixel cap `|x_i - z_i| <= ε`.
    pub pixel_eps: Option<f64>,
    /// Cap on `|(x_i - z_i) - (x_j - z_j)|` over the listed pixel pairs.
    pub adjacency_eps: Option<f64>,
    pub adjacency: Vec<(usize, usize)>,
}

impl AttackSpec {
    pub fn margin(&self) -> f64 {
        self.alpha.ln()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.net.input_dim();
        if self.image.len() != m {
            return Err(Error::dim("attack image", m, self.image.len()));
        }
        if self.image.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidSpec("image pixels must lie in [0, 1]".into()));
        }
        let classes = self.net.output_dim();
        if self.target_label >= classes {
            return Err(Error::InvalidLabel {
                label: self.target_label,
                classes,
            });
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidSpec(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Some(&(i, j)) = self.adjacency.iter().find(|(i, j)| *i >= m || *j >= m) {
            return Err(Error::InvalidSpec(format!("adjacency pair ({i}, {j}) is out of range")));
        }
        Ok(())
    }

    /// Pixel box after the optional per-pixel cap.
    pub fn pixel_box(&self) -> Vec<(f64, f64)> {
        self.image
            .iter()
            .map(|&x| match self.pixel_eps {
                Some(e) => ((x - e).max(0.0), (x + e).min(1.0)),
                None => (0.0, 1.0),
            })
            .collect()
    }

    /// Whether `y` puts `target_label` ahead of every other output by the margin.
    pub fn meets_margin(&self, y: &[f64]) -> bool {
        let l = self.target_label;
        (0..y.len()).all(|i| i == l || y[l] >= y[i] + self.margin())
    }
}

#[derive(Clone, Debug)]
pub struct AttackModel {
    pub model: Model,
    pub handles: EmbeddingHandles,
    pub pixels: Vec<VarId>,
    /// `d_j >= |z_j - x_j|` for L1, the single `t` for L∞, empty for L2.
    pub aux: Vec<VarId>,
    pub margin_rows: Vec<usize>,
}

pub fn build_attack(spec: &AttackSpec, formulation: Formulation, bounds: Option<&BigMBounds>) -> Result<AttackModel> {
    spec.validate()?;
    let pbox = spec.pixel_box();
    let mut model = Model::new();
    let pixels: Vec<VarId> = pbox
        .iter()
        .enumerate()
        .map(|(j, &(lo, hi))| model.add_continuous(format!("px[{j}]"), lo, hi))
        .collect::<Result<_>>()?;
    let handles = match formulation {
        Formulation::Mip => {
            let owned;
            let b = match bounds {
                Some(b) => b,
                None => {
                    owned = interval_bounds(&spec.net, &pbox)?;
                    &owned
                }
            };
            encode_mip(&mut model, &spec.net, &pixels, b, "")?
        }
        Formulation::Mpcc => encode_mpcc(&mut model, &spec.net, &pixels, "")?,
    };
    let x = &spec.image;
    let mut aux = Vec::new();
    let objective = match spec.norm {
        Norm::L1 => {
            let mut obj = LinearExpr::new();
            for (j, &z) in pixels.iter().enumerate() {
                let d = model.add_continuous(format!("d[{j}]"), 0.0, f64::INFINITY)?;
                model.add_constraint(LinearExpr::from_terms([(d, 1.0), (z, -1.0)]), Sense::Ge, -x[j], "norm")?;
                model.add_constraint(LinearExpr::from_terms([(d, 1.0), (z, 1.0)]), Sense::Ge, x[j], "norm")?;
                obj.add_term(d, 1.0);
                aux.push(d);
            }
            Objective::minimize(obj)
        }
        Norm::Linf => {
            let t = model.add_continuous("t", 0.0, f64::INFINITY)?;
            for (j, &z) in pixels.iter().enumerate() {
                model.add_constraint(LinearExpr::from_terms([(t, 1.0), (z, -1.0)]), Sense::Ge, -x[j], "norm")?;
                model.add_constraint(LinearExpr::from_terms([(t, 1.0), (z, 1.0)]), Sense::Ge, x[j], "norm")?;
            }
            aux.push(t);
            Objective::minimize(LinearExpr::var(t))
        }
        Norm::L2 => {
            // Σ (z_j - x_j)^2 = Σ z_j^2 - 2 x_j z_j + x_j^2.
            let lin = LinearExpr::from_terms(pixels.iter().zip(x).map(|(&z, &xj)| (z, -2.0 * xj)))
                .with_constant(x.iter().map(|v| v * v).sum());
            let quad = pixels.iter().map(|&z| QuadTerm { i: z, j: z, coeff: 1.0 }).collect();
            Objective::minimize(lin).with_quadratic(quad)
        }
    };
    model.set_objective(objective)?;
    let l = spec.target_label;
    let out = &handles.output_vars;
    let mut margin_rows = Vec::new();
    for i in 0..out.len() {
        if i != l {
            let expr = LinearExpr::from_terms([(out[l], 1.0), (out[i], -1.0)]);
            margin_rows.push(model.add_constraint(expr, Sense::Ge, spec.margin(), "margin")?);
        }
    }
    if let Some(eps) = spec.adjacency_eps {
        // |(x_i - z_i) - (x_j - z_j)| <= ε  ⇔  -ε + x_i - x_j <= z_i - z_j <= ε + x_i - x_j.
        for &(i, j) in &spec.adjacency {
            let expr = LinearExpr::from_terms([(pixels[i], 1.0), (pixels[j], -1.0)]);
            model.add_constraint(expr.clone(), Sense::Le, eps + x[i] - x[j], "adjacent")?;
            model.add_constraint(expr, Sense::Ge, -eps + x[i] - x[j], "adjacent")?;
        }
    }
    Ok(AttackModel {
        model,
        handles,
        pixels,
        aux,
        margin_rows,
    })
}

/// Starting point from the first seed image that the network already assigns to the
/// target label with the required margin (and that respects the perturbation caps).
pub fn feasible_point_attack(spec: &AttackSpec, am: &AttackModel, seeds: &[Vec<f64>]) -> Result<WarmstartSolution> {
    spec.validate()?;
    for (k, seed) in seeds.iter().enumerate() {
        if seed.len() != spec.image.len() {
            return Err(Error::dim("attack seed", spec.image.len(), seed.len()));
        }
        let y = spec.net.forward(seed)?;
        if !spec.meets_margin(&y) {
            continue;
        }
        let mut point = vec![0.0; am.model.num_vars()];
        am.handles.fill_forward(&spec.net, seed, &mut point)?;
        let diffs: Vec<f64> = seed.iter().zip(&spec.image).map(|(z, x)| (z - x).abs()).collect();
        match spec.norm {
            Norm::L1 => {
                for (d, v) in am.aux.iter().zip(&diffs) {
                    point[d.0] = *v;
                }
            }
            Norm::Linf => point[am.aux[0].0] = diffs.iter().fold(0.0, |a: f64, v| a.max(*v)),
            Norm::L2 => {}
        }
        if !am.model.is_feasible(&point, 1e-9) {
            continue;
        }
        return Ok(WarmstartSolution {
            objective: am.model.objective.value(&point),
            point,
            provenance: format!("seed {k}"),
        });
    }
    Err(Error::NoQualifyingSeed {
        label: spec.target_label,
    })
}

/// Softmax of `y`, computed with the max shifted out.
pub fn softmax(y: &[f64]) -> Vec<f64> {
    let m = y.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let e: Vec<f64> = y.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
