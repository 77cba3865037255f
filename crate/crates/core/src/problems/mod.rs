//! Optimization problems with network surrogates: a generic affine/quadratic problem
//! over `y = DNN(x)` and builders for the engine, adversarial-attack and oil-well
//! applications.

pub mod attack;
pub mod engine;
pub mod oilwell;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::encode::{add_inputs, encode_mip, encode_mpcc, interval_bounds, BigMBounds, EmbeddingHandles, Formulation};
use crate::error::{Error, Result};
use crate::model::{LinearExpr, Model, Objective, QuadTerm, Sense, VarId};
use crate::nn::Network;

pub use attack::{build_attack, feasible_point_attack, AttackModel, AttackSpec, Norm};
pub use engine::{build_engine, warmstart_engine, EngineModel, EngineSpec};
pub use oilwell::{build_oilwell, OilwellModel, OilwellSpec};

/// `min f(x, y)` subject to `c(x, y) <= 0`, where `y` is the network output at `x`.
///
/// Constraint Jacobians have one row per constraint, so the gradient of `μᵀc` with
/// respect to `x` is `Cxᵀ μ`.
pub trait SmoothProblem {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, x: &[f64], y: &[f64]) -> f64;
    /// `(∇_x f, ∇_y f)`.
    fn objective_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn constraints(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    /// `(Cx, Cy)`, each with `num_constraints` rows.
    fn constraint_jacobian(&self, x: &[f64], y: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);
}

/// `ax·x + ay·y <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub rhs: f64,
}

/// `f = gx·x + gy·y + xᵀQx x + yᵀQy y + constant` over an input box with affine rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateProblem {
    pub input_box: Vec<(f64, f64)>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub qx: DMatrix<f64>,
    pub qy: DMatrix<f64>,
    pub constant: f64,
    pub rows: Vec<AffineRow>,
}

impl SurrogateProblem {
    /// Minimizes `gy·y` over the box.
    pub fn linear(input_box: Vec<(f64, f64)>, gy: Vec<f64>) -> Self {
        let (n, p) = (input_box.len(), gy.len());
        Self {
            input_box,
            gx: vec![0.0; n],
            gy,
            qx: DMatrix::zeros(n, n),
            qy: DMatrix::zeros(p, p),
            constant: 0.0,
            rows: Vec::new(),
        }
    }

    pub fn with_gx(mut self, gx: Vec<f64>) -> Self {
        self.gx = gx;
        self
    }

    pub fn with_qy(mut self, qy: DMatrix<f64>) -> Self {
        self.qy = qy;
        self
    }

    pub fn with_qx(mut self, qx: DMatrix<f64>) -> Self {
        self.qx = qx;
        self
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    pub fn with_row(mut self, row: AffineRow) -> Self {
        self.rows.push(row);
        self
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let (n, p) = (net.input_dim(), net.output_dim());
        if self.input_box.len() != n {
            return Err(Error::dim("input box", n, self.input_box.len()));
        }
        if self.gx.len() != n || self.qx.shape() != (n, n) {
            return Err(Error::dim("x objective terms", n, self.gx.len()));
        }
        if self.gy.len() != p || self.qy.shape() != (p, p) {
            return Err(Error::dim("y objective terms", p, self.gy.len()));
        }
        for r in &self.rows {
            if r.ax.len() != n || r.ay.len() != p {
                return Err(Error::dim("constraint row", n + p, r.ax.len() + r.ay.len()));
            }
        }
        Ok(())
    }

    /// The same problem with the finite box bounds rewritten as rows and the box
    /// removed. For each input in order: `x_j <= u_j`, then `-x_j <= -l_j`.
    pub fn box_as_constraints(&self) -> SurrogateProblem {
        let n = self.input_box.len();
        let p = self.gy.len();
        let mut out = self.clone();
        for (j, &(lo, hi)) in self.input_box.iter().enumerate() {
            let mut e = vec![0.0; n];
            if hi.is_finite() {
                e[j] = 1.0;
                out.rows.push(AffineRow { ax: e.clone(), ay: vec![0.0; p], rhs: hi });
            }
            if lo.is_finite() {
                e[j] = -1.0;
                out.rows.push(AffineRow { ax: e, ay: vec![0.0; p], rhs: -lo });
            }
        }
        out.input_box = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
        out
    }

    /// Embeds `net` on box-bounded inputs and adds the objective and rows. Big-M bounds
    /// default to interval arithmetic over the box.
    pub fn build_model(&self, net: &Network, formulation: Formulation, bounds: Option<&BigMBounds>) -> Result<SurrogateModel> {
        self.validate(net)?;
        let mut model = Model::new();
        let inputs = add_inputs(&mut model, &self.input_box, "")?;
        let handles = match formulation {
            Formulation::Mip => {
                let owned;
                let b = match bounds {
                    Some(b) => b,
                    None => {
                        owned = interval_bounds(net, &self.input_box)?;
                        &owned
                    }
                };
                encode_mip(&mut model, net, &inputs, b, "")?
            }
            Formulation::Mpcc => encode_mpcc(&mut model, net, &inputs, "")?,
        };
        let outputs = handles.output_vars.clone();
        let mut lin = LinearExpr::new().with_constant(self.constant);
        for (v, c) in inputs.iter().zip(&self.gx).chain(outputs.iter().zip(&self.gy)) {
            if *c != 0.0 {
                lin.add_term(*v, *c);
            }
        }
        let mut quad = quad_terms(&inputs, &self.qx);
        quad.extend(quad_terms(&outputs, &self.qy));
        model.set_objective(Objective::minimize(lin).with_quadratic(quad))?;
        let mut user_rows = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let expr = LinearExpr::from_terms(
                inputs.iter().zip(&r.ax).chain(outputs.iter().zip(&r.ay)).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)),
            );
            user_rows.push(model.add_constraint(expr, Sense::Le, r.rhs, "user")?);
        }
        Ok(SurrogateModel {
            model,
            handles,
            user_rows,
        })
    }
}

fn quad_terms(vars: &[VarId], q: &DMatrix<f64>) -> Vec<QuadTerm> {
    let mut out = Vec::new();
    for i in 0..vars.len() {
        for j in i..vars.len() {
            let coeff = if i == j { q[(i, i)] } else { q[(i, j)] + q[(j, i)] };
            if coeff != 0.0 {
                out.push(QuadTerm {
                    i: vars[i],
                    j: vars[j],
                    coeff,
                });
            }
        }
    }
    out
}

impl SmoothProblem for SurrogateProblem {
    fn input_dim(&self) -> usize {
        self.gx.len()
    }

    fn output_dim(&self) -> usize {
        self.gy.len()
    }

    fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    fn objective(&self, x: &[f64], y: &[f64]) -> f64 {
        let xv = nalgebra::DVector::from_column_slice(x);
        let yv = nalgebra::DVector::from_column_slice(y);
        dot(&self.gx, x) + dot(&self.gy, y) + xv.dot(&(&self.qx * &xv)) + yv.dot(&(&self.qy * &yv)) + self.constant
    }

    fn objective_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sym = |q: &DMatrix<f64>, v: &[f64], g: &[f64]| -> Vec<f64> {
            let v = nalgebra::DVector::from_column_slice(v);
            let h = (q + q.transpose()) * v;
            g.iter().zip(h.iter()).map(|(a, b)| a + b).collect()
        };
        (sym(&self.qx, x, &self.gx), sym(&self.qy, y, &self.gy))
    }

    fn constraints(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(&r.ax, x) + dot(&r.ay, y) - r.rhs).collect()
    }

    fn constraint_jacobian(&self, _x: &[f64], _y: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.rows.len();
        let cx = DMatrix::from_fn(m, self.gx.len(), |i, j| self.rows[i].ax[j]);
        let cy = DMatrix::from_fn(m, self.gy.len(), |i, j| self.rows[i].ay[j]);
        (cx, cy)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A surrogate problem compiled into a model.
#[derive(Clone, Debug)]
pub struct SurrogateModel {
    pub model: Model,
    pub handles: EmbeddingHandles,
    /// Row index of each affine row, in order.
    pub user_rows: Vec<usize>,
}

/// A full variable assignment meant as a starting incumbent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmstartSolution {
    pub point: Vec<f64>,
    pub objective: f64,
    pub provenance: String,
}
