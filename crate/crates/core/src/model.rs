//! Solver-agnostic optimization models: bounded variables, affine rows,
//! complementarity pairs and a linear-plus-quadratic objective.
//!
//! Points are dense `Vec<f64>` indexed by [`VarId`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

impl Variable {
    pub fn is_fixed(&self) -> bool {
        self.lower == self.upper
    }
}

/// `Σ coeff·x + constant`; zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearExpr {
    pub terms: BTreeMap<VarId, f64>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self::from_terms([(v, 1.0)])
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        let mut e = Self::new();
        for (v, c) in terms {
            e.add_term(v, c);
        }
        e
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    /// Adds `coeff·v`, merging with an existing term and dropping exact zeros.
    pub fn add_term(&mut self, v: VarId, coeff: f64) {
        let entry = self.terms.entry(v).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.remove(&v);
        }
    }

    pub fn term(mut self, v: VarId, coeff: f64) -> Self {
        self.add_term(v, coeff);
        self
    }

    pub fn add_expr(&mut self, other: &LinearExpr, scale: f64) {
        for (&v, &c) in &other.terms {
            self.add_term(v, scale * c);
        }
        self.constant += scale * other.constant;
    }

    pub fn coeff(&self, v: VarId) -> f64 {
        self.terms.get(&v).copied().unwrap_or(0.0)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.terms.values().all(|c| c.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// `expr sense rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub expr: LinearExpr,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: String,
}

impl Constraint {
    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.expr.evaluate(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Right-hand side with the expression constant moved across.
    pub fn normalized_rhs(&self) -> f64 {
        self.rhs - self.expr.constant
    }
}

/// `0 <= a ⊥ b >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComplementarityPair {
    pub a: VarId,
    pub b: VarId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

/// `coeff · x_i · x_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadTerm {
    pub i: VarId,
    pub j: VarId,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub sense: ObjectiveSense,
    pub linear: LinearExpr,
    pub quadratic: Vec<QuadTerm>,
}

impl Default for Objective {
    fn default() -> Self {
        Self::minimize(LinearExpr::new())
    }
}

impl Objective {
    pub fn minimize(linear: LinearExpr) -> Self {
        Self {
            sense: ObjectiveSense::Minimize,
            linear,
            quadratic: Vec::new(),
        }
    }

    pub fn maximize(linear: LinearExpr) -> Self {
        Self {
            sense: ObjectiveSense::Maximize,
            linear,
            quadratic: Vec::new(),
        }
    }

    pub fn with_quadratic(mut self, quadratic: Vec<QuadTerm>) -> Self {
        self.quadratic = quadratic;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.is_empty()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.linear.evaluate(x) + self.quadratic.iter().map(|q| q.coeff * x[q.i.0] * x[q.j.0]).sum::<f64>()
    }

    /// Gradient of the objective as written (not sign-adjusted for maximization).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (v, c) in &self.linear.terms {
            g[v.0] += c;
        }
        for q in &self.quadratic {
            g[q.i.0] += q.coeff * x[q.j.0];
            g[q.j.0] += q.coeff * x[q.i.0];
        }
        g
    }

    /// Value of the equivalent minimization objective (`-f` for maximization).
    pub fn min_form_value(&self, x: &[f64]) -> f64 {
        match self.sense {
            ObjectiveSense::Minimize => self.value(x),
            ObjectiveSense::Maximize => -self.value(x),
        }
    }

    /// True when the quadratic part is convex for the objective's sense
    /// (positive semidefinite for minimization, negative for maximization).
    pub fn is_convex(&self) -> bool {
        if self.quadratic.is_empty() {
            return true;
        }
        let mut idx: BTreeMap<VarId, usize> = BTreeMap::new();
        for q in &self.quadratic {
            let n = idx.len();
            idx.entry(q.i).or_insert(n);
            let n = idx.len();
            idx.entry(q.j).or_insert(n);
        }
        let n = idx.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for q in &self.quadratic {
            let (a, b) = (idx[&q.i], idx[&q.j]);
            if a == b {
                h[(a, a)] += q.coeff;
            } else {
                h[(a, b)] += 0.5 * q.coeff;
                h[(b, a)] += 0.5 * q.coeff;
            }
        }
        if self.sense == ObjectiveSense::Maximize {
            h.neg_mut();
        }
        let eig = SymmetricEigen::new(h).eigenvalues;
        let scale = eig.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        eig.iter().all(|&v| v >= -1e-10 * scale)
    }
}

/// Largest violations of each constraint family at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub bounds: f64,
    pub rows: f64,
    pub integrality: f64,
    /// `max min(a, b)` over complementarity pairs.
    pub complementarity: f64,
}

impl Violations {
    pub fn max(&self) -> f64 {
        self.bounds.max(self.rows).max(self.integrality).max(self.complementarity)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Model {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub complementarities: Vec<ComplementarityPair>,
    pub objective: Objective,
    pub metadata: BTreeMap<String, String>,
    names: HashMap<String, VarId>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_complementarities(&self) -> usize {
        self.complementarities.len()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.var_ids().filter(|v| self.var(*v).kind == VarKind::Binary).collect()
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> Result<VarId> {
        let name = name.into();
        if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::BoundInversion { name, lower, upper });
        }
        if kind == VarKind::Binary && (lower < 0.0 || upper > 1.0) {
            return Err(Error::InvalidModel(format!(
                "binary variable {name} must have bounds within [0, 1]"
            )));
        }
        if name.is_empty() || self.names.contains_key(&name) {
            return Err(Error::InvalidModel(format!("duplicate or empty variable name '{name}'")));
        }
        let id = VarId(self.variables.len());
        self.names.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(id)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<VarId> {
        self.add_variable(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId> {
        self.add_variable(name, VarKind::Binary, 0.0, 1.0)
    }

    fn check_var(&self, v: VarId) -> Result<()> {
        if v.0 < self.variables.len() {
            Ok(())
        } else {
            Err(Error::UnknownVariable(v.0))
        }
    }

    fn check_expr(&self, e: &LinearExpr) -> Result<()> {
        for v in e.terms.keys() {
            self.check_var(*v)?;
        }
        if !e.is_finite() {
            return Err(Error::NonFinite("linear expression".into()));
        }
        Ok(())
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) -> Result<()> {
        self.check_var(v)?;
        let var = &mut self.variables[v.0];
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::BoundInversion {
                name: var.name.clone(),
                lower,
                upper,
            });
        }
        var.lower = lower;
        var.upper = upper;
        Ok(())
    }

    pub fn add_constraint(&mut self, expr: LinearExpr, sense: Sense, rhs: f64, tag: impl Into<String>) -> Result<usize> {
        self.check_expr(&expr)?;
        if !rhs.is_finite() {
            return Err(Error::NonFinite("constraint right-hand side".into()));
        }
        self.constraints.push(Constraint {
            expr,
            sense,
            rhs,
            tag: tag.into(),
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn add_complementarity(&mut self, a: VarId, b: VarId) -> Result<()> {
        self.check_var(a)?;
        self.check_var(b)?;
        for v in [a, b] {
            let var = self.var(v);
            if var.kind != VarKind::Continuous || var.lower != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "complementarity variable {} must be continuous with lower bound 0",
                    var.name
                )));
            }
        }
        self.complementarities.push(ComplementarityPair { a, b });
        Ok(())
    }

    pub fn set_objective(&mut self, objective: Objective) -> Result<()> {
        self.check_expr(&objective.linear)?;
        for q in &objective.quadratic {
            self.check_var(q.i)?;
            self.check_var(q.j)?;
            if !q.coeff.is_finite() {
                return Err(Error::NonFinite("quadratic coefficient".into()));
            }
        }
        self.objective = objective;
        Ok(())
    }

    /// Linear program: no binaries, complementarities or quadratic terms.
    pub fn is_lp(&self) -> bool {
        self.num_binaries() == 0 && self.complementarities.is_empty() && self.objective.is_linear()
    }

    /// Every row is affine and the objective convex, so dropping integrality and
    /// complementarity leaves a convex program.
    pub fn has_convex_relaxation(&self) -> bool {
        self.objective.is_convex()
    }

    pub fn violations(&self, x: &[f64]) -> Violations {
        let mut out = Violations::default();
        for (var, &v) in self.variables.iter().zip(x) {
            out.bounds = out.bounds.max(var.lower - v).max(v - var.upper);
            if var.kind == VarKind::Binary {
                out.integrality = out.integrality.max(v.min(1.0 - v).max(0.0));
            }
        }
        for c in &self.constraints {
            out.rows = out.rows.max(c.violation(x));
        }
        for p in &self.complementarities {
            out.complementarity = out.complementarity.max(x[p.a.0].min(x[p.b.0]).max(0.0));
        }
        out
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.variables.len() && self.violations(x).max() <= tol
    }

    /// Copy with the given binaries fixed. Rows left with a single unfixed variable
    /// are turned into bounds on it, so `y + M z <= M` with `z = 1` pins `y <= 0`.
    pub fn fix_binaries(&self, assignment: &BTreeMap<VarId, bool>) -> Result<Model> {
        let mut out = self.clone();
        if assignment.is_empty() {
            return Ok(out);
        }
        let mut fixed = Vec::with_capacity(assignment.len());
        for (&v, &val) in assignment {
            out.check_var(v)?;
            if out.var(v).kind != VarKind::Binary {
                return Err(Error::InvalidModel(format!(
                    "{} is not a binary variable",
                    out.var(v).name
                )));
            }
            let b = if val { 1.0 } else { 0.0 };
            out.set_bounds(v, b, b)?;
            fixed.push(format!("{}={}", out.var(v).name, u8::from(val)));
        }
        out.propagate_singleton_rows()?;
        out.metadata.insert("fixed_binaries".into(), fixed.join(","));
        Ok(out)
    }

    /// Tightens bounds from rows whose other variables are all fixed.
    pub fn propagate_singleton_rows(&mut self) -> Result<()> {
        for _ in 0..8 {
            let mut changed = false;
            for ci in 0..self.constraints.len() {
                let c = &self.constraints[ci];
                let mut free = None;
                let mut rest = c.expr.constant;
                let mut count = 0;
                for (&v, &a) in &c.expr.terms {
                    let var = &self.variables[v.0];
                    if var.is_fixed() {
                        rest += a * var.lower;
                    } else {
                        count += 1;
                        free = Some((v, a));
                    }
                }
                let Some((v, a)) = free else { continue };
                if count != 1 {
                    continue;
                }
                let val = (c.rhs - rest) / a;
                let (mut lo, mut hi) = (self.variables[v.0].lower, self.variables[v.0].upper);
                let (upper_side, lower_side) = match (c.sense, a > 0.0) {
                    (Sense::Eq, _) => (true, true),
                    (Sense::Le, true) | (Sense::Ge, false) => (true, false),
                    (Sense::Le, false) | (Sense::Ge, true) => (false, true),
                };
                if upper_side && val < hi {
                    hi = val;
                }
                if lower_side && val > lo {
                    lo = val;
                }
                if self.variables[v.0].kind == VarKind::Binary {
                    lo = lo.max(0.0).ceil().min(1.0);
                    hi = hi.min(1.0).floor().max(0.0);
                }
                if lo > hi {
                    // Infeasible fixing; collapse to the tighter side so solvers report it.
                    if lo - hi <= 1e-12 * (1.0 + lo.abs()) {
                        hi = lo;
                    } else {
                        return Err(Error::Infeasible(format!(
                            "fixing binaries empties the domain of {}",
                            self.variables[v.0].name
                        )));
                    }
                }
                if lo != self.variables[v.0].lower || hi != self.variables[v.0].upper {
                    self.variables[v.0].lower = lo;
                    self.variables[v.0].upper = hi;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(())
    }

    /// Appends all variables, rows and pairs of `other`, prefixing names; returns the
    /// mapping from `other`'s ids to ids in `self`.
    pub fn append(&mut self, other: &Model, prefix: &str) -> Result<Vec<VarId>> {
        let map: Vec<VarId> = other
            .variables
            .iter()
            .map(|v| self.add_variable(format!("{prefix}{}", v.name), v.kind, v.lower, v.upper))
            .collect::<Result<_>>()?;
        let remap = |e: &LinearExpr| LinearExpr {
            terms: e.terms.iter().map(|(v, c)| (map[v.0], *c)).collect(),
            constant: e.constant,
        };
        for c in &other.constraints {
            self.add_constraint(remap(&c.expr), c.sense, c.rhs, c.tag.clone())?;
        }
        for p in &other.complementarities {
            self.add_complementarity(map[p.a.0], map[p.b.0])?;
        }
        Ok(map)
    }
}
