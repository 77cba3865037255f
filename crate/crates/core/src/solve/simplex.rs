//! Dense bounded-variable primal simplex.
//!
//! Rows `A x (<=|=|>=) b` get one slack column each (`A x + s = b`, with the sign of
//! `s` fixed by the row sense), so the slack basis is always a valid start and the
//! slack block of the tableau is `B^-1`. Phase 1 minimizes the sum of bound
//! violations of basic variables with costs recomputed every iteration; feasible
//! variables are never pushed out of their bounds. Pricing is Dantzig with a
//! Harris-style ratio test, switching to Bland's rule after a run of degenerate
//! pivots.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Sense;

pub const FEAS_TOL: f64 = 1e-9;
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const RECOMPUTE_EVERY: usize = 50;
const RESIDUAL_TOL: f64 = 1e-9;

/// `min cost·x  s.t.  a x (sense) rhs,  lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub a: DMatrix<f64>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_cols(&self) -> usize {
        self.a.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
    /// Nonbasic without finite bounds.
    Free,
}

/// Basis snapshot usable to restart a solve after bounds or costs change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    basic: Vec<usize>,
    at_upper: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct Simplex {
    m: usize,
    n: usize,
    /// `[A_s | I]` with rows scaled to unit max-norm.
    full: DMatrix<f64>,
    b: Vec<f64>,
    row_scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    cost_scale: f64,
    tab: DMatrix<f64>,
    beta0: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    iterations: usize,
    pub max_iterations: usize,
}

impl Simplex {
    pub fn new(p: &LpProblem) -> Result<Self> {
        let (m, n) = (p.num_rows(), p.num_cols());
        if p.senses.len() != m || p.rhs.len() != m {
            return Err(Error::dim("LP rows", m, p.senses.len().min(p.rhs.len())));
        }
        if p.cost.len() != n || p.lower.len() != n || p.upper.len() != n {
            return Err(Error::dim("LP columns", n, p.cost.len()));
        }
        if p.a.iter().chain(&p.rhs).chain(&p.cost).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LP data".into()));
        }
        for j in 0..n {
            if p.lower[j].is_nan() || p.upper[j].is_nan() || p.lower[j] > p.upper[j] {
                return Err(Error::BoundInversion {
                    name: format!("column {j}"),
                    lower: p.lower[j],
                    upper: p.upper[j],
                });
            }
        }
        let ncols = n + m;
        let mut full = DMatrix::<f64>::zeros(m, ncols);
        let mut b = vec![0.0; m];
        let mut row_scale = vec![1.0; m];
        for i in 0..m {
            let mx = (0..n).fold(0.0f64, |acc, j| acc.max(p.a[(i, j)].abs()));
            let sc = if mx > 0.0 { 1.0 / mx } else { 1.0 };
            row_scale[i] = sc;
            for j in 0..n {
                full[(i, j)] = p.a[(i, j)] * sc;
            }
            full[(i, n + i)] = 1.0;
            b[i] = p.rhs[i] * sc;
        }
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        for s in &p.senses {
            let (lo, hi) = match s {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
        }
        let mut status = Vec::with_capacity(ncols);
        let mut x = vec![0.0; ncols];
        for j in 0..n {
            let (st, v) = nonbasic_start(lower[j], upper[j]);
            status.push(st);
            x[j] = v;
        }
        status.extend(std::iter::repeat_n(Status::Basic, m));
        let mut s = Self {
            m,
            n,
            tab: full.clone(),
            full,
            beta0: b.clone(),
            b,
            row_scale,
            lower,
            upper,
            cost: Vec::new(),
            cost_scale: 1.0,
            x,
            status,
            basis: (n..ncols).collect(),
            iterations: 0,
            max_iterations: 50 * ncols + 10_000,
        };
        s.set_cost(&p.cost);
        s.compute_basics();
        Ok(s)
    }

    /// Restarts from a stored basis, falling back to the slack basis when the stored
    /// one is singular.
    pub fn with_basis(p: &LpProblem, basis: &Basis) -> Result<Self> {
        let mut s = Self::new(p)?;
        if basis.basic.len() != s.m || basis.at_upper.len() != s.n + s.m {
            return Ok(s);
        }
        let saved = (s.status.clone(), s.basis.clone(), s.x.clone());
        for j in 0..s.n + s.m {
            s.status[j] = if basis.at_upper[j] && s.upper[j].is_finite() {
                Status::Upper
            } else {
                nonbasic_start(s.lower[j], s.upper[j]).0
            };
            s.x[j] = match s.status[j] {
                Status::Upper => s.upper[j],
                Status::Lower => s.lower[j],
                _ => 0.0,
            };
        }
        for &j in &basis.basic {
            s.status[j] = Status::Basic;
        }
        s.basis = basis.basic.clone();
        if s.refactor().is_err() {
            (s.status, s.basis, s.x) = saved;
            s.tab = s.full.clone();
            s.beta0 = s.b.clone();
        }
        s.compute_basics();
        Ok(s)
    }

    pub fn basis(&self) -> Basis {
        Basis {
            basic: self.basis.clone(),
            at_upper: self.status.iter().map(|s| *s == Status::Upper).collect(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Replaces the (min-form) structural costs; the current basis stays primal feasible.
    pub fn set_cost(&mut self, cost: &[f64]) {
        let mx = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        self.cost_scale = if mx > 0.0 { mx } else { 1.0 };
        self.cost = cost.iter().map(|c| c / self.cost_scale).collect();
        self.cost.extend(std::iter::repeat_n(0.0, self.m));
    }

    /// Changes the bounds of structural column `j`.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.set_bounds_many(&[(j, lower, upper)]);
    }

    /// Changes several structural bounds at once.
    pub fn set_bounds_many(&mut self, changes: &[(usize, f64, f64)]) {
        for &(j, lower, upper) in changes {
            self.lower[j] = lower;
            self.upper[j] = upper;
            if self.status[j] != Status::Basic {
                let keep_upper = self.status[j] == Status::Upper && upper.is_finite();
                let (st, v) = if keep_upper { (Status::Upper, upper) } else { nonbasic_start(lower, upper) };
                self.status[j] = st;
                self.x[j] = v;
            }
        }
        if !changes.is_empty() {
            self.compute_basics();
        }
    }

    /// Structural values.
    pub fn primal(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    /// Row duals in the min-form convention `cost = Aᵀ y + r`.
    pub fn row_duals(&self) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&k| self.cost[k]).collect();
        (0..self.m)
            .map(|i| {
                let col = self.tab.column(self.n + i);
                let y: f64 = cb.iter().zip(col.iter()).map(|(c, t)| c * t).sum();
                y * self.row_scale[i] * self.cost_scale
            })
            .collect()
    }

    /// Reduced costs of structural columns (zero for basic ones).
    pub fn reduced_costs(&self) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&k| self.cost[k]).collect();
        (0..self.n)
            .map(|j| {
                if self.status[j] == Status::Basic {
                    return 0.0;
                }
                let col = self.tab.column(j);
                let d = self.cost[j] - cb.iter().zip(col.iter()).map(|(c, t)| c * t).sum::<f64>();
                d * self.cost_scale
            })
            .collect()
    }

    fn compute_basics(&mut self) {
        let mut v = self.beta0.clone();
        for k in 0..self.n + self.m {
            if self.status[k] == Status::Basic || self.x[k] == 0.0 {
                continue;
            }
            let xk = self.x[k];
            for (vi, t) in v.iter_mut().zip(self.tab.column(k).iter()) {
                *vi -= t * xk;
            }
        }
        for (r, &k) in self.basis.iter().enumerate() {
            self.x[k] = v[r];
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let mut bmat = DMatrix::<f64>::zeros(self.m, self.m);
        for (r, &k) in self.basis.iter().enumerate() {
            bmat.set_column(r, &self.full.column(k));
        }
        let lu = bmat.lu();
        let tab = lu
            .solve(&self.full)
            .ok_or_else(|| Error::Numerical("singular basis during refactorization".into()))?;
        if tab.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite tableau after refactorization".into()));
        }
        let beta0 = lu
            .solve(&nalgebra::DVector::from_column_slice(&self.b))
            .ok_or_else(|| Error::Numerical("singular basis during refactorization".into()))?;
        self.tab = tab;
        self.beta0 = beta0.iter().copied().collect();
        Ok(())
    }

    fn row_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m {
            let mut acc = 0.0;
            for k in 0..self.n {
                acc += self.full[(i, k)] * self.x[k];
            }
            acc += self.x[self.n + i];
            worst = worst.max((acc - self.b[i]).abs());
        }
        worst
    }

    fn infeasibility(&self, k: usize) -> f64 {
        let v = self.x[k];
        if v < self.lower[k] - FEAS_TOL {
            v - self.lower[k]
        } else if v > self.upper[k] + FEAS_TOL {
            v - self.upper[k]
        } else {
            0.0
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let colq: Vec<f64> = self.tab.column(q).iter().copied().collect();
        let piv = colq[r];
        let ncols = self.n + self.m;
        for k in 0..ncols {
            self.tab[(r, k)] /= piv;
        }
        self.beta0[r] /= piv;
        for k in 0..ncols {
            let f = self.tab[(r, k)];
            if f == 0.0 {
                continue;
            }
            let mut col = self.tab.column_mut(k);
            for i in 0..self.m {
                if i != r {
                    col[i] -= colq[i] * f;
                }
            }
        }
        let f = self.beta0[r];
        for i in 0..self.m {
            if i != r {
                self.beta0[i] -= colq[i] * f;
            }
        }
        let mut col = self.tab.column_mut(q);
        col.fill(0.0);
        col[r] = 1.0;
    }

    /// Runs phases 1 and 2 from the current basis.
    pub fn solve(&mut self) -> Result<LpOutcome> {
        let ncols = self.n + self.m;
        let mut degenerate_run = 0usize;
        let mut since_recompute = 0usize;
        let mut refactored_at_end = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Ok(LpOutcome::IterationLimit);
            }
            if since_recompute >= RECOMPUTE_EVERY {
                self.compute_basics();
                since_recompute = 0;
                if self.row_residual() > RESIDUAL_TOL {
                    self.refactor()?;
                    self.compute_basics();
                }
            }
            let cb: Vec<f64> = self
                .basis
                .iter()
                .map(|&k| {
                    let inf = self.infeasibility(k);
                    if inf < 0.0 {
                        -1.0
                    } else if inf > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let phase1 = cb.iter().any(|&c| c != 0.0);
            let cb: Vec<f64> = if phase1 { cb } else { self.basis.iter().map(|&k| self.cost[k]).collect() };
            let bland = degenerate_run >= DEGENERATE_RUN;

            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None;
            for k in 0..ncols {
                let st = self.status[k];
                if st == Status::Basic || self.lower[k] == self.upper[k] {
                    continue;
                }
                let ck = if phase1 { 0.0 } else { self.cost[k] };
                let d = ck - cb.iter().zip(self.tab.column(k).iter()).map(|(c, t)| c * t).sum::<f64>();
                let dir = if d < -OPT_TOL && matches!(st, Status::Lower | Status::Free) {
                    1.0
                } else if d > OPT_TOL && matches!(st, Status::Upper | Status::Free) {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    entering = Some((k, dir, d));
                    break;
                }
                if entering.is_none_or(|(_, _, best)| d.abs() > best.abs()) {
                    entering = Some((k, dir, d));
                }
            }

            let Some((q, dir, dq)) = entering else {
                self.compute_basics();
                since_recompute = 0;
                if self.row_residual() > RESIDUAL_TOL && !refactored_at_end {
                    self.refactor()?;
                    self.compute_basics();
                    refactored_at_end = true;
                    continue;
                }
                let still_infeasible = self.basis.iter().any(|&k| self.infeasibility(k) != 0.0);
                if still_infeasible {
                    if phase1 {
                        return Ok(LpOutcome::Infeasible);
                    }
                    continue;
                }
                return Ok(LpOutcome::Optimal);
            };

            // Ratio test: basic i moves at rate -dir * tab[i][q].
            let col: Vec<f64> = self.tab.column(q).iter().copied().collect();
            let mut limits: Vec<(usize, f64, f64, Status)> = Vec::new();
            for (i, &a) in col.iter().enumerate() {
                let rate = -dir * a;
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let k = self.basis[i];
                let v = self.x[k];
                let (lo, hi) = (self.lower[k], self.upper[k]);
                let (target, leave_as) = if rate < 0.0 {
                    if v > hi + FEAS_TOL {
                        (hi, Status::Upper)
                    } else if v < lo - FEAS_TOL || lo == f64::NEG_INFINITY {
                        continue;
                    } else {
                        (lo, Status::Lower)
                    }
                } else if v < lo - FEAS_TOL {
                    (lo, Status::Lower)
                } else if v > hi + FEAS_TOL || hi == f64::INFINITY {
                    continue;
                } else {
                    (hi, Status::Upper)
                };
                let t = ((target - v) / rate).max(0.0);
                limits.push((i, t, rate.abs(), leave_as));
            }
            let flip = if dir > 0.0 {
                self.upper[q] - self.x[q]
            } else {
                self.x[q] - self.lower[q]
            };
            let choice = if bland {
                limits
                    .iter()
                    .min_by(|a, b| {
                        a.1.partial_cmp(&b.1)
                            .unwrap()
                            .then(self.basis[a.0].cmp(&self.basis[b.0]))
                    })
                    .copied()
            } else {
                // Harris: relax every limit by the feasibility tolerance, then take the
                // largest pivot among rows whose exact ratio fits under the relaxed minimum.
                let relaxed = limits
                    .iter()
                    .map(|&(_, t, r, _)| t + FEAS_TOL / r)
                    .fold(f64::INFINITY, f64::min);
                limits
                    .iter()
                    .filter(|l| l.1 <= relaxed)
                    .max_by(|a, b| a.2.partial_cmp(&b.2).unwrap())
                    .copied()
            };
            let step = choice.map_or(f64::INFINITY, |c| c.1);
            self.iterations += 1;
            since_recompute += 1;
            if flip <= step {
                if !flip.is_finite() {
                    if phase1 {
                        return Err(Error::Numerical("unbounded phase-1 ray".into()));
                    }
                    return Ok(LpOutcome::Unbounded);
                }
                self.shift(q, dir, flip);
                self.status[q] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                degenerate_run = if flip * dq.abs() < 1e-12 { degenerate_run + 1 } else { 0 };
                continue;
            }
            let (r, t, _, leave_as) = choice.expect("finite step has a limiting row");
            self.shift(q, dir, t);
            let p = self.basis[r];
            self.x[p] = if leave_as == Status::Upper { self.upper[p] } else { self.lower[p] };
            self.status[p] = leave_as;
            self.pivot(r, q);
            self.basis[r] = q;
            self.status[q] = Status::Basic;
            degenerate_run = if t * dq.abs() < 1e-12 { degenerate_run + 1 } else { 0 };
        }
    }

    fn shift(&mut self, q: usize, dir: f64, t: f64) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for i in 0..self.m {
            let a = self.tab[(i, q)];
            if a != 0.0 {
                let k = self.basis[i];
                self.x[k] -= dir * t * a;
            }
        }
    }
}

fn nonbasic_start(lower: f64, upper: f64) -> (Status, f64) {
    if lower.is_finite() {
        (Status::Lower, lower)
    } else if upper.is_finite() {
        (Status::Upper, upper)
    } else {
        (Status::Free, 0.0)
    }
}
