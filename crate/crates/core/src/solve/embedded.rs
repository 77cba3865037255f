//! Optimization directly over network inputs, with no per-neuron variables.
//!
//! An augmented Lagrangian handles `c(x, DNN(x)) <= 0`; each step is a projected
//! gradient step on the input box with Armijo backtracking. ReLU networks are
//! differentiated with the forward-pass convention, so at a kink every degenerate
//! neuron counts as inactive.

use log::debug;

use super::{SolveResult, SolveStatus, TraceRecord};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::problems::SmoothProblem;

/// Sufficient-decrease constant of the projected line search. Values near zero accept
/// steps that overshoot a minimizer and land at a mirror point of almost equal value.
const ARMIJO: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddedOptions {
    pub max_iter: usize,
    /// Converged when primal and dual infeasibility are both at most this.
    pub tol: f64,
    pub rho: f64,
    pub rho_growth: f64,
    /// Fraction of the run used to judge whether dual infeasibility still improves.
    pub plateau_window: f64,
}

impl Default for EmbeddedOptions {
    fn default() -> Self {
        Self {
            max_iter: 3000,
            tol: 1e-6,
            rho: 10.0,
            rho_growth: 10.0,
            plateau_window: 0.1,
        }
    }
}

struct Eval {
    f: f64,
    c: Vec<f64>,
    /// Gradient of the augmented Lagrangian with respect to `x`.
    grad: Vec<f64>,
    merit: f64,
}

fn evaluate(net: &Network, problem: &dyn SmoothProblem, x: &[f64], lambda: &[f64], rho: f64) -> Result<Eval> {
    let y = net.forward(x)?;
    let jac = net.jacobian_forward_convention(x)?;
    let f = problem.objective(x, &y);
    let (gx, gy) = problem.objective_gradient(x, &y);
    let c = problem.constraints(x, &y);
    let m = problem.num_constraints();
    let (n, p) = (x.len(), y.len());
    if gx.len() != n || gy.len() != p {
        return Err(Error::dim("objective gradient", n + p, gx.len() + gy.len()));
    }
    if c.len() != m {
        return Err(Error::dim("constraint values", m, c.len()));
    }
    let (cx, cy) = problem.constraint_jacobian(x, &y);
    if cx.shape() != (m, n) || cy.shape() != (m, p) {
        return Err(Error::dim("constraint Jacobian columns", n + p, cx.ncols() + cy.ncols()));
    }
    let mut wx = gx;
    let mut wy = gy;
    let mut merit = f;
    for i in 0..m {
        let shifted = lambda[i] + rho * c[i];
        if shifted > 0.0 {
            for j in 0..n {
                wx[j] += shifted * cx[(i, j)];
            }
            for k in 0..p {
                wy[k] += shifted * cy[(i, k)];
            }
            merit += (shifted * shifted - lambda[i] * lambda[i]) / (2.0 * rho);
        } else {
            merit -= lambda[i] * lambda[i] / (2.0 * rho);
        }
    }
    let back = jac.transpose() * nalgebra::DVector::from_vec(wy);
    let grad = wx.iter().zip(back.iter()).map(|(a, b)| a + b).collect();
    Ok(Eval { f, c, grad, merit })
}

fn project(x: &mut [f64], input_box: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(input_box) {
        *v = v.clamp(lo, hi);
    }
}

fn projected_step(x: &[f64], g: &[f64], t: f64, input_box: &[(f64, f64)]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - t * b).collect();
    project(&mut out, input_box);
    out
}

/// Minimizes `f(x, DNN(x))` subject to `c(x, DNN(x)) <= 0` and `x` in `input_box`.
///
/// Returns the result (whose `point` is the input `x` and whose `duals` are the
/// constraint multipliers) and one trace record per iteration. Dual infeasibility is
/// the max-norm of the projected Lagrangian gradient step `x - P(x - ∇L)`.
pub fn embedded_solve(
    net: &Network,
    problem: &dyn SmoothProblem,
    input_box: &[(f64, f64)],
    start: &[f64],
    opts: &EmbeddedOptions,
) -> Result<(SolveResult, Vec<TraceRecord>)> {
    let n = net.input_dim();
    if problem.input_dim() != n || problem.output_dim() != net.output_dim() {
        return Err(Error::dim("problem dimensions", n + net.output_dim(), problem.input_dim() + problem.output_dim()));
    }
    if input_box.len() != n {
        return Err(Error::dim("input box", n, input_box.len()));
    }
    if start.len() != n {
        return Err(Error::dim("start point", n, start.len()));
    }
    if let Some(&(lo, hi)) = input_box.iter().find(|(lo, hi)| lo > hi) {
        return Err(Error::InvalidSpec(format!("input box [{lo}, {hi}] is empty")));
    }
    let m = problem.num_constraints();
    let mut x = start.to_vec();
    project(&mut x, input_box);
    let mut lambda = vec![0.0; m];
    let mut rho = opts.rho;
    let mut step = 1.0;
    let mut trace = Vec::new();
    let mut status = SolveStatus::LimitReached;
    let mut last_primal = f64::INFINITY;
    let mut eval = evaluate(net, problem, &x, &lambda, rho)?;
    let mut dual_inf;
    let mut primal_inf;
    let mut iter = 0;
    loop {
        iter += 1;
        primal_inf = eval.c.iter().fold(0.0f64, |a, v| a.max(*v));
        let unit = projected_step(&x, &eval.grad, 1.0, input_box);
        dual_inf = x.iter().zip(&unit).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        trace.push(TraceRecord {
            iter,
            objective: eval.f,
            primal_inf,
            dual_inf,
        });
        if primal_inf <= opts.tol && dual_inf <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if iter >= opts.max_iter {
            break;
        }
        if dual_inf <= opts.tol && m > 0 {
            // Inner problem solved but constraints violated: update multipliers.
            for i in 0..m {
                lambda[i] = (lambda[i] + rho * eval.c[i]).max(0.0);
            }
            if primal_inf > 0.25 * last_primal {
                rho *= opts.rho_growth;
            }
            last_primal = primal_inf;
            eval = evaluate(net, problem, &x, &lambda, rho)?;
            continue;
        }
        let mut t = step;
        let accepted = loop {
            let trial = projected_step(&x, &eval.grad, t, input_box);
            let moved: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            if moved == 0.0 {
                break None;
            }
            let e = evaluate(net, problem, &trial, &lambda, rho)?;
            if e.merit <= eval.merit - ARMIJO * moved / t {
                break Some((trial, e));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        match accepted {
            Some((trial, e)) => {
                x = trial;
                eval = e;
                step = (2.0 * t).min(1e8);
            }
            None if m > 0 && primal_inf > opts.tol => {
                for i in 0..m {
                    lambda[i] = (lambda[i] + rho * eval.c[i]).max(0.0);
                }
                rho *= opts.rho_growth;
                eval = evaluate(net, problem, &x, &lambda, rho)?;
            }
            None => {
                debug!("line search failed at iteration {iter}, dual infeasibility {dual_inf:e}");
                status = SolveStatus::Stalled;
                break;
            }
        }
    }
    if status == SolveStatus::LimitReached && plateaued(&trace, opts.plateau_window) {
        status = SolveStatus::Stalled;
    }
    let multipliers = (0..m).map(|i| (lambda[i] + rho * eval.c[i]).max(0.0)).collect();
    Ok((
        SolveResult {
            status,
            objective: eval.f,
            best_bound: f64::NAN,
            iterations: iter,
            duals: multipliers,
            kkt_residual: Some(dual_inf.max(primal_inf)),
            point: x,
            ..SolveResult::empty(status)
        },
        trace,
    ))
}

/// Whether the best dual infeasibility of the final window is no better than half the
/// best one before it.
fn plateaued(trace: &[TraceRecord], window: f64) -> bool {
    let w = ((trace.len() as f64 * window).ceil() as usize).clamp(1, trace.len());
    let split = trace.len() - w;
    if split == 0 {
        return false;
    }
    let best = |r: &[TraceRecord]| r.iter().fold(f64::INFINITY, |a, t| a.min(t.dual_inf));
    best(&trace[split..]) >= 0.5 * best(&trace[..split])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};
    use crate::problems::{AffineRow, SurrogateProblem};
    use nalgebra::DMatrix;

    /// `2 act(x1 - 0.3) + 2 act(x2 + 0.2)`; with the objective `y - (x1 - 0.3) - (x2 + 0.2)`
    /// this is `|x1 - 0.3| + |x2 + 0.2|` for ReLU and `Σ t tanh(t / 2)` for swish.
    fn kink_net(act: Activation) -> Network {
        Network::new(
            2,
            vec![
                Layer::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![-0.3, 0.2], act).unwrap(),
                Layer::from_rows(&[vec![2.0, 2.0]], vec![0.0], Activation::Identity).unwrap(),
            ],
        )
        .unwrap()
    }

    fn kink_problem() -> SurrogateProblem {
        SurrogateProblem::linear(vec![(-1.0, 1.0); 2], vec![1.0])
            .with_gx(vec![-1.0, -1.0])
            .with_constant(0.3 - 0.2)
    }

    #[test]
    fn swish_converges_relu_does_not() {
        let p = kink_problem();
        let start = [-0.6180339887, std::f64::consts::FRAC_1_SQRT_2];
        let (r, trace) = embedded_solve(&kink_net(Activation::Swish { beta: 1.0 }), &p, &p.input_box, &start, &EmbeddedOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.point[0] - 0.3).abs() < 1e-5 && (r.point[1] + 0.2).abs() < 1e-5);
        assert!(trace.last().unwrap().dual_inf <= 1e-6);

        let (r, trace) = embedded_solve(&kink_net(Activation::Relu), &p, &p.input_box, &start, &EmbeddedOptions::default()).unwrap();
        assert_ne!(r.status, SolveStatus::Optimal);
        assert!(trace.iter().all(|t| t.dual_inf > 1e-6));
        assert!(r.objective < 1e-3);
    }

    #[test]
    fn linear_net_linear_objective_goes_to_corner() {
        // β = 0 swish is a/2, so the output is x1 + x2 - 0.1 and f is linear.
        let net = kink_net(Activation::Swish { beta: 0.0 });
        let p = SurrogateProblem::linear(vec![(-1.0, 1.0); 2], vec![1.0]).with_gx(vec![1.0, -3.0]);
        let (r, _) = embedded_solve(&net, &p, &p.input_box, &[0.0, 0.0], &EmbeddedOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.point, vec![-1.0, 1.0]);
    }

    #[test]
    fn constrained_quadratic() {
        // min x1^2 + x2^2 s.t. x1 + x2 >= 1 on a linear identity-ish net.
        let net = Network::new(2, vec![Layer::from_rows(&[vec![1.0, 0.0]], vec![0.0], Activation::Identity).unwrap()]).unwrap();
        let p = SurrogateProblem::linear(vec![(-5.0, 5.0); 2], vec![0.0])
            .with_qx(DMatrix::identity(2, 2))
            .with_row(AffineRow {
                ax: vec![-1.0, -1.0],
                ay: vec![0.0],
                rhs: -1.0,
            });
        let (r, trace) = embedded_solve(&net, &p, &p.input_box, &[2.0, -3.0], &EmbeddedOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "{:?}", trace.last());
        assert!((r.point[0] - 0.5).abs() < 1e-5 && (r.point[1] - 0.5).abs() < 1e-5);
        assert!((r.duals[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn dimension_checks() {
        let p = SurrogateProblem::linear(vec![(-1.0, 1.0); 3], vec![1.0]);
        let net = kink_net(Activation::Relu);
        assert!(matches!(
            embedded_solve(&net, &p, &p.input_box, &[0.0; 3], &EmbeddedOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
