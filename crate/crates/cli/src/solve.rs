use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use log::warn;
use serde::Deserialize;
use surropt::io::{load_problem, write_trace, ProblemKind};
use surropt::problems::WarmstartSolution;
use surropt::solve::{
    embedded_solve, milp_solve, mpcc_local_solve, pattern_enumerate_solve, switches_from_complementarities,
    EmbeddedOptions, MilpOptions, PatternOptions, PatternStart, SolveResult,
};
use surropt::stationarity::{multipliers_from_solution, MpccMultipliers};

use crate::encode::encode_opts;
use crate::problem::{auto_warmstart, box_point, encode, Built};
use crate::report::{finite, Report};
use crate::{Global, SolveArgs, SolverArg};

/// Warmstart files hold either a bare point or an object with a `point` field.
#[derive(Deserialize)]
#[serde(untagged)]
enum WarmstartFile {
    Bare(Vec<f64>),
    Full { point: Vec<f64> },
}

fn read_warmstart(path: &Path) -> Result<WarmstartSolution> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let point = match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
        WarmstartFile::Bare(p) | WarmstartFile::Full { point: p } => p,
    };
    Ok(WarmstartSolution {
        point,
        objective: f64::NAN,
        provenance: format!("file {}", path.display()),
    })
}

fn solver_name(s: SolverArg) -> &'static str {
    match s {
        SolverArg::Milp => "milp",
        SolverArg::MpccLocal => "mpcc-local",
        SolverArg::Embedded => "embedded",
        SolverArg::Oracle => "oracle",
    }
}

pub fn run(g: &Global, a: &SolveArgs) -> Result<ExitCode> {
    if a.solver == SolverArg::Embedded {
        return run_embedded(g, a);
    }
    if a.trace.is_some() {
        bail!("--trace is only written by the embedded solver");
    }
    let opts = encode_opts(g, &a.model, None);
    let enc = encode(&a.model.input, &opts)?;
    let built = &enc.built;
    let model = built.model();

    let mut warmstart = match a.warmstart.as_deref() {
        None => None,
        Some("auto") => Some(auto_warmstart(built, g.seed)?),
        Some(path) => Some(read_warmstart(Path::new(path))?),
    };
    if let Some(ws) = &mut warmstart {
        if ws.point.len() != model.num_vars() {
            bail!("warmstart has {} values, the model has {} variables", ws.point.len(), model.num_vars());
        }
        let v = model.violations(&ws.point).max();
        if v > 1e-6 {
            warn!("warmstart violates the model by {v:.3e}");
        }
        if ws.objective.is_nan() {
            ws.objective = model.objective.value(&ws.point);
        }
    }

    let milp = MilpOptions {
        node_limit: a.node_limit.unwrap_or(MilpOptions::default().node_limit),
        time_limit: a.time_limit.map(Duration::from_secs_f64),
        warmstart: warmstart.as_ref().map(|w| w.point.clone()),
        ..MilpOptions::default()
    };
    let pattern_opts = PatternOptions {
        milp: MilpOptions {
            warmstart: None,
            ..milp.clone()
        },
        ..PatternOptions::default()
    };
    let random = a.random_start.then_some(g.seed);

    let start = Instant::now();
    let result: SolveResult = match a.solver {
        SolverArg::Milp => milp_solve(model, &milp)?,
        SolverArg::Oracle => {
            let sw = switches_from_complementarities(model);
            if sw.is_empty() && model.num_binaries() > 0 {
                bail!("the oracle enumerates complementarity patterns; use --formulation mpcc");
            }
            pattern_enumerate_solve(model, &sw, &pattern_opts)?.result
        }
        SolverArg::MpccLocal => {
            let sw = switches_from_complementarities(model);
            if sw.is_empty() && model.num_binaries() > 0 {
                bail!("the local search walks complementarity patterns; use --formulation mpcc");
            }
            let start = match (&warmstart, built) {
                (Some(ws), _) => PatternStart::Point(ws.point.clone()),
                (None, Built::Surrogate { net, problem, sm }) => {
                    let mut point = vec![0.0; model.num_vars()];
                    sm.handles.fill_forward(net, &box_point(&problem.input_box, random), &mut point)?;
                    PatternStart::Point(point)
                }
                (None, Built::Engine { .. } | Built::Attack { .. }) => {
                    PatternStart::Point(auto_warmstart(built, g.seed)?.point)
                }
                (None, _) => PatternStart::Pattern(vec![false; sw.len()]),
            };
            mpcc_local_solve(model, &sw, start, &pattern_opts)?.result
        }
        SolverArg::Embedded => unreachable!("handled by run_embedded"),
    };
    let seconds = start.elapsed().as_secs_f64();

    let input: Option<Vec<f64>> = match built.input_vars() {
        Some(vars) if !result.point.is_empty() => Some(vars.iter().map(|v| result.point[v.0]).collect()),
        _ => None,
    };
    let multipliers: Option<MpccMultipliers> = match (a.solver, built) {
        (SolverArg::Oracle | SolverArg::MpccLocal, Built::Surrogate { problem, sm, .. }) if !result.point.is_empty() => {
            multipliers_from_solution(problem, sm, &result).ok()
        }
        _ => None,
    };

    let mut r = Report::new();
    r.field("kind", enc.kind)
        .field("solver", solver_name(a.solver))
        .field("status", result.status)
        .field("objective", finite(result.objective))
        .field("best_bound", finite(result.best_bound))
        .field("nodes", result.nodes)
        .field("iterations", result.iterations)
        .field("seconds", seconds)
        .field("warmstart_objective", warmstart.as_ref().and_then(|w| finite(w.objective)))
        .field("warmstart", warmstart.as_ref().map(|w| w.provenance.clone()))
        .field("input", &input)
        .json_only("point", &result.point);

    if let Some(path) = &a.output {
        let names: BTreeMap<&str, f64> = model
            .variables
            .iter()
            .zip(&result.point)
            .map(|(v, x)| (v.name.as_str(), *x))
            .collect();
        write_solution(
            path,
            serde_json::json!({
                "status": result.status,
                "objective": finite(result.objective),
                "best_bound": finite(result.best_bound),
                "input": input,
                "point": result.point,
                "multipliers": multipliers,
                "variables": names,
            }),
        )?;
    }
    r.print(g.json);
    Ok(if result.point.is_empty() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn write_solution(path: &Path, doc: serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// The embedded solver works on the network directly, so no model is built and swish
/// networks are allowed.
fn run_embedded(g: &Global, a: &SolveArgs) -> Result<ExitCode> {
    if a.warmstart.is_some() || a.model.hull.is_some() {
        bail!("--warmstart and --hull do not apply to the embedded solver");
    }
    let ProblemKind::Surrogate { net, problem } = load_problem(&a.model.input)
        .with_context(|| format!("loading {}", a.model.input.display()))?
    else {
        bail!("the embedded solver handles surrogate specs only");
    };
    let opts = EmbeddedOptions {
        max_iter: a.max_iter.unwrap_or(EmbeddedOptions::default().max_iter),
        tol: a.tol.unwrap_or(EmbeddedOptions::default().tol),
        ..EmbeddedOptions::default()
    };
    let x0 = box_point(&problem.input_box, a.random_start.then_some(g.seed));
    let start = Instant::now();
    let (result, trace) = embedded_solve(&net, &problem, &problem.input_box, &x0, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    if let Some(path) = &a.trace {
        write_trace(&trace, path).with_context(|| format!("writing {}", path.display()))?;
    }
    let last = trace.last();
    let mut r = Report::new();
    r.field("kind", "surrogate")
        .field("solver", solver_name(a.solver))
        .field("status", result.status)
        .field("objective", finite(result.objective))
        .field("iterations", result.iterations)
        .field("seconds", seconds)
        .field("primal_inf", last.map(|t| t.primal_inf))
        .field("dual_inf", last.map(|t| t.dual_inf))
        .field("trace_records", trace.len())
        .field("input", &result.point);
    if let Some(path) = &a.output {
        write_solution(
            path,
            serde_json::json!({
                "status": result.status,
                "objective": finite(result.objective),
                "input": result.point,
            }),
        )?;
    }
    r.print(g.json);
    Ok(ExitCode::SUCCESS)
}
