//! Turns a problem spec (or an exported LP file) into a model ready for a solver.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use rand::Rng;
use surropt::encode::{convex_hull_constraints, tighten_bounds, BigMBounds, BoundMethod, Formulation, TightenOptions};
use surropt::io::{bounds_cache_path, load_bounds_cache, load_problem, load_training, read_lp, save_bounds_cache, ProblemKind};
use surropt::model::{Model, VarId};
use surropt::nn::random::seeded_rng;
use surropt::problems::{
    build_attack, build_engine, build_oilwell, feasible_point_attack, warmstart_engine, AttackModel, EngineModel,
    OilwellModel, SurrogateModel, WarmstartSolution,
};
use surropt::Network;

/// Shared encoding settings from the command line.
#[derive(Clone, Debug)]
pub struct EncodeOpts {
    pub formulation: Formulation,
    pub tighten: BoundMethod,
    pub threads: usize,
    pub hull: Option<PathBuf>,
    /// Where to read and write the bounds cache, if anywhere.
    pub bounds_cache: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct BoundsInfo {
    pub method: Option<BoundMethod>,
    pub cached: bool,
    pub path: Option<PathBuf>,
}

pub enum Built {
    Surrogate {
        net: Network,
        problem: surropt::problems::SurrogateProblem,
        sm: SurrogateModel,
    },
    Engine {
        spec: surropt::problems::EngineSpec,
        em: EngineModel,
        training: Option<Vec<Vec<f64>>>,
        compression: Option<f64>,
    },
    Attack {
        spec: surropt::problems::AttackSpec,
        am: AttackModel,
    },
    Oilwell(OilwellModel),
    /// A model read back from LP text.
    Plain(Model),
}

pub struct Encoded {
    pub built: Built,
    pub kind: &'static str,
    pub bounds: BoundsInfo,
    /// Convex-hull weight variables added by `--hull`.
    pub hull_weights: usize,
}

impl Built {
    pub fn model(&self) -> &Model {
        match self {
            Built::Surrogate { sm, .. } => &sm.model,
            Built::Engine { em, .. } => &em.model,
            Built::Attack { am, .. } => &am.model,
            Built::Oilwell(om) => &om.model,
            Built::Plain(m) => m,
        }
    }

    /// Network input variables, for reporting the solution's inputs.
    pub fn input_vars(&self) -> Option<&[VarId]> {
        match self {
            Built::Surrogate { sm, .. } => Some(&sm.handles.input_vars),
            Built::Attack { am, .. } => Some(&am.pixels),
            _ => None,
        }
    }
}

fn is_lp_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("lp"))
}

/// Bounds for one network over `input_box`, reusing a matching cache file.
fn network_bounds(net: &Network, input_box: &[(f64, f64)], opts: &EncodeOpts, info: &mut BoundsInfo) -> Result<BigMBounds> {
    info.method = Some(opts.tighten);
    if let Some(path) = &opts.bounds_cache {
        info.path = Some(path.clone());
        if path.exists() {
            if let Some(b) = load_bounds_cache(path, net, input_box)? {
                if b.method == opts.tighten {
                    info!("reusing bounds from {}", path.display());
                    info.cached = true;
                    return Ok(b);
                }
            }
        }
    }
    let topts = TightenOptions {
        mode: opts.tighten,
        threads: opts.threads.max(1),
        ..TightenOptions::default()
    };
    let bounds = tighten_bounds(net, input_box, &topts)?;
    if let Some(path) = &opts.bounds_cache {
        save_bounds_cache(path, net, input_box, &bounds)?;
    }
    Ok(bounds)
}

pub fn encode(path: &Path, opts: &EncodeOpts) -> Result<Encoded> {
    if is_lp_file(path) {
        if opts.hull.is_some() {
            bail!("--hull needs a problem spec, not an LP file");
        }
        let model = read_lp(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(Encoded {
            built: Built::Plain(model),
            kind: "lp",
            bounds: BoundsInfo::default(),
            hull_weights: 0,
        });
    }
    let kind = load_problem(path).with_context(|| format!("loading {}", path.display()))?;
    let name = kind.name();
    let hull = opts
        .hull
        .as_ref()
        .map(|p| load_training(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let mip = opts.formulation == Formulation::Mip;
    let mut bounds = BoundsInfo::default();
    let mut hull_weights = 0;
    let built = match kind {
        ProblemKind::Surrogate { net, problem } => {
            let b = if mip { Some(network_bounds(&net, &problem.input_box, opts, &mut bounds)?) } else { None };
            let mut sm = problem.build_model(&net, opts.formulation, b.as_ref())?;
            if let Some(t) = &hull {
                let pts = t.inputs(net.input_dim())?;
                let inputs = sm.handles.input_vars.clone();
                hull_weights = convex_hull_constraints(&mut sm.model, &inputs, &pts, "hull.")?.len();
            }
            Built::Surrogate { net, problem, sm }
        }
        ProblemKind::Engine {
            mut spec,
            training,
            warmstart_compression,
        } => {
            let training = match (hull, training) {
                (Some(t), _) | (None, Some(t)) => Some(t),
                (None, None) => None,
            };
            if opts.hull.is_some() {
                spec.hull_points = training.as_ref().map(|t| t.inputs(3)).transpose()?;
            }
            let b = if mip { Some(network_bounds(&spec.net, &spec.input_box(), opts, &mut bounds)?) } else { None };
            let em = build_engine(&spec, opts.formulation, b.as_ref())?;
            hull_weights = em.hull_weights.iter().map(Vec::len).sum();
            let training = training.map(|t| t.inputs(3)).transpose()?;
            Built::Engine {
                spec,
                em,
                training,
                compression: warmstart_compression,
            }
        }
        ProblemKind::Attack(spec) => {
            if hull.is_some() {
                bail!("--hull is not supported for attack problems");
            }
            let b = if mip { Some(network_bounds(&spec.net, &spec.pixel_box(), opts, &mut bounds)?) } else { None };
            let am = build_attack(&spec, opts.formulation, b.as_ref())?;
            Built::Attack { spec, am }
        }
        ProblemKind::Oilwell(spec) => {
            if hull.is_some() {
                bail!("--hull is not supported for oil-well problems");
            }
            Built::Oilwell(build_oilwell(&spec, opts.formulation)?)
        }
    };
    Ok(Encoded {
        built,
        kind: name,
        bounds,
        hull_weights,
    })
}

/// Default bounds-cache location for a model written to `output`.
pub fn cache_for(output: Option<&Path>) -> Option<PathBuf> {
    output.map(bounds_cache_path)
}

/// Most frequent value of the third training column.
fn modal_compression(training: &[Vec<f64>]) -> Option<f64> {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for row in training {
        match counts.iter_mut().find(|(c, _)| *c == row[2]) {
            Some(e) => e.1 += 1,
            None => counts.push((row[2], 1)),
        }
    }
    counts.into_iter().max_by_key(|&(_, n)| n).map(|(c, _)| c)
}

/// Problem-specific feasible starting point.
pub fn auto_warmstart(built: &Built, seed: u64) -> Result<WarmstartSolution> {
    match built {
        Built::Engine {
            spec,
            em,
            training,
            compression,
        } => {
            let Some(rows) = training else {
                bail!("automatic engine warmstart needs a training file in the spec or via --hull");
            };
            let c = compression.or_else(|| modal_compression(rows)).context("empty training data")?;
            Ok(warmstart_engine(spec, em, rows, c)?)
        }
        Built::Attack { spec, am } => {
            let mut rng = seeded_rng(seed);
            let pbox = spec.pixel_box();
            let seeds: Vec<Vec<f64>> = std::iter::once(spec.image.clone())
                .chain((0..2000).map(|_| pbox.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()))
                .collect();
            Ok(feasible_point_attack(spec, am, &seeds)?)
        }
        Built::Surrogate { net, problem, sm } => {
            let x = box_point(&problem.input_box, None);
            let mut point = vec![0.0; sm.model.num_vars()];
            sm.handles.fill_forward(net, &x, &mut point)?;
            if !sm.model.is_feasible(&point, 1e-6) {
                bail!("the forward pass at the box center violates the problem's rows");
            }
            Ok(WarmstartSolution {
                objective: sm.model.objective.value(&point),
                point,
                provenance: "forward pass at the box center".into(),
            })
        }
        Built::Oilwell(_) | Built::Plain(_) => bail!("no automatic warmstart for this problem; pass a file"),
    }
}

/// The center of a box (finite sides clamp infinite ones), or a uniform sample when a
/// seed is given.
pub fn box_point(input_box: &[(f64, f64)], seed: Option<u64>) -> Vec<f64> {
    let mut rng = seed.map(seeded_rng);
    input_box
        .iter()
        .map(|&(lo, hi)| {
            let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => (lo, hi),
                (true, false) => (lo, lo + 1.0),
                (false, true) => (hi - 1.0, hi),
                (false, false) => (-1.0, 1.0),
            };
            match &mut rng {
                Some(r) => r.gen_range(lo..=hi),
                None => 0.5 * (lo + hi),
            }
        })
        .collect()
}
