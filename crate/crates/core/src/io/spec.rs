//! Problem spec files: JSON documents tagged by `"kind"` that reference network JSON
//! and training CSV files by paths relative to the spec file. Bounds are `[lo, hi]`
//! pairs where `null` means unbounded.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{load_network, load_training, TrainingTable};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::problems::oilwell::{Riser, Well};
use crate::problems::{AffineRow, AttackSpec, EngineSpec, Norm, OilwellSpec, SurrogateProblem};

pub type BoundPair = (Option<f64>, Option<f64>);

fn bound((lo, hi): BoundPair) -> (f64, f64) {
    (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
}

fn one() -> f64 {
    1.0
}

fn matrix(name: &str, rows: &Option<Vec<Vec<f64>>>, n: usize) -> Result<DMatrix<f64>> {
    match rows {
        None => Ok(DMatrix::zeros(n, n)),
        Some(r) => {
            if r.len() != n || r.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidSpec(format!("{name} must be {n}x{n}")));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateFile {
    pub network: String,
    pub input_box: Vec<BoundPair>,
    /// Linear objective weights on the network outputs.
    pub gy: Vec<f64>,
    #[serde(default)]
    pub gx: Option<Vec<f64>>,
    #[serde(default)]
    pub qx: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub qy: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub rows: Vec<AffineRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineFile {
    pub network: String,
    pub torque_profile: Vec<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub dt: f64,
    pub fuel_bounds: (f64, f64),
    pub rpm_bounds: (f64, f64),
    pub compression_bounds: (f64, f64),
    /// CSV of `fuel, rpm, compression[, outputs...]` rows.
    #[serde(default)]
    pub training: Option<String>,
    /// Restrict each step's inputs to the convex hull of the training inputs.
    #[serde(default)]
    pub hull: bool,
    /// Compression ratio the warmstart fixes; defaults to the most common training value.
    #[serde(default)]
    pub warmstart_compression: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackFile {
    pub network: String,
    pub image: Vec<f64>,
    pub target_label: usize,
    pub alpha: f64,
    pub norm: Norm,
    #[serde(default)]
    pub pixel_eps: Option<f64>,
    #[serde(default)]
    pub adjacency_eps: Option<f64>,
    #[serde(default)]
    pub adjacency: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellFile {
    pub network: String,
    pub gor: f64,
    pub wor: f64,
    pub pressure_bounds: (f64, f64),
    pub flow_lower: [f64; 3],
    pub flow_upper: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiserFile {
    pub manifold: usize,
    pub separator: usize,
    pub network: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OilwellFile {
    pub wells: Vec<WellFile>,
    pub manifold_pressure_bounds: Vec<(f64, f64)>,
    pub separator_pressures: Vec<f64>,
    pub risers: Vec<RiserFile>,
    pub big_m: f64,
    pub max_drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemFile {
    Surrogate(SurrogateFile),
    Engine(EngineFile),
    Attack(AttackFile),
    Oilwell(OilwellFile),
}

/// A problem spec with its networks and data loaded.
#[derive(Clone, Debug)]
pub enum ProblemKind {
    Surrogate { net: Network, problem: SurrogateProblem },
    Engine {
        spec: EngineSpec,
        training: Option<TrainingTable>,
        warmstart_compression: Option<f64>,
    },
    Attack(AttackSpec),
    Oilwell(OilwellSpec),
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Surrogate { .. } => "surrogate",
            ProblemKind::Engine { .. } => "engine",
            ProblemKind::Attack(_) => "attack",
            ProblemKind::Oilwell(_) => "oilwell",
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Loads referenced files relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<ProblemKind> {
        let net = |p: &str| load_network(base.join(p));
        Ok(match self {
            ProblemFile::Surrogate(f) => {
                let net = net(&f.network)?;
                let (n, p) = (net.input_dim(), net.output_dim());
                let mut problem = SurrogateProblem::linear(f.input_box.iter().copied().map(bound).collect(), f.gy.clone())
                    .with_gx(f.gx.clone().unwrap_or_else(|| vec![0.0; n]))
                    .with_qx(matrix("qx", &f.qx, n)?)
                    .with_qy(matrix("qy", &f.qy, p)?)
                    .with_constant(f.constant);
                problem.rows = f.rows.clone();
                problem.validate(&net)?;
                ProblemKind::Surrogate { net, problem }
            }
            ProblemFile::Engine(f) => {
                let training = f.training.as_ref().map(|p| load_training(base.join(p))).transpose()?;
                let hull_points = match (&training, f.hull) {
                    (Some(t), true) => Some(t.inputs(3)?),
                    (None, true) => return Err(Error::InvalidSpec("hull requires a training file".into())),
                    (_, false) => None,
                };
                let spec = EngineSpec {
                    net: net(&f.network)?,
                    torque_profile: f.torque_profile.clone(),
                    lambda: f.lambda,
                    dt: f.dt,
                    fuel_bounds: f.fuel_bounds,
                    rpm_bounds: f.rpm_bounds,
                    compression_bounds: f.compression_bounds,
                    hull_points,
                };
                spec.validate()?;
                ProblemKind::Engine {
                    spec,
                    training,
                    warmstart_compression: f.warmstart_compression,
                }
            }
            ProblemFile::Attack(f) => {
                let spec = AttackSpec {
                    net: net(&f.network)?,
                    image: f.image.clone(),
                    target_label: f.target_label,
                    alpha: f.alpha,
                    norm: f.norm,
                    pixel_eps: f.pixel_eps,
                    adjacency_eps: f.adjacency_eps,
                    adjacency: f.adjacency.clone(),
                };
                spec.validate()?;
                ProblemKind::Attack(spec)
            }
            ProblemFile::Oilwell(f) => {
                let spec = OilwellSpec {
                    wells: f
                        .wells
                        .iter()
                        .map(|w| {
                            Ok(Well {
                                net: net(&w.network)?,
                                gor: w.gor,
                                wor: w.wor,
                                pressure_bounds: w.pressure_bounds,
                                flow_lower: w.flow_lower,
                                flow_upper: w.flow_upper,
                            })
                        })
                        .collect::<Result<_>>()?,
                    manifold_pressure_bounds: f.manifold_pressure_bounds.clone(),
                    separator_pressures: f.separator_pressures.clone(),
                    risers: f
                        .risers
                        .iter()
                        .map(|r| {
                            Ok(Riser {
                                manifold: r.manifold,
                                separator: r.separator,
                                net: net(&r.network)?,
                            })
                        })
                        .collect::<Result<_>>()?,
                    big_m: f.big_m,
                    max_drop: f.max_drop,
                };
                spec.validate()?;
                ProblemKind::Oilwell(spec)
            }
        })
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemKind> {
    let path = path.as_ref();
    let file = ProblemFile::parse(&super::read(path)?)?;
    file.resolve(path.parent().unwrap_or(Path::new(".")))
}
