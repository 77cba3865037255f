//! File formats: network weights (JSON), training tables and solver traces (CSV),
//! LP-format model text, bound caches and problem specs.

pub mod lp;
pub mod spec;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::encode::{content_hash, BigMBounds, BoundMethod, NeuronBounds};
use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Network, NeuronId};
use crate::solve::TraceRecord;

pub use lp::{export_lp, import_lp, read_lp, write_lp};
pub use spec::{load_problem, ProblemFile, ProblemKind};

/// Stored in every network file so the weight layout is visible to anyone opening it.
pub const NETWORK_FORMAT: &str =
    "surropt network v1: weights[i][j] connects input j of the layer to neuron i (rows = neurons)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// `relu`, `swish` or `linear`.
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default)]
    pub format: String,
    pub input_dim: usize,
    pub layers: Vec<LayerFile>,
}

impl NetworkFile {
    pub fn from_network(net: &Network) -> Self {
        Self {
            format: NETWORK_FORMAT.into(),
            input_dim: net.input_dim(),
            layers: net
                .layers()
                .iter()
                .map(|l| {
                    let (activation, beta) = match l.activation() {
                        Activation::Relu => ("relu", None),
                        Activation::Swish { beta } => ("swish", Some(beta)),
                        Activation::Identity => ("linear", None),
                    };
                    LayerFile {
                        weights: l.weights().row_iter().map(|r| r.iter().copied().collect()).collect(),
                        bias: l.bias().to_vec(),
                        activation: activation.into(),
                        beta,
                    }
                })
                .collect(),
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        let mut prev = self.input_dim;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, lf) in self.layers.iter().enumerate() {
            let activation = match (lf.activation.as_str(), lf.beta) {
                ("relu", None) => Activation::Relu,
                ("swish", beta) => Activation::Swish {
                    beta: beta.unwrap_or(Activation::DEFAULT_SWISH_BETA),
                },
                ("linear", None) => Activation::Identity,
                (a, Some(_)) if a == "relu" || a == "linear" => {
                    return Err(Error::InvalidNetwork(format!("layer {l}: beta is only allowed on swish layers")))
                }
                (other, _) => return Err(Error::InvalidNetwork(format!("layer {l}: unknown activation '{other}'"))),
            };
            if let Some(r) = lf.weights.iter().position(|r| r.len() != prev) {
                return Err(Error::dim(format!("layer {l} weight row {r}"), prev, lf.weights[r].len()));
            }
            if lf.bias.len() != lf.weights.len() {
                return Err(Error::dim(format!("layer {l} bias"), lf.weights.len(), lf.bias.len()));
            }
            let w = DMatrix::from_fn(lf.weights.len(), prev, |i, j| lf.weights[i][j]);
            layers.push(Layer::new(w, lf.bias.clone(), activation)?);
            prev = lf.weights.len();
        }
        Network::new(self.input_dim, layers)
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

/// JSON text of a network. Floats use the shortest decimal that reads back to the same
/// bits, so `parse_network(network_to_json(n))` is bit-exact.
pub fn network_to_json(net: &Network) -> String {
    let mut s = serde_json::to_string_pretty(&NetworkFile::from_network(net)).expect("finite weights serialize");
    s.push('\n');
    s
}

pub fn parse_network(text: &str) -> Result<Network> {
    serde_json::from_str::<NetworkFile>(text).map_err(json_error)?.to_network()
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    parse_network(&read(path)?).map_err(|e| with_path(path, e))
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &network_to_json(net))
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// CSV rows of numbers under a header. The first columns are inputs; any remaining
/// columns are outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrainingTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.header.len()
    }

    /// The first `n` columns of every row.
    pub fn inputs(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n > self.width() {
            return Err(Error::dim("training input columns", n, self.width()));
        }
        Ok(self.rows.iter().map(|r| r[..n].to_vec()).collect())
    }
}

pub fn parse_training(text: &str) -> Result<TrainingTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column '{}': '{cell}' is not a finite number", header[j]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "training table has no rows".into(),
        });
    }
    Ok(TrainingTable { header, rows })
}

pub fn load_training(path: impl AsRef<Path>) -> Result<TrainingTable> {
    let path = path.as_ref();
    parse_training(&read(path)?).map_err(|e| with_path(path, e))
}

/// CSV with header `iter,objective,primal_inf,dual_inf`.
pub fn trace_to_csv(records: &[TraceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(["iter", "objective", "primal_inf", "dual_inf"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_trace(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &trace_to_csv(records)?)
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CachedNeuron {
    layer: usize,
    index: usize,
    pre_lo: f64,
    pre_hi: f64,
}

/// Big-M bounds keyed by a hash of the network and input box they were computed for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BoundCacheFile {
    hash: String,
    method: BoundMethod,
    neurons: Vec<CachedNeuron>,
}

/// `<output>.bounds.json` next to a model file.
pub fn bounds_cache_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".bounds.json");
    PathBuf::from(s)
}

pub fn bounds_to_json(net: &Network, input_box: &[(f64, f64)], bounds: &BigMBounds) -> Result<String> {
    if let Some((id, _)) = bounds.neurons.iter().find(|(_, b)| !b.pre_lo.is_finite() || !b.pre_hi.is_finite()) {
        return Err(Error::NonFinite(format!("bound of neuron {id}")));
    }
    let file = BoundCacheFile {
        hash: content_hash(net, input_box),
        method: bounds.method,
        neurons: bounds
            .neurons
            .iter()
            .map(|(id, b)| CachedNeuron {
                layer: id.layer,
                index: id.index,
                pre_lo: b.pre_lo,
                pre_hi: b.pre_hi,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

/// Bounds from cache text, or `None` when it was written for a different network or box.
pub fn bounds_from_json(text: &str, net: &Network, input_box: &[(f64, f64)]) -> Result<Option<BigMBounds>> {
    let file: BoundCacheFile = serde_json::from_str(text).map_err(json_error)?;
    if file.hash != content_hash(net, input_box) {
        return Ok(None);
    }
    let neurons = file
        .neurons
        .into_iter()
        .map(|n| (NeuronId::new(n.layer, n.index), NeuronBounds::from_preactivation(n.pre_lo, n.pre_hi)))
        .collect();
    Ok(Some(BigMBounds {
        method: file.method,
        neurons,
    }))
}

pub fn save_bounds_cache(path: impl AsRef<Path>, net: &Network, input_box: &[(f64, f64)], bounds: &BigMBounds) -> Result<()> {
    write(path.as_ref(), &bounds_to_json(net, input_box, bounds)?)
}

/// Cached bounds if the file exists and matches `net` and `input_box`.
pub fn load_bounds_cache(path: impl AsRef<Path>, net: &Network, input_box: &[(f64, f64)]) -> Result<Option<BigMBounds>> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(None);
    }
    bounds_from_json(&read(path)?, net, input_box).map_err(|e| with_path(path, e))
}
