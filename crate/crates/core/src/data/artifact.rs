//! JSON artifacts. Tensors are stored as base64 of their little-endian
//! `f64` bytes so a load reproduces them bit for bit.

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::RunConfig;
use crate::error::{ArtifactError, Error, Result};
use crate::logic::{LogicNetwork, TNorm, Thresholds};
use crate::perception::{Architecture, FeatureMap, PerceptionParams};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(name: &str, text: &str) -> Result<Vec<f64>, ArtifactError> {
    let decode_err = |reason: String| ArtifactError::Decode {
        name: name.to_string(),
        reason,
    };
    let bytes = STANDARD.decode(text).map_err(|e| decode_err(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(decode_err(format!("{} bytes is not a whole number of f64s", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    architecture: Architecture,
    seed: u64,
    tensors: Vec<TensorDoc>,
}

#[derive(Serialize, Deserialize)]
struct MapDoc {
    channel: usize,
    rows: usize,
    cols: usize,
    values: String,
}

#[derive(Serialize, Deserialize)]
struct ClauseDoc {
    predicates: Vec<usize>,
    class: usize,
}

#[derive(Serialize, Deserialize)]
struct LogicDoc {
    format_version: u32,
    classes: usize,
    tnorm: String,
    matching: f64,
    predicate: f64,
    smoothing: f64,
    predicates: Vec<MapDoc>,
    clauses: Vec<ClauseDoc>,
    gamma: String,
    lambda: String,
}

fn malformed(e: impl std::fmt::Display) -> Error {
    ArtifactError::Malformed(e.to_string()).into()
}

/// Parses a document after checking its `format_version`.
fn parse_versioned<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let value: Value = serde_json::from_str(text).map_err(malformed)?;
    let found = value
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("missing format_version"))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(ArtifactError::VersionMismatch {
            expected: FORMAT_VERSION,
            found: found as u32,
        }
        .into());
    }
    serde_json::from_value(value).map_err(malformed)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn model_to_json(params: &PerceptionParams) -> String {
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        architecture: params.architecture().clone(),
        seed: params.seed(),
        tensors: params
            .param_names()
            .into_iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorDoc {
                name,
                shape: t.shape().to_vec(),
                data: encode_f64s(t.data()),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}

pub fn model_from_json(text: &str) -> Result<PerceptionParams> {
    let doc: ModelDoc = parse_versioned(text)?;
    let tensors = doc
        .tensors
        .iter()
        .map(|t| Tensor::new(t.shape.clone(), decode_f64s(&t.name, &t.data)?))
        .collect::<Result<Vec<_>>>()?;
    PerceptionParams::from_tensors(doc.architecture, doc.seed, tensors)
}

/// Network structure, membership degrees and the group weights `lambda`.
/// Grounding sets are run state and are not stored.
pub fn logic_to_json(net: &LogicNetwork, lambda: &[f64]) -> String {
    let th = net.thresholds();
    let doc = LogicDoc {
        format_version: FORMAT_VERSION,
        classes: net.classes(),
        tnorm: net.variant().name().to_string(),
        matching: th.matching,
        predicate: th.predicate,
        smoothing: th.smoothing,
        predicates: net
            .predicates()
            .iter()
            .map(|p| {
                let t = p.template();
                let (rows, cols) = t.dims();
                MapDoc {
                    channel: t.channel(),
                    rows,
                    cols,
                    values: encode_f64s(t.values()),
                }
            })
            .collect(),
        clauses: net
            .clauses()
            .iter()
            .map(|c| ClauseDoc {
                predicates: c.features.iter().map(|l| l.predicate).collect(),
                class: c.decision.class,
            })
            .collect(),
        gamma: encode_f64s(net.gamma()),
        lambda: encode_f64s(lambda),
    };
    serde_json::to_string_pretty(&doc).expect("logic document serializes")
}

pub fn logic_from_json(text: &str) -> Result<(LogicNetwork, Vec<f64>)> {
    let doc: LogicDoc = parse_versioned(text)?;
    let variant: TNorm = doc.tnorm.parse()?;
    let thresholds = Thresholds {
        matching: doc.matching,
        predicate: doc.predicate,
        smoothing: doc.smoothing,
    };
    let templates = doc
        .predicates
        .iter()
        .enumerate()
        .map(|(i, m)| {
            FeatureMap::new(
                m.channel,
                m.rows,
                m.cols,
                decode_f64s(&format!("predicate {i}"), &m.values)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    // degrees are placeholders here; the stored vector replaces them below
    let clauses = doc
        .clauses
        .iter()
        .map(|c| (c.predicates.iter().map(|&p| (p, 0.0)).collect(), c.class, 0.0))
        .collect();
    let mut net = LogicNetwork::from_parts(doc.classes, variant, thresholds, templates, clauses)?;
    net.set_gamma(decode_f64s("gamma", &doc.gamma)?)?;
    let lambda = decode_f64s("lambda", &doc.lambda)?;
    if lambda.len() != doc.classes {
        return Err(malformed(format!("lambda has {} entries for {} classes", lambda.len(), doc.classes)));
    }
    Ok((net, lambda))
}

pub fn save_model(path: impl AsRef<Path>, params: &PerceptionParams) -> Result<()> {
    write(path.as_ref(), &model_to_json(params))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PerceptionParams> {
    model_from_json(&read(path.as_ref())?)
}

pub fn save_logic(path: impl AsRef<Path>, net: &LogicNetwork, lambda: &[f64]) -> Result<()> {
    write(path.as_ref(), &logic_to_json(net, lambda))
}

pub fn load_logic(path: impl AsRef<Path>) -> Result<(LogicNetwork, Vec<f64>)> {
    logic_from_json(&read(path.as_ref())?)
}

/// File layout of one run directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn write_text(&self, file: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(file);
        write(&p, text)?;
        Ok(p)
    }

    pub fn save_config(&self, cfg: &RunConfig) -> Result<PathBuf> {
        self.write_text("config.txt", &cfg.to_text())
    }

    pub fn save_model(&self, file: &str, params: &PerceptionParams) -> Result<PathBuf> {
        let p = self.path(file);
        save_model(&p, params)?;
        Ok(p)
    }

    pub fn save_logic(&self, file: &str, net: &LogicNetwork, lambda: &[f64]) -> Result<PathBuf> {
        let p = self.path(file);
        save_logic(&p, net, lambda)?;
        Ok(p)
    }
}
