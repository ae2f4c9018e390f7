//! On-disk formats: the trained-model artifact (TOML), scan result tables
//! (CSV) and the content hash used to cache fitted models.
//!
//! Floats are written in Rust's shortest round-trip form, so reading an
//! artifact back yields bit-identical parameters.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::vqc::{AnsatzSpec, ParamSet, QnnModel, TrainConfig, VqcError};

pub const MODEL_FORMAT: &str = "qfiae-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("malformed model artifact: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot encode model artifact: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("unsupported artifact `{format}` version {version}")]
    Format { format: String, version: u32 },
    #[error("invalid model artifact: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] VqcError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid csv row {row}: {reason}")]
    Row { row: usize, reason: String },
}

/// Provenance of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    /// Best MSE on the normalized targets.
    pub final_loss: f64,
    pub steps: usize,
    pub best_restart: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_ratio: Option<f64>,
}

/// Serialized form of a [`QnnModel`].
///
/// ```toml
/// format = "qfiae-model"
/// version = 1
/// params = [0.1, -2.3, ...]      # (layer * n_qubits + qubit) * 3 + slot
///
/// [ansatz]                       # n_qubits, n_layers, encodings_per_variable,
///                                # n_variables, measured_qubit
/// [scaling]                      # input_scale, output_scale, output_offset
/// [training]                     # seed, final_loss, steps, best_restart,
///                                # optional process and mass_ratio
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub params: Vec<f64>,
    pub ansatz: AnsatzSpec,
    pub scaling: Scaling,
    pub training: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub input_scale: Vec<f64>,
    pub output_scale: f64,
    pub output_offset: f64,
}

impl ModelArtifact {
    pub fn new(model: &QnnModel, training: TrainingMeta) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            params: model.params.as_slice().to_vec(),
            ansatz: model.ansatz,
            scaling: Scaling {
                input_scale: model.input_scale.clone(),
                output_scale: model.output_scale,
                output_offset: model.output_offset,
            },
            training,
        }
    }

    pub fn to_toml(&self) -> Result<String, ArtifactError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, ArtifactError> {
        let artifact: Self = toml::from_str(text)?;
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn validate(&self) -> Result<(), ArtifactError> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(ArtifactError::Format { format: self.format.clone(), version: self.version });
        }
        self.ansatz.validate()?;
        if self.scaling.input_scale.len() != self.ansatz.n_variables {
            return Err(ArtifactError::Invalid(format!(
                "{} input scales for {} variables",
                self.scaling.input_scale.len(),
                self.ansatz.n_variables
            )));
        }
        let finite = self.params.iter().chain(&self.scaling.input_scale).all(|x| x.is_finite())
            && self.scaling.output_scale.is_finite()
            && self.scaling.output_offset.is_finite();
        if !finite {
            return Err(ArtifactError::Invalid("non-finite parameter or scale".into()));
        }
        // Checks the parameter count.
        ParamSet::from_flat(&self.ansatz, self.params.clone())?;
        Ok(())
    }

    pub fn model(&self) -> Result<QnnModel, ArtifactError> {
        self.validate()?;
        let params = ParamSet::from_flat(&self.ansatz, self.params.clone())?;
        let mut model = QnnModel::new(self.ansatz, params)?;
        model.input_scale = self.scaling.input_scale.clone();
        model.output_scale = self.scaling.output_scale;
        model.output_offset = self.scaling.output_offset;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qfiae,
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Qfiae => "qfiae",
            Method::Oracle => "oracle",
        }
    }
}

/// One line of a scan table. Failed points keep their row with a NaN
/// estimate so the scan can continue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub process: String,
    pub mass_ratio: f64,
    pub method: Method,
    pub estimate: f64,
    pub half_width: f64,
    /// Training MSE in the integrand's units; empty for oracle rows.
    pub mse: Option<f64>,
    pub queries: u64,
    pub seconds: f64,
}

pub const CSV_HEADER: [&str; 8] =
    ["process", "mass_ratio", "method", "estimate", "half_width", "mse", "queries", "seconds"];

pub fn write_csv<W: Write>(out: W, rows: &[ScanRow]) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ScanRow>, ArtifactError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ArtifactError::Row { row: 0, reason: format!("unexpected header {:?}", header) });
    }
    let mut rows = Vec::new();
    for (i, record) in r.deserialize().enumerate() {
        let row: ScanRow = record?;
        if !(row.half_width >= 0.0 || row.half_width.is_nan()) {
            return Err(ArtifactError::Row { row: i + 1, reason: "negative half_width".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Everything that determines a fitted model. Hashing it keys the model
/// cache.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitKey<'a> {
    pub process: &'a str,
    pub mass_ratio: f64,
    pub masses: [f64; 6],
    pub coupling: f64,
    pub ansatz: AnsatzSpec,
    pub train: &'a TrainConfig,
    pub grid_points: usize,
    pub seed: u64,
}

impl FitKey<'_> {
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("fit key is always encodable");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}
