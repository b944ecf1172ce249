//! The document envelope shared by every file the toolkit reads or writes,
//! and the payload forms for models, states and expectation lists.
//!
//! Documents are pretty-printed JSON. Payload objects are held as
//! `serde_json::Value` with sorted keys, so `parse` followed by `to_text`
//! reproduces canonical input byte for byte.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algebra::serde_repr::{matrix_to_rows, pairs_to_vector, rows_to_matrix, vector_to_pairs};
use crate::algebra::{ghz_state, noisy_pure_state, DensityOperator, HermitianOperator, PauliString, StateVector};
use crate::error::{Error, Result};
use crate::expfam::ring_cluster_5;
use crate::model::{pauli_tomography_model, tilted_qubit_model, MeasurementModel, Outcome, Setting};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Model,
    Counts,
    State,
    Expectations,
    Report,
    Certificate,
}

impl std::fmt::Display for DocKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok();
        write!(f, "{}", s.as_ref().and_then(Value::as_str).unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub seed: Option<u64>,
    /// Unix seconds.
    pub timestamp: Option<u64>,
}

impl Provenance {
    /// Stamped with the crate version and the current time, or with
    /// `SOURCE_DATE_EPOCH` when that is set.
    pub fn now(seed: Option<u64>) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs()));
        Provenance {
            tool: format!("qstat {}", env!("CARGO_PKG_VERSION")),
            seed,
            timestamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub schema_version: String,
    pub kind: DocKind,
    pub payload: Value,
    pub provenance: Provenance,
}

impl Document {
    pub fn new<T: Serialize>(kind: DocKind, payload: &T, provenance: Provenance) -> Result<Self> {
        let payload = serde_json::to_value(payload).map_err(|e| Error::Document(e.to_string()))?;
        Ok(Document {
            schema_version: SCHEMA_VERSION.to_string(),
            kind,
            payload,
            provenance,
        })
    }

    /// Errors carry the line and column of the offending token, or the
    /// field path for structural problems.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: Document = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            let path = e.path().to_string();
            if path == "." || path.is_empty() {
                Error::Document(format!("line {}, column {}: {inner}", inner.line(), inner.column()))
            } else {
                Error::Document(format!(
                    "line {}, column {}, field `{path}`: {inner}",
                    inner.line(),
                    inner.column()
                ))
            }
        })?;
        let major = doc.schema_version.split('.').next().unwrap_or("");
        if major != SCHEMA_VERSION.split('.').next().unwrap_or("") {
            return Err(Error::Document(format!(
                "field `schema_version`: unsupported version {:?} (this build reads {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents always serialise");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
        Document::parse(&text).map_err(|e| match e {
            Error::Document(m) => Error::Document(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Document(format!("{}: {e}", path.display())))
    }

    /// Payload as `T`, after checking that the document has kind `kind`.
    pub fn decode<T: DeserializeOwned>(&self, kind: DocKind) -> Result<T> {
        if self.kind != kind {
            return Err(Error::Document(format!(
                "field `kind`: expected a {kind} document, found {}",
                self.kind
            )));
        }
        serde_path_to_error::deserialize(&self.payload).map_err(|e| {
            let path = e.path().to_string();
            Error::Document(format!("field `payload.{}`: {}", path.trim_start_matches('.'), e.inner()))
        })
    }
}

type Rows = Vec<Vec<[f64; 2]>>;

fn operator_from_rows(rows: &Rows) -> Result<HermitianOperator> {
    HermitianOperator::new(rows_to_matrix(rows).map_err(Error::Document)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub label: String,
    pub operator: Rows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingSpec {
    pub name: String,
    pub outcomes: Vec<OutcomeSpec>,
}

/// Payload of a `model` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// All `3^n` local Pauli settings.
    Pauli { qubits: usize },
    /// Single-qubit Pauli model with the `x` axis tilted towards `z`.
    TiltedQubit { angle_degrees: f64 },
    Explicit { qubits: usize, settings: Vec<SettingSpec> },
}

impl ModelSpec {
    pub fn build(&self) -> Result<MeasurementModel> {
        match self {
            ModelSpec::Pauli { qubits } => pauli_tomography_model(*qubits),
            ModelSpec::TiltedQubit { angle_degrees } => tilted_qubit_model(angle_degrees.to_radians()),
            ModelSpec::Explicit { qubits, settings } => {
                let settings = settings
                    .iter()
                    .map(|s| {
                        let outcomes = s
                            .outcomes
                            .iter()
                            .map(|o| {
                                Ok(Outcome {
                                    label: o.label.clone(),
                                    operator: operator_from_rows(&o.operator).map_err(|e| {
                                        Error::InvalidModel(format!("setting {}, outcome {}: {e}", s.name, o.label))
                                    })?,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(Setting {
                            name: s.name.clone(),
                            outcomes,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                MeasurementModel::new(*qubits, settings)
            }
        }
    }

    pub fn explicit(model: &MeasurementModel) -> Self {
        ModelSpec::Explicit {
            qubits: model.qubits(),
            settings: model
                .settings()
                .iter()
                .map(|s| SettingSpec {
                    name: s.name.clone(),
                    outcomes: s
                        .outcomes
                        .iter()
                        .map(|o| OutcomeSpec {
                            label: o.label.clone(),
                            operator: matrix_to_rows(o.operator.matrix()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Ghz,
    RingCluster,
    MaximallyMixed,
    Zero,
}

/// Estimator details attached to a reconstructed density matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateInfo {
    pub estimator: String,
    pub is_physical: bool,
    pub min_eigenvalue: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

/// Payload of a `state` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Density {
        matrix: Rows,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        estimate: Option<EstimateInfo>,
    },
    Pure {
        amplitudes: Vec<[f64; 2]>,
    },
    /// `p |ψ⟩⟨ψ| + (1 − p) 𝟙/d` for a named `|ψ⟩`; `p` defaults to 1.
    Preset {
        name: Preset,
        qubits: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        purity_weight: Option<f64>,
    },
}

impl StateSpec {
    pub fn density(rho: &DensityOperator) -> Self {
        StateSpec::Density {
            matrix: matrix_to_rows(rho.matrix()),
            estimate: None,
        }
    }

    pub fn pure(psi: &StateVector) -> Self {
        StateSpec::Pure {
            amplitudes: vector_to_pairs(psi),
        }
    }

    fn preset_vector(name: Preset, qubits: usize) -> Result<Option<StateVector>> {
        Ok(match name {
            Preset::Ghz => Some(ghz_state(qubits)),
            Preset::RingCluster => {
                if qubits != 5 {
                    return Err(Error::InvalidArgument("ring_cluster is a 5-qubit state".into()));
                }
                Some(ring_cluster_5())
            }
            Preset::Zero => Some(crate::algebra::basis_state(qubits, 0)),
            Preset::MaximallyMixed => None,
        })
    }

    pub fn to_density(&self) -> Result<DensityOperator> {
        match self {
            StateSpec::Density { matrix, .. } => DensityOperator::from_matrix(rows_to_matrix(matrix).map_err(Error::Document)?),
            StateSpec::Pure { .. } => DensityOperator::pure(&self.to_vector()?),
            StateSpec::Preset { name, qubits, purity_weight } => {
                if *qubits == 0 || *qubits > crate::algebra::MAX_QUBITS {
                    return Err(Error::QubitCountOutOfRange(*qubits));
                }
                match Self::preset_vector(*name, *qubits)? {
                    None => Ok(DensityOperator::maximally_mixed(*qubits)),
                    Some(psi) => noisy_pure_state(&psi, purity_weight.unwrap_or(1.0)),
                }
            }
        }
    }

    /// The state vector of a pure or noiseless preset state.
    pub fn to_vector(&self) -> Result<StateVector> {
        match self {
            StateSpec::Pure { amplitudes } => {
                let v = pairs_to_vector(amplitudes);
                crate::algebra::qubits_for_dim(v.len())?;
                let norm = v.norm();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::NotNormalized(norm));
                }
                Ok(v)
            }
            StateSpec::Preset { name, qubits, purity_weight } if purity_weight.map_or(true, |p| p == 1.0) => {
                Self::preset_vector(*name, *qubits)?
                    .ok_or_else(|| Error::InvalidArgument("the maximally mixed state has no state vector".into()))
            }
            _ => Err(Error::InvalidArgument("a pure state is required here".into())),
        }
    }
}

/// An observable by Pauli label or by matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Pauli(PauliString),
    Matrix(Rows),
}

impl ObservableSpec {
    pub fn operator(&self) -> Result<HermitianOperator> {
        match self {
            ObservableSpec::Pauli(p) => Ok(p.operator()),
            ObservableSpec::Matrix(rows) => operator_from_rows(rows),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationEntry {
    pub observable: ObservableSpec,
    pub mean: f64,
}

/// Payload of an `expectations` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationsSpec {
    pub qubits: usize,
    pub entries: Vec<ExpectationEntry>,
}

impl ExpectationsSpec {
    pub fn operators(&self) -> Result<(Vec<HermitianOperator>, Vec<f64>)> {
        let mut ops = Vec::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            let op = e.observable.operator()?;
            if op.qubits() != self.qubits {
                return Err(Error::Document(format!(
                    "field `payload.entries[{i}].observable`: acts on {} qubits, expected {}",
                    op.qubits(),
                    self.qubits
                )));
            }
            ops.push(op);
        }
        Ok((ops, self.entries.iter().map(|e| e.mean).collect()))
    }
}
