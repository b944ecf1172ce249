//! Measurement models, count data and the multinomial statistical model.

pub mod sampling;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::algebra::{
    CMatrix, DensityOperator, HermitianOperator, Pauli, PauliString, StateVector, C64, MAX_QUBITS,
    PSD_TOL,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Outcome {
    pub label: String,
    pub operator: HermitianOperator,
}

#[derive(Clone, Debug)]
pub struct Setting {
    pub name: String,
    pub outcomes: Vec<Outcome>,
}

/// Per-setting POVMs on a common register.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    qubits: usize,
    settings: Vec<Setting>,
    frame: OnceLock<Frame>,
}

impl MeasurementModel {
    /// Validates that every outcome operator is PSD and that each setting
    /// resolves the identity.
    pub fn new(qubits: usize, settings: Vec<Setting>) -> Result<Self> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(qubits));
        }
        if settings.is_empty() {
            return Err(Error::InvalidModel("no settings".into()));
        }
        let id = HermitianOperator::identity(qubits);
        let mut names = std::collections::BTreeSet::new();
        for s in &settings {
            if !names.insert(s.name.as_str()) {
                return Err(Error::InvalidModel(format!("duplicate setting {:?}", s.name)));
            }
            if s.outcomes.is_empty() {
                return Err(Error::InvalidModel(format!("setting {:?} has no outcomes", s.name)));
            }
            let mut labels = std::collections::BTreeSet::new();
            let mut sum = HermitianOperator::zeros(qubits);
            for o in &s.outcomes {
                if !labels.insert(o.label.as_str()) {
                    return Err(Error::InvalidModel(format!(
                        "duplicate outcome {:?} in setting {:?}",
                        o.label, s.name
                    )));
                }
                if o.operator.qubits() != qubits {
                    return Err(Error::DimensionMismatch {
                        expected: 1 << qubits,
                        actual: o.operator.dim(),
                    });
                }
                let min = o.operator.min_eigenvalue()?;
                if min < -PSD_TOL {
                    return Err(Error::InvalidModel(format!(
                        "outcome {}|{} is not positive (min eigenvalue {min:.3e})",
                        o.label, s.name
                    )));
                }
                sum.add_scaled(&o.operator, 1.0);
            }
            let dev = sum.max_abs_diff(&id);
            if dev > 1e-10 {
                return Err(Error::InvalidModel(format!(
                    "outcomes of setting {:?} do not sum to the identity (deviation {dev:.3e})",
                    s.name
                )));
            }
        }
        Ok(MeasurementModel {
            qubits,
            settings,
            frame: OnceLock::new(),
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn settings(&self) -> &[Setting] {
        &self.settings
    }

    pub fn setting(&self, name: &str) -> Option<&Setting> {
        self.settings.iter().find(|s| s.name == name)
    }

    pub fn outcome_count(&self) -> usize {
        self.settings.iter().map(|s| s.outcomes.len()).sum()
    }

    /// Empty table shaped like the model.
    pub fn table(&self, fill: f64) -> OutcomeTable {
        OutcomeTable {
            settings: self.settings.iter().map(|s| s.name.clone()).collect(),
            labels: self
                .settings
                .iter()
                .map(|s| s.outcomes.iter().map(|o| o.label.clone()).collect())
                .collect(),
            values: self
                .settings
                .iter()
                .map(|s| vec![fill; s.outcomes.len()])
                .collect(),
        }
    }

    /// Outcome operators in orthonormal Pauli coordinates, computed once.
    pub(crate) fn frame(&self) -> &Frame {
        self.frame.get_or_init(|| Frame::new(self))
    }

    /// Drops the named settings. Mostly useful to build incomplete models.
    pub fn without_settings(&self, names: &[&str]) -> Result<Self> {
        let kept = self
            .settings
            .iter()
            .filter(|s| !names.contains(&s.name.as_str()))
            .cloned()
            .collect();
        MeasurementModel::new(self.qubits, kept)
    }

    /// Setting names parsed as Pauli axes, when the model is a Pauli product model.
    pub(crate) fn pauli_axes(&self) -> Result<Vec<Vec<Pauli>>> {
        self.settings
            .iter()
            .map(|s| {
                let axes: Option<Vec<Pauli>> = s
                    .name
                    .chars()
                    .map(|ch| Pauli::from_symbol(ch).filter(|p| *p != Pauli::I))
                    .collect();
                match axes {
                    Some(a) if a.len() == self.qubits => Ok(a),
                    _ => Err(Error::InvalidModel(format!(
                        "setting {:?} is not a Pauli axis string of length {}",
                        s.name, self.qubits
                    ))),
                }
            })
            .collect()
    }
}

/// Sparse rows of the measurement map in the orthonormal basis `P/√d`, one
/// row per outcome in setting-major order.
#[derive(Clone, Debug)]
pub(crate) struct Frame {
    pub(crate) qubits: usize,
    pub(crate) rows: Vec<Vec<(usize, f64)>>,
    pub(crate) offsets: Vec<usize>,
    pub(crate) basis: Vec<PauliString>,
    /// Nonzero entries of each basis string, `(row, col, value)`.
    entries: Vec<Vec<(usize, usize, C64)>>,
}

impl Frame {
    fn new(model: &MeasurementModel) -> Self {
        let n = model.qubits;
        let basis = PauliString::all(n);
        let entries: Vec<Vec<(usize, usize, C64)>> = basis.iter().map(|p| p.entries().collect()).collect();
        let mut frame = Frame {
            qubits: n,
            rows: Vec::with_capacity(model.outcome_count()),
            offsets: Vec::with_capacity(model.settings.len() + 1),
            basis,
            entries,
        };
        for s in &model.settings {
            frame.offsets.push(frame.rows.len());
            for o in &s.outcomes {
                let row: Vec<(usize, f64)> = frame
                    .coordinates(&o.operator)
                    .into_iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() > 1e-14)
                    .collect();
                frame.rows.push(row);
            }
        }
        frame.offsets.push(frame.rows.len());
        frame
    }

    pub(crate) fn dim(&self) -> usize {
        self.basis.len()
    }

    fn inv_sqrt_d(&self) -> f64 {
        1.0 / ((1usize << self.qubits) as f64).sqrt()
    }

    /// Coordinates `tr(a P)/√d`.
    pub(crate) fn coordinates(&self, a: &HermitianOperator) -> Vec<f64> {
        self.matrix_coordinates(a.matrix())
    }

    pub(crate) fn matrix_coordinates(&self, m: &CMatrix) -> Vec<f64> {
        let s = self.inv_sqrt_d();
        self.entries
            .iter()
            .map(|e| e.iter().map(|&(r, col, v)| (m[(col, r)] * v).re).sum::<f64>() * s)
            .collect()
    }

    pub(crate) fn matrix(&self, coords: &[f64]) -> CMatrix {
        let d = 1usize << self.qubits;
        let s = self.inv_sqrt_d();
        let mut m = CMatrix::zeros(d, d);
        for (e, &x) in self.entries.iter().zip(coords) {
            if x != 0.0 {
                for &(r, col, v) in e {
                    m[(r, col)] += v * (x * s);
                }
            }
        }
        m
    }

    pub(crate) fn operator(&self, coords: &[f64]) -> HermitianOperator {
        HermitianOperator::from_raw_symmetrized(self.qubits, self.matrix(coords))
    }

    /// Born probabilities from state coordinates, flattened.
    pub(crate) fn apply(&self, coords: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(i, v)| v * coords[i]).sum())
            .collect()
    }

    /// `Σ_k weights[k] · row_k`.
    pub(crate) fn apply_adjoint(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (row, &w) in self.rows.iter().zip(weights) {
            if w != 0.0 {
                for &(i, v) in row {
                    out[i] += w * v;
                }
            }
        }
        out
    }
}

/// Real values indexed by `(setting, outcome)` in model order. Used for
/// frequencies, Born probabilities and witness coefficients alike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub settings: Vec<String>,
    pub labels: Vec<Vec<String>>,
    pub values: Vec<Vec<f64>>,
}

pub type Frequencies = OutcomeTable;
pub type ProbabilityTable = OutcomeTable;

impl OutcomeTable {
    pub fn get(&self, setting: &str, label: &str) -> Option<f64> {
        let s = self.settings.iter().position(|x| x == setting)?;
        let o = self.labels[s].iter().position(|x| x == label)?;
        Some(self.values[s][o])
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn same_shape(&self, other: &OutcomeTable) -> bool {
        self.settings == other.settings && self.labels == other.labels
    }

    /// `Σ self · other` over matching entries.
    pub fn dot(&self, other: &OutcomeTable) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::LabelMismatch(
                "outcome tables have different settings or labels".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| x * y)
            .sum())
    }

    /// Relative frequencies of `counts`, aligned to `model`.
    pub fn frequencies(counts: &CountData, model: &MeasurementModel) -> Result<Frequencies> {
        let aligned = counts.aligned(model)?;
        let mut table = model.table(0.0);
        for (s, row) in aligned.iter().enumerate() {
            let total: u64 = row.iter().sum();
            for (o, &k) in row.iter().enumerate() {
                table.values[s][o] = k as f64 / total as f64;
            }
        }
        Ok(table)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub setting: String,
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
}

/// Raw outcome counts per setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountData {
    pub settings: Vec<SettingCounts>,
    #[serde(default)]
    pub metadata: CountMetadata,
}

impl CountData {
    pub fn new(settings: Vec<SettingCounts>, metadata: CountMetadata) -> Result<Self> {
        let data = CountData { settings, metadata };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.settings {
            if !seen.insert(&s.setting) {
                return Err(Error::InvalidCounts(format!("duplicate setting {:?}", s.setting)));
            }
            let sum: u64 = s.counts.values().sum();
            if sum != s.shots {
                return Err(Error::InvalidCounts(format!(
                    "setting {:?}: counts sum to {sum}, shots = {}",
                    s.setting, s.shots
                )));
            }
            if s.shots == 0 {
                return Err(Error::InvalidCounts(format!("setting {:?} has no shots", s.setting)));
            }
        }
        Ok(())
    }

    pub fn setting(&self, name: &str) -> Option<&SettingCounts> {
        self.settings.iter().find(|s| s.setting == name)
    }

    /// Counts as `[setting][outcome]` in model order. Labels absent from a
    /// setting's map count as zero; unknown labels or settings are errors.
    pub fn aligned(&self, model: &MeasurementModel) -> Result<Vec<Vec<u64>>> {
        self.validate()?;
        if self.settings.len() != model.settings().len() {
            let missing: Vec<&str> = model
                .settings()
                .iter()
                .filter(|s| self.setting(&s.name).is_none())
                .map(|s| s.name.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(Error::LabelMismatch(format!("missing settings: {}", missing.join(", "))));
            }
            let extra: Vec<&str> = self
                .settings
                .iter()
                .filter(|s| model.setting(&s.setting).is_none())
                .map(|s| s.setting.as_str())
                .collect();
            return Err(Error::LabelMismatch(format!("unknown settings: {}", extra.join(", "))));
        }
        model
            .settings()
            .iter()
            .map(|s| {
                let sc = self
                    .setting(&s.name)
                    .ok_or_else(|| Error::LabelMismatch(format!("missing setting {:?}", s.name)))?;
                if let Some(bad) = sc.counts.keys().find(|l| !s.outcomes.iter().any(|o| &o.label == *l)) {
                    return Err(Error::LabelMismatch(format!(
                        "unknown outcome {bad:?} in setting {:?}",
                        s.name
                    )));
                }
                Ok(s.outcomes
                    .iter()
                    .map(|o| sc.counts.get(&o.label).copied().unwrap_or(0))
                    .collect())
            })
            .collect()
    }

    /// Smallest per-setting shot count.
    pub fn min_shots(&self) -> u64 {
        self.settings.iter().map(|s| s.shots).min().unwrap_or(0)
    }

    pub fn total_shots(&self) -> u64 {
        self.settings.iter().map(|s| s.shots).sum()
    }

    /// Builds count data from model-aligned rows.
    pub fn from_aligned(model: &MeasurementModel, rows: &[Vec<u64>], metadata: CountMetadata) -> Self {
        let settings = model
            .settings()
            .iter()
            .zip(rows)
            .map(|(s, row)| SettingCounts {
                setting: s.name.clone(),
                shots: row.iter().sum(),
                counts: s
                    .outcomes
                    .iter()
                    .zip(row)
                    .map(|(o, &k)| (o.label.clone(), k))
                    .collect(),
            })
            .collect();
        CountData { settings, metadata }
    }
}

fn outcome_label(bits: usize, qubits: usize) -> String {
    (0..qubits)
        .map(|q| if bits >> (qubits - 1 - q) & 1 == 0 { '+' } else { '-' })
        .collect()
}

fn product_projector(axes: &[Pauli], bits: usize) -> Result<HermitianOperator> {
    let n = axes.len();
    let v = axes
        .iter()
        .enumerate()
        .fold(StateVector::from_element(1, crate::algebra::c(1.0, 0.0)), |acc, (q, &a)| {
            acc.kronecker(&a.eigenvector(bits >> (n - 1 - q) & 1 == 0))
        });
    HermitianOperator::projector(&v)
}

/// Every combination of local Pauli measurements: `3^n` settings named over
/// `{x,y,z}^n`, each with `2^n` projective outcomes labelled over `{+,-}^n`.
pub fn pauli_tomography_model(qubits: usize) -> Result<MeasurementModel> {
    if qubits == 0 || qubits > MAX_QUBITS {
        return Err(Error::QubitCountOutOfRange(qubits));
    }
    let mut settings = Vec::new();
    for code in 0..3usize.pow(qubits as u32) {
        let axes: Vec<Pauli> = (0..qubits)
            .map(|q| Pauli::AXES[code / 3usize.pow((qubits - 1 - q) as u32) % 3])
            .collect();
        let name: String = axes.iter().map(|a| a.symbol()).collect();
        let outcomes = (0..1usize << qubits)
            .map(|bits| {
                Ok(Outcome {
                    label: outcome_label(bits, qubits),
                    operator: product_projector(&axes, bits)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        settings.push(Setting { name, outcomes });
    }
    MeasurementModel::new(qubits, settings)
}

/// Single-qubit `x, y, z` model whose `x` axis is tilted by `angle` (radians)
/// towards `z`. Names and labels match `pauli_tomography_model(1)`, so data
/// drawn from it looks like ordinary Pauli data with a miscalibrated axis.
pub fn tilted_qubit_model(angle: f64) -> Result<MeasurementModel> {
    let (s, c) = angle.sin_cos();
    let x = HermitianOperator::sigma_x();
    let z = HermitianOperator::sigma_z();
    let mut tilted = x.scale(c);
    tilted.add_scaled(&z, s);
    let id = HermitianOperator::identity(1);
    let proj = |axis: &HermitianOperator, sign: f64| {
        let mut p = id.scale(0.5);
        p.add_scaled(axis, 0.5 * sign);
        p
    };
    let axes = [("x", tilted), ("y", HermitianOperator::sigma_y()), ("z", z)];
    let settings = axes
        .iter()
        .map(|(name, a)| Setting {
            name: name.to_string(),
            outcomes: vec![
                Outcome { label: "+".into(), operator: proj(a, 1.0) },
                Outcome { label: "-".into(), operator: proj(a, -1.0) },
            ],
        })
        .collect();
    MeasurementModel::new(1, settings)
}

/// `P(r|s; rho) = tr(rho M_{r|s})`, clamped to `[0, 1]`.
pub fn born_probabilities(rho: &DensityOperator, model: &MeasurementModel) -> Result<ProbabilityTable> {
    if rho.qubits() != model.qubits() {
        return Err(Error::DimensionMismatch {
            expected: 1 << model.qubits(),
            actual: rho.dim(),
        });
    }
    let mut table = model.table(0.0);
    for (s, setting) in model.settings().iter().enumerate() {
        for (o, outcome) in setting.outcomes.iter().enumerate() {
            table.values[s][o] = rho.expectation(&outcome.operator).clamp(0.0, 1.0);
        }
    }
    Ok(table)
}

/// Draws `shots_per_setting` outcomes per setting from the Born distribution.
pub fn sample_counts(
    rho: &DensityOperator,
    model: &MeasurementModel,
    shots_per_setting: u64,
    seed: u64,
) -> Result<CountData> {
    let probs = born_probabilities(rho, model)?;
    sample_from_probabilities(&probs, model, shots_per_setting, seed)
}

/// [`sample_counts`] from a precomputed probability table.
pub fn sample_from_probabilities(
    probs: &ProbabilityTable,
    model: &MeasurementModel,
    shots_per_setting: u64,
    seed: u64,
) -> Result<CountData> {
    if shots_per_setting == 0 {
        return Err(Error::InvalidArgument("shots_per_setting must be at least 1".into()));
    }
    let rows: Vec<Vec<u64>> = probs
        .settings
        .iter()
        .zip(&probs.values)
        .map(|(name, p)| {
            let mut rng = sampling::substream(seed, name);
            sampling::multinomial(&mut rng, shots_per_setting, p)
        })
        .collect();
    Ok(CountData::from_aligned(
        model,
        &rows,
        CountMetadata {
            seed: Some(seed),
            description: String::new(),
        },
    ))
}

/// Pauli expectation values from Pauli-product count data.
///
/// Full-weight strings come from their own setting; a lower-weight string is
/// the equal-weight average over every setting that agrees with it on its
/// support. The identity string maps to 1.
pub fn estimate_expectations(
    counts: &CountData,
    model: &MeasurementModel,
) -> Result<BTreeMap<PauliString, f64>> {
    let freqs = OutcomeTable::frequencies(counts, model)?;
    expectations_from_table(&freqs, model)
}

pub(crate) fn expectations_from_table(
    freqs: &OutcomeTable,
    model: &MeasurementModel,
) -> Result<BTreeMap<PauliString, f64>> {
    let n = model.qubits();
    let axes = model.pauli_axes()?;
    // Outcome signs per setting: +1 for '+', -1 for '-' at each qubit.
    let signs: Vec<Vec<Vec<f64>>> = model
        .settings()
        .iter()
        .map(|s| {
            s.outcomes
                .iter()
                .map(|o| {
                    let chars: Vec<char> = o.label.chars().collect();
                    if chars.len() != n || chars.iter().any(|c| *c != '+' && *c != '-') {
                        return Err(Error::InvalidModel(format!(
                            "outcome label {:?} is not a {{+,-}} string of length {n}",
                            o.label
                        )));
                    }
                    Ok(chars.iter().map(|&c| if c == '+' { 1.0 } else { -1.0 }).collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = BTreeMap::new();
    for p in PauliString::all(n) {
        if p.is_identity() {
            out.insert(p, 1.0);
            continue;
        }
        let mut acc = 0.0;
        let mut parents = 0usize;
        for (s, setting_axes) in axes.iter().enumerate() {
            if !p.is_restriction_of(setting_axes) {
                continue;
            }
            parents += 1;
            for (o, f) in freqs.values[s].iter().enumerate() {
                let sign: f64 = p
                    .labels()
                    .iter()
                    .zip(&signs[s][o])
                    .filter(|(l, _)| **l != Pauli::I)
                    .map(|(_, &sg)| sg)
                    .product();
                acc += sign * f;
            }
        }
        if parents == 0 {
            return Err(Error::LabelMismatch(format!("no setting measures {p}")));
        }
        out.insert(p, acc / parents as f64);
    }
    Ok(out)
}
