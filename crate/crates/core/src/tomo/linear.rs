use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::random::random_density;
use crate::algebra::{eig_symmetric, HermitianOperator, RealEigen, StateVector};
use crate::error::{Error, Result};
use crate::model::{CountData, MeasurementModel, OutcomeTable};
use crate::systest::hoeffding_threshold_mixed;

/// Relative eigenvalue cut below which a frame direction counts as unmeasured.
const RANK_TOL: f64 = 1e-10;
const CERTIFICATE_TOL: f64 = 1e-9;
const CERTIFICATE_STATES: usize = 10;

/// One connected block of the frame operator `S = Σ_k m_k m_kᵀ`, kept as its
/// range eigenvectors and inverse eigenvalues.
#[derive(Clone, Debug)]
struct Block {
    idx: Vec<usize>,
    vectors: DMatrix<f64>,
    inv: Vec<f64>,
}

impl Block {
    fn apply(&self, v: &[f64], out: &mut [f64], invert: bool) {
        let local = DVector::from_iterator(self.idx.len(), self.idx.iter().map(|&i| v[i]));
        let mut z = self.vectors.tr_mul(&local);
        if invert {
            for (zi, s) in z.iter_mut().zip(&self.inv) {
                *zi *= s;
            }
        }
        let back = &self.vectors * z;
        for (k, &i) in self.idx.iter().enumerate() {
            out[i] += back[k];
        }
    }
}

/// Dual frame `X_{r|s}` of a tomographically complete model, so that
/// `Σ X_{r|s} tr(ρ M_{r|s}) = ρ` for every state.
///
/// `X_{r|s}` is the canonical dual `S⁺ m_{r|s}` shifted along the identity so
/// that each has trace `1/#settings`. The shift keeps the duality (the outcome
/// operators of a setting sum to the identity) and makes every estimate
/// exactly trace one for any frequencies.
#[derive(Clone, Debug)]
pub struct ReconstructionOperators {
    model: MeasurementModel,
    blocks: Vec<Block>,
    identity_shift: Vec<f64>,
    complete: bool,
    certificate_residual: Option<f64>,
}

impl ReconstructionOperators {
    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    /// Worst `‖Σ X tr(ρM) − ρ‖_max` over the random certificate states;
    /// `None` for a partial frame.
    pub fn certificate_residual(&self) -> Option<f64> {
        self.certificate_residual
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    fn pinv(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for b in &self.blocks {
            b.apply(v, &mut out, true);
        }
        out
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for b in &self.blocks {
            b.apply(v, &mut out, false);
        }
        out
    }

    /// Pauli coordinates of `Σ_k X_k f_k` for flattened outcome weights `f`.
    pub(crate) fn estimate_coordinates(&self, f: &[f64]) -> Vec<f64> {
        let frame = self.model.frame();
        let mut x = self.pinv(&frame.apply_adjoint(f));
        x[0] += self.identity_shift.iter().zip(f).map(|(s, w)| s * w).sum::<f64>();
        x
    }

    /// `X_{r|s}` for setting index `s` and outcome index `r`.
    pub fn operator(&self, setting: usize, outcome: usize) -> Result<HermitianOperator> {
        let frame = self.model.frame();
        let k = frame
            .offsets
            .get(setting)
            .map(|o| o + outcome)
            .filter(|&k| setting + 1 < frame.offsets.len() && k < frame.offsets[setting + 1])
            .ok_or_else(|| Error::InvalidArgument(format!("no outcome ({setting}, {outcome})")))?;
        let mut e = vec![0.0; frame.rows.len()];
        e[k] = 1.0;
        Ok(frame.operator(&self.estimate_coordinates(&e)))
    }

    /// Coefficients `c_{r|s} = tr(X_{r|s} T)`, so that `tr(ρT) = Σ c P(r|s)`
    /// for every state when `T` lies in the measured span.
    pub fn coefficients(&self, target: &HermitianOperator) -> Result<OutcomeTable> {
        let frame = self.model.frame();
        if target.qubits() != self.model.qubits() {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.model.qubits(),
                actual: target.dim(),
            });
        }
        let t = frame.coordinates(target);
        let proj = self.project(&t);
        let residual = t.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual > 1e-9 {
            return Err(Error::TargetNotInSpan(residual));
        }
        let u = self.pinv(&t);
        let mut table = self.model.table(0.0);
        let mut k = 0;
        for row in table.values.iter_mut() {
            for c in row.iter_mut() {
                let dot: f64 = frame.rows[k].iter().map(|&(i, v)| v * u[i]).sum();
                *c = dot + self.identity_shift[k] * t[0];
                k += 1;
            }
        }
        Ok(table)
    }
}

/// Builds the dual frame of `model`, failing with the unmeasured Pauli
/// directions when the model is not tomographically complete.
pub fn build_reconstruction(model: &MeasurementModel) -> Result<ReconstructionOperators> {
    certify(build(model, true)?)
}

/// Dual frame on the measured span only. Its reconstructions are the
/// projection of the state onto that span; useful for estimating functionals
/// such as fidelities that the model does determine.
pub fn build_partial_reconstruction(model: &MeasurementModel) -> Result<ReconstructionOperators> {
    build(model, false)
}

fn build(model: &MeasurementModel, require_complete: bool) -> Result<ReconstructionOperators> {
    let frame = model.frame();
    let dim = frame.dim();

    // Coordinates coupled through some outcome row share a block of S.
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for row in &frame.rows {
        if let Some(&(first, _)) = row.first() {
            for &(i, _) in &row[1..] {
                let (a, b) = (find(&mut parent, first), find(&mut parent, i));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..dim {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    let mut position = vec![0usize; dim];
    let mut raw: Vec<(Vec<usize>, DMatrix<f64>)> = Vec::new();
    let mut group_of = vec![0usize; dim];
    for (g, idx) in groups.into_values().enumerate() {
        for (k, &i) in idx.iter().enumerate() {
            position[i] = k;
            group_of[i] = g;
        }
        let n = idx.len();
        raw.push((idx, DMatrix::zeros(n, n)));
    }
    for row in &frame.rows {
        if let Some(&(first, _)) = row.first() {
            let s = &mut raw[group_of[first]].1;
            for &(i, vi) in row {
                for &(j, vj) in row {
                    s[(position[i], position[j])] += vi * vj;
                }
            }
        }
    }

    let eigs: Vec<RealEigen> = raw.iter().map(|(_, s)| eig_symmetric(s)).collect::<Result<_>>()?;
    let lambda_max = eigs
        .iter()
        .flat_map(|e| e.values.iter().copied())
        .fold(0.0, f64::max);
    let cut = RANK_TOL * lambda_max.max(f64::MIN_POSITIVE);

    let mut blocks = Vec::new();
    let mut missing = Vec::new();
    for ((idx, _), e) in raw.into_iter().zip(eigs) {
        let keep: Vec<usize> = (0..idx.len()).filter(|&k| e.values[k] > cut).collect();
        for k in (0..idx.len()).filter(|&k| e.values[k] <= cut) {
            let v = e.vectors.column(k);
            let vmax = v.amax();
            for (pos, &i) in idx.iter().enumerate() {
                if v[pos].abs() >= 0.5 * vmax {
                    missing.push(frame.basis[i].to_string());
                }
            }
        }
        let vectors = DMatrix::from_fn(idx.len(), keep.len(), |r, c| e.vectors[(r, keep[c])]);
        let inv = keep.iter().map(|&k| 1.0 / e.values[k]).collect();
        blocks.push(Block { idx, vectors, inv });
    }
    if require_complete && !missing.is_empty() {
        missing.sort();
        missing.dedup();
        let shown = if missing.len() > 24 {
            format!("{}, ... ({} in total)", missing[..24].join(", "), missing.len())
        } else {
            missing.join(", ")
        };
        return Err(Error::TomographicallyIncomplete(shown));
    }

    debug_assert!(frame.basis[0].is_identity());
    let sqrt_d = ((1usize << model.qubits()) as f64).sqrt();
    let n_settings = model.settings().len() as f64;
    let mut recon = ReconstructionOperators {
        model: model.clone(),
        blocks,
        identity_shift: Vec::new(),
        complete: missing.is_empty(),
        certificate_residual: None,
    };
    recon.identity_shift = frame
        .rows
        .iter()
        .map(|row| {
            let mut m = vec![0.0; dim];
            for &(i, v) in row {
                m[i] = v;
            }
            let x0 = recon.pinv(&m)[0];
            (1.0 / n_settings - sqrt_d * x0) / sqrt_d
        })
        .collect();

    Ok(recon)
}

/// Checks the dual frame on random states and stores the worst residual.
fn certify(mut recon: ReconstructionOperators) -> Result<ReconstructionOperators> {
    let frame = recon.model.frame();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7f4a_7c15);
    let mut worst: f64 = 0.0;
    for _ in 0..CERTIFICATE_STATES {
        let rho = random_density(&mut rng, recon.model.qubits());
        let x = frame.coordinates(rho.operator());
        let back = recon.estimate_coordinates(&frame.apply(&x));
        worst = worst.max(frame.operator(&back).max_abs_diff(rho.operator()));
    }
    if worst > CERTIFICATE_TOL {
        return Err(Error::TomographicallyIncomplete(format!(
            "reconstruction residual {worst:.3e} on random states"
        )));
    }
    recon.certificate_residual = Some(worst);
    Ok(recon)
}

/// Output of linear inversion; may be indefinite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearEstimate {
    pub op: HermitianOperator,
    pub min_eigenvalue: f64,
    pub is_physical: bool,
}

impl LinearEstimate {
    fn from_operator(op: HermitianOperator) -> Result<Self> {
        let min_eigenvalue = op.min_eigenvalue()?;
        Ok(LinearEstimate {
            op,
            min_eigenvalue,
            is_physical: min_eigenvalue >= -1e-10,
        })
    }
}

/// `ρ̂ = Σ X_{r|s} F_{r|s}` from observed relative frequencies.
pub fn linear_inversion(counts: &CountData, recon: &ReconstructionOperators) -> Result<LinearEstimate> {
    let freqs = OutcomeTable::frequencies(counts, recon.model())?;
    linear_inversion_from_frequencies(&freqs, recon)
}

/// [`linear_inversion`] from a frequency (or probability) table.
pub fn linear_inversion_from_frequencies(
    freqs: &OutcomeTable,
    recon: &ReconstructionOperators,
) -> Result<LinearEstimate> {
    if !recon.is_complete() {
        return Err(Error::TomographicallyIncomplete(
            "linear inversion needs a complete dual frame".into(),
        ));
    }
    let template = recon.model().table(0.0);
    if !freqs.same_shape(&template) {
        return Err(Error::LabelMismatch("frequency table does not match the model".into()));
    }
    let x = recon.estimate_coordinates(&freqs.flat());
    LinearEstimate::from_operator(recon.model().frame().operator(&x))
}

/// Plug-in fidelity estimate and its one-sided Hoeffding lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityBound {
    pub estimate: f64,
    pub epsilon: f64,
    pub lower: f64,
    pub alpha: f64,
}

/// `F̂ = Σ c_{r|s} F_{r|s}` with `c = tr(X ψψ†)` and `F̂_l = F̂ − ε_α`, where
/// `ε_α` uses the per-setting ranges of `c` and the per-setting shot counts.
pub fn fidelity_bound(
    counts: &CountData,
    model: &MeasurementModel,
    target: &StateVector,
    alpha: f64,
) -> Result<FidelityBound> {
    let recon = build_partial_reconstruction(model)?;
    fidelity_bound_with(counts, &recon, target, alpha)
}

/// [`fidelity_bound`] with a prebuilt dual frame.
pub fn fidelity_bound_with(
    counts: &CountData,
    recon: &ReconstructionOperators,
    target: &StateVector,
    alpha: f64,
) -> Result<FidelityBound> {
    let projector = HermitianOperator::projector(target)?;
    let c = recon.coefficients(&projector)?;
    let freqs = OutcomeTable::frequencies(counts, recon.model())?;
    let estimate = c.dot(&freqs)?;
    let ranges: Vec<f64> = c
        .values
        .iter()
        .map(|row| {
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect();
    let shots: Vec<u64> = counts.aligned(recon.model())?.iter().map(|r| r.iter().sum()).collect();
    let epsilon = hoeffding_threshold_mixed(&ranges, &shots, alpha)?;
    Ok(FidelityBound {
        estimate,
        epsilon,
        lower: estimate - epsilon,
        alpha,
    })
}

/// Lower confidence bound `F̂_l` with `P(F̂_l > ⟨ψ|ρ|ψ⟩) ≤ α`.
pub fn fidelity_lower_confidence(
    counts: &CountData,
    model: &MeasurementModel,
    target: &StateVector,
    alpha: f64,
) -> Result<f64> {
    Ok(fidelity_bound(counts, model, target, alpha)?.lower)
}
