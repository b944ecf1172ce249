use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{eig_symmetric, CMatrix, HermitianOperator};
use crate::error::{Error, Result};
use crate::model::{Frequencies, MeasurementModel, OutcomeTable};
use crate::sdp::{self, BlockTerm, Equality, LinearFunctional, SdpProblem, SdpStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// `Σ w M ⪰ 0`, so `w · P ≥ 0` for every quantum `P`.
    Positivity,
    /// `Σ w M = 0`, so `w · P = 0` for every quantum `P`.
    Linearity,
}

/// Coefficients `w_{r|s}` on the outcomes of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessVector {
    pub w: OutcomeTable,
    pub kind: WitnessKind,
    /// `Σ_s (max_r w_{r|s} − min_r w_{r|s})²`
    pub c_w_sq: f64,
}

impl WitnessVector {
    pub fn new(w: OutcomeTable, kind: WitnessKind) -> Self {
        let c_w_sq = range_sq(&w);
        WitnessVector { w, kind, c_w_sq }
    }

    pub fn zero(model: &MeasurementModel, kind: WitnessKind) -> Self {
        WitnessVector::new(model.table(0.0), kind)
    }

    /// Per-setting coefficient ranges.
    pub fn ranges(&self) -> Vec<f64> {
        self.w.values.iter().map(|row| spread(row)).collect()
    }

    /// `Σ w_{r|s} M_{r|s}`.
    pub fn operator(&self, model: &MeasurementModel) -> Result<HermitianOperator> {
        if !self.w.same_shape(&model.table(0.0)) {
            return Err(Error::LabelMismatch("witness does not match the model's outcomes".into()));
        }
        let mut acc = HermitianOperator::zeros(model.qubits());
        for (setting, row) in model.settings().iter().zip(&self.w.values) {
            for (o, &v) in setting.outcomes.iter().zip(row) {
                if v != 0.0 {
                    acc.add_scaled(&o.operator, v);
                }
            }
        }
        Ok(acc)
    }
}

fn spread(row: &[f64]) -> f64 {
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    if row.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn range_sq(w: &OutcomeTable) -> f64 {
    w.values.iter().map(|r| spread(r).powi(2)).sum()
}

/// `Σ_{r,s} w_{r|s} F_{r|s}`.
pub fn witness_statistic(w: &WitnessVector, f: &Frequencies) -> Result<f64> {
    w.w.dot(f)
}

/// Real coordinates of a Hermitian matrix: diagonal, then `Re`, `Im` of the
/// upper triangle. Matches the row order of [`coordinate_equalities`].
fn coords(m: &CMatrix) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        out.push(m[(a, a)].re);
    }
    for a in 0..d {
        for b in a + 1..d {
            out.push(m[(a, b)].re);
            out.push(m[(a, b)].im);
        }
    }
    out
}

/// One equality per real coordinate: `X_coord − Σ w_k (M_k)_coord = 0`, with
/// the block term omitted when `block` is `None`.
fn coordinate_equalities(d: usize, block: Option<usize>, ops: &[Vec<f64>]) -> Vec<Equality> {
    let mut terms: Vec<Option<BlockTerm>> = Vec::with_capacity(d * d);
    for a in 0..d {
        terms.push(block.map(|b| BlockTerm::re_entry(b, a, a)));
    }
    for a in 0..d {
        for b in a + 1..d {
            terms.push(block.map(|k| BlockTerm::re_entry(k, a, b)));
            terms.push(block.map(|k| BlockTerm::im_entry(k, a, b)));
        }
    }
    terms
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut f = LinearFunctional::default();
            if let Some(t) = t {
                f = f.block(t);
            }
            for (k, op) in ops.iter().enumerate() {
                if op[i] != 0.0 {
                    f = f.free_var(k, -op[i]);
                }
            }
            Equality { functional: f, rhs: 0.0 }
        })
        .collect()
}

/// Witness minimising `w · F_train`.
///
/// Positivity: `Σ w M ⪰ 0`, linearity: `Σ w M = 0`; in both cases
/// `w_{r|s} ∈ [−1, 1]`. The solver output is then polished so the defining
/// constraint holds to rounding: positivity witnesses get the smallest
/// identity shift that restores `Σ w M ⪰ 0`, linearity witnesses are
/// projected onto the kernel of `w ↦ Σ w M`.
pub fn find_witness(f_train: &Frequencies, model: &MeasurementModel, kind: WitnessKind) -> Result<WitnessVector> {
    if !f_train.same_shape(&model.table(0.0)) {
        return Err(Error::LabelMismatch("frequencies do not match the model's outcomes".into()));
    }
    let d = 1usize << model.qubits();
    let ops: Vec<Vec<f64>> = model
        .settings()
        .iter()
        .flat_map(|s| s.outcomes.iter().map(|o| coords(o.operator.matrix())))
        .collect();
    let f = f_train.flat();
    let n = f.len();
    let mut objective = LinearFunctional::default();
    for (k, &v) in f.iter().enumerate() {
        if v != 0.0 {
            objective = objective.free_var(k, v);
        }
    }
    let block = (kind == WitnessKind::Positivity).then_some(0);
    let problem = SdpProblem {
        block_dims: block.map(|_| vec![d]).unwrap_or_default(),
        free_vars: n,
        objective,
        equalities: coordinate_equalities(d, block, &ops),
        box_bounds: vec![(-1.0, 1.0); n],
    };
    let sol = sdp::solve(&problem, sdp::DEFAULT_TOL)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(format!("witness search ended with status {:?}", sol.status)));
    }
    let mut w = sol.free_values;
    match kind {
        WitnessKind::Positivity => shift_to_psd(&mut w, model)?,
        WitnessKind::Linearity => project_to_kernel(&mut w, &ops)?,
    }
    Ok(WitnessVector::new(fill(model, &w), kind))
}

/// Adds `δ` to every outcome of the setting with the most headroom below 1;
/// each setting resolves the identity, so this adds `δ𝟙` to `Σ w M`.
fn shift_to_psd(w: &mut [f64], model: &MeasurementModel) -> Result<()> {
    let wv = WitnessVector::new(fill(model, w), WitnessKind::Positivity);
    let lmin = wv.operator(model)?.min_eigenvalue()?;
    if lmin >= 0.0 {
        return Ok(());
    }
    let mut spans = Vec::new();
    let mut start = 0;
    for s in model.settings() {
        spans.push(start..start + s.outcomes.len());
        start += s.outcomes.len();
    }
    let top = |r: &std::ops::Range<usize>| w[r.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let Some(span) = spans.into_iter().min_by(|a, b| top(a).total_cmp(&top(b))) else {
        return Ok(());
    };
    // Slightly more than |λ_min| so the re-evaluated operator stays ⪰ 0.
    let delta = -lmin * (1.0 + 1e-9) + 1e-15;
    for v in &mut w[span] {
        *v += delta;
    }
    Ok(())
}

fn fill(model: &MeasurementModel, w: &[f64]) -> OutcomeTable {
    let mut table = model.table(0.0);
    let mut it = w.iter();
    for row in &mut table.values {
        for v in row.iter_mut() {
            *v = *it.next().unwrap_or(&0.0);
        }
    }
    table
}

/// `w ← w − Aᵀ(AAᵀ)⁺Aw` where column `k` of `A` holds the coordinates of
/// `M_k`. Applied twice to clean up rounding from the first pass.
fn project_to_kernel(w: &mut [f64], ops: &[Vec<f64>]) -> Result<()> {
    let rows = ops.first().map_or(0, Vec::len);
    let a = DMatrix::from_fn(rows, ops.len(), |i, k| ops[k][i]);
    let e = eig_symmetric(&(&a * a.transpose()))?;
    let top = e.values.iter().copied().fold(0.0, f64::max);
    for _ in 0..2 {
        let r = &a * DVector::from_column_slice(w);
        if r.amax() == 0.0 {
            break;
        }
        let mut t = DVector::zeros(rows);
        for (k, &l) in e.values.iter().enumerate() {
            if l > 1e-12 * top {
                let v = e.vectors.column(k);
                t += v * (v.dot(&r) / l);
            }
        }
        for (wi, ci) in w.iter_mut().zip((a.transpose() * t).iter()) {
            *wi -= ci;
        }
    }
    Ok(())
}
