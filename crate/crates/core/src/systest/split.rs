use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::hoeffding::{hoeffding_tail, hoeffding_threshold, hoeffding_threshold_mixed};
use super::witness::{find_witness, witness_statistic, WitnessKind, WitnessVector};
use crate::error::{Error, Result};
use crate::model::sampling::substream;
use crate::model::{CountData, CountMetadata, MeasurementModel, OutcomeTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compatible,
    Incompatible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    /// `w · F` on the test half.
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub p_value: f64,
    pub verdict: Verdict,
    pub witness: WitnessVector,
    pub split_spec: String,
}

/// `exp(−2ε²N/C_w²)`.
pub fn tail_bound(w: &WitnessVector, n_shots: u64, epsilon: f64) -> Result<f64> {
    hoeffding_tail(w.c_w_sq, n_shots, epsilon)
}

/// Shot-level split: per setting, the recorded outcomes are shuffled with a
/// stream derived from `seed` and the setting name, and the first
/// `⌊N/2⌋` go to the first half.
pub fn split_counts(counts: &CountData, model: &MeasurementModel, seed: u64) -> Result<(CountData, CountData)> {
    let aligned = counts.aligned(model)?;
    let mut first = Vec::with_capacity(aligned.len());
    let mut second = Vec::with_capacity(aligned.len());
    for (setting, row) in model.settings().iter().zip(&aligned) {
        let total: u64 = row.iter().sum();
        if total < 2 {
            return Err(Error::InvalidCounts(format!(
                "setting {:?} needs at least 2 shots to split",
                setting.name
            )));
        }
        let mut shots: Vec<usize> = row
            .iter()
            .enumerate()
            .flat_map(|(o, &k)| std::iter::repeat(o).take(k as usize))
            .collect();
        let mut rng = substream(seed, &setting.name);
        shots.shuffle(&mut rng);
        let half = shots.len() / 2;
        let mut a = vec![0u64; row.len()];
        let mut b = vec![0u64; row.len()];
        for (i, &o) in shots.iter().enumerate() {
            if i < half {
                a[o] += 1;
            } else {
                b[o] += 1;
            }
        }
        first.push(a);
        second.push(b);
    }
    let meta = |part: &str| CountMetadata {
        seed: counts.metadata.seed,
        description: format!("{part} of shot-level split (seed {seed})"),
    };
    Ok((
        CountData::from_aligned(model, &first, meta("first half")),
        CountData::from_aligned(model, &second, meta("second half")),
    ))
}

/// Learns a witness on one half of the shots and tests it on the other.
///
/// Positivity is one-sided (`w·F < −ε_α`). Linearity is two-sided with
/// `ε_{α/2}`, so the p-value doubles the one-sided tail.
pub fn split_test(
    counts: &CountData,
    model: &MeasurementModel,
    alpha: f64,
    kind: WitnessKind,
    split_seed: u64,
) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let (train, test) = split_counts(counts, model, split_seed)?;
    let witness = find_witness(&OutcomeTable::frequencies(&train, model)?, model, kind)?;
    let f_test = OutcomeTable::frequencies(&test, model)?;
    let statistic = witness_statistic(&witness, &f_test)?;
    let shots: Vec<u64> = test.aligned(model)?.iter().map(|r| r.iter().sum()).collect();
    let equal = shots.windows(2).all(|p| p[0] == p[1]);
    let tail_alpha = match kind {
        WitnessKind::Positivity => alpha,
        WitnessKind::Linearity => alpha / 2.0,
    };
    // Effective Hoeffding weight: C_w²/N for equal shots, Σ range²/N_s otherwise.
    let (threshold, weight) = if equal {
        let n = shots[0];
        (
            hoeffding_threshold(witness.c_w_sq, n, tail_alpha)?,
            witness.c_w_sq / n as f64,
        )
    } else {
        let ranges = witness.ranges();
        let weight = ranges.iter().zip(&shots).map(|(r, &n)| r * r / n as f64).sum();
        (hoeffding_threshold_mixed(&ranges, &shots, tail_alpha)?, weight)
    };
    let (violation, incompatible) = match kind {
        WitnessKind::Positivity => ((-statistic).max(0.0), statistic < -threshold),
        WitnessKind::Linearity => (statistic.abs(), statistic.abs() > threshold),
    };
    let one_sided = hoeffding_tail(weight, 1, violation)?;
    let p_value = match kind {
        WitnessKind::Positivity => one_sided,
        WitnessKind::Linearity => (2.0 * one_sided).min(1.0),
    };
    Ok(TestReport {
        statistic,
        threshold,
        alpha,
        p_value,
        verdict: if incompatible { Verdict::Incompatible } else { Verdict::Compatible },
        witness,
        split_spec: format!(
            "shot-level 50/50 split per setting, seeded shuffle (seed {split_seed}); witness from the first half, test on the second"
        ),
    })
}
