use serde::{Deserialize, Serialize};

use crate::algebra::{CMatrix, DensityOperator, HermitianOperator, C64};
use crate::error::{Error, Result};
use crate::model::{CountData, Frame, MeasurementModel, OutcomeTable};

/// Floor on predicted probabilities inside `R(ρ)` and the log-likelihood.
const PROBABILITY_FLOOR: f64 = 1e-12;
const MAX_DILUTIONS: usize = 40;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlEstimate {
    pub state: DensityOperator,
    pub converged: bool,
    pub iterations: usize,
    /// `Σ N_{r|s} ln P(r|s; ρ)` at the returned state.
    pub log_likelihood: f64,
    /// Log-likelihood after every accepted iteration, starting with the
    /// maximally mixed state. Empty unless requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub record_history: bool,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            tol: 1e-8,
            max_iter: 20_000,
            record_history: false,
        }
    }
}

/// Maximum-likelihood state by the diluted `RρR` fixed-point iteration.
pub fn ml_estimate(counts: &CountData, model: &MeasurementModel, tol: f64, max_iter: usize) -> Result<MlEstimate> {
    ml_estimate_with(counts, model, MlOptions { tol, max_iter, record_history: false })
}

pub fn ml_estimate_with(counts: &CountData, model: &MeasurementModel, opts: MlOptions) -> Result<MlEstimate> {
    let rows = counts.aligned(model)?;
    let weights: Vec<f64> = rows.iter().flatten().map(|&n| n as f64).collect();
    run(model.frame(), &weights, opts)
}

/// ML fit to a frequency table, each setting weighted equally.
pub fn ml_estimate_from_frequencies(
    freqs: &OutcomeTable,
    model: &MeasurementModel,
    opts: MlOptions,
) -> Result<MlEstimate> {
    if !freqs.same_shape(&model.table(0.0)) {
        return Err(Error::LabelMismatch("frequency table does not match the model".into()));
    }
    if freqs.values.iter().flatten().any(|f| !(*f >= 0.0)) {
        return Err(Error::InvalidCounts("negative or NaN frequency".into()));
    }
    run(model.frame(), &freqs.flat(), opts)
}

/// `Σ N_{r|s} ln P(r|s; ρ)` with the probability floor applied.
pub fn log_likelihood(counts: &CountData, model: &MeasurementModel, rho: &DensityOperator) -> Result<f64> {
    let rows = counts.aligned(model)?;
    let weights: Vec<f64> = rows.iter().flatten().map(|&n| n as f64).collect();
    let frame = model.frame();
    let p = frame.apply(&frame.coordinates(rho.operator()));
    Ok(weighted_ll(&weights, &p))
}

fn weighted_ll(weights: &[f64], p: &[f64]) -> f64 {
    weights
        .iter()
        .zip(p)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, &q)| w * q.max(PROBABILITY_FLOOR).ln())
        .sum()
}

fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub(crate) fn run(frame: &Frame, weights: &[f64], opts: MlOptions) -> Result<MlEstimate> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidCounts("no observations".into()));
    }
    let d = 1usize << frame.qubits;
    let mut rho = CMatrix::identity(d, d).map(|z| z / d as f64);
    let mut p = frame.apply(&frame.matrix_coordinates(&rho));
    let mut ll = weighted_ll(weights, &p);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(ll);
    }
    let mut converged = false;
    let mut iterations = 0;
    let mut r_weights = vec![0.0; weights.len()];

    while iterations < opts.max_iter {
        iterations += 1;
        for ((r, &w), &q) in r_weights.iter_mut().zip(weights).zip(&p) {
            *r = if w > 0.0 { w / (total * q.max(PROBABILITY_FLOOR)) } else { 0.0 };
        }
        let r_op = frame.matrix(&frame.apply_adjoint(&r_weights));
        let mut full = &r_op * &rho * &r_op;
        full = (&full + full.adjoint()).map(|z| z * 0.5);
        let tr: f64 = (0..d).map(|i| full[(i, i)].re).sum();
        full /= C64::new(tr, 0.0);

        let full_update = max_abs_diff(&full, &rho);
        let mut step = 1.0;
        let mut accepted = None;
        let mut below_tol = false;
        for _ in 0..MAX_DILUTIONS {
            let trial = if step == 1.0 {
                full.clone()
            } else {
                &rho * C64::new(1.0 - step, 0.0) + &full * C64::new(step, 0.0)
            };
            let trial_p = frame.apply(&frame.matrix_coordinates(&trial));
            let trial_ll = weighted_ll(weights, &trial_p);
            if trial_ll >= ll {
                accepted = Some((trial, trial_p, trial_ll));
                break;
            }
            if step * full_update <= opts.tol {
                below_tol = true;
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((next, next_p, next_ll)) => {
                let update = max_abs_diff(&next, &rho);
                debug_assert!(next_ll >= ll);
                rho = next;
                p = next_p;
                ll = next_ll;
                if opts.record_history {
                    history.push(ll);
                }
                if update <= opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // Only steps below the tolerance remain: stationary within tol.
                converged = below_tol;
                break;
            }
        }
    }

    let state = DensityOperator::new_unchecked(HermitianOperator::from_raw_symmetrized(frame.qubits, rho));
    Ok(MlEstimate {
        state,
        converged,
        iterations,
        log_likelihood: ll,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::random::random_density;
    use crate::algebra::{basis_state, noisy_pure_state, singlet_state};
    use crate::model::{born_probabilities, pauli_tomography_model, sample_counts};
    use crate::tomo::{build_reconstruction, linear_inversion};
    use rand::SeedableRng;

    #[test]
    fn exact_frequencies_of_full_rank_state_are_a_fixed_point() {
        let model = pauli_tomography_model(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let rho = random_density(&mut rng, 2);
        let probs = born_probabilities(&rho, &model).unwrap();
        let opts = MlOptions { tol: 1e-12, max_iter: 100_000, record_history: false };
        let est = ml_estimate_from_frequencies(&probs, &model, opts).unwrap();
        assert!(est.converged);
        assert!(est.state.operator().max_abs_diff(rho.operator()) < 1e-6);
    }

    #[test]
    fn likelihood_is_monotone_and_beats_the_start() {
        let model = pauli_tomography_model(2).unwrap();
        let rho = DensityOperator::pure(&singlet_state()).unwrap();
        let counts = sample_counts(&rho, &model, 50, 3).unwrap();
        let opts = MlOptions { tol: 1e-9, max_iter: 5000, record_history: true };
        let est = ml_estimate_with(&counts, &model, opts).unwrap();
        assert!(est.history.windows(2).all(|w| w[1] >= w[0]));
        let start = log_likelihood(&counts, &model, &DensityOperator::maximally_mixed(2)).unwrap();
        assert!(est.log_likelihood >= start);
        assert!((est.history[0] - start).abs() < 1e-9);
        let again = log_likelihood(&counts, &model, &est.state).unwrap();
        assert!((again - est.log_likelihood).abs() < 1e-6 * again.abs());
        assert!(DensityOperator::new(est.state.operator().clone()).is_ok());
    }

    #[test]
    fn agrees_with_physical_linear_inversion() {
        // One qubit: each setting's frequencies pin one Bloch component, so a
        // physical linear estimate is the unconstrained likelihood maximum.
        let model = pauli_tomography_model(1).unwrap();
        let recon = build_reconstruction(&model).unwrap();
        let rho = noisy_pure_state(&basis_state(1, 0), 0.5).unwrap();
        let counts = sample_counts(&rho, &model, 5000, 8).unwrap();
        let lin = linear_inversion(&counts, &recon).unwrap();
        assert!(lin.is_physical && lin.min_eigenvalue > 1e-3);
        let ml = ml_estimate(&counts, &model, 1e-12, 200_000).unwrap();
        assert!(ml.converged);
        assert!(ml.state.operator().max_abs_diff(&lin.op) < 1e-4);
    }

    #[test]
    fn pure_state_exact_data_reaches_unit_fidelity() {
        let model = pauli_tomography_model(1).unwrap();
        let psi = basis_state(1, 0);
        let probs = born_probabilities(&DensityOperator::pure(&psi).unwrap(), &model).unwrap();
        let est = ml_estimate_from_frequencies(&probs, &model, MlOptions::default()).unwrap();
        let f = est.state.operator().expectation_vector(&psi);
        assert!(f > 1.0 - 1e-6, "{f}");
    }

    #[test]
    fn rejects_mismatched_or_empty_input() {
        let model = pauli_tomography_model(1).unwrap();
        let other = pauli_tomography_model(2).unwrap();
        let t = other.table(0.25);
        assert!(ml_estimate_from_frequencies(&t, &model, MlOptions::default()).is_err());
        let zeros = model.table(0.0);
        assert!(ml_estimate_from_frequencies(&zeros, &model, MlOptions::default()).is_err());
    }
}
