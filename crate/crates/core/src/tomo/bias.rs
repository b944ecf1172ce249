use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::build_reconstruction;
use super::ml::{self, MlOptions};
use crate::algebra::{DensityOperator, HermitianOperator, StateVector};
use crate::error::{Error, Result};
use crate::model::sampling::derive_seed;
use crate::model::{born_probabilities, sample_from_probabilities, MeasurementModel};

pub const LIN: &str = "lin";
pub const ML: &str = "ml";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub shots_per_setting: u64,
    pub trials: usize,
    pub seed: u64,
    pub ml_tol: f64,
    pub ml_max_iter: usize,
}

impl Default for BiasConfig {
    fn default() -> Self {
        let ml = MlOptions::default();
        BiasConfig {
            shots_per_setting: 100,
            trials: 500,
            seed: 0,
            ml_tol: ml.tol,
            ml_max_iter: ml.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(values: &[f64], bin_width: f64) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !min.is_finite() {
            return Histogram { lo: 0.0, bin_width, counts: Vec::new() };
        }
        let lo = (min / bin_width).floor() * bin_width;
        let bins = (((max - lo) / bin_width).floor() as usize) + 1;
        let mut counts = vec![0u64; bins];
        for v in values {
            let b = (((v - lo) / bin_width).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { lo, bin_width, counts }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub histogram: Histogram,
    pub fidelities: Vec<f64>,
}

impl EstimatorSummary {
    fn new(estimator: &str, fidelities: Vec<f64>) -> Self {
        let n = fidelities.len() as f64;
        let mean = fidelities.iter().sum::<f64>() / n;
        let var = if fidelities.len() > 1 {
            fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        EstimatorSummary {
            estimator: estimator.to_string(),
            mean,
            std: var.sqrt(),
            stderr: (var / n).sqrt(),
            histogram: Histogram::new(&fidelities, 0.005),
            fidelities,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub true_fidelity: f64,
    pub config: BiasConfig,
    pub estimators: Vec<EstimatorSummary>,
    /// Trials whose ML iteration hit the iteration cap.
    pub ml_not_converged: usize,
}

impl BiasReport {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == name)
    }

    /// `estimator,trial,fidelity` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,trial,fidelity\n");
        for e in &self.estimators {
            for (t, f) in e.fidelities.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", e.estimator, t, f));
            }
        }
        out
    }
}

/// Repeatedly samples counts from `rho_true`, reconstructs with linear
/// inversion and ML, and records the fidelity of each estimate with `target`.
/// Linear-inversion fidelities are the raw linear functional, unclamped.
pub fn bias_experiment(
    rho_true: &DensityOperator,
    model: &MeasurementModel,
    target: &StateVector,
    config: &BiasConfig,
) -> Result<BiasReport> {
    if config.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let recon = build_reconstruction(model)?;
    let probs = born_probabilities(rho_true, model)?;
    let frame = model.frame();
    let target_coords = frame.coordinates(&HermitianOperator::projector(target)?);
    let true_fidelity = rho_true.operator().expectation_vector(target);
    let opts = MlOptions {
        tol: config.ml_tol,
        max_iter: config.ml_max_iter,
        record_history: false,
    };

    let trials: Vec<(f64, f64, bool)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(config.seed, t as u64);
            let counts = sample_from_probabilities(&probs, model, config.shots_per_setting, seed)?;
            let rows = counts.aligned(model)?;
            let weights: Vec<f64> = rows.iter().flatten().map(|&n| n as f64).collect();
            let freqs: Vec<f64> = weights.iter().map(|n| n / config.shots_per_setting as f64).collect();
            let lin = recon.estimate_coordinates(&freqs);
            let f_lin: f64 = lin.iter().zip(&target_coords).map(|(a, b)| a * b).sum();
            let est = ml::run(frame, &weights, opts)?;
            let f_ml = est.state.operator().expectation_vector(target);
            Ok((f_lin, f_ml, est.converged))
        })
        .collect::<Result<_>>()?;

    Ok(BiasReport {
        true_fidelity,
        config: *config,
        estimators: vec![
            EstimatorSummary::new(LIN, trials.iter().map(|t| t.0).collect()),
            EstimatorSummary::new(ML, trials.iter().map(|t| t.1).collect()),
        ],
        ml_not_converged: trials.iter().filter(|t| !t.2).count(),
    })
}

/// `p` such that `p|ψ⟩⟨ψ| + (1−p)𝟙/d` has fidelity `f` with `|ψ⟩`.
pub fn white_noise_weight(f: f64, qubits: usize) -> f64 {
    let d = (1usize << qubits) as f64;
    (f - 1.0 / d) / (1.0 - 1.0 / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ghz_state, noisy_pure_state};
    use crate::model::pauli_tomography_model;

    #[test]
    fn noise_weight_hits_target_fidelity() {
        let p = white_noise_weight(0.8, 4);
        assert!((p - (0.8 - 1.0 / 16.0) / (15.0 / 16.0)).abs() < 1e-15);
        let rho = noisy_pure_state(&ghz_state(4), p).unwrap();
        assert!((rho.operator().expectation_vector(&ghz_state(4)) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn small_run_is_deterministic_and_exports_csv() {
        let model = pauli_tomography_model(2).unwrap();
        let psi = ghz_state(2);
        let rho = noisy_pure_state(&psi, white_noise_weight(0.8, 2)).unwrap();
        let config = BiasConfig { trials: 8, shots_per_setting: 50, seed: 4, ..Default::default() };
        let a = bias_experiment(&rho, &model, &psi, &config).unwrap();
        let b = bias_experiment(&rho, &model, &psi, &config).unwrap();
        assert_eq!(a, b);
        assert!((a.true_fidelity - 0.8).abs() < 1e-12);
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 1 + 16);
        assert!(csv.starts_with("estimator,trial,fidelity\nlin,0,"));
        let ml = a.estimator(ML).unwrap();
        assert_eq!(ml.histogram.counts.iter().sum::<u64>(), 8);
        assert!(ml.fidelities.iter().all(|f| (0.0..=1.0 + 1e-12).contains(f)));
    }

    #[test]
    fn histogram_bins_cover_extremes() {
        let h = Histogram::new(&[0.5, 0.5049, 0.51, 0.52], 0.005);
        assert_eq!(h.counts.iter().sum::<u64>(), 4);
        assert!((h.lo - 0.5).abs() < 1e-12);
        assert_eq!(h.counts[0], 2);
    }
}
