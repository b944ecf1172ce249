//! State estimation: linear inversion, maximum likelihood, the bias harness
//! and fidelity confidence bounds.

mod bias;
mod linear;
mod ml;

pub use bias::{
    bias_experiment, white_noise_weight, BiasConfig, BiasReport, EstimatorSummary, Histogram, LIN, ML,
};
pub use linear::{
    build_partial_reconstruction, build_reconstruction, fidelity_bound, fidelity_bound_with,
    fidelity_lower_confidence, linear_inversion, linear_inversion_from_frequencies, FidelityBound,
    LinearEstimate, ReconstructionOperators,
};
pub use ml::{log_likelihood, ml_estimate, ml_estimate_from_frequencies, ml_estimate_with, MlEstimate, MlOptions};
