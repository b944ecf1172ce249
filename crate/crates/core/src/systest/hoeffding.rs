use crate::error::{Error, Result};

/// Deviation `ε_α = √(C²·|ln α| / 2N)` beyond which a mean of `N`
/// independent draws with squared range sum `C²` falls with probability at most `α`.
pub fn hoeffding_threshold(c_w_sq: f64, n_shots: u64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) && alpha != 1.0 {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    if n_shots == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if !(c_w_sq >= 0.0) || !c_w_sq.is_finite() {
        return Err(Error::InvalidArgument(format!("C_w^2 = {c_w_sq} must be finite and nonnegative")));
    }
    Ok((c_w_sq * alpha.ln().abs() / (2.0 * n_shots as f64)).sqrt())
}

/// `exp(-2ε²N/C²)`, the Hoeffding tail bound; `0` when `C² = 0` and `ε > 0`.
pub fn hoeffding_tail(c_w_sq: f64, n_shots: u64, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be nonnegative")));
    }
    if epsilon == 0.0 {
        return Ok(1.0);
    }
    if c_w_sq == 0.0 {
        return Ok(0.0);
    }
    Ok((-2.0 * epsilon * epsilon * n_shots as f64 / c_w_sq).exp())
}

/// Threshold for a weighted sum `Σ_s (1/N_s) Σ_shots c_{r|s}` whose per-setting
/// coefficient ranges are `ranges` and shot counts `shots`:
/// `√(|ln α|/2 · Σ_s range_s²/N_s)`. Reduces to [`hoeffding_threshold`] for equal `N_s`.
pub fn hoeffding_threshold_mixed(ranges: &[f64], shots: &[u64], alpha: f64) -> Result<f64> {
    if ranges.len() != shots.len() {
        return Err(Error::DimensionMismatch {
            expected: ranges.len(),
            actual: shots.len(),
        });
    }
    if shots.iter().any(|&n| n == 0) {
        return Err(Error::InvalidArgument("every setting needs at least one shot".into()));
    }
    let weighted: f64 = ranges.iter().zip(shots).map(|(r, &n)| r * r / n as f64).sum();
    hoeffding_threshold(weighted, 1, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_closed_form() {
        // √(9 · ln(100) / 2000)
        let eps = hoeffding_threshold(9.0, 1000, 0.01).unwrap();
        assert!((eps - 0.143_955_777_365_642_4).abs() < 1e-12, "{eps}");
        assert_eq!(hoeffding_threshold(9.0, 1000, 1.0).unwrap(), 0.0);
        let half = hoeffding_threshold(9.0, 4000, 0.01).unwrap();
        assert!((2.0 * half - eps).abs() < 1e-15);
    }

    #[test]
    fn threshold_domain_errors() {
        assert!(hoeffding_threshold(1.0, 10, 0.0).is_err());
        assert!(hoeffding_threshold(1.0, 10, 1.5).is_err());
        assert!(hoeffding_threshold(1.0, 0, 0.5).is_err());
        assert!(hoeffding_threshold(-1.0, 10, 0.5).is_err());
    }

    #[test]
    fn tail_examples_and_inversion() {
        assert_eq!(hoeffding_tail(4.0, 500, 0.0).unwrap(), 1.0);
        assert!((hoeffding_tail(4.0, 500, 0.1).unwrap() - (-2.5f64).exp()).abs() < 1e-15);
        assert!((hoeffding_tail(4.0, 500, 0.1).unwrap() - 0.082_084_998_623_898_8).abs() < 1e-12);
        assert_eq!(hoeffding_tail(0.0, 500, 0.1).unwrap(), 0.0);
        for &alpha in &[0.5, 0.05, 0.01, 1e-6] {
            let eps = hoeffding_threshold(3.0, 777, alpha).unwrap();
            let back = hoeffding_tail(3.0, 777, eps).unwrap();
            assert!((back - alpha).abs() <= 1e-12 * alpha.max(1e-300) + 1e-15, "{alpha} {back}");
        }
    }

    #[test]
    fn mixed_threshold_matches_equal_shots() {
        let a = hoeffding_threshold_mixed(&[1.0, 2.0, 2.0], &[50, 50, 50], 0.05).unwrap();
        let b = hoeffding_threshold(9.0, 50, 0.05).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
