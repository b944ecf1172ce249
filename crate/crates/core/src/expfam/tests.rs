use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::algebra::random::random_density;
use crate::algebra::{basis_state, ghz_state, hadamard, local_unitary, StateVector};

fn ghz3() -> DensityOperator {
    DensityOperator::pure(&ghz_state(3)).unwrap()
}

fn single(label: &str, v: f64) -> BTreeMap<PauliString, f64> {
    [(label.parse().unwrap(), v)].into_iter().collect()
}

/// `ln tr exp(H)` straight from the eigenvalues.
fn log_partition(h: &HermitianOperator) -> f64 {
    h.eig().unwrap().values.iter().map(|l| l.exp()).sum::<f64>().ln()
}

#[test]
fn zero_hamiltonian_is_maximally_mixed() {
    let rho = thermal_state(&LocalHamiltonian::zero(3, 2).unwrap()).unwrap();
    assert!(rho.operator().max_abs_diff(DensityOperator::maximally_mixed(3).operator()) < 1e-14);
}

#[test]
fn single_qubit_gibbs_closed_form() {
    let beta = 0.7;
    let h = LocalHamiltonian::new(1, 1, single("z", beta)).unwrap();
    let rho = thermal_state(&h).unwrap();
    let z = beta.exp() + (-beta).exp();
    assert!((rho.matrix()[(0, 0)].re - beta.exp() / z).abs() < 1e-14);
    assert!((rho.matrix()[(1, 1)].re - (-beta).exp() / z).abs() < 1e-14);
    assert!((h.normalizer().unwrap() + z.ln()).abs() < 1e-14);
}

#[test]
fn expectations_are_log_partition_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = LocalHamiltonian::random(&mut rng, 3, 2, 1.0).unwrap();
    let rho = thermal_state(&h).unwrap();
    assert!(rho.operator().min_eigenvalue().unwrap() > 1e-6);
    let step = 1e-5;
    for (p, &v) in h.coefficients() {
        let mut up = h.coefficients().clone();
        let mut down = h.coefficients().clone();
        up.insert(p.clone(), v + step);
        down.insert(p.clone(), v - step);
        let fd = (log_partition(&LocalHamiltonian::new(3, 2, up).unwrap().operator())
            - log_partition(&LocalHamiltonian::new(3, 2, down).unwrap().operator()))
            / (2.0 * step);
        assert!((fd - rho.expectation(&p.operator())).abs() < 1e-5, "{p}");
    }
}

#[test]
fn overflow_guard() {
    let h = LocalHamiltonian::new(2, 2, single("zz", 60.0)).unwrap();
    assert!(matches!(thermal_state(&h), Err(Error::HamiltonianOverflow(_))));
}

#[test]
fn hamiltonian_rejects_heavy_strings() {
    assert!(LocalHamiltonian::new(3, 1, single("zz0", 1.0)).is_err());
    assert!(LocalHamiltonian::new(3, 2, single("000", 1.0)).is_err());
    let text = r#"{"qubits":3,"k":1,"coefficients":{"zz0":1.0}}"#;
    assert!(serde_json::from_str::<LocalHamiltonian>(text).is_err());
}

#[test]
fn marginals_of_fixtures() {
    for v in marginal_expectations(&DensityOperator::maximally_mixed(3), 3).unwrap().values() {
        assert!(v.abs() < 1e-15);
    }
    let zero = DensityOperator::pure(&basis_state(3, 0)).unwrap();
    for (p, v) in marginal_expectations(&zero, 2).unwrap() {
        let only_z = p.labels().iter().all(|&l| l == crate::algebra::Pauli::I || l == crate::algebra::Pauli::Z);
        assert_eq!(v, if only_z { 1.0 } else { 0.0 }, "{p}");
    }
    let r5 = DensityOperator::pure(&ring_cluster_5()).unwrap();
    for v in marginal_expectations(&r5, 2).unwrap().values() {
        assert!(v.abs() < 1e-12);
    }
}

#[test]
fn ghz_first_order_projection() {
    let proj = info_projection(&ghz3(), 1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(proj.converged);
    assert!(proj.state.operator().max_abs_diff(DensityOperator::maximally_mixed(3).operator()) < 1e-12);
    assert!((d_k(&ghz3(), 1, DEFAULT_TOL).unwrap() - 3.0).abs() < 1e-6);
}

#[test]
fn ghz_second_order_projection_reaches_the_boundary() {
    // The maximum-entropy state with GHZ two-body marginals is
    // (|000⟩⟨000| + |111⟩⟨111|)/2, so D₂ = 1 bit in the limit.
    let d2 = d_k(&ghz3(), 2, DEFAULT_TOL).unwrap();
    assert!((d2 - 1.0).abs() < 1e-5, "{d2}");
    assert!(d2 <= d_k(&ghz3(), 1, DEFAULT_TOL).unwrap());
}

#[test]
fn product_state_has_no_multi_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rho = random_density(&mut rng, 1)
        .tensor(&random_density(&mut rng, 1))
        .tensor(&random_density(&mut rng, 1));
    assert!(d_k(&rho, 1, DEFAULT_TOL).unwrap().abs() < 1e-6);
}

#[test]
fn first_order_projection_is_the_product_of_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rho = random_density(&mut rng, 3);
    let proj = info_projection(&rho, 1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let product = (0..3)
        .map(|q| rho.partial_trace(QubitSet(1 << q)).unwrap())
        .reduce(|a, b| a.tensor(&b))
        .unwrap();
    assert!(proj.state.operator().max_abs_diff(product.operator()) < 1e-6);
    assert!((d_k(&rho, 1, DEFAULT_TOL).unwrap() - multi_information(&rho).unwrap()).abs() < 1e-6);
}

#[test]
fn projection_rejects_bad_locality() {
    assert!(info_projection(&ghz3(), 0, DEFAULT_TOL, 10).is_err());
    assert!(info_projection(&ghz3(), 3, DEFAULT_TOL, 10).is_err());
}

#[test]
fn iteration_limit_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rho = random_density(&mut rng, 3);
    let proj = info_projection(&rho, 2, 1e-12, 1).unwrap();
    assert!(!proj.converged);
    assert_eq!(proj.iterations, 1);
    assert!(proj.marginal_residual > 1e-12);
}

#[test]
fn pythagorean_special_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rho = random_density(&mut rng, 3);
    let proj = info_projection(&rho, 2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(pythagorean_residual(&rho, &proj.state, 2, DEFAULT_TOL).unwrap() < 2e-6);
    let mixed = DensityOperator::maximally_mixed(3);
    assert!(pythagorean_residual(&rho, &mixed, 1, DEFAULT_TOL).unwrap() < 1e-5);
    // A state outside Q_1 is refused.
    assert!(pythagorean_residual(&rho, &ghz3().mix(&mixed, 0.5).unwrap(), 1, DEFAULT_TOL).is_err());
}

#[test]
fn ring_cluster_is_stabilized() {
    let r = ring_cluster_5();
    assert!((r.norm() - 1.0).abs() < 1e-14);
    let rho = DensityOperator::pure(&r).unwrap();
    for g in ring_stabilizers() {
        let mut out = StateVector::zeros(32);
        for (row, col, e) in g.entries() {
            out[row] += e * r[col];
        }
        assert!((out - &r).camax() < 1e-12, "{g}");
        assert!((rho.expectation(&g.operator()) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn printed_amplitudes_are_a_local_rotation() {
    let v = ring_cluster_5_local_form();
    let nonzero: Vec<usize> = (0..32).filter(|&i| v[i].norm() > 0.0).collect();
    assert_eq!(nonzero, vec![0b00000, 0b00110, 0b01011, 0b01101, 0b10001, 0b10111, 0b11010, 0b11100]);
    let id = CMatrix::identity(2, 2);
    let u = local_unitary(&[hadamard(), id.clone(), hadamard(), id.clone(), id]);
    let rotated = u * ring_cluster_5();
    assert!((rotated - &v).camax() < 1e-12);
}

#[test]
fn ring_cluster_pair_marginals_are_maximally_mixed() {
    let rho = DensityOperator::pure(&ring_cluster_5()).unwrap();
    let quarter = DensityOperator::maximally_mixed(2);
    for a in 0..5 {
        for b in a + 1..5 {
            let m = rho.partial_trace(QubitSet((1 << a) | (1 << b))).unwrap();
            assert!(m.operator().max_abs_diff(quarter.operator()) < 1e-12);
        }
    }
}

fn near_ring(fidelity: f64) -> DensityOperator {
    // F = p + (1 − p)/32 for p|R₅⟩⟨R₅| + (1 − p)𝟙/32.
    let p = (fidelity - 1.0 / 32.0) / (31.0 / 32.0);
    DensityOperator::pure(&ring_cluster_5())
        .unwrap()
        .mix(&DensityOperator::maximally_mixed(5), p)
        .unwrap()
}

#[test]
fn exclusion_fixtures() {
    let pure = thermal_exclusion_check(&DensityOperator::pure(&ring_cluster_5()).unwrap()).unwrap();
    assert!((pure.fidelity - 1.0).abs() < 1e-12 && pure.excluded);
    let mixed = thermal_exclusion_check(&DensityOperator::maximally_mixed(5)).unwrap();
    assert!((mixed.fidelity - 1.0 / 32.0).abs() < 1e-12 && !mixed.excluded);
    let noisy = DensityOperator::pure(&ring_cluster_5())
        .unwrap()
        .mix(&DensityOperator::maximally_mixed(5), 0.97)
        .unwrap();
    let check = thermal_exclusion_check(&noisy).unwrap();
    assert!((check.fidelity - (0.97 + 0.03 / 32.0)).abs() < 1e-12);
    assert!(check.excluded);
    assert!(thermal_exclusion_check(&ghz3()).is_err());
}

#[test]
fn exclusion_boundary() {
    assert!(thermal_exclusion_check(&near_ring(EXCLUSION_FIDELITY + 1e-6)).unwrap().excluded);
    assert!(!thermal_exclusion_check(&near_ring(EXCLUSION_FIDELITY - 1e-6)).unwrap().excluded);
}

#[test]
fn high_fidelity_states_gain_entropy_under_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let r5 = DensityOperator::pure(&ring_cluster_5()).unwrap();
    for _ in 0..3 {
        let noise = random_density(&mut rng, 5);
        let rho = r5.mix(&noise, 0.98).unwrap();
        assert!(thermal_exclusion_check(&rho).unwrap().excluded);
        let proj = info_projection(&rho, 2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(proj.converged);
        assert!(vn_entropy(&rho).unwrap() < vn_entropy(&proj.state).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn thermal_states_are_fixed_points(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = LocalHamiltonian::random(&mut rng, 3, 2, 1.0).unwrap();
        let rho = thermal_state(&h).unwrap();
        prop_assert!(d_k(&rho, 2, DEFAULT_TOL).unwrap() <= 1e-6);
    }

    #[test]
    fn projection_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&mut rng, 3);
        let proj = info_projection(&rho, 2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert!(proj.converged && proj.marginal_residual <= DEFAULT_TOL);
        // Reconstruction from the stored coefficients.
        let again = thermal_state(&proj.hamiltonian).unwrap();
        prop_assert!(again.operator().max_abs_diff(proj.state.operator()) < 1e-8);
        // Maximum entropy over the states sharing the marginals.
        prop_assert!(vn_entropy(&proj.state).unwrap() >= vn_entropy(&rho).unwrap() - 1e-9);
        let d1 = d_k(&rho, 1, DEFAULT_TOL).unwrap();
        let d2 = d_k(&rho, 2, DEFAULT_TOL).unwrap();
        prop_assert!(d1 >= d2 - 1e-9 && d2 >= -1e-9, "{} {}", d1, d2);
        prop_assert!((d1 - multi_information(&rho).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn pythagorean_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&mut rng, 3);
        let eta = thermal_state(&LocalHamiltonian::random(&mut rng, 3, 2, 1.0).unwrap()).unwrap();
        prop_assert!(pythagorean_residual(&rho, &eta, 2, DEFAULT_TOL).unwrap() <= 1e-5);
    }
}
