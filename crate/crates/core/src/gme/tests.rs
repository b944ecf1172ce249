use std::str::FromStr;

use proptest::prelude::*;

use super::*;
use crate::algebra::{basis_state, ghz_state, noisy_pure_state, singlet_state};

fn ghz3() -> DensityOperator {
    DensityOperator::pure(&ghz_state(3)).unwrap()
}

fn cut(n: usize, side: &[usize]) -> Bipartition {
    Bipartition::new(n, QubitSet(side.iter().map(|&i| 1u32 << i).sum())).unwrap()
}

#[test]
fn cut_enumeration() {
    assert_eq!(Bipartition::all(2).unwrap().len(), 1);
    assert_eq!(Bipartition::all(3).unwrap().len(), 3);
    assert_eq!(Bipartition::all(4).unwrap().len(), 7);
    assert_eq!(Bipartition::all(5).unwrap().len(), 15);
    let four = Bipartition::all(4).unwrap();
    for (i, a) in four.iter().enumerate() {
        for b in &four[i + 1..] {
            assert!(a.side_a != b.side_a && a.side_a != b.side_b());
        }
    }
    assert!(Bipartition::new(3, QubitSet(0)).is_err());
    assert!(Bipartition::new(3, QubitSet(0b111)).is_err());
    assert!(Bipartition::new(3, QubitSet(0b1000)).is_err());
}

#[test]
fn singlet_partial_transpose() {
    let rho = DensityOperator::pure(&singlet_state()).unwrap();
    let c = cut(2, &[0]);
    let check = ppt_check(&rho, &c).unwrap();
    assert!(!check.is_ppt);
    assert!((check.min_eigenvalue + 0.5).abs() < 1e-12);
    assert!((negativity(&rho, &c).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn ghz_negativity_per_cut() {
    for c in Bipartition::all(3).unwrap() {
        assert!((negativity(&ghz3(), &c).unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn werner_boundary_by_bisection() {
    let psi = singlet_state();
    let c = cut(2, &[1]);
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        let rho = noisy_pure_state(&psi, mid).unwrap();
        let check = ppt_check(&rho, &c).unwrap();
        assert!((check.min_eigenvalue - (1.0 - 3.0 * mid) / 4.0).abs() < 1e-12);
        if check.is_ppt {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - 1.0 / 3.0).abs() < 1e-6, "{lo}");
}

#[test]
fn product_states_are_ppt() {
    let rho = DensityOperator::pure(&basis_state(3, 5)).unwrap();
    for c in Bipartition::all(3).unwrap() {
        assert!(ppt_check(&rho, &c).unwrap().is_ppt);
        assert_eq!(negativity(&rho, &c).unwrap(), 0.0);
    }
}

#[test]
fn ghz3_value_and_certificate() {
    let cert = pptmix_sdp(&ghz3()).unwrap();
    assert!((cert.value + 0.5).abs() < 1e-4, "{}", cert.value);
    assert!(cert.dual_gap.abs() <= 1e-6, "{}", cert.dual_gap);
    assert_eq!(cert.verdict, GmeVerdict::GenuinelyMultipartiteEntangled);
    assert!(cert.constraint_violation().unwrap() < 1e-6);
    assert!((ghz3().expectation(&cert.witness) - cert.value).abs() < 1e-6);
    assert_eq!(cert.decompositions.len(), 3);
}

#[test]
fn ghz3_known_witness_is_feasible() {
    // W = 𝟙/2 − |GHZ⟩⟨GHZ| has tr(ϱW) = −1/2, so the optimum cannot be higher.
    let mut w = HermitianOperator::identity(3).scale(0.5);
    w.add_scaled(ghz3().operator(), -1.0);
    assert!((ghz3().expectation(&w) + 0.5).abs() < 1e-12);
    let cert = pptmix_sdp(&ghz3()).unwrap();
    assert!(cert.value <= -0.5 + 1e-6);
}

#[test]
fn separable_fixtures_are_ppt_mixtures() {
    let biseparable = DensityOperator::pure(&singlet_state())
        .unwrap()
        .tensor(&DensityOperator::pure(&basis_state(1, 0)).unwrap());
    for rho in [biseparable, DensityOperator::maximally_mixed(3)] {
        let cert = pptmix_sdp(&rho).unwrap();
        assert!(cert.value >= -1e-6, "{}", cert.value);
        assert_eq!(cert.verdict, GmeVerdict::PptMixture);
        assert_eq!(genuine_negativity(&rho).unwrap(), (-cert.value).max(0.0));
        assert!(cert.constraint_violation().unwrap() < 1e-6);
    }
}

#[test]
fn two_qubit_program_is_the_ppt_criterion() {
    let rho = DensityOperator::pure(&singlet_state()).unwrap();
    let cert = pptmix_sdp(&rho).unwrap();
    assert!(cert.value < -1e-3);
    let werner = noisy_pure_state(&singlet_state(), 0.3).unwrap();
    assert!(pptmix_sdp(&werner).unwrap().value >= -1e-6);
}

#[test]
fn noisy_ghz_negativity_is_monotone() {
    let mut last = f64::INFINITY;
    for i in 0..=10 {
        let p = i as f64 / 10.0;
        let rho = noisy_pure_state(&ghz_state(3), 1.0 - p).unwrap();
        let n = genuine_negativity(&rho).unwrap();
        assert!(n <= last + 1e-6, "p={p}: {n} > {last}");
        last = n;
    }
    assert!(last < 1e-6);
}

#[test]
fn full_basis_expectations_match_the_state_program() {
    let rho = noisy_pure_state(&ghz_state(3), 0.8).unwrap();
    let ops: Vec<HermitianOperator> = crate::algebra::PauliString::all(3)
        .into_iter()
        .skip(1)
        .map(|p| p.operator())
        .collect();
    let means: Vec<f64> = ops.iter().map(|a| rho.expectation(a)).collect();
    let a = pptmix_from_expectations(&ops, &means, 3).unwrap();
    let b = pptmix_sdp(&rho).unwrap();
    assert!((a.value - b.value).abs() < 1e-5, "{} vs {}", a.value, b.value);
    assert!(a.constraint_violation().unwrap() < 1e-6);
}

#[test]
fn stabilizer_data_exclude_ppt_mixtures() {
    let rho = ghz3();
    let ops: Vec<HermitianOperator> = ["XXX", "ZZI", "IZZ", "ZIZ"]
        .iter()
        .map(|s| s.parse::<crate::algebra::PauliString>().unwrap().operator())
        .collect();
    let means: Vec<f64> = ops.iter().map(|a| rho.expectation(a)).collect();
    let cert = pptmix_from_expectations(&ops, &means, 3).unwrap();
    assert!(cert.value < -1e-3, "{}", cert.value);
    // Less data can only weaken the bound.
    assert!(cert.value >= pptmix_sdp(&rho).unwrap().value - 1e-6);

    let mixed = DensityOperator::maximally_mixed(3);
    let means: Vec<f64> = ops.iter().map(|a| mixed.expectation(a)).collect();
    assert!(pptmix_from_expectations(&ops, &means, 3).unwrap().value >= -1e-6);
}

#[test]
fn impossible_expectations_are_rejected() {
    let z = crate::algebra::PauliString::from_str("ZII").unwrap().operator();
    assert!(matches!(
        pptmix_from_expectations(&[z.clone()], &[1.5], 3),
        Err(Error::InfeasibleData(_))
    ));
    // ⟨ZII⟩ = 1 and ⟨−ZII⟩ = 1 are individually in range but jointly impossible.
    assert!(matches!(
        pptmix_from_expectations(&[z.clone(), z.scale(-1.0)], &[1.0, 1.0], 3),
        Err(Error::InfeasibleData(_))
    ));
}

#[test]
fn failing_ppt_cut_gives_negative_single_cut_value() {
    let rho = noisy_pure_state(&ghz_state(3), 0.5).unwrap();
    for c in Bipartition::all(3).unwrap() {
        let check = ppt_check(&rho, &c).unwrap();
        let v = pptmix_sdp_cuts(&rho, &[c]).unwrap().value;
        if !check.is_ppt {
            assert!(v < 0.0, "{c}: {v}");
        }
        assert_eq!(negativity(&rho, &c).unwrap() == 0.0, check.is_ppt);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn local_unitary_invariance(seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let factors: Vec<CMatrix> = (0..3).map(|_| crate::algebra::random::random_unitary(&mut rng, 2)).collect();
        let u = crate::algebra::local_unitary(&factors);
        let rho = noisy_pure_state(&ghz_state(3), 0.9).unwrap();
        let a = genuine_negativity(&rho).unwrap();
        let b = genuine_negativity(&rho.conjugate_by(&u)).unwrap();
        prop_assert!((a - b).abs() < 1e-4, "{} vs {}", a, b);
    }

    #[test]
    fn certificates_satisfy_constraints(seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rho = crate::algebra::random::random_density(&mut rng, 3);
        let cert = pptmix_sdp(&rho).unwrap();
        prop_assert!(cert.constraint_violation().unwrap() < 1e-6);
        prop_assert!((rho.expectation(&cert.witness) - cert.value).abs() < 1e-6);
        prop_assert_eq!(cert.verdict == GmeVerdict::GenuinelyMultipartiteEntangled, cert.value < VERDICT_THRESHOLD);
    }
}
