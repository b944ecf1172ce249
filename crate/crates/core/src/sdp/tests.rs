use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::algebra::random::{random_density, random_hermitian};
use crate::algebra::{eig_hermitian, HermitianOperator};

/// Entrywise real equalities `Σ s_b X_b + Σ u_k F_k = R` on Hermitian matrices.
fn matrix_equalities(dim: usize, blocks: &[(usize, f64)], free: &[(usize, &CMatrix)], rhs: &CMatrix) -> Vec<Equality> {
    let mut out = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            for imag in [false, true] {
                if imag && a == b {
                    continue;
                }
                let mut f = LinearFunctional::default();
                for &(blk, s) in blocks {
                    let t = if imag { BlockTerm::im_entry(blk, a, b) } else { BlockTerm::re_entry(blk, a, b) };
                    f = f.block(t.scaled(s));
                }
                let part = |z: C64| if imag { z.im } else { z.re };
                for &(k, m) in free {
                    let v = part(m[(a, b)]);
                    if v != 0.0 {
                        f = f.free_var(k, v);
                    }
                }
                out.push(Equality { functional: f, rhs: part(rhs[(a, b)]) });
            }
        }
    }
    out
}

/// `min x` subject to `x𝟙 − H ⪰ 0`.
fn max_eigenvalue_problem(h: &CMatrix) -> SdpProblem {
    let d = h.nrows();
    let id = CMatrix::identity(d, d);
    SdpProblem {
        block_dims: vec![d],
        free_vars: 1,
        objective: LinearFunctional::default().free_var(0, 1.0),
        equalities: matrix_equalities(d, &[(0, 1.0)], &[(0, &(-id))], &(-h)),
        box_bounds: Vec::new(),
    }
}

#[test]
fn largest_eigenvalue_of_sigma_z() {
    let p = max_eigenvalue_problem(HermitianOperator::sigma_z().matrix());
    let s = solve(&p, 1e-7).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_value - 1.0).abs() < 1e-6, "{}", s.primal_value);
    assert!(verify_certificate(&p, &s, 1e-7));
}

#[test]
fn trace_with_fixed_corner() {
    let p = SdpProblem {
        block_dims: vec![2],
        objective: LinearFunctional::default().block(BlockTerm::dense(0, &CMatrix::identity(2, 2))),
        equalities: vec![Equality {
            functional: LinearFunctional::default().block(BlockTerm::re_entry(0, 0, 0)),
            rhs: 1.0,
        }],
        ..Default::default()
    };
    let s = solve(&p, 1e-7).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_value - 1.0).abs() < 1e-6);
    assert!(s.dual_value <= s.primal_value + 1e-12);
    assert!(verify_certificate(&p, &s, 1e-7));
}

#[test]
fn random_largest_eigenvalues_match_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for q in [1, 2, 3] {
        for _ in 0..4 {
            let h = random_hermitian(&mut rng, q);
            let exact = eig_hermitian(&h).unwrap().max();
            let p = max_eigenvalue_problem(h.matrix());
            let s = solve(&p, 1e-8).unwrap();
            assert_eq!(s.status, SdpStatus::Optimal);
            assert!((s.primal_value - exact).abs() < 1e-6, "{} vs {exact}", s.primal_value);
            assert!(verify_certificate(&p, &s, 1e-8));
        }
    }
}

#[test]
fn infeasible_trace_is_detected() {
    let p = SdpProblem {
        block_dims: vec![2],
        objective: LinearFunctional::default(),
        equalities: vec![Equality {
            functional: LinearFunctional::default().block(BlockTerm::dense(0, &CMatrix::identity(2, 2))),
            rhs: -1.0,
        }],
        ..Default::default()
    };
    let s = solve(&p, 1e-7).unwrap();
    assert_eq!(s.status, SdpStatus::PrimalInfeasible);
    assert!(!verify_certificate(&p, &s, 1e-7));
}

#[test]
fn unbounded_objective_is_detected() {
    // min −tr X with only X_00 fixed.
    let p = SdpProblem {
        block_dims: vec![2],
        objective: LinearFunctional::default().block(BlockTerm::dense(0, &(-CMatrix::identity(2, 2)))),
        equalities: vec![Equality {
            functional: LinearFunctional::default().block(BlockTerm::re_entry(0, 0, 0)),
            rhs: 1.0,
        }],
        ..Default::default()
    };
    let s = solve(&p, 1e-7).unwrap();
    assert_eq!(s.status, SdpStatus::DualInfeasible);
}

#[test]
fn box_bounded_linear_program() {
    let costs = [0.7, -0.2, -1.3, 0.0];
    let mut obj = LinearFunctional::default();
    for (k, &c) in costs.iter().enumerate() {
        obj = obj.free_var(k, c);
    }
    let p = SdpProblem {
        free_vars: 4,
        objective: obj,
        box_bounds: vec![(0.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (0.0, f64::INFINITY)],
        ..Default::default()
    };
    let s = solve(&p, 1e-8).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_value - (-0.2 - 1.3)).abs() < 1e-6, "{}", s.primal_value);
    assert!(verify_certificate(&p, &s, 1e-8));
}

#[test]
fn duplicated_rows_are_tolerated() {
    let mut p = max_eigenvalue_problem(HermitianOperator::sigma_x().matrix());
    let dup = p.equalities[0].clone();
    p.equalities.push(dup.clone());
    let mut doubled = dup;
    for t in &mut doubled.functional.blocks {
        *t = t.clone().scaled(2.0);
    }
    for f in &mut doubled.functional.free {
        f.1 *= 2.0;
    }
    doubled.rhs *= 2.0;
    p.equalities.push(doubled);
    let s = solve(&p, 1e-7).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_value - 1.0).abs() < 1e-6);
    assert!(verify_certificate(&p, &s, 1e-7));

    let mut bad = p.clone();
    bad.equalities.last_mut().unwrap().rhs += 1.0;
    assert_eq!(solve(&bad, 1e-7).unwrap().status, SdpStatus::PrimalInfeasible);
}

#[test]
fn certificate_rejects_tampering() {
    let p = max_eigenvalue_problem(HermitianOperator::sigma_z().matrix());
    let tol = 1e-7;
    let s = solve(&p, tol).unwrap();
    assert!(verify_certificate(&p, &s, tol));

    let mut neg = s.clone();
    let e = -10.0 * tol * 100.0;
    neg.block_values[0][(1, 1)] += crate::algebra::c(e - 1.0, 0.0);
    assert!(!verify_certificate(&p, &neg, tol));

    let mut dual = s.clone();
    for y in &mut dual.duals {
        *y += 1e-4;
    }
    assert!(!verify_certificate(&p, &dual, tol));

    let mut value = s.clone();
    value.primal_value += 10.0 * tol;
    assert!(!verify_certificate(&p, &value, tol));
}

#[test]
fn rejects_malformed_problems() {
    let mut p = max_eigenvalue_problem(HermitianOperator::sigma_z().matrix());
    p.block_dims[0] = 65;
    assert!(solve(&p, 1e-7).is_err());
    let mut q = max_eigenvalue_problem(HermitianOperator::sigma_z().matrix());
    q.equalities[0].functional.blocks[0].entries.push((0, 1, crate::algebra::c(1.0, 0.0)));
    assert!(matches!(solve(&q, 1e-7), Err(Error::InvalidProblem(_))));
    let mut r = max_eigenvalue_problem(HermitianOperator::sigma_z().matrix());
    r.box_bounds = vec![(1.0, 0.0)];
    assert!(solve(&r, 1e-7).is_err());
}

/// Random problem with a strictly feasible primal point and a strictly
/// feasible dual point, so an optimum exists.
fn random_problem(seed: u64) -> SdpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nblocks = rng.gen_range(1..=2);
    let qubits: Vec<usize> = (0..nblocks).map(|_| rng.gen_range(1..=2)).collect();
    let x0: Vec<CMatrix> = qubits.iter().map(|&q| random_density(&mut rng, q).matrix().clone()).collect();
    let z0: Vec<CMatrix> = qubits.iter().map(|&q| random_density(&mut rng, q).matrix().clone()).collect();
    let free_vars = rng.gen_range(0..=2);
    let u0: Vec<f64> = (0..free_vars).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let neq = rng.gen_range(1..=5);
    let mut equalities = Vec::new();
    let mut y0 = Vec::new();
    let mut a_mats = Vec::new();
    for _ in 0..neq {
        let mut f = LinearFunctional::default();
        let mut mats = Vec::new();
        for (b, &q) in qubits.iter().enumerate() {
            let a = random_hermitian(&mut rng, q).into_matrix();
            f = f.block(BlockTerm::dense(b, &a));
            mats.push(a);
        }
        for k in 0..free_vars {
            f = f.free_var(k, rng.gen_range(-1.0..1.0));
        }
        let rhs = f.eval(&x0, &u0);
        equalities.push(Equality { functional: f, rhs });
        y0.push(rng.gen_range(-1.0..1.0));
        a_mats.push(mats);
    }
    // C = Z0 + Σ y0 A so that (y0, Z0) is dual feasible; free costs follow Bᵀy0.
    let mut objective = LinearFunctional::default();
    for (b, z) in z0.iter().enumerate() {
        let mut cm = z.clone();
        for (j, mats) in a_mats.iter().enumerate() {
            cm += &mats[b] * crate::algebra::c(y0[j], 0.0);
        }
        objective = objective.block(BlockTerm::dense(b, &cm));
    }
    for k in 0..free_vars {
        let cost: f64 = equalities
            .iter()
            .zip(&y0)
            .map(|(e, y)| y * e.functional.free.iter().filter(|t| t.0 == k).map(|t| t.1).sum::<f64>())
            .sum();
        objective = objective.free_var(k, cost);
    }
    SdpProblem {
        block_dims: qubits.iter().map(|q| 1 << q).collect(),
        free_vars,
        objective,
        equalities,
        box_bounds: Vec::new(),
    }
}

fn scale_objective(p: &SdpProblem, s: f64) -> SdpProblem {
    let mut q = p.clone();
    for t in &mut q.objective.blocks {
        *t = t.clone().scaled(s);
    }
    for f in &mut q.objective.free {
        f.1 *= s;
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn weak_duality_and_certificates(seed in any::<u64>()) {
        let p = random_problem(seed);
        let s = solve(&p, 1e-7).unwrap();
        prop_assert!(s.dual_value <= s.primal_value + 1e-12, "{} > {}", s.dual_value, s.primal_value);
        prop_assert_eq!(s.status, SdpStatus::Optimal);
        prop_assert!(verify_certificate(&p, &s, 1e-7));
    }

    #[test]
    fn objective_scaling_scales_values(seed in any::<u64>(), k in prop::sample::select(vec![0.1, 10.0])) {
        let p = random_problem(seed);
        let s = solve(&p, 1e-7).unwrap();
        let t = solve(&scale_objective(&p, k), 1e-7).unwrap();
        prop_assert_eq!(s.status, SdpStatus::Optimal);
        prop_assert_eq!(t.status, SdpStatus::Optimal);
        prop_assert!((t.primal_value - k * s.primal_value).abs() <= 1e-7 * k.max(1.0) * 10.0,
            "{} vs {}", t.primal_value, k * s.primal_value);
    }
}

