use opkern::kernel::{self, LabelSet, OperatorKernelTable};
use opkern::linalg::{self, from_real, CMatrix};
use opkern::transfer::{
    construct_partial_isometry, radon_nikodym, random_valid_system, transitive_action_check,
    transfer_report, validate_system, verify_realization, verify_rn_transfer_identity, SignedKernelSystem,
};
use opkern::Error;
use proptest::prelude::*;

fn scalar(x: f64) -> OperatorKernelTable {
    OperatorKernelTable::constant(LabelSet::numbered(1), &from_real(1, 1, &[x])).unwrap()
}

fn scalar_system(k1: f64, k2: f64, l1: f64, l2: f64, t: f64) -> SignedKernelSystem {
    validate_system(scalar(k1), scalar(k2), scalar(l1), scalar(l2), from_real(1, 1, &[t]), None).unwrap()
}

/// Rank-one map `g ↦ f` on the line through `g`: `f g* / ‖g‖²`.
fn outer_product_oracle(g: [f64; 2], f: [f64; 2]) -> [f64; 4] {
    let n2 = g[0] * g[0] + g[1] * g[1];
    [f[0] * g[0] / n2, f[0] * g[1] / n2, f[1] * g[0] / n2, f[1] * g[1] / n2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_systems_match_hand_formulas(k2 in 0.1f64..5.0, l1 in 0.1f64..5.0, l2 in 0.1f64..5.0, t in 0.1f64..1.0) {
        let k1 = k2 + t * t * (l1 - l2);
        prop_assume!(k1 > 0.05);
        let sys = scalar_system(k1, k2, l1, l2, t);
        let real = construct_partial_isometry(&sys, None).unwrap();
        let w = outer_product_oracle([k2.sqrt(), l1.sqrt() * t], [k1.sqrt(), l2.sqrt() * t]);
        let expected = from_real(2, 2, &w);
        prop_assert!((real.w() - expected).norm() <= 1e-12 * (1.0 + sys.scale()));
        let t12 = real.transfer_function("s1", None).unwrap();
        prop_assert!((t12[(0, 0)].re - (k1 / k2).sqrt()).abs() <= 1e-10);
    }

    #[test]
    fn generated_systems_satisfy_realization_laws(seed in 0u64..10_000, n in 1usize..5, d in 1usize..4) {
        let sys = random_valid_system(seed, n, d, false).unwrap();
        let real = construct_partial_isometry(&sys, None).unwrap();
        let w = real.w();
        let law = w * w.adjoint() * w - w;
        prop_assert!(linalg::op_norm(&law) <= 1e-8);
        prop_assert!(real.partial_isometry_defect() <= 1e-8);
        prop_assert!(real.intertwining_residual() <= 1e-8 * sys.scale());
        let check = verify_realization(&real, None).unwrap();
        prop_assert!(check.within(1e-8), "{:?}", check);
        prop_assert!(transitive_action_check(&real, None).unwrap());
    }

    #[test]
    fn equivalence_is_symmetric_and_reflexive(seed in 0u64..10_000, n in 1usize..4, d in 1usize..3) {
        let sys = random_valid_system(seed, n, d, false).unwrap();
        let s = sys.swapped();
        prop_assert!(validate_system(s.k1().clone(), s.k2().clone(), s.l1().clone(), s.l2().clone(), s.t().clone(), None).is_ok());
        let refl = validate_system(sys.k1().clone(), sys.k1().clone(), sys.l1().clone(), sys.l2().clone(), sys.t().clone(), None);
        prop_assert!(matches!(refl, Err(Error::NotEquivalent(_))) || sys.l1() == sys.l2());
        let same_l = validate_system(sys.k1().clone(), sys.k1().clone(), sys.l2().clone(), sys.l2().clone(), sys.t().clone(), None);
        prop_assert!(same_l.is_ok());
    }

    #[test]
    fn scaled_kernel_has_scaled_derivative(seed in 0u64..10_000, n in 1usize..5, d in 1usize..4, c in 0.0f64..1.0) {
        let k = kernel::random_pd_kernel(seed, n, d, n * d).unwrap();
        let rn = radon_nikodym(&k.scale(c), &k, None).unwrap();
        let r = rn.phi.nrows();
        prop_assert!((rn.phi - linalg::identity(r).scale(c)).norm() <= 1e-9);
        prop_assert!(rn.spectrum.0 >= -1e-9 && rn.spectrum.1 <= 1.0 + 1e-9);
    }

    #[test]
    fn derivative_reproduces_dominated_kernel(seed in 0u64..10_000, n in 1usize..4, d in 1usize..3) {
        let k = kernel::random_pd_kernel(seed, n, d, n * d).unwrap();
        let g = kernel::random_pd_kernel(seed + 1, n, d, 1).unwrap();
        let gap = kernel::flatten(&k).unwrap().eigen().min() / kernel::flat_norm(&g);
        let l = k.sub(&g.scale(0.5 * gap)).unwrap();
        let rn = radon_nikodym(&l, &k, None).unwrap();
        prop_assert!(rn.residual <= 1e-9 * kernel::flat_norm(&k));
        prop_assert!(rn.spectrum.0 >= -1e-9 && rn.spectrum.1 <= 1.0 + 1e-9);
        let sq = &rn.sqrt_phi * &rn.sqrt_phi;
        prop_assert!((sq - &rn.phi).norm() <= 1e-10);
    }
}

#[test]
fn worked_scalar_examples() {
    let sys = scalar_system(4.0, 1.0, 4.0, 1.0, 1.0);
    let real = construct_partial_isometry(&sys, None).unwrap();
    assert!((real.w() - from_real(2, 2, &[2.0, 4.0, 1.0, 2.0]).scale(0.2)).norm() < 1e-12);
    for (block, want) in [(real.a(), 0.4), (real.b(), 0.8), (real.c(), 0.2), (real.d(), 0.4)] {
        assert!((block[(0, 0)].re - want).abs() < 1e-12);
    }
    let m = real.resolvent_operand(0);
    assert!((m[(0, 0)].re - 0.2).abs() < 1e-12);
    assert!((real.transfer_function_at(0, None).unwrap()[(0, 0)].re - 2.0).abs() < 1e-12);

    let sys = scalar_system(1.0, 4.0, 1.0, 4.0, 1.0);
    let report = verify_rn_transfer_identity(&sys, None).unwrap();
    assert!((report.rn.phi[(0, 0)].re - 0.25).abs() < 1e-12);
    assert!((report.rn.sqrt_phi[(0, 0)].re - 0.5).abs() < 1e-12);
    assert!(report.deviation < 1e-12);
    let t12 = construct_partial_isometry(&sys, None).unwrap().transfer_function_at(0, None).unwrap();
    assert!((t12[(0, 0)].re - 0.5).abs() < 1e-12);
}

#[test]
fn equal_nonzero_pairs_are_generally_invertible() {
    let sys = scalar_system(1.0, 1.0, 1.0, 1.0, 1.0);
    let real = construct_partial_isometry(&sys, None).unwrap();
    let m = real.resolvent_operand(0);
    assert!((m[(0, 0)].re - 0.5).abs() < 1e-12);
    assert!((real.transfer_function_at(0, None).unwrap()[(0, 0)].re - 1.0).abs() < 1e-12);
}

#[test]
fn rank_deficient_l_is_not_invertible() {
    let l = kernel::random_pd_kernel(2, 2, 2, 1).unwrap();
    let k = kernel::random_pd_kernel(3, 2, 2, 4).unwrap();
    let sys = validate_system(k.clone(), k, l.clone(), l, linalg::identity(2), None).unwrap();
    let real = construct_partial_isometry(&sys, None).unwrap();
    assert!(matches!(
        real.transfer_function_at(0, None),
        Err(Error::NotInvertible { .. })
    ));
}

#[test]
fn dominated_generated_systems_match_derivative() {
    for seed in 0..10 {
        let sys = random_valid_system(seed, 3, 2, true).unwrap();
        assert!(kernel::kernel_leq(sys.k1(), sys.k2(), None).unwrap());
        let report = verify_rn_transfer_identity(&sys, None).unwrap();
        assert!(report.deviation <= 1e-8 * sys.scale(), "seed {seed}: {}", report.deviation);
        assert!(report.rn.spectrum.0 >= -1e-9 && report.rn.spectrum.1 <= 1.0 + 1e-9);
        let full = transfer_report(&sys, None).unwrap();
        assert!(full.within(1e-8), "{full:?}");
    }
}

#[test]
fn non_dominated_system_has_no_derivative_fields() {
    let sys = scalar_system(4.0, 1.0, 4.0, 1.0, 1.0);
    assert!(matches!(verify_rn_transfer_identity(&sys, None), Err(Error::NotDominated(_))));
    let report = transfer_report(&sys, None).unwrap();
    assert_eq!(report.rn_spectrum, None);
    assert!(report.within(1e-12));
}

#[test]
fn shape_mismatch_is_rejected() {
    let a = kernel::random_pd_kernel(1, 2, 2, 4).unwrap();
    let b = kernel::random_pd_kernel(1, 3, 2, 4).unwrap();
    let t: CMatrix = linalg::identity(2);
    assert!(validate_system(a.clone(), b, a.clone(), a, t, None).is_err());
}
