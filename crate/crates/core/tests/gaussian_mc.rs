use opkern::gaussian::{
    assemble_joint, condition, conditional_cov_equal, empirical_covariance, empirical_cross_covariance,
    make_sampler, mc_verify_conditional, pointwise_mean_operator, sample_joint, CouplingTable, JointKernel,
};
use opkern::kernel::{self, LabelSet, OperatorKernelTable};
use opkern::linalg::{self, from_real, CMatrix};
use opkern::Error;
use proptest::prelude::*;

const N: usize = 200_000;

fn scalar(x: f64) -> OperatorKernelTable {
    OperatorKernelTable::constant(LabelSet::numbered(1), &from_real(1, 1, &[x])).unwrap()
}

fn scalar_coupling(x: f64) -> CouplingTable {
    CouplingTable::constant(LabelSet::numbered(1), &from_real(1, 1, &[x])).unwrap()
}

fn gram(k: &OperatorKernelTable) -> CMatrix {
    kernel::flatten(k).unwrap().into_matrix()
}

fn rel_frobenius(est: &OperatorKernelTable, k: &OperatorKernelTable) -> f64 {
    (gram(est) - gram(k)).norm() / gram(k).norm()
}

/// Hermitian square root by eigendecomposition.
fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|x| linalg::real(x.max(0.0).sqrt()));
    &eig.eigenvectors * CMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

/// `T_gram = α K^{1/2} U L^{1/2}` with `‖U‖ = 1`; admissible for `α ≤ 1`.
fn coupling_with_strength(k: &OperatorKernelTable, l: &OperatorKernelTable, seed: u64, alpha: f64) -> CouplingTable {
    let nd = k.n() * k.dim_h();
    let u = kernel::random_complex_matrix(seed, nd, nd);
    let u = u.scale(1.0 / linalg::op_norm(&u));
    let t = (sqrt_psd(&gram(k)) * u * sqrt_psd(&gram(l))).scale(alpha);
    CouplingTable::from_gram(k.labels().clone(), k.dim_h(), &t).unwrap()
}

/// `[[K, T], [T*, L]]` in Gram coordinates, without interleaving labels.
fn brute_force_block(k: &OperatorKernelTable, l: &OperatorKernelTable, t: &CouplingTable) -> CMatrix {
    let nd = k.n() * k.dim_h();
    let mut m = CMatrix::zeros(2 * nd, 2 * nd);
    m.view_mut((0, 0), (nd, nd)).copy_from(&gram(k));
    m.view_mut((0, nd), (nd, nd)).copy_from(&t.gram());
    m.view_mut((nd, 0), (nd, nd)).copy_from(&t.gram().adjoint());
    m.view_mut((nd, nd), (nd, nd)).copy_from(&gram(l));
    m
}

fn min_eig(m: &CMatrix) -> (f64, f64) {
    let values = m.clone().symmetric_eigen().eigenvalues;
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    (values.min(), scale)
}

#[test]
fn scalar_variance_concentrates() {
    let batch = make_sampler(&scalar(4.0), 3).unwrap().sample(100_000);
    let var = empirical_covariance(&batch).unwrap().block(0, 0)[(0, 0)].re;
    assert!((var - 4.0).abs() <= 4.0 * 5.0 / (2.0e5_f64).sqrt(), "{var}");
}

#[test]
fn identity_covariance_recovered() {
    let k = OperatorKernelTable::identity(LabelSet::numbered(1), 2);
    let est = empirical_covariance(&make_sampler(&k, 11).unwrap().sample(N)).unwrap();
    assert!(linalg::op_norm(&(est.block(0, 0) - linalg::identity(2))) <= 0.03);
}

#[test]
fn random_kernels_recovered() {
    for (seed, n, d) in [(1, 3, 2), (2, 4, 4), (3, 8, 2), (4, 16, 1), (5, 2, 3)] {
        let k = kernel::random_pd_kernel(seed, n, d, n * d).unwrap();
        let est = empirical_covariance(&make_sampler(&k, seed + 100).unwrap().sample(N)).unwrap();
        let err = rel_frobenius(&est, &k);
        assert!(err <= 0.02, "seed {seed}: {err}");
    }
}

#[test]
fn joint_cross_covariance() {
    for (t, want) in [(0.0, 0.0), (0.5, 0.5)] {
        let joint = assemble_joint(scalar(1.0), scalar(1.0), scalar_coupling(t), None).unwrap();
        let (wk, wl) = sample_joint(&joint, 5, N).unwrap();
        let cross = empirical_cross_covariance(&wk, &wl).unwrap()[(0, 0)].re;
        assert!((cross - want).abs() <= 5.0 / (N as f64).sqrt(), "{t}: {cross}");
    }
}

#[test]
fn joint_marginal_matches_kernel() {
    let k = kernel::random_pd_kernel(21, 2, 2, 4).unwrap();
    let l = kernel::random_pd_kernel(22, 2, 2, 4).unwrap();
    let joint = assemble_joint(k.clone(), l.clone(), coupling_with_strength(&k, &l, 23, 0.7), None).unwrap();
    let (wk, wl) = sample_joint(&joint, 8, N).unwrap();
    assert!(rel_frobenius(&empirical_covariance(&wk).unwrap(), &k) <= 0.02);
    assert!(rel_frobenius(&empirical_covariance(&wl).unwrap(), &l) <= 0.02);
}

#[test]
fn scalar_conditional_law() {
    let joint = assemble_joint(scalar(1.0), scalar(1.0), scalar_coupling(0.5), None).unwrap();
    let law = condition(&joint, &from_real(1, 1, &[1.0]), None).unwrap();
    assert!((law.mean_map[(0, 0)].re - 0.5).abs() <= 1e-12);
    assert!((law.cond_cov.block(0, 0)[(0, 0)].re - 0.75).abs() <= 1e-12);
    let report = mc_verify_conditional(&joint, 1, N, None).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn independent_conditional_law() {
    let joint = assemble_joint(scalar(1.0), scalar(1.0), scalar_coupling(0.0), None).unwrap();
    let report = mc_verify_conditional(&joint, 2, N, None).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn block_conditional_law() {
    let k = kernel::random_pd_kernel(31, 2, 2, 4).unwrap();
    let l = kernel::random_pd_kernel(32, 2, 2, 4).unwrap();
    let joint = assemble_joint(k.clone(), l.clone(), coupling_with_strength(&k, &l, 33, 0.8), None).unwrap();
    let report = mc_verify_conditional(&joint, 3, N, None).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn pointwise_display_on_block_diagonal_couplings() {
    let labels = LabelSet::numbered(3);
    let diag = |seed: u64| {
        OperatorKernelTable::from_fn(labels.clone(), 2, |i, j| {
            if i == j {
                let g = kernel::random_complex_matrix(seed + i as u64, 2, 2);
                g.adjoint() * g + linalg::identity(2)
            } else {
                CMatrix::zeros(2, 2)
            }
        })
    };
    let (k, l) = (diag(10), diag(20));
    let t = CouplingTable::from_fn(labels.clone(), 2, |i, j| {
        if i == j {
            kernel::random_complex_matrix(30 + i as u64, 2, 2).scale(0.1)
        } else {
            CMatrix::zeros(2, 2)
        }
    })
    .unwrap();
    let joint = assemble_joint(k, l, t, None).unwrap();
    let obs = kernel::random_complex_matrix(40, 3, 2);
    let law = condition(&joint, &obs, None).unwrap();
    for (i, s) in labels.iter().enumerate() {
        let op = pointwise_mean_operator(&joint, s, None).unwrap();
        let local = op * obs.row(i).transpose();
        assert!((local - law.mean.row(i).transpose()).norm() <= 1e-12);
    }
}

fn check_schur_decision(joint: Result<JointKernel, Error>, brute: (f64, f64)) -> bool {
    let (lo, scale) = brute;
    let psd = lo >= -1e-10 * scale;
    match joint {
        Ok(_) => psd,
        Err(Error::NotPositiveDefinite { .. }) => !psd,
        Err(e) => panic!("unexpected error {e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schur_acceptance_matches_brute_force(seed in 0u64..10_000, n in 1usize..4, d in 1usize..4, alpha in 0.0f64..2.0) {
        let k = kernel::random_pd_kernel(seed, n, d, n * d).unwrap();
        let l = kernel::random_pd_kernel(seed + 1, n, d, n * d).unwrap();
        let t = coupling_with_strength(&k, &l, seed + 2, alpha);
        let brute = min_eig(&brute_force_block(&k, &l, &t));
        prop_assert!(check_schur_decision(assemble_joint(k, l, t, None), brute));
    }

    #[test]
    fn batches_concatenate(seed in 0u64..1000, a in 1usize..3000, b in 1usize..3000) {
        let k = kernel::random_pd_kernel(seed, 2, 2, 3).unwrap();
        let mut s = make_sampler(&k, seed).unwrap();
        let first = s.next_batch(a);
        let second = s.next_batch(b);
        prop_assert_eq!(first.concat(&second).unwrap(), make_sampler(&k, seed).unwrap().sample(a + b));
    }

    #[test]
    fn conditional_cov_equality_matches_residual(seed in 0u64..10_000, n in 1usize..3, d in 1usize..3, perturb in prop::bool::ANY) {
        let nd = n * d;
        let labels = LabelSet::numbered(n);
        let k2 = kernel::random_pd_kernel(seed, n, d, nd).unwrap();
        let l1 = kernel::random_pd_kernel(seed + 1, n, d, nd).unwrap();
        let extra = kernel::random_pd_kernel(seed + 2, n, d, nd).unwrap();
        let l2 = l1.add(&extra).unwrap();
        let tg = kernel::random_complex_matrix(seed + 3, nd, nd);
        let t = CouplingTable::from_gram(labels.clone(), d, &tg).unwrap();
        let inv = |k: &OperatorKernelTable| gram(k).try_inverse().unwrap();
        let shift = &tg * (inv(&l1) - inv(&l2)) * tg.adjoint();
        let mut k1_gram = gram(&k2) + shift;
        if perturb {
            k1_gram += CMatrix::identity(nd, nd).scale(1e-3 * linalg::op_norm(&k1_gram));
        }
        let k1 = OperatorKernelTable::from_flat(labels, d, &k1_gram).unwrap();
        let report = conditional_cov_equal(&k1, &k2, &l1, &l2, &t, None).unwrap();
        let residual = linalg::op_norm(&(gram(&k1) - gram(&k2) - &tg * (inv(&l1) - inv(&l2)) * tg.adjoint()));
        prop_assert_eq!(report.equal, residual <= 1e-10 * report.scale);
        prop_assert_eq!(report.equal, !perturb);
    }
}

#[test]
fn scalar_conditional_cov_examples() {
    let one = scalar_coupling(1.0);
    let r = conditional_cov_equal(&scalar(2.0), &scalar(1.0), &scalar(1.0), &scalar(0.5), &one, None).unwrap();
    assert!(!r.equal);
    let r = conditional_cov_equal(&scalar(2.0), &scalar(1.0), &scalar(0.5), &scalar(1.0), &one, None).unwrap();
    assert!(r.equal);
    let k = kernel::random_pd_kernel(9, 2, 2, 4).unwrap();
    let l = kernel::random_pd_kernel(10, 2, 2, 4).unwrap();
    let t = coupling_with_strength(&k, &l, 11, 0.5);
    assert!(conditional_cov_equal(&k, &k, &l, &l, &t, None).unwrap().equal);
}
