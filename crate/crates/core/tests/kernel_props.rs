use opkern::dilation::{adjoint_apply, embed, kolmogorov_factorize, projection_chain};
use opkern::kernel::{self, flatten, is_positive_definite, LabelSet, OperatorKernelTable};
use opkern::linalg::{self, CMatrix, CVector};
use proptest::prelude::*;

/// Brute-force `Σ_ij ⟨a_i, K(s_i,s_j) a_j⟩` without flattening.
fn quadratic_form(k: &OperatorKernelTable, coeffs: &[CVector]) -> f64 {
    let n = k.n();
    let mut total = linalg::real(0.0);
    for i in 0..n {
        for j in 0..n {
            total += coeffs[i].dotc(&(k.block(i, j) * &coeffs[j]));
        }
    }
    total.re
}

fn random_coeffs(seed: u64, n: usize, d: usize) -> Vec<CVector> {
    let g = kernel::random_complex_matrix(seed, d, n);
    (0..n).map(|i| g.column(i).into_owned()).collect()
}

/// Hermitian-consistent table that is usually indefinite.
fn random_hermitian_kernel(seed: u64, n: usize, d: usize) -> OperatorKernelTable {
    let g = kernel::random_complex_matrix(seed, n * d, n * d);
    OperatorKernelTable::from_flat(LabelSet::numbered(n), d, &(&g + g.adjoint())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flatten_round_trips(seed in 0u64..1000, n in 1usize..5, d in 1usize..4) {
        let k = random_hermitian_kernel(seed, n, d);
        let flat = flatten(&k).unwrap();
        let back = OperatorKernelTable::from_flat(k.labels().clone(), d, flat.matrix()).unwrap();
        prop_assert!(back.max_block_distance(&k).unwrap() == 0.0);
        for i in 0..n {
            for p in 0..d {
                prop_assert_eq!(flat.index(i, p), i * d + p);
            }
        }
    }

    #[test]
    fn factorization_reproduces_kernel(seed in 0u64..1000, n in 1usize..7, d in 1usize..4, frac in 0.1f64..1.0) {
        let rank = ((n * d) as f64 * frac).ceil() as usize;
        let k = kernel::random_pd_kernel(seed, n, d, rank).unwrap();
        let f = kolmogorov_factorize(&k, None).unwrap();
        prop_assert_eq!(f.dilation_dim(), rank);
        prop_assert!(f.reproduction_residual() <= 1e-10 * f.scale());
    }

    #[test]
    fn pd_agrees_with_quadratic_forms(seed in 0u64..1000, n in 1usize..4, d in 1usize..4, shift in -1.0f64..3.0) {
        let base = random_hermitian_kernel(seed, n, d);
        let ev = flatten(&base).unwrap().eigen();
        let k = base.add(&OperatorKernelTable::identity(base.labels().clone(), d).scale(-ev.min() * shift)).unwrap();
        let report = is_positive_definite(&k, None).unwrap();
        let evk = flatten(&k).unwrap().eigen();
        let bottom = evk.vectors.column(evk.values.len() - 1).into_owned();
        let witness: Vec<CVector> = (0..n).map(|i| bottom.rows(i * d, d).into_owned()).collect();
        let tol = 1e-10 * report.scale;
        let mut min_form = quadratic_form(&k, &witness);
        for trial in 0..100 {
            let a = random_coeffs(seed * 1000 + trial, n, d);
            let norm2: f64 = a.iter().map(|v| v.norm_squared()).sum();
            min_form = min_form.min(quadratic_form(&k, &a) / norm2);
        }
        prop_assert_eq!(report.pd, min_form >= -tol);
    }

    #[test]
    fn projection_chain_matches_closed_form(seed in 0u64..1000, n in 2usize..5, d in 1usize..3) {
        let k = kernel::random_pd_kernel(seed, n, d, n * d).unwrap();
        let f = kolmogorov_factorize(&k, None).unwrap();
        let labels: Vec<String> = k.labels().iter().map(String::from).collect();
        let b = random_coeffs(seed + 1, 1, d).remove(0);
        let chain = [labels[0].as_str(), labels[n - 1].as_str(), labels[1].as_str()];
        let got = projection_chain(&f, &chain, &labels[0], &b).unwrap();
        let (i0, i1, i2) = (0, n - 1, 1);
        let closed = k.block(i0, i1) * k.block(i1, i2) * k.block(i2, 0) * &b;
        let expected = embed(&f, &labels[0], &closed).unwrap();
        let size = (1.0 + f.scale()).powi(4) * b.norm();
        prop_assert!((got.0 - expected.0).norm() <= 1e-9 * size);
    }
}

#[test]
fn reproducing_property_on_embedded_vectors() {
    let k = kernel::random_pd_kernel(17, 3, 2, 5).unwrap();
    let f = kolmogorov_factorize(&k, None).unwrap();
    let b = CVector::from_vec(vec![linalg::c(1.0, -1.0), linalg::c(0.5, 2.0)]);
    let v = embed(&f, "s3", &b).unwrap();
    for s in ["s1", "s2", "s3"] {
        let got = adjoint_apply(&f, s, &v).unwrap();
        let want = k.block_by_label(s, "s3").unwrap() * &b;
        assert!((got - want).norm() < 1e-12 * f.scale());
    }
}

#[test]
fn unital_kernels_contract_along_chains() {
    let points: Vec<CMatrix> = (0..3)
        .map(|i| {
            let m = kernel::random_complex_matrix(40 + i, 2, 2);
            m.scale(1.0 / linalg::op_norm(&m))
        })
        .collect();
    let h = CMatrix::zeros(2, 2);
    let k = kernel::cp_contraction_kernel(&h, LabelSet::numbered(3), &points).unwrap();
    assert!(k.is_unital(1e-12));
    let f = kolmogorov_factorize(&k, None).unwrap();
    let b = CVector::from_vec(vec![linalg::real(1.0), linalg::c(0.0, 1.0)]);
    let start = embed(&f, "s1", &b).unwrap().norm();
    let end = projection_chain(&f, &["s2", "s3", "s2"], "s1", &b).unwrap().norm();
    assert!(end <= start * (1.0 + 1e-12));
}

#[test]
fn neumann_series_inverts_the_contraction_map() {
    let h_raw = kernel::random_complex_matrix(5, 2, 2);
    let h = h_raw.scale(0.5 / linalg::op_norm(&h_raw));
    let points: Vec<CMatrix> = (0..3)
        .map(|i| {
            let m = kernel::random_complex_matrix(60 + i, 2, 2);
            m.scale(1.0 / linalg::op_norm(&m))
        })
        .collect();
    let k = kernel::neumann_series_kernel(&h, LabelSet::numbered(3), &points, 1e-13).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let sum = k.block(i, j);
            let recovered = sum - h.adjoint() * sum * &h;
            let target = points[i].adjoint() * &points[j];
            assert!(linalg::op_norm(&(recovered - target)) < 1e-10);
        }
    }
}
