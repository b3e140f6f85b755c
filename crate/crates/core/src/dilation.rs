//! Factorization `K(s,t) = V(s)* V(t)` through the dilation space.
//!
//! The dilation space is the eigenbasis of the flattened Gram matrix
//! restricted to eigenvalues above `tol · λ_max`. With `flat = U Λ U*`, the
//! stacked feature matrix is `Λ_r^{1/2} U_r*` (an `r × n·d` matrix) and
//! `V(s_i)` is its `i`-th column block of width `d`. This space is minimal:
//! its dimension is the numerical rank of the flattened kernel.

use crate::error::{Error, Result};
use crate::kernel::{self, LabelSet, OperatorKernelTable};
use crate::linalg::{self, CMatrix, CVector};
use crate::DEFAULT_TOL;

/// Per-label feature operators `V(s): ℂ^d → ℂ^r`.
#[derive(Clone, Debug)]
pub struct FeatureSystem {
    kernel: OperatorKernelTable,
    features: Vec<CMatrix>,
    dilation_dim: usize,
    basis_eigs: Vec<f64>,
    scale: f64,
}

/// An element of the dilation space in the coordinates of a
/// [`FeatureSystem`].
#[derive(Clone, Debug, PartialEq)]
pub struct DilationVector(pub CVector);

impl DilationVector {
    pub fn coords(&self) -> &CVector {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        linalg::vector_norm(&self.0)
    }

    pub fn inner(&self, other: &Self) -> linalg::C64 {
        linalg::inner(&self.0, &other.0)
    }
}

impl FeatureSystem {
    /// Wraps externally supplied features after checking that they reproduce
    /// `kernel` to `tol · ‖flat‖` blockwise. The dilation space need not be
    /// minimal.
    pub fn from_features(kernel: OperatorKernelTable, features: Vec<CMatrix>, tol: f64) -> Result<Self> {
        let d = kernel.dim_h();
        if features.len() != kernel.n() {
            return Err(Error::Shape(format!(
                "{} feature operators for {} labels",
                features.len(),
                kernel.n()
            )));
        }
        let r = features.first().map_or(0, |f| f.nrows());
        if features.iter().any(|f| f.shape() != (r, d)) {
            return Err(Error::Shape(format!("feature operators must all be {r}x{d}")));
        }
        let scale = kernel::flat_norm(&kernel);
        let mut fs = Self {
            kernel,
            features,
            dilation_dim: r,
            basis_eigs: Vec::new(),
            scale,
        };
        let stacked = fs.stacked();
        fs.basis_eigs = linalg::svd(&stacked).values.iter().map(|s| s * s).collect();
        let residual = fs.reproduction_residual();
        if residual > tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InternalInvariantViolation(format!(
                "features reproduce the kernel only to {residual:e}"
            )));
        }
        Ok(fs)
    }

    pub fn kernel(&self) -> &OperatorKernelTable {
        &self.kernel
    }

    pub fn labels(&self) -> &LabelSet {
        self.kernel.labels()
    }

    pub fn dim_h(&self) -> usize {
        self.kernel.dim_h()
    }

    pub fn dilation_dim(&self) -> usize {
        self.dilation_dim
    }

    /// Eigenvalues of the flattened Gram matrix spanning the dilation space.
    pub fn basis_eigs(&self) -> &[f64] {
        &self.basis_eigs
    }

    /// Spectral norm of the flattened kernel.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn feature(&self, i: usize) -> &CMatrix {
        &self.features[i]
    }

    pub fn features(&self) -> &[CMatrix] {
        &self.features
    }

    pub fn feature_for(&self, label: &str) -> Result<&CMatrix> {
        Ok(&self.features[self.labels().index_of(label)?])
    }

    /// `[V(s_1) | … | V(s_n)]`, an `r × n·d` matrix.
    pub fn stacked(&self) -> CMatrix {
        let (r, d, n) = (self.dilation_dim, self.dim_h(), self.kernel.n());
        let mut m = CMatrix::zeros(r, n * d);
        for (i, f) in self.features.iter().enumerate() {
            m.view_mut((0, i * d), (r, d)).copy_from(f);
        }
        m
    }

    /// The kernel reproduced by the features, `V(s)* V(t)`.
    pub fn gram_table(&self) -> OperatorKernelTable {
        OperatorKernelTable::from_fn(self.labels().clone(), self.dim_h(), |i, j| {
            self.features[i].adjoint() * &self.features[j]
        })
    }

    /// `max_{i,j} ‖V(s_i)* V(s_j) − K(s_i, s_j)‖`.
    pub fn reproduction_residual(&self) -> f64 {
        self.gram_table()
            .max_block_distance(&self.kernel)
            .expect("same shape by construction")
    }
}

/// Minimal factorization of a positive definite kernel.
///
/// `tol` (default `1e-10`) is relative: positivity requires
/// `λ_min ≥ −tol · ‖flat‖` and eigenvalues `≤ tol · λ_max` are dropped.
pub fn kolmogorov_factorize(k: &OperatorKernelTable, tol: Option<f64>) -> Result<FeatureSystem> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    let flat = kernel::flatten(k)?;
    let eig = flat.eigen();
    let scale = eig.spectral_norm();
    if eig.min() < -tol * scale {
        return Err(Error::NotPositiveDefinite {
            which: "K".into(),
            min_eig: eig.min(),
            tol: tol * scale,
        });
    }
    let cutoff = tol * eig.max();
    let r = eig.values.iter().filter(|&&l| l > cutoff && l > 0.0).count();
    let (n, d) = (k.n(), k.dim_h());
    let mut stacked = CMatrix::zeros(r, n * d);
    for row in 0..r {
        let weight = eig.values[row].sqrt();
        let u = eig.vectors.column(row);
        for col in 0..n * d {
            stacked[(row, col)] = u[col].conj() * weight;
        }
    }
    let features = (0..n)
        .map(|i| stacked.view((0, i * d), (r, d)).into_owned())
        .collect();
    Ok(FeatureSystem {
        kernel: k.clone(),
        features,
        dilation_dim: r,
        basis_eigs: eig.values[..r].to_vec(),
        scale,
    })
}

/// Numerical rank of the flattened kernel.
pub fn minimal_dilation_dim(k: &OperatorKernelTable, tol: Option<f64>) -> Result<usize> {
    Ok(kolmogorov_factorize(k, tol)?.dilation_dim())
}

fn check_h_vector(f: &FeatureSystem, b: &CVector) -> Result<()> {
    if b.len() != f.dim_h() {
        return Err(Error::Shape(format!(
            "H-vector of length {}, expected {}",
            b.len(),
            f.dim_h()
        )));
    }
    Ok(())
}

/// `V(t) b`, the dilation-space representative of `K̃(·, (t, b))`.
pub fn embed(f: &FeatureSystem, t: &str, b: &CVector) -> Result<DilationVector> {
    check_h_vector(f, b)?;
    Ok(DilationVector(f.feature_for(t)? * b))
}

/// `V(s)* v`. On `v = embed(t, b)` this is `K(s,t) b`.
pub fn adjoint_apply(f: &FeatureSystem, s: &str, v: &DilationVector) -> Result<CVector> {
    if v.0.len() != f.dilation_dim() {
        return Err(Error::Shape(format!(
            "dilation vector of length {}, expected {}",
            v.0.len(),
            f.dilation_dim()
        )));
    }
    Ok(f.feature_for(s)?.adjoint() * &v.0)
}

/// `P(s_1) ⋯ P(s_m) embed(t, b)` with `P(s) = V(s) V(s)*`.
///
/// The result is checked against the closed form
/// `embed(s_1, K(s_1,s_2) ⋯ K(s_{m−1},s_m) K(s_m,t) b)`, to `1e-9` relative
/// to `(1 + ‖flat‖)^{m+1} ‖b‖`. When every `K(s,s)` is the identity the
/// projections are orthogonal and the result is also checked to be no longer
/// than `embed(t, b)`. An empty chain returns `embed(t, b)`.
pub fn projection_chain(f: &FeatureSystem, chain: &[&str], t: &str, b: &CVector) -> Result<DilationVector> {
    let start = embed(f, t, b)?;
    let idx: Vec<usize> = chain
        .iter()
        .map(|s| f.labels().index_of(s))
        .collect::<Result<_>>()?;
    let ti = f.labels().index_of(t)?;
    let Some(&first) = idx.first() else {
        return Ok(start);
    };

    let mut v = start.0.clone();
    for &i in idx.iter().rev() {
        let feat = f.feature(i);
        v = feat * (feat.adjoint() * v);
    }

    let k = f.kernel();
    let mut h = k.block(*idx.last().unwrap(), ti) * b;
    for w in idx.windows(2).rev() {
        h = k.block(w[0], w[1]) * h;
    }
    let expected = f.feature(first) * h;

    let bound = 1e-9 * (1.0 + f.scale()).powi(idx.len() as i32 + 1) * linalg::vector_norm(b);
    let gap = linalg::vector_norm(&(&v - &expected));
    if gap > bound {
        return Err(Error::InternalInvariantViolation(format!(
            "projection chain deviates from its closed form by {gap:e}"
        )));
    }
    if k.is_unital(1e-10) {
        let (out, inp) = (linalg::vector_norm(&v), start.norm());
        if out > inp * (1.0 + 1e-9) + bound {
            return Err(Error::InternalInvariantViolation(format!(
                "projection chain expanded a vector on a unital kernel ({out} > {inp})"
            )));
        }
    }
    Ok(DilationVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::random_pd_kernel;
    use crate::linalg::{from_real, real};
    use approx::assert_abs_diff_eq;

    fn constant_one() -> OperatorKernelTable {
        OperatorKernelTable::constant(LabelSet::numbered(2), &from_real(1, 1, &[1.0])).unwrap()
    }

    fn e(d: usize, p: usize) -> CVector {
        CVector::from_fn(d, |i, _| real(if i == p { 1.0 } else { 0.0 }))
    }

    #[test]
    fn identity_kernel_factors_exactly() {
        let k = OperatorKernelTable::identity(LabelSet::numbered(2), 2);
        let f = kolmogorov_factorize(&k, None).unwrap();
        assert_eq!(f.dilation_dim(), 4);
        assert!(f.reproduction_residual() < 1e-15);
        for i in 0..2 {
            for j in 0..2 {
                let prod = f.feature(i).adjoint() * f.feature(j);
                let expect = if i == j { linalg::identity(2) } else { CMatrix::zeros(2, 2) };
                assert!(linalg::frobenius(&(prod - expect)) < 1e-15);
            }
        }
    }

    #[test]
    fn constant_kernel_has_rank_one() {
        let f = kolmogorov_factorize(&constant_one(), None).unwrap();
        assert_eq!(f.dilation_dim(), 1);
        // Eigenvalue 2 with unit eigenvector (1,1)/√2 gives V = √2 · 1/√2 = 1.
        for i in 0..2 {
            assert_abs_diff_eq!(f.feature(i)[(0, 0)].norm(), 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(f.basis_eigs()[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn random_kernel_rank_and_residual() {
        let k = random_pd_kernel(7, 4, 3, 5).unwrap();
        let f = kolmogorov_factorize(&k, None).unwrap();
        assert_eq!(f.dilation_dim(), 5);
        assert!(f.reproduction_residual() <= 1e-10 * f.scale());
        assert_eq!(minimal_dilation_dim(&k, None).unwrap(), 5);
    }

    #[test]
    fn rejects_indefinite() {
        let k = OperatorKernelTable::new(LabelSet::numbered(2), 1, vec![
            vec![from_real(1, 1, &[1.0]), from_real(1, 1, &[2.0])],
            vec![from_real(1, 1, &[2.0]), from_real(1, 1, &[1.0])],
        ])
        .unwrap();
        assert!(matches!(
            kolmogorov_factorize(&k, None),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn zero_kernel_has_empty_dilation() {
        let k = OperatorKernelTable::zeros(LabelSet::numbered(2), 2);
        let f = kolmogorov_factorize(&k, None).unwrap();
        assert_eq!(f.dilation_dim(), 0);
        let v = embed(&f, "s1", &e(2, 0)).unwrap();
        assert_eq!(v.0.len(), 0);
        assert_eq!(adjoint_apply(&f, "s2", &v).unwrap(), CVector::zeros(2));
    }

    #[test]
    fn embed_and_adjoint_examples() {
        let k = OperatorKernelTable::identity(LabelSet::numbered(2), 2);
        let f = kolmogorov_factorize(&k, None).unwrap();
        assert_eq!(embed(&f, "s1", &CVector::zeros(2)).unwrap().norm(), 0.0);
        let v = embed(&f, "s1", &e(2, 0)).unwrap();
        assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-15);
        for (t, p) in [("s1", 1), ("s2", 0), ("s2", 1)] {
            assert!(v.inner(&embed(&f, t, &e(2, p)).unwrap()).norm() < 1e-15);
        }
        let b = CVector::from_vec(vec![linalg::c(0.3, -1.0), real(2.0)]);
        let back = adjoint_apply(&f, "s2", &embed(&f, "s1", &b).unwrap()).unwrap();
        assert!(linalg::vector_norm(&back) < 1e-15);
        let back = adjoint_apply(&f, "s1", &embed(&f, "s1", &b).unwrap()).unwrap();
        assert!(linalg::vector_norm(&(back - &b)) < 1e-14);

        let f = kolmogorov_factorize(&constant_one(), None).unwrap();
        let out = adjoint_apply(&f, "s1", &embed(&f, "s2", &e(1, 0)).unwrap()).unwrap();
        assert_abs_diff_eq!(out[0].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn label_and_shape_errors() {
        let f = kolmogorov_factorize(&constant_one(), None).unwrap();
        assert!(matches!(embed(&f, "nope", &e(1, 0)), Err(Error::Label(_))));
        assert!(matches!(embed(&f, "s1", &e(2, 0)), Err(Error::Shape(_))));
        let v = DilationVector(CVector::zeros(3));
        assert!(matches!(adjoint_apply(&f, "s1", &v), Err(Error::Shape(_))));
        assert!(matches!(projection_chain(&f, &["s1", "zz"], "s1", &e(1, 0)), Err(Error::Label(_))));
    }

    #[test]
    fn projection_chain_examples() {
        let k = OperatorKernelTable::identity(LabelSet::numbered(2), 2);
        let f = kolmogorov_factorize(&k, None).unwrap();
        let b = CVector::from_vec(vec![real(1.0), linalg::c(0.0, 2.0)]);
        let v = projection_chain(&f, &["s2"], "s2", &b).unwrap();
        assert!(linalg::vector_norm(&(&v.0 - embed(&f, "s2", &b).unwrap().0)) < 1e-14);
        assert_eq!(projection_chain(&f, &[], "s1", &b).unwrap(), embed(&f, "s1", &b).unwrap());

        let f = kolmogorov_factorize(&constant_one(), None).unwrap();
        let v = projection_chain(&f, &["s1"], "s2", &e(1, 0)).unwrap();
        let expect = embed(&f, "s1", &e(1, 0)).unwrap();
        assert!(linalg::vector_norm(&(v.0 - expect.0)) < 1e-14);
    }

    #[test]
    fn projection_chain_non_unital_closed_form() {
        let k = random_pd_kernel(21, 3, 2, 6).unwrap();
        let f = kolmogorov_factorize(&k, None).unwrap();
        let b = CVector::from_vec(vec![linalg::c(0.5, 0.1), real(-1.0)]);
        projection_chain(&f, &["s3", "s1", "s2", "s3"], "s1", &b).unwrap();
    }
}
