//! Dense complex linear-algebra helpers on top of `nalgebra`.
//!
//! Eigen- and singular-value routines here return values sorted in descending
//! order, and eigenvectors carry a fixed phase: the first entry of largest
//! modulus is made real and positive. That keeps factorizations stable across
//! runs for a given input, although only Gram products are meaningful.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

#[inline]
pub fn real(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Real matrix lifted to complex entries.
pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| real(x)))
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vector_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨u, v⟩`, conjugate-linear in `u`.
pub fn inner(u: &CVector, v: &CVector) -> C64 {
    u.dotc(v)
}

/// Spectral eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Eigenvalues, largest first.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Largest eigenvalue modulus, i.e. the spectral norm.
    pub fn spectral_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Eigen-decomposition of the Hermitian part of `m`.
pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    assert_eq!(m.nrows(), m.ncols(), "hermitian_eigen needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        normalize_phase(&mut col);
        vectors.set_column(k, &col);
    }
    HermitianEigen { values, vectors }
}

fn normalize_phase(v: &mut CVector) {
    let max = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if max == 0.0 {
        return;
    }
    if let Some(pivot) = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-6)).copied() {
        let phase = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// Thin singular value decomposition `M = U diag(s) V*`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    /// Singular values, largest first.
    pub values: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rel_cutoff · σ_max`.
    pub fn rank(&self, rel_cutoff: f64) -> usize {
        let cut = rel_cutoff * self.max();
        self.values.iter().filter(|&&s| s > cut && s > 0.0).count()
    }
}

pub fn svd(m: &CMatrix) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: CMatrix::zeros(rows, 0),
            values: Vec::new(),
            v: CMatrix::zeros(cols, 0),
        };
    }
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("svd computed with U");
    let v_t = dec.v_t.expect("svd computed with V^T");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let mut su = CMatrix::zeros(rows, k);
    let mut sv = CMatrix::zeros(cols, k);
    let mut values = Vec::with_capacity(k);
    for (j, &i) in order.iter().enumerate() {
        values.push(dec.singular_values[i]);
        su.set_column(j, &u.column(i));
        sv.set_column(j, &v_t.row(i).adjoint());
    }
    Svd { u: su, values, v: sv }
}

/// Operator (spectral) norm.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).max()
}

/// Moore–Penrose pseudo-inverse, dropping singular values `≤ rel_cutoff · σ_max`.
pub fn pinv(m: &CMatrix, rel_cutoff: f64) -> CMatrix {
    let dec = svd(m);
    let r = dec.rank(rel_cutoff);
    let mut out = CMatrix::zeros(m.ncols(), m.nrows());
    for j in 0..r {
        let vj = dec.v.column(j);
        let uj = dec.u.column(j);
        out += (vj * uj.adjoint()).scale(1.0 / dec.values[j]);
    }
    out
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn range_basis(m: &CMatrix, rel_cutoff: f64) -> CMatrix {
    let dec = svd(m);
    let r = dec.rank(rel_cutoff);
    dec.u.columns(0, r).into_owned()
}

/// Orthogonal projection onto the span of orthonormal columns `q`.
pub fn projector(q: &CMatrix) -> CMatrix {
    q * q.adjoint()
}

/// Principal angles (radians, ascending) between the spans of two orthonormal
/// bases. When the dimensions differ, the surplus directions of the larger
/// space are reported at π/2. Small angles come from the sines, the
/// singular values of `(I − Q_a Q_a*) Q_b`, since `acos` loses half the
/// digits near 1.
pub fn principal_angles(qa: &CMatrix, qb: &CMatrix) -> Vec<f64> {
    if qa.ncols() < qb.ncols() {
        return principal_angles(qb, qa);
    }
    let (ka, kb) = (qa.ncols(), qb.ncols());
    let mut angles = Vec::with_capacity(ka);
    if kb > 0 {
        let cosines = svd(&(qa.adjoint() * qb)).values;
        let mut sines = svd(&(qb - qa * (qa.adjoint() * qb))).values;
        sines.reverse();
        for (c, s) in cosines.iter().zip(&sines) {
            let angle = if c * c >= 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.clamp(0.0, 1.0).acos()
            };
            angles.push(angle);
        }
    }
    angles.resize(ka, std::f64::consts::FRAC_PI_2);
    angles.sort_by(f64::total_cmp);
    angles
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let eig = hermitian_eigen(m);
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        let col = eig.vectors.column(k);
        out += (col * col.adjoint()).scale(f(lambda));
    }
    hermitian_part(&out)
}

/// Principal square root of a positive semidefinite matrix; negative
/// eigenvalues are clipped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_map(m, |x| x.max(0.0).sqrt())
}

/// Solve `A x = b` for Hermitian positive definite `A`, falling back to LU
/// when the Cholesky factorization breaks down on rounding.
pub fn hermitian_solve(a: &CMatrix, b: &CVector) -> Option<CVector> {
    let a = hermitian_part(a);
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.lu().solve(b)
}
