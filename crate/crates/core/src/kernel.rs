//! `B(H)`-valued kernels over a finite label set.
//!
//! The flattened form of a table is the `(n·d) × (n·d)` Hermitian matrix with
//! entry `((i,p),(j,q)) = ⟨e_p, K(s_i, s_j) e_q⟩` at row `i·d + p`, column
//! `j·d + q`. Positivity of the kernel is positivity of that matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianEigen};
use crate::rng;
use crate::DEFAULT_TOL;

/// Relative asymmetry accepted (and symmetrized away) on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Ordered, duplicate-free set of labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidInput("label set must not be empty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels, index })
    }

    /// `s1, s2, …, sn`.
    pub fn numbered(n: usize) -> Self {
        Self::new((1..=n).map(|i| format!("s{i}"))).expect("n >= 1 distinct labels")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::Label(label.to_string()))
    }

    pub fn get(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.labels
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.labels
    }
}

/// `K(s_i, s_j)` for every ordered pair of labels, as `d × d` blocks.
///
/// Tables are Hermitian (`K(t,s) = K(s,t)*`) and finite by construction.
/// Positivity is not part of the type; see [`is_positive_definite`].
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorKernelTable {
    labels: LabelSet,
    dim_h: usize,
    blocks: Vec<CMatrix>,
}

impl OperatorKernelTable {
    /// Validating constructor. `blocks[i][j]` is `K(s_i, s_j)`.
    ///
    /// Blocks that are Hermitian-consistent up to `1e-12` relative to the
    /// largest block are symmetrized; anything worse is rejected.
    pub fn new(labels: LabelSet, dim_h: usize, blocks: Vec<Vec<CMatrix>>) -> Result<Self> {
        let n = labels.len();
        if dim_h == 0 {
            return Err(Error::InvalidKernel("dim_h must be positive".into()));
        }
        if blocks.len() != n || blocks.iter().any(|row| row.len() != n) {
            return Err(Error::Shape(format!("expected {n}x{n} blocks")));
        }
        let flat: Vec<CMatrix> = blocks.into_iter().flatten().collect();
        for b in &flat {
            if b.shape() != (dim_h, dim_h) {
                return Err(Error::Shape(format!(
                    "block of shape {:?}, expected {dim_h}x{dim_h}",
                    b.shape()
                )));
            }
            if !linalg::is_finite(b) {
                return Err(Error::InvalidKernel("non-finite entry".into()));
            }
        }
        let max_norm = flat.iter().map(linalg::frobenius).fold(0.0, f64::max);
        let limit = HERMITIAN_TOL * max_norm;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let asym = linalg::frobenius(&(&flat[j * n + i] - flat[i * n + j].adjoint()));
                worst = worst.max(asym);
            }
        }
        if worst > limit {
            return Err(Error::InvalidKernel(format!(
                "blocks are not Hermitian-consistent (asymmetry {worst:e}, limit {limit:e})"
            )));
        }
        Ok(Self::from_fn(labels, dim_h, |i, j| {
            (&flat[i * n + j] + flat[j * n + i].adjoint()).scale(0.5)
        }))
    }

    /// Builds a table from `f(i, j)` evaluated on `i ≤ j` only; the lower
    /// triangle is filled by adjoints and diagonal blocks are symmetrized.
    pub fn from_fn(labels: LabelSet, dim_h: usize, mut f: impl FnMut(usize, usize) -> CMatrix) -> Self {
        let n = labels.len();
        let mut blocks = vec![CMatrix::zeros(dim_h, dim_h); n * n];
        for i in 0..n {
            for j in i..n {
                let b = f(i, j);
                debug_assert_eq!(b.shape(), (dim_h, dim_h));
                if i == j {
                    blocks[i * n + i] = linalg::hermitian_part(&b);
                } else {
                    blocks[j * n + i] = b.adjoint();
                    blocks[i * n + j] = b;
                }
            }
        }
        Self {
            labels,
            dim_h,
            blocks,
        }
    }

    /// Inverse of [`flatten`]; the matrix is symmetrized first.
    pub fn from_flat(labels: LabelSet, dim_h: usize, flat: &CMatrix) -> Result<Self> {
        let nd = labels.len() * dim_h;
        if flat.shape() != (nd, nd) {
            return Err(Error::Shape(format!(
                "flat matrix {:?}, expected {nd}x{nd}",
                flat.shape()
            )));
        }
        if !linalg::is_finite(flat) {
            return Err(Error::InvalidKernel("non-finite entry".into()));
        }
        let d = dim_h;
        let h = linalg::hermitian_part(flat);
        Ok(Self::from_fn(labels, d, |i, j| {
            h.view((i * d, j * d), (d, d)).into_owned()
        }))
    }

    pub fn zeros(labels: LabelSet, dim_h: usize) -> Self {
        Self::from_fn(labels, dim_h, |_, _| CMatrix::zeros(dim_h, dim_h))
    }

    /// `K(s,t) = δ_{st} I_d`.
    pub fn identity(labels: LabelSet, dim_h: usize) -> Self {
        Self::from_fn(labels, dim_h, |i, j| {
            if i == j {
                linalg::identity(dim_h)
            } else {
                CMatrix::zeros(dim_h, dim_h)
            }
        })
    }

    /// `K(s,t) = value` for every pair; `value` must be Hermitian.
    pub fn constant(labels: LabelSet, value: &CMatrix) -> Result<Self> {
        if !value.is_square() {
            return Err(Error::Shape("constant kernel value must be square".into()));
        }
        let n = labels.len();
        let blocks = vec![vec![value.clone(); n]; n];
        Self::new(labels, value.nrows(), blocks)
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    /// `K(s_i, s_j)`.
    pub fn block(&self, i: usize, j: usize) -> &CMatrix {
        &self.blocks[i * self.n() + j]
    }

    pub fn block_by_label(&self, s: &str, t: &str) -> Result<&CMatrix> {
        Ok(self.block(self.labels.index_of(s)?, self.labels.index_of(t)?))
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &CMatrix)> {
        let n = self.n();
        self.blocks
            .iter()
            .enumerate()
            .map(move |(k, b)| ((k / n, k % n), b))
    }

    pub fn with_labels(mut self, labels: LabelSet) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Shape(format!(
                "{} labels for a table over {}",
                labels.len(),
                self.n()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.labels != other.labels || self.dim_h != other.dim_h {
            return Err(Error::Shape(format!(
                "kernels over ({} labels, d={}) and ({} labels, d={})",
                self.n(),
                self.dim_h,
                other.n(),
                other.dim_h
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self::from_fn(self.labels.clone(), self.dim_h, |i, j| {
            f(self.block(i, j), other.block(i, j))
        }))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_fn(self.labels.clone(), self.dim_h, |i, j| {
            self.block(i, j).scale(factor)
        })
    }

    /// `(s,t) ↦ T* K(s,t) T` for a fixed operator `T` on `H`.
    pub fn congruence(&self, t: &CMatrix) -> Result<Self> {
        if t.shape() != (self.dim_h, self.dim_h) {
            return Err(Error::Shape(format!(
                "operator of shape {:?} on H of dimension {}",
                t.shape(),
                self.dim_h
            )));
        }
        let t_adj = t.adjoint();
        Ok(Self::from_fn(self.labels.clone(), self.dim_h, |i, j| {
            &t_adj * self.block(i, j) * t
        }))
    }

    /// Largest blockwise operator-norm distance.
    pub fn max_block_distance(&self, other: &Self) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| linalg::op_norm(&(a - b)))
            .fold(0.0, f64::max))
    }

    pub fn max_block_norm(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    /// `K(s,s) = I` for every label, within `tol` in operator norm.
    pub fn is_unital(&self, tol: f64) -> bool {
        let id = linalg::identity(self.dim_h);
        (0..self.n()).all(|i| linalg::op_norm(&(self.block(i, i) - &id)) <= tol)
    }

    pub(crate) fn flat_matrix(&self) -> CMatrix {
        let (n, d) = (self.n(), self.dim_h);
        let mut flat = CMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                flat.view_mut((i * d, j * d), (d, d))
                    .copy_from(self.block(i, j));
            }
        }
        linalg::hermitian_part(&flat)
    }
}

/// The flattened Gram matrix of the scalar kernel `K̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarKernelMatrix {
    n: usize,
    dim_h: usize,
    flat: CMatrix,
}

impl ScalarKernelMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.flat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.flat
    }

    /// Row/column of `(label i, basis vector e_p)`.
    pub fn index(&self, i: usize, p: usize) -> usize {
        i * self.dim_h + p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn eigen(&self) -> HermitianEigen {
        linalg::hermitian_eigen(&self.flat)
    }
}

pub fn flatten(k: &OperatorKernelTable) -> Result<ScalarKernelMatrix> {
    let flat = k.flat_matrix();
    if !linalg::is_finite(&flat) {
        return Err(Error::InvalidKernel("non-finite entry".into()));
    }
    Ok(ScalarKernelMatrix {
        n: k.n(),
        dim_h: k.dim_h(),
        flat,
    })
}

/// Outcome of a positivity test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PdReport {
    pub pd: bool,
    pub min_eig: f64,
    /// Spectral norm of the tested matrix.
    pub scale: f64,
    /// Absolute tolerance applied to `min_eig`.
    pub tol: f64,
}

/// Positivity of a Hermitian matrix: `λ_min ≥ -tol`, where `tol` defaults to
/// `1e-10 · ‖M‖`.
pub fn psd_check(m: &CMatrix, tol: Option<f64>) -> PdReport {
    let eig = linalg::hermitian_eigen(m);
    let scale = eig.spectral_norm();
    let tol = tol.unwrap_or(DEFAULT_TOL * scale);
    let min_eig = eig.min();
    PdReport {
        pd: min_eig >= -tol,
        min_eig,
        scale,
        tol,
    }
}

pub fn is_positive_definite(k: &OperatorKernelTable, tol: Option<f64>) -> Result<PdReport> {
    Ok(psd_check(flatten(k)?.matrix(), tol))
}

/// `L ≤ K`, i.e. `K − L` is positive definite. The default tolerance is
/// relative to the larger of the two kernels.
pub fn kernel_leq(l: &OperatorKernelTable, k: &OperatorKernelTable, tol: Option<f64>) -> Result<bool> {
    let diff = k.sub(l)?;
    let tol = match tol {
        Some(t) => t,
        None => {
            let scale = flat_norm(k).max(flat_norm(l));
            DEFAULT_TOL * scale
        }
    };
    Ok(is_positive_definite(&diff, Some(tol))?.pd)
}

/// Spectral norm of the flattened kernel.
pub fn flat_norm(k: &OperatorKernelTable) -> f64 {
    linalg::hermitian_eigen(&k.flat_matrix()).spectral_norm()
}

fn check_points(labels: &LabelSet, dim: usize, points: &[CMatrix]) -> Result<()> {
    if points.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} points for {} labels",
            points.len(),
            labels.len()
        )));
    }
    if points.iter().any(|p| p.shape() != (dim, dim)) {
        return Err(Error::Shape(format!("points must be {dim}x{dim}")));
    }
    Ok(())
}

fn contraction_norm(h: &CMatrix) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::Shape("h must be square".into()));
    }
    let norm = linalg::op_norm(h);
    if norm >= 1.0 {
        return Err(Error::NotStrictContraction(norm));
    }
    Ok(norm)
}

/// `L(s_i, s_j) = I − h* (s_i* s_j) h`, the kernel of the map
/// `t ↦ I − φ_h(t)` with `φ_h(t) = h* t h`. `points[i]` is the matrix
/// attached to label `i`.
///
/// The result is not positive definite in general; callers test it.
pub fn cp_contraction_kernel(
    h: &CMatrix,
    labels: LabelSet,
    points: &[CMatrix],
) -> Result<OperatorKernelTable> {
    contraction_norm(h)?;
    let d = h.nrows();
    check_points(&labels, d, points)?;
    let id = linalg::identity(d);
    let h_adj = h.adjoint();
    Ok(OperatorKernelTable::from_fn(labels, d, |i, j| {
        &id - &h_adj * points[i].adjoint() * &points[j] * h
    }))
}

/// Truncated `Σ_{m=0}^{N} h*^m (s_i* s_j) h^m`, i.e. `(I − φ_h)⁻¹` applied
/// entrywise to `s_i* s_j`.
///
/// `N` is the smallest integer with `‖h‖^{2(N+1)} · max ‖s_i* s_j‖ < tol`,
/// which bounds the truncation error of every block by `tol`.
pub fn neumann_series_kernel(
    h: &CMatrix,
    labels: LabelSet,
    points: &[CMatrix],
    tol: f64,
) -> Result<OperatorKernelTable> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let h_norm = contraction_norm(h)?;
    let d = h.nrows();
    check_points(&labels, d, points)?;
    let n = labels.len();
    let products: Vec<CMatrix> = (0..n * n)
        .map(|k| points[k / n].adjoint() * &points[k % n])
        .collect();
    let max_prod = products.iter().map(linalg::op_norm).fold(0.0, f64::max);
    let terms = neumann_terms(h_norm, max_prod, tol);
    let h_adj = h.adjoint();
    let table = OperatorKernelTable::from_fn(labels, d, |i, j| {
        let mut term = products[i * n + j].clone();
        let mut sum = term.clone();
        for _ in 0..terms {
            term = &h_adj * term * h;
            sum += &term;
        }
        sum
    });
    let report = is_positive_definite(&table, None)?;
    if !report.pd {
        return Err(Error::InternalInvariantViolation(format!(
            "Neumann series kernel has min eigenvalue {:e}",
            report.min_eig
        )));
    }
    Ok(table)
}

/// Number of terms beyond `m = 0` kept by [`neumann_series_kernel`].
pub fn neumann_terms(h_norm: f64, max_prod: f64, tol: f64) -> usize {
    let mut n = 0usize;
    while h_norm.powi(2 * (n as i32 + 1)) * max_prod >= tol {
        n += 1;
    }
    n
}

/// Seeded test kernel with flattened form `G* G` for a random complex
/// `rank × (n·d)` matrix `G` with unit-variance entries. Labels are
/// `s1 … sn`.
pub fn random_pd_kernel(seed: u64, n: usize, d: usize, rank: usize) -> Result<OperatorKernelTable> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("n and d must be positive".into()));
    }
    if rank == 0 || rank > n * d {
        return Err(Error::InvalidInput(format!(
            "rank must lie in 1..={}, got {rank}",
            n * d
        )));
    }
    let g = random_complex_matrix(seed, rank, n * d);
    OperatorKernelTable::from_flat(LabelSet::numbered(n), d, &(g.adjoint() * &g))
}

/// Seeded complex Gaussian matrix with `E|g_ij|² = 1`.
pub fn random_complex_matrix(seed: u64, rows: usize, cols: usize) -> CMatrix {
    let mut rng = rng::stream(seed, 0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re = rng::standard_normal(&mut rng);
        let im = rng::standard_normal(&mut rng);
        linalg::c(s * re, s * im)
    })
}
