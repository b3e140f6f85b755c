//! `H`-valued Gaussian processes indexed by the label set.
//!
//! A path is `W(s) = V(s)* Z` where `V` is the minimal Kolmogorov factor of
//! the covariance kernel and `Z` is a vector of independent real `N(0, 1)`
//! variables, one per dilation coordinate. Then
//! `E[⟨a, W(s)⟩⟨W(t), b⟩] = ⟨a, K(s,t) b⟩`.
//!
//! Joint processes over `H ⊕ H` come from the block kernel
//! `M(s,t) = [[K(s,t), T(s,t)], [T(t,s)*, L(s,t)]]`. Products and inverses
//! of kernels are taken at the level of the flattened Gram matrices, so
//! conditioning is ordinary block Gaussian conditioning over all labels at
//! once.

use rayon::prelude::*;
use serde::Serialize;

use crate::dilation::{self, FeatureSystem};
use crate::error::{Error, Result};
use crate::kernel::{self, LabelSet, OperatorKernelTable};
use crate::linalg::{self, CMatrix, CVector};
use crate::{rng, DEFAULT_TOL};

/// Samples per parallel work unit. Fixed so that output does not depend on
/// the thread count.
const CHUNK: usize = 4096;

/// A `B(H)`-valued function on `S × S` with no symmetry requirement.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTable {
    labels: LabelSet,
    dim_h: usize,
    blocks: Vec<CMatrix>,
}

impl CouplingTable {
    /// `blocks` is row-major over label pairs.
    pub fn new(labels: LabelSet, dim_h: usize, blocks: Vec<CMatrix>) -> Result<Self> {
        let n = labels.len();
        if blocks.len() != n * n {
            return Err(Error::Shape(format!("{} blocks for {n} labels", blocks.len())));
        }
        if blocks.iter().any(|b| b.shape() != (dim_h, dim_h)) {
            return Err(Error::Shape(format!("coupling blocks must be {dim_h}x{dim_h}")));
        }
        if !blocks.iter().all(linalg::is_finite) {
            return Err(Error::InvalidInput("non-finite coupling entry".into()));
        }
        Ok(Self { labels, dim_h, blocks })
    }

    pub fn from_fn(labels: LabelSet, dim_h: usize, f: impl Fn(usize, usize) -> CMatrix) -> Result<Self> {
        let n = labels.len();
        let blocks = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self::new(labels, dim_h, blocks)
    }

    pub fn zeros(labels: LabelSet, dim_h: usize) -> Self {
        let n = labels.len();
        Self {
            labels,
            dim_h,
            blocks: vec![CMatrix::zeros(dim_h, dim_h); n * n],
        }
    }

    /// `T(s,t) = value` for every pair.
    pub fn constant(labels: LabelSet, value: &CMatrix) -> Result<Self> {
        let d = value.nrows();
        Self::from_fn(labels, d, |_, _| value.clone())
    }

    /// The Gram-level matrix with `(i,j)` block `T(s_i, s_j)`.
    pub fn from_gram(labels: LabelSet, dim_h: usize, gram: &CMatrix) -> Result<Self> {
        let nd = labels.len() * dim_h;
        if gram.shape() != (nd, nd) {
            return Err(Error::Shape(format!("coupling matrix {:?}, expected {nd}x{nd}", gram.shape())));
        }
        let d = dim_h;
        Self::from_fn(labels, d, |i, j| gram.view((i * d, j * d), (d, d)).into_owned())
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

    pub fn block(&self, i: usize, j: usize) -> &CMatrix {
        &self.blocks[i * self.n() + j]
    }

    pub fn gram(&self) -> CMatrix {
        let (n, d) = (self.n(), self.dim_h);
        let mut g = CMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                g.view_mut((i * d, j * d), (d, d)).copy_from(self.block(i, j));
            }
        }
        g
    }
}

/// Seeded sampler for the process with covariance kernel
/// `features.kernel()`. Draw `k` depends only on `(seed, k)`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    features: FeatureSystem,
    seed: u64,
    counter: u64,
}

pub fn make_sampler(k: &OperatorKernelTable, seed: u64) -> Result<GaussianSampler> {
    Ok(GaussianSampler::new(dilation::kolmogorov_factorize(k, None)?, seed))
}

impl GaussianSampler {
    pub fn new(features: FeatureSystem, seed: u64) -> Self {
        Self {
            features,
            seed,
            counter: 0,
        }
    }

    pub fn features(&self) -> &FeatureSystem {
        &self.features
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the next draw returned by [`Self::next_batch`].
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// The real normal vector `Z` behind draw `index`.
    pub fn normals(&self, index: u64) -> Vec<f64> {
        let mut z = vec![0.0; self.features.dilation_dim()];
        rng::fill_normals(&mut rng::stream(self.seed, index), &mut z);
        z
    }

    /// Draw `index` as a flat vector with entry `i·d + p` holding
    /// coordinate `p` of `W(s_i)`.
    pub fn draw(&self, index: u64) -> CVector {
        let z = self.normals(index);
        let z = CVector::from_iterator(z.len(), z.into_iter().map(linalg::real));
        self.features.stacked().adjoint() * z
    }

    /// Draws `start .. start + count`.
    pub fn sample_range(&self, start: u64, count: usize) -> PathBatch {
        let stacked_adj = self.features.stacked().adjoint();
        let (nd, r) = stacked_adj.shape();
        let chunks: Vec<CMatrix> = (0..count.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let len = CHUNK.min(count - lo);
                let mut z = CMatrix::zeros(r, len);
                let mut buf = vec![0.0; r];
                for col in 0..len {
                    let index = start + (lo + col) as u64;
                    rng::fill_normals(&mut rng::stream(self.seed, index), &mut buf);
                    for (row, &x) in buf.iter().enumerate() {
                        z[(row, col)] = linalg::real(x);
                    }
                }
                &stacked_adj * z
            })
            .collect();
        let mut paths = CMatrix::zeros(nd, count);
        for (c, chunk) in chunks.iter().enumerate() {
            paths.columns_mut(c * CHUNK, chunk.ncols()).copy_from(chunk);
        }
        PathBatch {
            labels: self.features.labels().clone(),
            dim_h: self.features.dim_h(),
            seed: self.seed,
            start,
            paths,
        }
    }

    /// Draws `0 .. count`.
    pub fn sample(&self, count: usize) -> PathBatch {
        self.sample_range(0, count)
    }

    /// The next `count` draws, advancing the counter.
    pub fn next_batch(&mut self, count: usize) -> PathBatch {
        let batch = self.sample_range(self.counter, count);
        self.counter += count as u64;
        batch
    }
}

/// Sample paths stored one per column; row `i·d + p` is coordinate `p` at
/// label `s_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    labels: LabelSet,
    dim_h: usize,
    seed: u64,
    start: u64,
    paths: CMatrix,
}

impl PathBatch {
    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the first draw.
    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.paths.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(n·d) × N`.
    pub fn paths(&self) -> &CMatrix {
        &self.paths
    }

    /// `W_k(s_i)`.
    pub fn value(&self, k: usize, i: usize) -> CVector {
        let d = self.dim_h;
        self.paths.view((i * d, k), (d, 1)).column(0).into_owned()
    }

    /// Appends a batch that continues this one.
    pub fn concat(&self, next: &PathBatch) -> Result<PathBatch> {
        if next.labels != self.labels || next.dim_h != self.dim_h || next.seed != self.seed {
            return Err(Error::InvalidInput("batches come from different samplers".into()));
        }
        if next.start != self.start + self.len() as u64 {
            return Err(Error::InvalidInput(format!(
                "batch starting at {} does not continue one ending at {}",
                next.start,
                self.start + self.len() as u64
            )));
        }
        let mut paths = CMatrix::zeros(self.paths.nrows(), self.len() + next.len());
        paths.columns_mut(0, self.len()).copy_from(&self.paths);
        paths.columns_mut(self.len(), next.len()).copy_from(&next.paths);
        Ok(PathBatch {
            paths,
            ..self.clone()
        })
    }

    /// The rows for coordinates `offset .. offset + d` of every label, for
    /// paths in `H^m` stored with per-label width `m·d`.
    fn split(&self, offset: usize, d: usize) -> PathBatch {
        let n = self.labels.len();
        let width = self.dim_h;
        let mut paths = CMatrix::zeros(n * d, self.len());
        for i in 0..n {
            paths
                .rows_mut(i * d, d)
                .copy_from(&self.paths.rows(i * width + offset, d));
        }
        PathBatch {
            labels: self.labels.clone(),
            dim_h: d,
            seed: self.seed,
            start: self.start,
            paths,
        }
    }
}

/// `(1/N) Σ_k x_k y_k*` for column samples.
pub fn cross_moment(x: &CMatrix, y: &CMatrix) -> CMatrix {
    let n = x.ncols().max(1) as f64;
    (x * y.adjoint()).unscale(n)
}

/// `(1/N) Σ_k |W_k(s_i)⟩⟨W_k(s_j)|` blockwise.
pub fn empirical_covariance(batch: &PathBatch) -> Result<OperatorKernelTable> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let flat = cross_moment(&batch.paths, &batch.paths);
    OperatorKernelTable::from_flat(batch.labels.clone(), batch.dim_h, &flat)
}

/// `(1/N) Σ_k |X_k(s_i)⟩⟨Y_k(s_j)|` as a Gram-level matrix.
pub fn empirical_cross_covariance(x: &PathBatch, y: &PathBatch) -> Result<CMatrix> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidInput("batches must be non-empty and of equal length".into()));
    }
    Ok(cross_moment(&x.paths, &y.paths))
}

/// Joint covariance of two processes with cross-covariance `T`.
#[derive(Clone, Debug)]
pub struct JointKernel {
    k: OperatorKernelTable,
    l: OperatorKernelTable,
    coupling: CouplingTable,
    m: OperatorKernelTable,
    schur_gram: CMatrix,
}

impl JointKernel {
    pub fn k(&self) -> &OperatorKernelTable {
        &self.k
    }

    pub fn l(&self) -> &OperatorKernelTable {
        &self.l
    }

    pub fn coupling(&self) -> &CouplingTable {
        &self.coupling
    }

    /// The `H ⊕ H`-valued kernel.
    pub fn m(&self) -> &OperatorKernelTable {
        &self.m
    }

    /// `K_gram − T_gram L_gram⁺ T_gram*`.
    pub fn schur_gram(&self) -> &CMatrix {
        &self.schur_gram
    }
}

fn block_kernel(k: &OperatorKernelTable, l: &OperatorKernelTable, t: &CouplingTable) -> OperatorKernelTable {
    let d = k.dim_h();
    OperatorKernelTable::from_fn(k.labels().clone(), 2 * d, |i, j| {
        let mut b = CMatrix::zeros(2 * d, 2 * d);
        b.view_mut((0, 0), (d, d)).copy_from(k.block(i, j));
        b.view_mut((0, d), (d, d)).copy_from(t.block(i, j));
        b.view_mut((d, 0), (d, d)).copy_from(&t.block(j, i).adjoint());
        b.view_mut((d, d), (d, d)).copy_from(l.block(i, j));
        b
    })
}

fn schur_complement(k: &CMatrix, t: &CMatrix, l_inv: &CMatrix) -> CMatrix {
    linalg::hermitian_part(&(k - t * l_inv * t.adjoint()))
}

fn ensure_pd(which: &str, k: &OperatorKernelTable) -> Result<()> {
    let report = kernel::is_positive_definite(k, None)?;
    if !report.pd {
        return Err(Error::NotPositiveDefinite {
            which: which.into(),
            min_eig: report.min_eig,
            tol: report.tol,
        });
    }
    Ok(())
}

/// Builds `M` and checks that it and its Schur complement are positive.
/// `tol` (default `1e-10`) is relative to the spectral norm of the matrix
/// tested and is also the pseudo-inverse cutoff.
pub fn assemble_joint(
    k: OperatorKernelTable,
    l: OperatorKernelTable,
    coupling: CouplingTable,
    tol: Option<f64>,
) -> Result<JointKernel> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    k.ensure_same_shape(&l)?;
    if coupling.labels() != k.labels() || coupling.dim_h() != k.dim_h() {
        return Err(Error::Shape("coupling does not match the kernels".into()));
    }
    ensure_pd("K", &k)?;
    ensure_pd("L", &l)?;
    let m = block_kernel(&k, &l, &coupling);
    let flat_m = kernel::flatten(&m)?.into_matrix();
    let report = kernel::psd_check(&flat_m, Some(tol * linalg::hermitian_eigen(&flat_m).spectral_norm()));
    if !report.pd {
        return Err(Error::NotPositiveDefinite {
            which: "M".into(),
            min_eig: report.min_eig,
            tol: report.tol,
        });
    }
    let l_gram = kernel::flatten(&l)?.into_matrix();
    let k_gram = kernel::flatten(&k)?.into_matrix();
    let schur_gram = schur_complement(&k_gram, &coupling.gram(), &linalg::pinv(&l_gram, tol));
    let schur = kernel::psd_check(&schur_gram, Some(tol * report.scale));
    if !schur.pd {
        return Err(Error::NotPositiveDefinite {
            which: "M/L".into(),
            min_eig: schur.min_eig,
            tol: schur.tol,
        });
    }
    Ok(JointKernel {
        k,
        l,
        coupling,
        m,
        schur_gram,
    })
}

/// `N` joint draws split into the `K` part and the `L` part.
pub fn sample_joint(joint: &JointKernel, seed: u64, count: usize) -> Result<(PathBatch, PathBatch)> {
    let batch = make_sampler(&joint.m, seed)?.sample(count);
    let d = joint.k.dim_h();
    Ok((batch.split(0, d), batch.split(d, d)))
}

/// Law of the `K` part given the `L` part.
#[derive(Clone, Debug)]
pub struct ConditionalLaw {
    /// `T_gram L_gram⁻¹`, or the pseudo-inverse variant.
    pub mean_map: CMatrix,
    /// `n × d`; row `i` is the conditional mean of `W_K(s_i)`.
    pub mean: CMatrix,
    pub cond_cov: OperatorKernelTable,
    /// Dimension of the null space of `L_gram` (zero for the strict variant).
    pub null_dim: usize,
}

fn vec_rows(m: &CMatrix) -> CVector {
    CVector::from_iterator(m.len(), m.transpose().iter().copied())
}

fn unvec_rows(v: &CVector, n: usize, d: usize) -> CMatrix {
    CMatrix::from_row_iterator(n, d, v.iter().copied())
}

fn check_observation(joint: &JointKernel, observed: &CMatrix) -> Result<()> {
    let shape = (joint.k.n(), joint.k.dim_h());
    if observed.shape() != shape {
        return Err(Error::Shape(format!(
            "observation {:?}, expected {:?}",
            observed.shape(),
            shape
        )));
    }
    Ok(())
}

fn conditional_from(joint: &JointKernel, observed: &CMatrix, l_inv: CMatrix, null_dim: usize) -> Result<ConditionalLaw> {
    check_observation(joint, observed)?;
    let (n, d) = (joint.k.n(), joint.k.dim_h());
    let t_gram = joint.coupling.gram();
    let k_gram = kernel::flatten(&joint.k)?.into_matrix();
    let mean_map = &t_gram * &l_inv;
    let mean = unvec_rows(&(&mean_map * vec_rows(observed)), n, d);
    let cond = schur_complement(&k_gram, &t_gram, &l_inv);
    Ok(ConditionalLaw {
        mean_map,
        mean,
        cond_cov: OperatorKernelTable::from_flat(joint.k.labels().clone(), d, &cond)?,
        null_dim,
    })
}

fn strict_inverse(l_gram: &CMatrix, tol: f64) -> Result<CMatrix> {
    let dec = linalg::svd(l_gram);
    let (sigma_min, sigma_max) = (dec.min(), dec.max());
    if !(sigma_max > 0.0 && sigma_min > tol * sigma_max) {
        return Err(Error::SingularL { sigma_min, sigma_max });
    }
    Ok(linalg::pinv(l_gram, tol))
}

/// Conditions on `W_L = observed` (an `n × d` array, row `i` at `s_i`).
/// Requires `σ_min(L_gram) > tol · σ_max(L_gram)`.
pub fn condition(joint: &JointKernel, observed: &CMatrix, tol: Option<f64>) -> Result<ConditionalLaw> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    let l_gram = kernel::flatten(&joint.l)?.into_matrix();
    let l_inv = strict_inverse(&l_gram, tol)?;
    conditional_from(joint, observed, l_inv, 0)
}

/// As [`condition`], with `L_gram⁺` in place of the inverse. Only the
/// component of the observation in the range of `L_gram` is used.
pub fn condition_pinv(joint: &JointKernel, observed: &CMatrix, tol: Option<f64>) -> Result<ConditionalLaw> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    let l_gram = kernel::flatten(&joint.l)?.into_matrix();
    let rank = linalg::svd(&l_gram).rank(tol);
    conditional_from(joint, observed, linalg::pinv(&l_gram, tol), l_gram.nrows() - rank)
}

/// `T(s,s) L(s,s)⁻¹`, the mean operator of `W_K(s)` given `W_L(s)` alone.
pub fn pointwise_mean_operator(joint: &JointKernel, label: &str, tol: Option<f64>) -> Result<CMatrix> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    let i = joint.k.labels().index_of(label)?;
    let l_inv = strict_inverse(joint.l.block(i, i), tol)?;
    Ok(joint.coupling.block(i, i) * l_inv)
}

/// Comparison of `K₁ − T L₁⁻¹ T*` with `K₂ − T L₂⁻¹ T*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovEqualityReport {
    pub equal: bool,
    pub residual: f64,
    /// Largest spectral norm among `K₁`, `K₂`, `T L₁⁻¹ T*` and `T L₂⁻¹ T*`.
    pub scale: f64,
    /// The first conditional covariance is positive definite.
    pub common_pd: bool,
}

/// Equality of the two conditional covariances at Gram level, to
/// `tol · scale` (default `tol = 1e-10`). The joint kernels are not
/// assembled, so couplings that are inadmissible for either pair are still
/// compared.
pub fn conditional_cov_equal(
    k1: &OperatorKernelTable,
    k2: &OperatorKernelTable,
    l1: &OperatorKernelTable,
    l2: &OperatorKernelTable,
    coupling: &CouplingTable,
    tol: Option<f64>,
) -> Result<CovEqualityReport> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    for other in [k2, l1, l2] {
        k1.ensure_same_shape(other)?;
    }
    if coupling.labels() != k1.labels() || coupling.dim_h() != k1.dim_h() {
        return Err(Error::Shape("coupling does not match the kernels".into()));
    }
    for (name, k) in [("K1", k1), ("K2", k2), ("L1", l1), ("L2", l2)] {
        ensure_pd(name, k)?;
    }
    let t = coupling.gram();
    let gram = |k: &OperatorKernelTable| kernel::flatten(k).map(|f| f.into_matrix());
    let (k1g, k2g) = (gram(k1)?, gram(k2)?);
    let c1 = linalg::hermitian_part(&(&t * strict_inverse(&gram(l1)?, tol)? * t.adjoint()));
    let c2 = linalg::hermitian_part(&(&t * strict_inverse(&gram(l2)?, tol)? * t.adjoint()));
    let s1 = &k1g - &c1;
    let s2 = &k2g - &c2;
    let residual = linalg::op_norm(&(&s1 - &s2));
    let scale = [&k1g, &k2g, &c1, &c2]
        .into_iter()
        .map(linalg::op_norm)
        .fold(0.0, f64::max);
    Ok(CovEqualityReport {
        equal: residual <= tol * scale,
        residual,
        scale,
        common_pd: kernel::psd_check(&linalg::hermitian_part(&s1), None).pd,
    })
}

/// Monte Carlo check of the conditional law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McConditionalReport {
    pub samples: usize,
    pub batches: usize,
    /// Largest `|estimate − exact| / standard error` over the real and
    /// imaginary parts of every entry of the mean map.
    pub mean_map_max_z: f64,
    pub cond_cov_max_z: f64,
    pub mean_map_max_abs_dev: f64,
    pub cond_cov_max_abs_dev: f64,
    pub tol_sigma: f64,
    pub pass: bool,
}

struct Regression {
    mean_map: CMatrix,
    cond_cov: CMatrix,
}

fn regress(x: &CMatrix, y: &CMatrix) -> Regression {
    let sxx = cross_moment(x, x);
    let sxy = cross_moment(x, y);
    let syy = cross_moment(y, y);
    let mean_map = &sxy * linalg::pinv(&syy, DEFAULT_TOL);
    let cond_cov = linalg::hermitian_part(&(sxx - &mean_map * sxy.adjoint()));
    Regression { mean_map, cond_cov }
}

/// Largest z-score and absolute deviation of `full` from `exact`, with the
/// standard error of each real component estimated from the spread of the
/// per-batch estimates. A component with zero spread counts as exact when
/// it matches to `1e-12` relative.
fn max_z(full: &CMatrix, exact: &CMatrix, batches: &[CMatrix]) -> (f64, f64) {
    let b = batches.len() as f64;
    let parts: [fn(&linalg::C64) -> f64; 2] = [|z| z.re, |z| z.im];
    let mut worst_z: f64 = 0.0;
    let mut worst_dev: f64 = 0.0;
    for idx in 0..full.len() {
        for part in parts {
            let values: Vec<f64> = batches.iter().map(|m| part(&m[idx])).collect();
            let mean = values.iter().sum::<f64>() / b;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
            let se = (var / b).sqrt();
            let dev = (part(&full[idx]) - part(&exact[idx])).abs();
            worst_dev = worst_dev.max(dev);
            let z = if dev <= 1e-12 * (1.0 + part(&exact[idx]).abs()) {
                0.0
            } else if se > 0.0 {
                dev / se
            } else {
                f64::INFINITY
            };
            worst_z = worst_z.max(z);
        }
    }
    (worst_z, worst_dev)
}

/// Regresses the sampled `K` part on the `L` part and compares the empirical
/// mean map and residual covariance with `T_gram L_gram⁺` and the Schur
/// complement. Standard errors come from up to 32 batch means.
pub fn mc_verify_conditional(joint: &JointKernel, seed: u64, count: usize, tol_sigma: Option<f64>) -> Result<McConditionalReport> {
    let tol_sigma = tol_sigma.unwrap_or(5.0);
    let q = joint.k.n() * joint.k.dim_h();
    if count < 2 * (q + 1) {
        return Err(Error::InvalidInput(format!("at least {} samples are needed", 2 * (q + 1))));
    }
    let batches = (count / (q + 1)).min(32);
    let (xk, yl) = sample_joint(joint, seed, count)?;
    let l_gram = kernel::flatten(&joint.l)?.into_matrix();
    let exact_map = joint.coupling.gram() * linalg::pinv(&l_gram, DEFAULT_TOL);
    let full = regress(xk.paths(), yl.paths());
    let size = count / batches;
    let per_batch: Vec<Regression> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * size;
            let len = if b + 1 == batches { count - lo } else { size };
            regress(
                &xk.paths().columns(lo, len).into_owned(),
                &yl.paths().columns(lo, len).into_owned(),
            )
        })
        .collect();
    let maps: Vec<CMatrix> = per_batch.iter().map(|r| r.mean_map.clone()).collect();
    let covs: Vec<CMatrix> = per_batch.into_iter().map(|r| r.cond_cov).collect();
    let (mean_map_max_z, mean_map_max_abs_dev) = max_z(&full.mean_map, &exact_map, &maps);
    let (cond_cov_max_z, cond_cov_max_abs_dev) = max_z(&full.cond_cov, &joint.schur_gram, &covs);
    Ok(McConditionalReport {
        samples: count,
        batches,
        mean_map_max_z,
        cond_cov_max_z,
        mean_map_max_abs_dev,
        cond_cov_max_abs_dev,
        tol_sigma,
        pass: mean_map_max_z <= tol_sigma && cond_cov_max_z <= tol_sigma,
    })
}
