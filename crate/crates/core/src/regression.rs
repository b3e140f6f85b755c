//! Regression with operator-valued kernels through the scalar tilde kernel
//! `K̃((s,a),(t,b)) = ⟨a, K(s,t) b⟩`.
//!
//! For samples `(s_i, a_i)` with targets `y_i`, the minimizer of
//! `⟨f − y, L̃⁻¹ (f − y)⟩ + ‖f‖²` over `H(K̃)` is
//! `f* = Σ_i c_i K̃(·, (s_i, a_i))` with `c = (L̃ + K̃)⁻¹ y`. On a full grid of
//! samples `(s_i, e_p)` the fitted values are the Gaussian process posterior
//! mean `K (K + L)⁻¹ y`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{self, LabelSet, OperatorKernelTable};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::DEFAULT_TOL;

/// Samples `(s_i, a_i)` with complex targets `y_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    labels: Vec<String>,
    directions: Vec<CVector>,
    y: CVector,
}

impl TrainingSet {
    pub fn new(labels: Vec<String>, directions: Vec<CVector>, y: CVector) -> Result<Self> {
        let m = labels.len();
        if m == 0 {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        if directions.len() != m || y.len() != m {
            return Err(Error::Shape(format!(
                "{m} labels, {} directions, {} targets",
                directions.len(),
                y.len()
            )));
        }
        let d = directions[0].len();
        if directions.iter().any(|a| a.len() != d) {
            return Err(Error::Shape("directions differ in length".into()));
        }
        let finite = |z: &C64| z.re.is_finite() && z.im.is_finite();
        if !directions.iter().all(|a| a.iter().all(finite)) || !y.iter().all(finite) {
            return Err(Error::InvalidInput("non-finite training value".into()));
        }
        Ok(Self { labels, directions, y })
    }

    /// Samples `(s_i, e_p)` in the order `i·d + p`, with targets read from
    /// row `i`, column `p` of `observed`.
    pub fn full_grid(labels: &LabelSet, observed: &CMatrix) -> Result<Self> {
        let (n, d) = observed.shape();
        if n != labels.len() {
            return Err(Error::Shape(format!("{n} observation rows for {} labels", labels.len())));
        }
        let mut names = Vec::with_capacity(n * d);
        let mut directions = Vec::with_capacity(n * d);
        for i in 0..n {
            for p in 0..d {
                names.push(labels.get(i).to_string());
                let mut e = CVector::zeros(d);
                e[p] = linalg::real(1.0);
                directions.push(e);
            }
        }
        let y = CVector::from_iterator(n * d, observed.transpose().iter().copied());
        Self::new(names, directions, y)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim_h(&self) -> usize {
        self.directions[0].len()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn direction(&self, i: usize) -> &CVector {
        &self.directions[i]
    }

    pub fn y(&self) -> &CVector {
        &self.y
    }

    /// The same samples with other targets.
    pub fn with_targets(&self, y: CVector) -> Result<Self> {
        Self::new(self.labels.clone(), self.directions.clone(), y)
    }

    fn indices(&self, labels: &LabelSet) -> Result<Vec<usize>> {
        self.labels.iter().map(|s| labels.index_of(s)).collect()
    }
}

/// `K̃_ij = ⟨a_i, K(s_i, s_j) a_j⟩` and the same for `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrices {
    pub ktilde: CMatrix,
    pub ltilde: CMatrix,
    /// Largest spectral norm of the two matrices.
    pub scale: f64,
}

fn tilde_gram(k: &OperatorKernelTable, train: &TrainingSet, idx: &[usize]) -> CMatrix {
    let m = train.len();
    let mut g = CMatrix::zeros(m, m);
    for i in 0..m {
        let left = train.directions[i].adjoint();
        for j in i..m {
            let v = (&left * k.block(idx[i], idx[j]) * &train.directions[j])[(0, 0)];
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
        g[(i, i)].im = 0.0;
    }
    g
}

pub fn design_matrices(k: &OperatorKernelTable, l: &OperatorKernelTable, train: &TrainingSet) -> Result<DesignMatrices> {
    k.ensure_same_shape(l)?;
    if train.dim_h() != k.dim_h() {
        return Err(Error::Shape(format!(
            "directions of length {}, kernels on dimension {}",
            train.dim_h(),
            k.dim_h()
        )));
    }
    for (name, kern) in [("K", k), ("L", l)] {
        let report = kernel::is_positive_definite(kern, None)?;
        if !report.pd {
            return Err(Error::NotPositiveDefinite {
                which: name.into(),
                min_eig: report.min_eig,
                tol: report.tol,
            });
        }
    }
    let idx = train.indices(k.labels())?;
    let ktilde = tilde_gram(k, train, &idx);
    let ltilde = tilde_gram(l, train, &idx);
    let mut scale: f64 = 0.0;
    for (name, g) in [("Ktilde", &ktilde), ("Ltilde", &ltilde)] {
        let report = kernel::psd_check(g, None);
        if !report.pd {
            return Err(Error::InternalInvariantViolation(format!(
                "{name} has eigenvalue {:e}",
                report.min_eig
            )));
        }
        scale = scale.max(report.scale);
    }
    Ok(DesignMatrices { ktilde, ltilde, scale })
}

/// `c = (L̃ + K̃)⁻¹ y`, requiring `σ_min > tol · σ_max` (default
/// `tol = 1e-10`).
pub fn krr_coefficients(dm: &DesignMatrices, y: &CVector, tol: Option<f64>) -> Result<CVector> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    if y.len() != dm.ktilde.nrows() {
        return Err(Error::Shape(format!("{} targets for {} samples", y.len(), dm.ktilde.nrows())));
    }
    let a = &dm.ltilde + &dm.ktilde;
    let dec = linalg::svd(&a);
    let (sigma_min, sigma_max) = (dec.min(), dec.max());
    if !(sigma_max > 0.0 && sigma_min > tol * sigma_max) {
        return Err(Error::SingularSystem { sigma_min, sigma_max });
    }
    linalg::hermitian_solve(&a, y).ok_or(Error::SingularSystem { sigma_min, sigma_max })
}

/// A fitted regression: representer coefficients with the kernels and
/// samples they refer to.
#[derive(Clone, Debug)]
pub struct RegressionFit {
    k: OperatorKernelTable,
    l: OperatorKernelTable,
    train: TrainingSet,
    design: DesignMatrices,
    c: CVector,
}

pub fn krr_fit(k: &OperatorKernelTable, l: &OperatorKernelTable, train: &TrainingSet, tol: Option<f64>) -> Result<RegressionFit> {
    let design = design_matrices(k, l, train)?;
    let c = krr_coefficients(&design, train.y(), tol)?;
    Ok(RegressionFit {
        k: k.clone(),
        l: l.clone(),
        train: train.clone(),
        design,
        c,
    })
}

impl RegressionFit {
    /// A fit from previously computed coefficients.
    pub fn from_coefficients(k: &OperatorKernelTable, l: &OperatorKernelTable, train: &TrainingSet, c: CVector) -> Result<Self> {
        if c.len() != train.len() {
            return Err(Error::Shape(format!("{} coefficients for {} samples", c.len(), train.len())));
        }
        Ok(Self {
            k: k.clone(),
            l: l.clone(),
            train: train.clone(),
            design: design_matrices(k, l, train)?,
            c,
        })
    }

    pub fn coefficients(&self) -> &CVector {
        &self.c
    }

    pub fn training(&self) -> &TrainingSet {
        &self.train
    }

    pub fn design(&self) -> &DesignMatrices {
        &self.design
    }

    pub fn k(&self) -> &OperatorKernelTable {
        &self.k
    }

    pub fn l(&self) -> &OperatorKernelTable {
        &self.l
    }

    /// `K̃ c`, the minimizer evaluated at the samples.
    pub fn fitted(&self) -> CVector {
        &self.design.ktilde * &self.c
    }

    /// `f*(s, a) = Σ_i c_i ⟨a, K(s, s_i) a_i⟩`.
    pub fn predict(&self, s: &str, a: &CVector) -> Result<C64> {
        let si = self.k.labels().index_of(s)?;
        if a.len() != self.k.dim_h() {
            return Err(Error::Shape(format!("direction of length {}, expected {}", a.len(), self.k.dim_h())));
        }
        let idx = self.train.indices(self.k.labels())?;
        let a_adj = a.adjoint();
        Ok(idx
            .iter()
            .enumerate()
            .map(|(i, &j)| (&a_adj * self.k.block(si, j) * &self.train.directions[i])[(0, 0)] * self.c[i])
            .sum())
    }
}

/// `(K̃g − y)* L̃⁻¹ (K̃g − y) + g* K̃ g`, requiring `L̃` invertible with
/// `σ_min > tol · σ_max`.
pub fn objective_value(dm: &DesignMatrices, y: &CVector, g: &CVector, tol: Option<f64>) -> Result<f64> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    let m = dm.ktilde.nrows();
    if y.len() != m || g.len() != m {
        return Err(Error::Shape(format!("vectors must have length {m}")));
    }
    let dec = linalg::svd(&dm.ltilde);
    let (sigma_min, sigma_max) = (dec.min(), dec.max());
    if !(sigma_max > 0.0 && sigma_min > tol * sigma_max) {
        return Err(Error::SingularL { sigma_min, sigma_max });
    }
    let l_inv = linalg::hermitian_part(&linalg::pinv(&dm.ltilde, tol));
    let r = &dm.ktilde * g - y;
    let fit = r.dotc(&(&l_inv * &r));
    let penalty = g.dotc(&(&dm.ktilde * g));
    let total = fit + penalty;
    let size = fit.norm() + penalty.norm();
    if total.im.abs() > 1e-12 * size.max(f64::MIN_POSITIVE) {
        return Err(Error::InternalInvariantViolation(format!(
            "objective has imaginary part {:e}",
            total.im
        )));
    }
    Ok(total.re)
}

/// `K_gram (K_gram + L_gram)⁻¹ vec(observed)`, reshaped to `n × d`.
pub fn gp_posterior_mean(k: &OperatorKernelTable, l: &OperatorKernelTable, observed: &CMatrix, tol: Option<f64>) -> Result<CMatrix> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    k.ensure_same_shape(l)?;
    let (n, d) = (k.n(), k.dim_h());
    if observed.shape() != (n, d) {
        return Err(Error::Shape(format!("observation {:?}, expected ({n}, {d})", observed.shape())));
    }
    let kg = kernel::flatten(k)?.into_matrix();
    let a = &kg + kernel::flatten(l)?.into_matrix();
    let dec = linalg::svd(&a);
    let (sigma_min, sigma_max) = (dec.min(), dec.max());
    if !(sigma_max > 0.0 && sigma_min > tol * sigma_max) {
        return Err(Error::SingularSystem { sigma_min, sigma_max });
    }
    let y = CVector::from_iterator(n * d, observed.transpose().iter().copied());
    let z = linalg::hermitian_solve(&a, &y).ok_or(Error::SingularSystem { sigma_min, sigma_max })?;
    let mean = kg * z;
    Ok(CMatrix::from_row_iterator(n, d, mean.iter().copied()))
}

/// Serializable summary of a fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub coefficients: Vec<[f64; 2]>,
    pub fitted: Vec<[f64; 2]>,
}

impl From<&RegressionFit> for FitSummary {
    fn from(fit: &RegressionFit) -> Self {
        let pairs = |v: &CVector| v.iter().map(|z| [z.re, z.im]).collect();
        Self {
            coefficients: pairs(&fit.c),
            fitted: pairs(&fit.fitted()),
        }
    }
}
