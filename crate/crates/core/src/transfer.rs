//! Signed kernel systems `K₁ − T*L₁T = K₂ − T*L₂T`, their partial-isometry
//! realizations, transfer functions and Radon–Nikodym derivatives.
//!
//! Given Kolmogorov factors of the four kernels, the columns
//! `[V_{K₂}(s)x; V_{L₁}(s)Tx]` and `[V_{K₁}(s)x; V_{L₂}(s)Tx]` have the same
//! Gram matrix, so a partial isometry `W = [[A, B], [C, D]]` maps the first
//! family onto the second. Eliminating the `L` components gives the transfer
//! function
//!
//! ```text
//! T₁₂(s) = A + B V_{L₁}(s) (V_{L₂}(s) − D V_{L₁}(s))⁺ C,
//! ```
//!
//! with `V_{K₁}(s) = T₁₂(s) V_{K₂}(s)`. The inverse is a left inverse and
//! exists only when `V_{L₂}(s) − D V_{L₁}(s)` has full column rank.

use serde::Serialize;

use crate::dilation::{self, FeatureSystem};
use crate::error::{Error, Result};
use crate::kernel::{self, OperatorKernelTable};
use crate::linalg::{self, CMatrix};
use crate::{rng, DEFAULT_TOL};

/// Four positive definite kernels and an operator `T` on `H` satisfying
/// `K₁ − T*L₁T = K₂ − T*L₂T`.
#[derive(Clone, Debug)]
pub struct SignedKernelSystem {
    k1: OperatorKernelTable,
    k2: OperatorKernelTable,
    l1: OperatorKernelTable,
    l2: OperatorKernelTable,
    t: CMatrix,
    scale: f64,
    c11_residual: f64,
}

impl SignedKernelSystem {
    pub fn k1(&self) -> &OperatorKernelTable {
        &self.k1
    }

    pub fn k2(&self) -> &OperatorKernelTable {
        &self.k2
    }

    pub fn l1(&self) -> &OperatorKernelTable {
        &self.l1
    }

    pub fn l2(&self) -> &OperatorKernelTable {
        &self.l2
    }

    pub fn t(&self) -> &CMatrix {
        &self.t
    }

    /// Largest spectral norm among `K₁`, `K₂`, `T*L₁T` and `T*L₂T`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `max_{s,t} ‖(K₁ − K₂)(s,t) − T*(L₁ − L₂)(s,t)T‖`.
    pub fn c11_residual(&self) -> f64 {
        self.c11_residual
    }

    /// The same system with the roles of the indices swapped.
    pub fn swapped(&self) -> Self {
        Self {
            k1: self.k2.clone(),
            k2: self.k1.clone(),
            l1: self.l2.clone(),
            l2: self.l1.clone(),
            ..self.clone()
        }
    }
}

fn system_scale(
    k1: &OperatorKernelTable,
    k2: &OperatorKernelTable,
    tl1: &OperatorKernelTable,
    tl2: &OperatorKernelTable,
) -> f64 {
    [k1, k2, tl1, tl2]
        .into_iter()
        .map(kernel::flat_norm)
        .fold(0.0, f64::max)
}

/// Residual of the equivalence `K₁ − T*L₁T = K₂ − T*L₂T` and the scale it is
/// measured against. No positivity is checked.
pub fn c11_residual(
    k1: &OperatorKernelTable,
    k2: &OperatorKernelTable,
    l1: &OperatorKernelTable,
    l2: &OperatorKernelTable,
    t: &CMatrix,
) -> Result<(f64, f64)> {
    for other in [k2, l1, l2] {
        k1.ensure_same_shape(other)?;
    }
    let tl1 = l1.congruence(t)?;
    let tl2 = l2.congruence(t)?;
    let lhs = k1.sub(&tl1)?;
    let rhs = k2.sub(&tl2)?;
    Ok((lhs.max_block_distance(&rhs)?, system_scale(k1, k2, &tl1, &tl2)))
}

/// Checks positivity of all four kernels and the equivalence relation
/// blockwise to `tol · scale` (default `tol = 1e-10`).
pub fn validate_system(
    k1: OperatorKernelTable,
    k2: OperatorKernelTable,
    l1: OperatorKernelTable,
    l2: OperatorKernelTable,
    t: CMatrix,
    tol: Option<f64>,
) -> Result<SignedKernelSystem> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    let (residual, scale) = c11_residual(&k1, &k2, &l1, &l2, &t)?;
    for (name, k) in [("K1", &k1), ("K2", &k2), ("L1", &l1), ("L2", &l2)] {
        let report = kernel::is_positive_definite(k, None)?;
        if !report.pd {
            return Err(Error::NotPositiveDefinite {
                which: name.into(),
                min_eig: report.min_eig,
                tol: report.tol,
            });
        }
    }
    if residual > tol * scale {
        return Err(Error::NotEquivalent(residual));
    }
    Ok(SignedKernelSystem {
        k1,
        k2,
        l1,
        l2,
        t,
        scale,
        c11_residual: residual,
    })
}

/// Kolmogorov factors of the four kernels of a system.
#[derive(Clone, Debug)]
pub struct SystemFactors {
    pub k1: FeatureSystem,
    pub k2: FeatureSystem,
    pub l1: FeatureSystem,
    pub l2: FeatureSystem,
}

impl SystemFactors {
    pub fn minimal(sys: &SignedKernelSystem, tol: Option<f64>) -> Result<Self> {
        Ok(Self {
            k1: dilation::kolmogorov_factorize(&sys.k1, tol)?,
            k2: dilation::kolmogorov_factorize(&sys.k2, tol)?,
            l1: dilation::kolmogorov_factorize(&sys.l1, tol)?,
            l2: dilation::kolmogorov_factorize(&sys.l2, tol)?,
        })
    }
}

/// The partial isometry `W = [[A, B], [C, D]]` from
/// `H(K̃₂) ⊕ H(L̃₁)` to `H(K̃₁) ⊕ H(L̃₂)`.
#[derive(Clone, Debug)]
pub struct TransferRealization {
    w: CMatrix,
    a: CMatrix,
    b: CMatrix,
    c: CMatrix,
    d: CMatrix,
    initial_basis: CMatrix,
    final_basis: CMatrix,
    g: CMatrix,
    f: CMatrix,
    factors: SystemFactors,
    scale: f64,
}

impl TransferRealization {
    pub fn w(&self) -> &CMatrix {
        &self.w
    }

    /// `r_{K₁} × r_{K₂}`.
    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    /// `r_{K₁} × r_{L₁}`.
    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    /// `r_{L₂} × r_{K₂}`.
    pub fn c(&self) -> &CMatrix {
        &self.c
    }

    /// `r_{L₂} × r_{L₁}`.
    pub fn d(&self) -> &CMatrix {
        &self.d
    }

    /// Orthonormal basis of the initial space, the span of the columns
    /// `[V_{K₂}(s)x; V_{L₁}(s)Tx]`.
    pub fn initial_basis(&self) -> &CMatrix {
        &self.initial_basis
    }

    /// Orthonormal basis of the final space, the span of the columns
    /// `[V_{K₁}(s)x; V_{L₂}(s)Tx]`.
    pub fn final_basis(&self) -> &CMatrix {
        &self.final_basis
    }

    pub fn factors(&self) -> &SystemFactors {
        &self.factors
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Largest of `‖W*W − P_init‖`, `‖WW* − P_fin‖` and `‖WW*W − W‖`.
    pub fn partial_isometry_defect(&self) -> f64 {
        let w_adj = self.w.adjoint();
        let init = &w_adj * &self.w - linalg::projector(&self.initial_basis);
        let fin = &self.w * &w_adj - linalg::projector(&self.final_basis);
        let law = &self.w * &w_adj * &self.w - &self.w;
        [init, fin, law]
            .iter()
            .map(linalg::op_norm)
            .fold(0.0, f64::max)
    }

    /// Largest column norm of `W G − F`, the intertwining
    /// `W [V_{K₂}(s); V_{L₁}(s)T] = [V_{K₁}(s); V_{L₂}(s)T]`.
    pub fn intertwining_residual(&self) -> f64 {
        let diff = &self.w * &self.g - &self.f;
        diff.column_iter()
            .map(|col| col.norm())
            .fold(0.0, f64::max)
    }

    /// `V_{L₂}(s_i) − D V_{L₁}(s_i)`.
    pub fn resolvent_operand(&self, i: usize) -> CMatrix {
        self.factors.l2.feature(i) - &self.d * self.factors.l1.feature(i)
    }

    /// Extreme singular values of [`Self::resolvent_operand`]; the smallest
    /// is zero when the operand has fewer than `d` rows.
    pub fn resolvent_singular_values(&self, i: usize) -> (f64, f64) {
        let m = self.resolvent_operand(i);
        let dec = linalg::svd(&m);
        let min = if dec.values.len() < m.ncols() { 0.0 } else { dec.min() };
        (min, dec.max())
    }

    /// Magnitude the resolvent operand is measured against:
    /// `max(σ_max, ‖V_{L₁}(s_i)‖, ‖V_{L₂}(s_i)‖)`. An operand that cancels to
    /// rounding level is then rank deficient rather than tiny.
    pub fn resolvent_reference(&self, i: usize) -> f64 {
        let (_, sigma_max) = self.resolvent_singular_values(i);
        sigma_max
            .max(linalg::op_norm(self.factors.l1.feature(i)))
            .max(linalg::op_norm(self.factors.l2.feature(i)))
    }

    /// `T₁₂(s_i)`, an `r_{K₁} × r_{K₂}` matrix. Requires
    /// `σ_min > tol · ` [`Self::resolvent_reference`].
    pub fn transfer_function_at(&self, i: usize, tol: Option<f64>) -> Result<CMatrix> {
        let tol = tol.unwrap_or(DEFAULT_TOL);
        let m = self.resolvent_operand(i);
        let (sigma_min, sigma_max) = self.resolvent_singular_values(i);
        let reference = self.resolvent_reference(i);
        if !(reference > 0.0 && sigma_min > tol * reference) {
            return Err(Error::NotInvertible {
                label: self.factors.k2.labels().get(i).to_string(),
                sigma_min,
                sigma_max,
            });
        }
        let left_inverse = linalg::pinv(&m, tol);
        Ok(&self.a + &self.b * self.factors.l1.feature(i) * left_inverse * &self.c)
    }

    pub fn transfer_function(&self, label: &str, tol: Option<f64>) -> Result<CMatrix> {
        let i = self.factors.k2.labels().index_of(label)?;
        self.transfer_function_at(i, tol)
    }

    /// `T₁₂(s)` at every label, in label order.
    pub fn transfer_functions(&self, tol: Option<f64>) -> Result<Vec<CMatrix>> {
        (0..self.factors.k2.kernel().n())
            .map(|i| self.transfer_function_at(i, tol))
            .collect()
    }
}

/// Realization from minimal factorizations of the four kernels.
pub fn construct_partial_isometry(sys: &SignedKernelSystem, tol: Option<f64>) -> Result<TransferRealization> {
    let factors = SystemFactors::minimal(sys, tol)?;
    construct_partial_isometry_with(sys, factors, tol)
}

/// Realization from caller-supplied factorizations, which need not be
/// minimal.
///
/// `W = F G⁺` with the pseudo-inverse cut at `tol · σ_max`. The column Gram
/// matrices `G*G` and `F*F` must agree to `max(tol, 1e-9) · scale`.
pub fn construct_partial_isometry_with(
    sys: &SignedKernelSystem,
    factors: SystemFactors,
    tol: Option<f64>,
) -> Result<TransferRealization> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    for (f, k) in [
        (&factors.k1, &sys.k1),
        (&factors.k2, &sys.k2),
        (&factors.l1, &sys.l1),
        (&factors.l2, &sys.l2),
    ] {
        f.kernel().ensure_same_shape(k)?;
    }
    let (n, dim) = (sys.k1.n(), sys.k1.dim_h());
    let (rk1, rk2) = (factors.k1.dilation_dim(), factors.k2.dilation_dim());
    let (rl1, rl2) = (factors.l1.dilation_dim(), factors.l2.dilation_dim());

    let mut g = CMatrix::zeros(rk2 + rl1, n * dim);
    let mut f = CMatrix::zeros(rk1 + rl2, n * dim);
    for i in 0..n {
        let cols = i * dim;
        g.view_mut((0, cols), (rk2, dim)).copy_from(factors.k2.feature(i));
        g.view_mut((rk2, cols), (rl1, dim))
            .copy_from(&(factors.l1.feature(i) * &sys.t));
        f.view_mut((0, cols), (rk1, dim)).copy_from(factors.k1.feature(i));
        f.view_mut((rk1, cols), (rl2, dim))
            .copy_from(&(factors.l2.feature(i) * &sys.t));
    }

    let mismatch = linalg::op_norm(&(g.adjoint() * &g - f.adjoint() * &f));
    if mismatch > tol.max(1e-9) * sys.scale {
        return Err(Error::GramMismatch(mismatch));
    }

    let w = &f * linalg::pinv(&g, tol);
    Ok(TransferRealization {
        a: w.view((0, 0), (rk1, rk2)).into_owned(),
        b: w.view((0, rk2), (rk1, rl1)).into_owned(),
        c: w.view((rk1, 0), (rl2, rk2)).into_owned(),
        d: w.view((rk1, rk2), (rl2, rl1)).into_owned(),
        initial_basis: linalg::range_basis(&g, tol),
        final_basis: linalg::range_basis(&f, tol),
        w,
        g,
        f,
        factors,
        scale: sys.scale,
    })
}

/// Residuals of `V_{K₁}(s) = T₁₂(s) V_{K₂}(s)` and
/// `K₁(s,t) = V_{K₁}(s)* T₁₂(t) V_{K₂}(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RealizationReport {
    pub feature_residual: f64,
    pub kernel_residual: f64,
    pub scale: f64,
}

impl RealizationReport {
    pub fn within(&self, tol: f64) -> bool {
        self.feature_residual <= tol * self.scale && self.kernel_residual <= tol * self.scale
    }
}

pub fn verify_realization(real: &TransferRealization, tol: Option<f64>) -> Result<RealizationReport> {
    let fs = &real.factors;
    let transfer = real.transfer_functions(tol)?;
    let n = transfer.len();
    let mapped: Vec<CMatrix> = (0..n).map(|i| &transfer[i] * fs.k2.feature(i)).collect();
    let feature_residual = (0..n)
        .map(|i| linalg::op_norm(&(fs.k1.feature(i) - &mapped[i])))
        .fold(0.0, f64::max);
    let k1 = fs.k1.kernel();
    let mut kernel_residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let rebuilt = fs.k1.feature(i).adjoint() * &mapped[j];
            kernel_residual = kernel_residual.max(linalg::op_norm(&(k1.block(i, j) - rebuilt)));
        }
    }
    Ok(RealizationReport {
        feature_residual,
        kernel_residual,
        scale: real.scale,
    })
}

/// Largest principal angle between the span of `{T₁₂(s) V_{K₂}(s) a}` and
/// the span of `{V_{K₁}(s) a}`. Spans are taken with rank cutoff `1e-8`.
pub fn transitive_action_angle(real: &TransferRealization, tol: Option<f64>) -> Result<f64> {
    let fs = &real.factors;
    let transfer = real.transfer_functions(tol)?;
    let (n, dim, rk1) = (transfer.len(), fs.k1.dim_h(), fs.k1.dilation_dim());
    let mut image = CMatrix::zeros(rk1, n * dim);
    for (i, t12) in transfer.iter().enumerate() {
        image
            .view_mut((0, i * dim), (rk1, dim))
            .copy_from(&(t12 * fs.k2.feature(i)));
    }
    let qa = linalg::range_basis(&image, SPAN_CUTOFF);
    let qb = linalg::range_basis(&fs.k1.stacked(), SPAN_CUTOFF);
    Ok(linalg::principal_angles(&qa, &qb)
        .into_iter()
        .fold(0.0, f64::max))
}

const SPAN_CUTOFF: f64 = 1e-8;

/// `T₁₂` maps the dilation space of `K₂` onto that of `K₁`: every principal
/// angle is at most `1e-8`.
pub fn transitive_action_check(real: &TransferRealization, tol: Option<f64>) -> Result<bool> {
    Ok(transitive_action_angle(real, tol)? <= SPAN_CUTOFF)
}

/// `Φ = dL/dK` on the dilation space of `K`.
#[derive(Clone, Debug)]
pub struct RNDerivative {
    pub phi: CMatrix,
    pub sqrt_phi: CMatrix,
    /// Smallest and largest eigenvalue of `Φ` before clamping to `[0, 1]`.
    pub spectrum: (f64, f64),
    /// `max_{s,t} ‖V_K(s)* Φ V_K(t) − L(s,t)‖`.
    pub residual: f64,
}

/// Radon–Nikodym derivative of `L` with respect to `K`, computed on the
/// minimal dilation of `K`.
pub fn radon_nikodym(l: &OperatorKernelTable, k: &OperatorKernelTable, tol: Option<f64>) -> Result<RNDerivative> {
    l.ensure_same_shape(k)?;
    ensure_dominated(l, k)?;
    let fk = dilation::kolmogorov_factorize(k, tol)?;
    radon_nikodym_with(l, &fk, tol)
}

fn ensure_dominated(l: &OperatorKernelTable, k: &OperatorKernelTable) -> Result<()> {
    if !kernel::kernel_leq(l, k, None)? {
        let gap = kernel::is_positive_definite(&k.sub(l)?, None)?;
        return Err(Error::NotDominated(gap.min_eig));
    }
    Ok(())
}

/// `Φ = (V⁺)* flat(L) V⁺` for the stacked features `V` of `fk`,
/// Hermitian-symmetrized. Eigenvalues within `max(tol, 1e-9)` of `[0, 1]`
/// are clamped into it; anything further out is an error. Domination is not
/// rechecked.
pub fn radon_nikodym_with(l: &OperatorKernelTable, fk: &FeatureSystem, tol: Option<f64>) -> Result<RNDerivative> {
    let tol = tol.unwrap_or(DEFAULT_TOL);
    l.ensure_same_shape(fk.kernel())?;
    let v_pinv = linalg::pinv(&fk.stacked(), tol);
    let flat_l = kernel::flatten(l)?.into_matrix();
    let raw = linalg::hermitian_part(&(v_pinv.adjoint() * flat_l * &v_pinv));
    let eig = linalg::hermitian_eigen(&raw);
    let (min, max) = if eig.values.is_empty() { (0.0, 0.0) } else { (eig.min(), eig.max()) };
    let slack = tol.max(1e-9);
    if min < -slack || max > 1.0 + slack {
        return Err(Error::SpectrumOutOfRange { min, max });
    }
    let phi = linalg::hermitian_map(&raw, |x| x.clamp(0.0, 1.0));
    let sqrt_phi = linalg::hermitian_map(&raw, |x| x.clamp(0.0, 1.0).sqrt());
    let n = l.n();
    let mut residual: f64 = 0.0;
    for i in 0..n {
        let left = fk.feature(i).adjoint() * &phi;
        for j in 0..n {
            residual = residual.max(linalg::op_norm(&(&left * fk.feature(j) - l.block(i, j))));
        }
    }
    Ok(RNDerivative {
        phi,
        sqrt_phi,
        spectrum: (min, max),
        residual,
    })
}

/// Comparison of `(dK₁/dK₂)^{1/2}` with the transfer function.
#[derive(Clone, Debug)]
pub struct RnTransferReport {
    pub rn: RNDerivative,
    /// `max_s ‖Φ^{1/2} V_{K₂}(s) − T₁₂(s) V_{K₂}(s)‖`.
    pub deviation: f64,
    pub realization: TransferRealization,
}

/// Requires `K₁ ≤ K₂`. The realization is built with `K₁` factored through
/// the dilation space of `K₂` as `V_{K₁}(s) = Φ^{1/2} V_{K₂}(s)`, so `T₁₂(s)`
/// and `Φ^{1/2}` act on the same space and are compared on the span of
/// `{V_{K₂}(s) a}`.
pub fn verify_rn_transfer_identity(sys: &SignedKernelSystem, tol: Option<f64>) -> Result<RnTransferReport> {
    ensure_dominated(&sys.k1, &sys.k2)?;
    let k2 = dilation::kolmogorov_factorize(&sys.k2, tol)?;
    let rn = radon_nikodym_with(&sys.k1, &k2, tol)?;
    let nested: Vec<CMatrix> = k2.features().iter().map(|v| &rn.sqrt_phi * v).collect();
    let k1 = FeatureSystem::from_features(sys.k1.clone(), nested, 1e-8)?;
    let factors = SystemFactors {
        k1,
        k2,
        l1: dilation::kolmogorov_factorize(&sys.l1, tol)?,
        l2: dilation::kolmogorov_factorize(&sys.l2, tol)?,
    };
    let realization = construct_partial_isometry_with(sys, factors, tol)?;
    let transfer = realization.transfer_functions(tol)?;
    let fk2 = &realization.factors.k2;
    let deviation = transfer
        .iter()
        .enumerate()
        .map(|(i, t12)| {
            let v = fk2.feature(i);
            linalg::op_norm(&(&rn.sqrt_phi * v - t12 * v))
        })
        .fold(0.0, f64::max);
    Ok(RnTransferReport {
        rn,
        deviation,
        realization,
    })
}

/// Summary of the whole realization pipeline.
///
/// The Radon–Nikodym fields are `None` when `K₁ ≤ K₂` fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferReport {
    pub c11_residual: f64,
    pub partial_isometry_defect: f64,
    pub eq_a6_residual: f64,
    pub eq_c8_residual: f64,
    pub eq_c10_residual: f64,
    pub rn_spectrum: Option<[f64; 2]>,
    pub rn_vs_transfer: Option<f64>,
    pub scale: f64,
}

impl TransferReport {
    /// Every residual is at most `tol · scale`, the isometry defect at most
    /// `tol`, and the derivative spectrum within `[−tol, 1 + tol]`.
    pub fn within(&self, tol: f64) -> bool {
        let bound = tol * self.scale;
        let spectrum_ok = self
            .rn_spectrum
            .is_none_or(|[lo, hi]| lo >= -tol && hi <= 1.0 + tol);
        self.c11_residual <= bound
            && self.partial_isometry_defect <= tol
            && self.eq_a6_residual <= bound
            && self.eq_c8_residual <= bound
            && self.eq_c10_residual <= bound
            && self.rn_vs_transfer.is_none_or(|x| x <= bound)
            && spectrum_ok
    }
}

pub fn transfer_report(sys: &SignedKernelSystem, tol: Option<f64>) -> Result<TransferReport> {
    let real = construct_partial_isometry(sys, tol)?;
    let check = verify_realization(&real, tol)?;
    let (rn_spectrum, rn_vs_transfer) = match verify_rn_transfer_identity(sys, tol) {
        Ok(r) => (Some([r.rn.spectrum.0, r.rn.spectrum.1]), Some(r.deviation)),
        Err(Error::NotDominated(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(TransferReport {
        c11_residual: sys.c11_residual,
        partial_isometry_defect: real.partial_isometry_defect(),
        eq_a6_residual: real.intertwining_residual(),
        eq_c8_residual: check.feature_residual,
        eq_c10_residual: check.kernel_residual,
        rn_spectrum,
        rn_vs_transfer,
        scale: sys.scale,
    })
}

/// Seeded valid system on labels `s1 … sn`.
///
/// `K₂`, `L₁` and the increment `Δ` are random full-rank kernels and `T` is a
/// random contraction of norm `0.9`. Without `dominated`, `L₁ = L₂ + Δ` and
/// `K₁ = K₂ + T*ΔT`. With `dominated`, `L₂ = L₁ + εΔ` and
/// `K₁ = K₂ − εT*ΔT` with `ε` chosen so that `K₁ ≥ λ_min(K₂)/2`, which gives
/// `K₁ ≤ K₂`. Draws are repeated until `σ_min/σ_max ≥ 1e-6` for the
/// resolvent operand at every label.
pub fn random_valid_system(seed: u64, n: usize, d: usize, dominated: bool) -> Result<SignedKernelSystem> {
    use rand::RngCore;
    const ATTEMPTS: u64 = 64;
    let full = n * d;
    for attempt in 0..ATTEMPTS {
        let mut r = rng::stream(seed, attempt);
        let mut next = || r.next_u64();
        let k2 = kernel::random_pd_kernel(next(), n, d, full)?;
        let base = kernel::random_pd_kernel(next(), n, d, full)?;
        let delta = kernel::random_pd_kernel(next(), n, d, full)?;
        let t_raw = kernel::random_complex_matrix(next(), d, d);
        let t = t_raw.scale(0.9 / linalg::op_norm(&t_raw));
        let t_delta = delta.congruence(&t)?;
        let (k1, l1, l2) = if dominated {
            let floor = kernel::flatten(&k2)?.eigen().min();
            let eps = 0.5 * floor / kernel::flat_norm(&t_delta).max(f64::MIN_POSITIVE);
            (k2.sub(&t_delta.scale(eps))?, base.clone(), base.add(&delta.scale(eps))?)
        } else {
            (k2.add(&t_delta)?, base.add(&delta)?, base)
        };
        let sys = validate_system(k1, k2, l1, l2, t, None)?;
        let real = construct_partial_isometry(&sys, None)?;
        let conditioned = (0..n).all(|i| {
            let (lo, hi) = real.resolvent_singular_values(i);
            hi > 0.0 && lo >= 1e-6 * hi
        });
        if conditioned {
            return Ok(sys);
        }
    }
    Err(Error::InternalInvariantViolation(format!(
        "no well-conditioned system after {ATTEMPTS} draws"
    )))
}
