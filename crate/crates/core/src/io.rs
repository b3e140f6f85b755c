//! JSON interchange: kernel specs, complex matrices and feature exports.
//!
//! Complex numbers are always `[re, im]` pairs. A kernel spec is either an
//! explicit block table or a named builder:
//!
//! ```json
//! {"labels": ["s1", "s2"], "dim_h": 1, "kind": "explicit",
//!  "blocks": [[[[1, 0]], [[2, 0]]], [[[2, 0]], [[1, 0]]]]}
//! {"labels": ["s1"], "dim_h": 2, "kind": "builder",
//!  "builder": {"name": "cp_contraction", "params": {"h": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]],
//!              "points": {"s1": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}}}}
//! ```
//!
//! Each explicit block is the row-major list of its `d²` entries; a nested
//! `d × d` list is accepted on input as well. Builder matrices are nested
//! row lists.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dilation::FeatureSystem;
use crate::error::{Error, Result};
use crate::gaussian::CouplingTable;
use crate::kernel::{self, LabelSet, OperatorKernelTable};
use crate::linalg::{self, CMatrix, CVector, C64};

pub type ComplexJson = [f64; 2];
pub type MatrixJson = Vec<Vec<ComplexJson>>;

pub fn complex_to_json(z: C64) -> ComplexJson {
    [z.re, z.im]
}

pub fn complex_from_json(z: ComplexJson) -> C64 {
    linalg::c(z[0], z[1])
}

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    m.row_iter()
        .map(|row| row.iter().map(|&z| complex_to_json(z)).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInput("ragged matrix".into()));
    }
    Ok(CMatrix::from_fn(r, c, |i, j| complex_from_json(rows[i][j])))
}

pub fn vector_to_json(v: &CVector) -> Vec<ComplexJson> {
    v.iter().map(|&z| complex_to_json(z)).collect()
}

pub fn vector_from_json(v: &[ComplexJson]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|&z| complex_from_json(z)))
}

/// A kernel given explicitly or by one of the builders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec", into = "RawKernelSpec")]
pub enum KernelSpec {
    Explicit(OperatorKernelTable),
    Builder {
        labels: LabelSet,
        dim_h: usize,
        builder: Builder,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Builder {
    /// `δ_{st} I_d`.
    Identity,
    /// The same Hermitian block at every pair.
    Constant { value: CMatrix },
    /// `I − h* s_i* s_j h`; `points` aligned with the labels.
    CpContraction { h: CMatrix, points: Vec<CMatrix> },
    /// Truncated `Σ_m h*^m s_i* s_j h^m`.
    NeumannSeries { h: CMatrix, points: Vec<CMatrix>, tol: f64 },
    /// Seeded `G* G` with `G` of the given rank.
    RandomPd { seed: u64, rank: usize },
}

impl KernelSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel spec serializes")
    }

    pub fn labels(&self) -> &LabelSet {
        match self {
            Self::Explicit(t) => t.labels(),
            Self::Builder { labels, .. } => labels,
        }
    }

    pub fn build(&self) -> Result<OperatorKernelTable> {
        let (labels, dim_h, builder) = match self {
            Self::Explicit(t) => return Ok(t.clone()),
            Self::Builder {
                labels,
                dim_h,
                builder,
            } => (labels.clone(), *dim_h, builder),
        };
        let check_dim = |m: &CMatrix| {
            if m.shape() != (dim_h, dim_h) {
                Err(Error::Shape(format!(
                    "builder matrix {:?} for dim_h = {dim_h}",
                    m.shape()
                )))
            } else {
                Ok(())
            }
        };
        match builder {
            Builder::Identity => Ok(OperatorKernelTable::identity(labels, dim_h)),
            Builder::Constant { value } => {
                check_dim(value)?;
                OperatorKernelTable::constant(labels, value)
            }
            Builder::CpContraction { h, points } => {
                check_dim(h)?;
                kernel::cp_contraction_kernel(h, labels, points)
            }
            Builder::NeumannSeries { h, points, tol } => {
                check_dim(h)?;
                kernel::neumann_series_kernel(h, labels, points, *tol)
            }
            Builder::RandomPd { seed, rank } => {
                kernel::random_pd_kernel(*seed, labels.len(), dim_h, *rank)?.with_labels(labels)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Explicit,
    Builder,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawBlock {
    Flat(Vec<ComplexJson>),
    Nested(MatrixJson),
}

#[derive(Serialize, Deserialize)]
struct RawBuilder {
    name: String,
    #[serde(default)]
    params: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernelSpec {
    labels: Vec<String>,
    dim_h: usize,
    kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<Vec<RawBlock>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builder: Option<RawBuilder>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    value: MatrixJson,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractionParams {
    h: MatrixJson,
    points: BTreeMap<String, MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomParams {
    seed: u64,
    rank: usize,
}

fn params<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("builder params: {e}")))
}

fn block_from_raw(raw: RawBlock, d: usize) -> Result<CMatrix> {
    match raw {
        RawBlock::Flat(entries) => {
            if entries.len() != d * d {
                return Err(Error::Shape(format!(
                    "block with {} entries, expected {}",
                    entries.len(),
                    d * d
                )));
            }
            Ok(CMatrix::from_row_iterator(
                d,
                d,
                entries.into_iter().map(complex_from_json),
            ))
        }
        RawBlock::Nested(rows) => matrix_from_json(&rows),
    }
}

fn points_in_order(labels: &LabelSet, mut points: BTreeMap<String, MatrixJson>) -> Result<Vec<CMatrix>> {
    let out = labels
        .iter()
        .map(|l| {
            let m = points
                .remove(l)
                .ok_or_else(|| Error::InvalidInput(format!("no point for label `{l}`")))?;
            matrix_from_json(&m)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = points.keys().next() {
        return Err(Error::Label(extra.clone()));
    }
    Ok(out)
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        let labels = LabelSet::new(raw.labels)?;
        let d = raw.dim_h;
        match raw.kind {
            Kind::Explicit => {
                let rows = raw
                    .blocks
                    .ok_or_else(|| Error::InvalidInput("explicit spec without `blocks`".into()))?;
                let blocks = rows
                    .into_iter()
                    .map(|row| row.into_iter().map(|b| block_from_raw(b, d)).collect())
                    .collect::<Result<Vec<Vec<_>>>>()?;
                Ok(Self::Explicit(OperatorKernelTable::new(labels, d, blocks)?))
            }
            Kind::Builder => {
                let raw_b = raw
                    .builder
                    .ok_or_else(|| Error::InvalidInput("builder spec without `builder`".into()))?;
                let builder = match raw_b.name.as_str() {
                    "identity" => Builder::Identity,
                    "constant" => {
                        let p: ConstantParams = params(raw_b.params)?;
                        Builder::Constant {
                            value: matrix_from_json(&p.value)?,
                        }
                    }
                    "cp_contraction" | "neumann_series" => {
                        let p: ContractionParams = params(raw_b.params)?;
                        let h = matrix_from_json(&p.h)?;
                        let points = points_in_order(&labels, p.points)?;
                        if raw_b.name == "cp_contraction" {
                            Builder::CpContraction { h, points }
                        } else {
                            Builder::NeumannSeries {
                                h,
                                points,
                                tol: p.tol.unwrap_or(1e-12),
                            }
                        }
                    }
                    "random_pd" => {
                        let p: RandomParams = params(raw_b.params)?;
                        Builder::RandomPd {
                            seed: p.seed,
                            rank: p.rank,
                        }
                    }
                    other => {
                        return Err(Error::InvalidInput(format!("unknown builder `{other}`")));
                    }
                };
                Ok(Self::Builder {
                    labels,
                    dim_h: d,
                    builder,
                })
            }
        }
    }
}

impl From<KernelSpec> for RawKernelSpec {
    fn from(spec: KernelSpec) -> Self {
        match spec {
            KernelSpec::Explicit(t) => {
                let n = t.n();
                let blocks = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                let b = t.block(i, j);
                                RawBlock::Flat(
                                    b.row_iter()
                                        .flat_map(|r| r.iter().map(|&z| complex_to_json(z)).collect::<Vec<_>>())
                                        .collect(),
                                )
                            })
                            .collect()
                    })
                    .collect();
                RawKernelSpec {
                    labels: t.labels().as_slice().to_vec(),
                    dim_h: t.dim_h(),
                    kind: Kind::Explicit,
                    blocks: Some(blocks),
                    builder: None,
                }
            }
            KernelSpec::Builder {
                labels,
                dim_h,
                builder,
            } => {
                let point_map = |points: &[CMatrix]| -> BTreeMap<String, MatrixJson> {
                    labels
                        .iter()
                        .zip(points)
                        .map(|(l, p)| (l.to_string(), matrix_to_json(p)))
                        .collect()
                };
                let (name, params) = match &builder {
                    Builder::Identity => ("identity", serde_json::Value::Null),
                    Builder::Constant { value } => (
                        "constant",
                        serde_json::json!({ "value": matrix_to_json(value) }),
                    ),
                    Builder::CpContraction { h, points } => (
                        "cp_contraction",
                        serde_json::to_value(ContractionParams {
                            h: matrix_to_json(h),
                            points: point_map(points),
                            tol: None,
                        })
                        .expect("serializable"),
                    ),
                    Builder::NeumannSeries { h, points, tol } => (
                        "neumann_series",
                        serde_json::to_value(ContractionParams {
                            h: matrix_to_json(h),
                            points: point_map(points),
                            tol: Some(*tol),
                        })
                        .expect("serializable"),
                    ),
                    Builder::RandomPd { seed, rank } => (
                        "random_pd",
                        serde_json::to_value(RandomParams {
                            seed: *seed,
                            rank: *rank,
                        })
                        .expect("serializable"),
                    ),
                };
                RawKernelSpec {
                    labels: labels.as_slice().to_vec(),
                    dim_h,
                    kind: Kind::Builder,
                    blocks: None,
                    builder: Some(RawBuilder {
                        name: name.to_string(),
                        params,
                    }),
                }
            }
        }
    }
}

/// JSON form of a [`FeatureSystem`]. Raw features are only defined up to a
/// unitary on the dilation space; compare exports through `V(s)* V(t)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureSystemExport {
    pub labels: Vec<String>,
    pub d: usize,
    pub r: usize,
    pub features: Vec<MatrixJson>,
    pub basis_eigs: Vec<f64>,
}

impl From<&FeatureSystem> for FeatureSystemExport {
    fn from(f: &FeatureSystem) -> Self {
        Self {
            labels: f.labels().as_slice().to_vec(),
            d: f.dim_h(),
            r: f.dilation_dim(),
            features: f.features().iter().map(matrix_to_json).collect(),
            basis_eigs: f.basis_eigs().to_vec(),
        }
    }
}

impl FeatureSystemExport {
    /// Feature operators as matrices, in label order.
    pub fn feature_matrices(&self) -> Result<Vec<CMatrix>> {
        self.features
            .iter()
            .map(|m| {
                let out = matrix_from_json(m)?;
                // A 0 x d matrix serializes as [], which loses d.
                Ok(if out.nrows() == 0 { CMatrix::zeros(0, self.d) } else { out })
            })
            .collect()
    }
}

/// A coupling table in the explicit-block layout of [`KernelSpec`], without
/// the Hermitian constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCouplingSpec", into = "RawCouplingSpec")]
pub struct CouplingSpec(pub CouplingTable);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCouplingSpec {
    labels: Vec<String>,
    dim_h: usize,
    blocks: Vec<Vec<RawBlock>>,
}

impl TryFrom<RawCouplingSpec> for CouplingSpec {
    type Error = Error;

    fn try_from(raw: RawCouplingSpec) -> Result<Self> {
        let labels = LabelSet::new(raw.labels)?;
        let (n, d) = (labels.len(), raw.dim_h);
        if raw.blocks.len() != n || raw.blocks.iter().any(|row| row.len() != n) {
            return Err(Error::Shape(format!("coupling needs {n}x{n} blocks")));
        }
        let blocks = raw
            .blocks
            .into_iter()
            .flatten()
            .map(|b| block_from_raw(b, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(CouplingTable::new(labels, d, blocks)?))
    }
}

impl From<CouplingSpec> for RawCouplingSpec {
    fn from(spec: CouplingSpec) -> Self {
        let t = spec.0;
        let n = t.n();
        let flat = |b: &CMatrix| RawBlock::Flat(b.transpose().iter().map(|&z| complex_to_json(z)).collect());
        RawCouplingSpec {
            labels: t.labels().as_slice().to_vec(),
            dim_h: t.dim_h(),
            blocks: (0..n).map(|i| (0..n).map(|j| flat(t.block(i, j))).collect()).collect(),
        }
    }
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Four kernels and an operator `T` on `H`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub k1: KernelSpec,
    pub k2: KernelSpec,
    pub l1: KernelSpec,
    pub l2: KernelSpec,
    pub t: MatrixJson,
}

/// The built components of a [`SystemSpec`], before validation.
pub type SystemParts = (OperatorKernelTable, OperatorKernelTable, OperatorKernelTable, OperatorKernelTable, CMatrix);

impl SystemSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        from_json(s)
    }

    pub fn build(&self) -> Result<SystemParts> {
        Ok((
            self.k1.build()?,
            self.k2.build()?,
            self.l1.build()?,
            self.l2.build()?,
            matrix_from_json(&self.t)?,
        ))
    }
}

/// Two kernels `K`, `L` and a coupling `T`, with an optional observation of
/// the `L` process as an `n × d` array.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub k: KernelSpec,
    pub l: KernelSpec,
    pub coupling: CouplingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_l: Option<MatrixJson>,
}

impl JointSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        from_json(s)
    }
}

/// A pair of kernels: the prior `k` and the noise or dominated kernel `l`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelPairSpec {
    pub k: KernelSpec,
    pub l: KernelSpec,
}

impl KernelPairSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        from_json(s)
    }
}
