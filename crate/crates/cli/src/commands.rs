use std::path::Path;

use opkern::gaussian::{self, assemble_joint, make_sampler, mc_verify_conditional, JointKernel};
use opkern::io::{self, KernelPairSpec, KernelSpec, JointSpec, SystemSpec};
use opkern::kernel::{self, OperatorKernelTable};
use opkern::regression::{self, FitSummary, RegressionFit, TrainingSet};
use opkern::transfer::{self, transfer_report, validate_system};
use opkern::{dilation, CVector, Error};
use serde::{Deserialize, Serialize};

use crate::report::{Body, Exit, Input, InputError, Outcome, Report};
use crate::table;
use crate::{Check, Common};

type Run = Result<Outcome, InputError>;

/// Unwraps a library result or turns the error into the command outcome.
macro_rules! attempt {
    ($report:ident, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return $report.fail(err),
        }
    };
}

fn verdict(ok: bool) -> Exit {
    if ok {
        Exit::Ok
    } else {
        Exit::Tolerance
    }
}

fn load_kernel(input: &Input) -> Result<KernelSpec, InputError> {
    Ok(KernelSpec::from_json_str(&input.text)?)
}

pub fn check_pd(c: &Common) -> Run {
    let input = Input::read(&c.spec)?;
    let spec = load_kernel(&input)?;
    let mut rep = Report::new("check-pd").input("spec", &input);
    let k = attempt!(rep, spec.build());
    let abs_tol = c.tol.map(|t| t * kernel::flat_norm(&k));
    let r = kernel::is_positive_definite(&k, abs_tol)?;
    rep.set("pd", r.pd);
    rep.set("min_eig", r.min_eig);
    rep.set("tol", r.tol);
    rep.set("n", k.n());
    rep.set("d", k.dim_h());
    Ok(rep.finish(verdict(r.pd)))
}

pub fn factorize(c: &Common, check: &Check) -> Run {
    let input = Input::read(&c.spec)?;
    let spec = load_kernel(&input)?;
    let mut rep = Report::new("factorize").input("spec", &input);
    let k = attempt!(rep, spec.build());
    let f = attempt!(rep, dilation::kolmogorov_factorize(&k, c.tol));
    let residual = f.reproduction_residual();
    rep.merge(io::FeatureSystemExport::from(&f));
    rep.set("reproduction_residual", residual);
    rep.set("scale", f.scale());
    Ok(rep.finish(verdict(residual <= check.check_tol * f.scale().max(1.0))))
}

pub fn realize(c: &Common, check: &Check) -> Run {
    let input = Input::read(&c.spec)?;
    let spec = SystemSpec::from_json_str(&input.text)?;
    let mut rep = Report::new("realize").input("spec", &input);
    let (k1, k2, l1, l2, t) = attempt!(rep, spec.build());
    let (c11, scale) = attempt!(rep, transfer::c11_residual(&k1, &k2, &l1, &l2, &t));
    rep.set("c11_residual", c11);
    rep.set("scale", scale);
    let sys = attempt!(rep, validate_system(k1, k2, l1, l2, t, c.tol));
    let report = attempt!(rep, transfer_report(&sys, c.tol));
    let ok = report.within(check.check_tol);
    rep.merge(&report);
    Ok(rep.finish(verdict(ok)))
}

pub fn rn(c: &Common, check: &Check) -> Run {
    let input = Input::read(&c.spec)?;
    let spec = KernelPairSpec::from_json_str(&input.text)?;
    let mut rep = Report::new("rn").input("spec", &input);
    let k = attempt!(rep, spec.k.build());
    let l = attempt!(rep, spec.l.build());
    let scale = kernel::flat_norm(&k);
    rep.set("scale", scale);
    let d = attempt!(rep, transfer::radon_nikodym(&l, &k, c.tol));
    rep.set("phi", io::matrix_to_json(&d.phi));
    rep.set("sqrt_phi", io::matrix_to_json(&d.sqrt_phi));
    rep.set("spectrum", [d.spectrum.0, d.spectrum.1]);
    rep.set("residual", d.residual);
    Ok(rep.finish(verdict(d.residual <= check.check_tol * scale.max(1.0))))
}

pub fn sample(c: &Common, seed: u64, samples: usize) -> Run {
    let input = Input::read(&c.spec)?;
    let spec = load_kernel(&input)?;
    let rep = Report::new("sample").input("spec", &input);
    let k = attempt!(rep, spec.build());
    let sampler = attempt!(rep, make_sampler(&k, seed));
    Ok(Outcome {
        exit: Exit::Ok,
        body: Body::Text(table::paths_csv(&sampler.sample(samples))),
    })
}

fn build_joint(spec: &JointSpec, tol: Option<f64>) -> opkern::Result<JointKernel> {
    assemble_joint(spec.k.build()?, spec.l.build()?, spec.coupling.0.clone(), tol)
}

pub fn mc_verify(c: &Common, seed: u64, samples: usize, sigmas: f64) -> Run {
    let input = Input::read(&c.spec)?;
    let spec = JointSpec::from_json_str(&input.text)?;
    let mut rep = Report::new("mc-verify").input("spec", &input);
    rep.set("seed", seed);
    let joint = attempt!(rep, build_joint(&spec, c.tol));
    let r = attempt!(rep, mc_verify_conditional(&joint, seed, samples, Some(sigmas)));
    rep.merge(&r);
    Ok(rep.finish(verdict(r.pass)))
}

pub fn condition(c: &Common, pinv: bool) -> Run {
    let input = Input::read(&c.spec)?;
    let spec = JointSpec::from_json_str(&input.text)?;
    let mut rep = Report::new("condition").input("spec", &input);
    let observed = spec
        .observed_l
        .as_ref()
        .ok_or_else(|| InputError("joint spec has no `observed_l`".into()))?;
    let observed = io::matrix_from_json(observed)?;
    let joint = attempt!(rep, build_joint(&spec, c.tol));
    let law = if pinv {
        gaussian::condition_pinv(&joint, &observed, c.tol)
    } else {
        gaussian::condition(&joint, &observed, c.tol)
    };
    let law = attempt!(rep, law);
    let cov = kernel::flatten(&law.cond_cov)?.into_matrix();
    rep.set("mean", io::matrix_to_json(&law.mean));
    rep.set("mean_map", io::matrix_to_json(&law.mean_map));
    rep.set("cond_cov", io::matrix_to_json(&cov));
    rep.set("null_dim", law.null_dim);
    Ok(rep.finish(Exit::Ok))
}

#[derive(Serialize, Deserialize)]
struct TrainingJson {
    labels: Vec<String>,
    directions: Vec<Vec<io::ComplexJson>>,
    y: Vec<io::ComplexJson>,
}

impl From<&TrainingSet> for TrainingJson {
    fn from(t: &TrainingSet) -> Self {
        Self {
            labels: (0..t.len()).map(|i| t.label(i).to_string()).collect(),
            directions: (0..t.len()).map(|i| io::vector_to_json(t.direction(i))).collect(),
            y: io::vector_to_json(t.y()),
        }
    }
}

impl TrainingJson {
    fn to_set(&self) -> opkern::Result<TrainingSet> {
        TrainingSet::new(
            self.labels.clone(),
            self.directions.iter().map(|a| io::vector_from_json(a)).collect(),
            io::vector_from_json(&self.y),
        )
    }
}

#[derive(Deserialize)]
struct FitInputs {
    spec: String,
}

#[derive(Deserialize)]
struct FitFile {
    coefficients: Vec<io::ComplexJson>,
    training: TrainingJson,
    inputs: FitInputs,
}

fn kernel_pair(spec: &KernelPairSpec) -> opkern::Result<(OperatorKernelTable, OperatorKernelTable)> {
    Ok((spec.k.build()?, spec.l.build()?))
}

pub fn krr_fit(c: &Common, train: &Path) -> Run {
    let input = Input::read(&c.spec)?;
    let train_input = Input::read(train)?;
    let spec = KernelPairSpec::from_json_str(&input.text)?;
    let rows = table::read_rows(&train_input.text, true)?;
    let mut rep = Report::new("krr-fit").input("spec", &input).input("train", &train_input);
    let (k, l) = attempt!(rep, kernel_pair(&spec));
    let y = rows.y.expect("training rows carry targets");
    let set = TrainingSet::new(rows.labels, rows.directions, y)?;
    let fit = attempt!(rep, regression::krr_fit(&k, &l, &set, c.tol));
    rep.merge(FitSummary::from(&fit));
    rep.set("dim_h", set.dim_h());
    rep.set("training", TrainingJson::from(&set));
    Ok(rep.finish(Exit::Ok))
}

pub fn krr_predict(c: &Common, fit_path: &Path, queries: &Path) -> Run {
    let input = Input::read(&c.spec)?;
    let fit_input = Input::read(fit_path)?;
    let query_input = Input::read(queries)?;
    let spec = KernelPairSpec::from_json_str(&input.text)?;
    let saved: FitFile =
        serde_json::from_str(&fit_input.text).map_err(|e| InputError(format!("fit file: {e}")))?;
    if saved.inputs.spec != input.sha256 {
        return Err(InputError("fit was produced from a different spec".into()));
    }
    let rows = table::read_rows(&query_input.text, false)?;
    let mut rep = Report::new("krr-predict")
        .input("spec", &input)
        .input("fit", &fit_input)
        .input("queries", &query_input);
    let (k, l) = attempt!(rep, kernel_pair(&spec));
    let set = saved.training.to_set()?;
    let coeffs: CVector = io::vector_from_json(&saved.coefficients);
    let fit = attempt!(rep, RegressionFit::from_coefficients(&k, &l, &set, coeffs));
    let mut predictions = Vec::with_capacity(rows.labels.len());
    for (s, a) in rows.labels.iter().zip(&rows.directions) {
        let v = fit.predict(s, a).map_err(|e: Error| InputError(e.to_string()))?;
        predictions.push(io::complex_to_json(v));
    }
    rep.set("labels", &rows.labels);
    rep.set("predictions", predictions);
    Ok(rep.finish(Exit::Ok))
}
