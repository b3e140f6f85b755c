use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use opkern::Error;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Tolerance = 1,
    Input = 2,
    Hypothesis = 3,
}

impl Exit {
    pub fn of(e: &Error) -> Self {
        match e {
            Error::InvalidKernel(_)
            | Error::Shape(_)
            | Error::Label(_)
            | Error::InvalidInput(_)
            | Error::NotStrictContraction(_) => Exit::Input,
            Error::NotPositiveDefinite { which, .. } if which == "M" || which == "M/L" => Exit::Hypothesis,
            Error::NotPositiveDefinite { .. }
            | Error::NotEquivalent(_)
            | Error::GramMismatch(_)
            | Error::SpectrumOutOfRange { .. }
            | Error::InternalInvariantViolation(_) => Exit::Tolerance,
            Error::NotInvertible { .. }
            | Error::NotDominated(_)
            | Error::SingularL { .. }
            | Error::SingularSystem { .. } => Exit::Hypothesis,
        }
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidKernel(_) => "invalid_kernel",
        Error::Shape(_) => "shape",
        Error::Label(_) => "label",
        Error::InvalidInput(_) => "invalid_input",
        Error::NotStrictContraction(_) => "not_strict_contraction",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::NotEquivalent(_) => "not_equivalent",
        Error::GramMismatch(_) => "gram_mismatch",
        Error::NotInvertible { .. } => "not_invertible",
        Error::NotDominated(_) => "not_dominated",
        Error::SpectrumOutOfRange { .. } => "spectrum_out_of_range",
        Error::SingularL { .. } => "singular_l",
        Error::SingularSystem { .. } => "singular_system",
        Error::InternalInvariantViolation(_) => "internal_invariant_violation",
    }
}

/// Failure of a command before any report could be produced.
#[derive(Debug)]
pub struct InputError(pub String);

impl From<Error> for InputError {
    fn from(e: Error) -> Self {
        Self(e.to_string())
    }
}

/// A command input read from disk together with its content hash.
pub struct Input {
    pub text: String,
    pub sha256: String,
}

impl Input {
    pub fn read(path: &Path) -> Result<Self, InputError> {
        let bytes = fs::read(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes).map_err(|_| InputError(format!("{}: not UTF-8", path.display())))?;
        Ok(Self {
            text,
            sha256,
        })
    }
}

/// What a command produced.
pub enum Body {
    Json(Map<String, Value>),
    Text(String),
}

pub struct Outcome {
    pub exit: Exit,
    pub body: Body,
}

/// A JSON report with its input hashes.
pub struct Report {
    fields: Map<String, Value>,
    inputs: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut fields = Map::new();
        fields.insert("command".into(), command.into());
        Self {
            fields,
            inputs: Map::new(),
        }
    }

    pub fn input(mut self, name: &str, input: &Input) -> Self {
        self.inputs.insert(name.into(), input.sha256.clone().into());
        self
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.fields
            .insert(key.into(), serde_json::to_value(value).expect("report value serializes"));
    }

    /// Copies every field of a serializable struct into the report.
    pub fn merge(&mut self, value: impl Serialize) {
        match serde_json::to_value(value).expect("report value serializes") {
            Value::Object(m) => self.fields.extend(m),
            other => panic!("expected an object, got {other}"),
        }
    }

    pub fn finish(mut self, exit: Exit) -> Outcome {
        let status = match exit {
            Exit::Ok => "ok",
            Exit::Tolerance => "tolerance_failure",
            Exit::Input => "input_error",
            Exit::Hypothesis => "hypothesis_failure",
        };
        self.fields.insert("status".into(), status.into());
        self.fields.insert("inputs".into(), Value::Object(self.inputs));
        Outcome {
            exit,
            body: Body::Json(self.fields),
        }
    }

    /// Records `e` as a structured condition, or returns it as an input error.
    pub fn fail(mut self, e: Error) -> Result<Outcome, InputError> {
        let exit = Exit::of(&e);
        if exit == Exit::Input {
            return Err(e.into());
        }
        let mut cond = Map::new();
        cond.insert("kind".into(), error_kind(&e).into());
        cond.insert("message".into(), e.to_string().into());
        match &e {
            Error::NotPositiveDefinite { which, min_eig, tol } => {
                cond.insert("which".into(), which.clone().into());
                cond.insert("min_eig".into(), (*min_eig).into());
                cond.insert("tol".into(), (*tol).into());
            }
            Error::NotInvertible {
                label,
                sigma_min,
                sigma_max,
            } => {
                cond.insert("label".into(), label.clone().into());
                cond.insert("sigma_min".into(), (*sigma_min).into());
                cond.insert("sigma_max".into(), (*sigma_max).into());
            }
            Error::SingularL { sigma_min, sigma_max } | Error::SingularSystem { sigma_min, sigma_max } => {
                cond.insert("sigma_min".into(), (*sigma_min).into());
                cond.insert("sigma_max".into(), (*sigma_max).into());
            }
            Error::SpectrumOutOfRange { min, max } => {
                cond.insert("min".into(), (*min).into());
                cond.insert("max".into(), (*max).into());
            }
            Error::NotEquivalent(x) | Error::GramMismatch(x) | Error::NotDominated(x) => {
                cond.insert("value".into(), (*x).into());
            }
            _ => {}
        }
        self.set("condition", Value::Object(cond));
        Ok(self.finish(exit))
    }
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes the outcome to `out` or standard output.
pub fn emit(outcome: &Outcome, out: Option<&Path>, timestamp: bool) -> std::io::Result<()> {
    let text = match &outcome.body {
        Body::Json(fields) => {
            let mut fields = fields.clone();
            if timestamp {
                fields.insert("timestamp".into(), unix_time().into());
            }
            let mut s = serde_json::to_string_pretty(&Value::Object(fields)).expect("report serializes");
            s.push('\n');
            s
        }
        Body::Text(s) => s.clone(),
    };
    match out {
        Some(path) => fs::write(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()
        }
    }
}
