//! CSV formats: sample paths, training sets and prediction queries.

use opkern::gaussian::PathBatch;
use opkern::linalg::{self, CVector};

use crate::report::InputError;

/// One row per sample, label and coordinate.
pub fn paths_csv(batch: &PathBatch) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample", "label", "coordinate", "re", "im"])
        .expect("in-memory write");
    let d = batch.dim_h();
    let paths = batch.paths();
    for k in 0..batch.len() {
        let sample = (batch.start() + k as u64).to_string();
        for (i, label) in batch.labels().iter().enumerate() {
            for p in 0..d {
                let z = paths[(i * d + p, k)];
                w.write_record([
                    sample.as_str(),
                    label,
                    &p.to_string(),
                    &z.re.to_string(),
                    &z.im.to_string(),
                ])
                .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Rows `(label, a, y)`; `y` is absent for prediction queries.
pub struct Rows {
    pub labels: Vec<String>,
    pub directions: Vec<CVector>,
    pub y: Option<CVector>,
}

fn expected_header(d: usize, targets: bool) -> Vec<String> {
    let mut h = vec!["label".to_string()];
    for p in 0..d {
        h.push(format!("a_{p}_re"));
        h.push(format!("a_{p}_im"));
    }
    if targets {
        h.push("y_re".into());
        h.push("y_im".into());
    }
    h
}

fn number(field: &str, row: usize, col: &str) -> Result<f64, InputError> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| InputError(format!("row {row}, column {col}: `{field}` is not a number")))?;
    if !x.is_finite() {
        return Err(InputError(format!("row {row}, column {col}: non-finite value")));
    }
    Ok(x)
}

/// Parses a training (`targets = true`) or query CSV.
pub fn read_rows(text: &str, targets: bool) -> Result<Rows, InputError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| InputError(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let extra = if targets { 3 } else { 1 };
    if header.len() < extra + 2 || (header.len() - extra) % 2 != 0 {
        return Err(InputError(format!("unexpected header {header:?}")));
    }
    let d = (header.len() - extra) / 2;
    let want = expected_header(d, targets);
    if header != want {
        return Err(InputError(format!("header {header:?}, expected {want:?}")));
    }
    let mut labels = Vec::new();
    let mut directions = Vec::new();
    let mut y = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| InputError(e.to_string()))?;
        let row = row + 1;
        labels.push(rec[0].trim().to_string());
        let mut a = CVector::zeros(d);
        for p in 0..d {
            a[p] = linalg::c(
                number(&rec[1 + 2 * p], row, &want[1 + 2 * p])?,
                number(&rec[2 + 2 * p], row, &want[2 + 2 * p])?,
            );
        }
        directions.push(a);
        if targets {
            y.push(linalg::c(
                number(&rec[1 + 2 * d], row, "y_re")?,
                number(&rec[2 + 2 * d], row, "y_im")?,
            ));
        }
    }
    if labels.is_empty() {
        return Err(InputError("no data rows".into()));
    }
    Ok(Rows {
        labels,
        directions,
        y: targets.then(|| CVector::from_vec(y)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_rows_parse() {
        let rows = read_rows("label,a_0_re,a_0_im,y_re,y_im\ns1,1,0,2,-1\n", true).unwrap();
        assert_eq!(rows.labels, ["s1"]);
        assert_eq!(rows.y.unwrap()[0], linalg::c(2.0, -1.0));
        assert!(read_rows("label,a_0_re,y_re,y_im\ns1,1,2,0\n", true).is_err());
        assert!(read_rows("label,a_0_re,a_0_im\ns1,x,0\n", false).is_err());
        assert!(read_rows("label,a_0_re,a_0_im\n", false).is_err());
    }
}
