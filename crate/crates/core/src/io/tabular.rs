use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regime::Dataset;
use crate::solver::DesignMatrix;

/// Where and how to read a delimited dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularInput {
    pub path: PathBuf,
    pub response_col: String,
    pub treatment_col: String,
    /// Covariate columns in order; `None` takes every remaining column.
    pub feature_cols: Option<Vec<String>>,
    pub add_intercept: bool,
    pub standardize: bool,
}

impl TabularInput {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            response_col: "y".into(),
            treatment_col: "a".into(),
            feature_cols: None,
            add_intercept: true,
            standardize: true,
        }
    }
}

pub const INTERCEPT_NAME: &str = "intercept";

fn find(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::parse(format!("missing column '{name}'"), None, Some(name)))
}

/// Reads a dataset from any CSV source; rows in messages are 1-based data rows.
pub fn read_dataset(reader: impl Read, input: &TabularInput) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::parse("header row required", None, None));
    }
    let y_idx = find(&headers, &input.response_col)?;
    let a_idx = find(&headers, &input.treatment_col)?;
    let features: Vec<String> = match &input.feature_cols {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != y_idx && *k != a_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_idx: Vec<usize> = features.iter().map(|f| find(&headers, f)).collect::<Result<_>>()?;

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::parse(e.to_string(), Some(row), None))?;
        let cell = |k: usize| -> Result<f64> {
            let raw = record
                .get(k)
                .ok_or_else(|| Error::parse("row is shorter than the header", Some(row), Some(&headers[k])))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::parse(format!("'{raw}' is not a number"), Some(row), Some(&headers[k])))?;
            if !v.is_finite() {
                return Err(Error::parse(format!("non-finite value '{raw}'"), Some(row), Some(&headers[k])));
            }
            Ok(v)
        };
        y.push(cell(y_idx)?);
        let av = cell(a_idx)?;
        if av != 0.0 && av != 1.0 {
            return Err(Error::parse(
                format!("treatment must be 0 or 1, found {av}"),
                Some(row),
                Some(&headers[a_idx]),
            ));
        }
        a.push(av);
        for &k in &feature_idx {
            rows.push(cell(k)?);
        }
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::parse(format!("need at least 2 data rows, found {n}"), None, None));
    }
    let k = feature_idx.len();
    let (design, names) = if input.add_intercept {
        let names = std::iter::once(INTERCEPT_NAME.to_string()).chain(features).collect();
        (DesignMatrix::with_intercept(n, k, &rows)?, names)
    } else {
        if k == 0 {
            return Err(Error::parse("no covariate columns", None, None));
        }
        (DesignMatrix::from_rows(n, k, &rows)?, features)
    };
    let design = if input.standardize { design.standardize() } else { design };
    Dataset::new(y, a, design)?.with_feature_names(names)
}

/// Reads the file named by `input.path`.
pub fn load_dataset(input: &TabularInput) -> Result<Dataset> {
    let file = std::fs::File::open(&input.path)?;
    read_dataset(std::io::BufReader::new(file), input)
}

/// Writes `y`, `a` and the covariates on their raw scale (intercept dropped).
pub fn write_dataset(writer: impl Write, data: &Dataset, response_col: &str, treatment_col: &str) -> Result<()> {
    let x = data.x();
    let start = usize::from(x.has_intercept());
    let names: Vec<String> = if data.feature_names().len() == x.ncols() {
        data.feature_names().to_vec()
    } else {
        (0..x.ncols()).map(|j| format!("x{j}")).collect()
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![response_col.to_string(), treatment_col.to_string()];
    header.extend(names[start..].iter().cloned());
    w.write_record(&header)?;
    let scales = x.scales();
    let mut record = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        record.clear();
        record.push(data.y()[i].to_string());
        record.push(data.a()[i].to_string());
        for j in start..x.ncols() {
            record.push((x.get(i, j) * scales[j]).to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
