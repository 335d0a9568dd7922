//! Model files, CSV sequences and atomic output.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::model::StochasticDescriptorModel;
use crate::pencil::MatrixPencil;

/// JSON model document; matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<f64>>>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(rename = "P0", default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0bar: Option<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `rows` as a matrix with `nrows` rows; an empty array means no columns.
fn matrix(field: &str, rows: &[Vec<f64>], nrows: Option<usize>) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return match nrows {
            Some(r) => Ok(DMatrix::zeros(r, 0)),
            None => Err(CliError::input(format!("field `{field}`: matrix has no rows"))),
        };
    }
    if let Some(r) = nrows {
        if rows.len() != r {
            return Err(CliError::input(format!("field `{field}`: {} rows, expected {r}", rows.len())));
        }
    }
    let cols = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::input(format!(
            "field `{field}`: row {i} has {} entries, expected {cols}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn from_model(model: &StochasticDescriptorModel, name: Option<String>) -> Self {
        Self {
            name,
            description: None,
            e: rows_of(model.e()),
            a: rows_of(model.a()),
            b: Some(rows_of(model.b())),
            f: Some(rows_of(model.f())),
            h: Some(rows_of(model.h())),
            r: Some(rows_of(model.r())),
            p0: Some(rows_of(model.p0())),
            r0bar: Some(model.r0bar().iter().copied().collect()),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::input(format!("{origin}:{}:{}: {e}", e.line(), e.column())))
    }

    pub fn pencil(&self) -> Result<MatrixPencil, CliError> {
        let e = matrix("E", &self.e, None)?;
        let a = matrix("A", &self.a, Some(e.nrows()))?;
        MatrixPencil::new(e, a).map_err(|err| CliError::input(format!("pencil: {err}")))
    }

    pub fn model(&self) -> Result<StochasticDescriptorModel, CliError> {
        fn need<'a, T>(field: &str, v: &'a Option<T>) -> Result<&'a T, CliError> {
            v.as_ref().ok_or_else(|| CliError::input(format!("field `{field}` is required for this command")))
        }
        let e = matrix("E", &self.e, None)?;
        let n_eq = e.nrows();
        let a = matrix("A", &self.a, Some(n_eq))?;
        let b = match &self.b {
            Some(rows) => matrix("B", rows, Some(n_eq))?,
            None => DMatrix::zeros(n_eq, 0),
        };
        let f = matrix("F", need("F", &self.f)?, Some(n_eq))?;
        let h = matrix("H", need("H", &self.h)?, None)?;
        let r = matrix("R", need("R", &self.r)?, Some(h.nrows()))?;
        let p0 = matrix("P0", need("P0", &self.p0)?, Some(n_eq))?;
        let r0bar = DVector::from_vec(need("r0bar", &self.r0bar)?.clone());
        StochasticDescriptorModel::new(e, a, b, f, h, r, r0bar, p0).map_err(|err| CliError::input(format!("model: {err}")))
    }
}

/// Contents of an input file with its digest.
pub struct Input {
    pub path: PathBuf,
    pub text: String,
    pub sha256: String,
}

pub fn read_input(path: &Path) -> Result<Input, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let sha256 = hex(&Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| CliError::input(format!("{}: not valid UTF-8", path.display())))?;
    Ok(Input { path: path.to_path_buf(), text, sha256 })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::input(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A table with a leading `k` column; `None` cells are left empty.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Default for Table {
    fn default() -> Self {
        Self::new()
    }
}

impl Table {
    pub fn new() -> Self {
        Self { header: vec!["k".into()], rows: Vec::new() }
    }

    /// Append columns `{prefix}0..` holding `seq[k]`; missing steps stay empty.
    pub fn push(&mut self, prefix: &str, width: usize, seq: &[DVector<f64>], len: usize) {
        self.header.extend((0..width).map(|i| format!("{prefix}{i}")));
        if self.rows.len() < len {
            self.rows.resize(len, Vec::new());
        }
        for (k, row) in self.rows.iter_mut().enumerate() {
            match seq.get(k) {
                Some(v) => row.extend(v.iter().map(|&x| Some(x))),
                None => row.extend(std::iter::repeat_n(None, width)),
            }
        }
    }

    pub fn push_scalar(&mut self, name: &str, values: &[f64]) {
        self.header.push(name.into());
        for (k, row) in self.rows.iter_mut().enumerate() {
            row.push(values.get(k).copied());
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::input(format!("csv: {e}"));
        w.write_record(&self.header).map_err(err)?;
        for (k, row) in self.rows.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(row.iter().map(|c| c.map(fmt_f64).unwrap_or_default()));
            w.write_record(&rec).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::input(format!("csv: {e}")))
    }
}

/// Columns `{prefix}0, {prefix}1, ...` of a CSV whose first column is `k`.
pub fn read_sequence(input: &Input, prefix: &str) -> Result<Vec<DVector<f64>>, CliError> {
    let origin = input.path.display().to_string();
    let mut rdr = csv::Reader::from_reader(input.text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::input(format!("{origin}: {e}")))?.clone();
    if header.get(0).map(str::trim) != Some("k") {
        return Err(CliError::input(format!("{origin}: first column must be `k`")));
    }
    let mut cols: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(c, name)| {
            let rest = name.trim().strip_prefix(prefix)?;
            rest.parse::<usize>().ok().filter(|_| rest.chars().all(|ch| ch.is_ascii_digit())).map(|i| (i, c))
        })
        .collect();
    cols.sort();
    if cols.iter().enumerate().any(|(i, &(idx, _))| idx != i) {
        return Err(CliError::input(format!("{origin}: columns {prefix}0.. must be numbered without gaps")));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| CliError::input(format!("{origin}:{line}: {e}")))?;
        let k: usize = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::input(format!("{origin}:{line}: `k` is not an integer")))?;
        if k != row {
            return Err(CliError::input(format!("{origin}:{line}: expected k = {row}, found {k}")));
        }
        let mut v = DVector::zeros(cols.len());
        for (i, &(_, c)) in cols.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("").trim();
            v[i] = cell
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::input(format!("{origin}:{line}: `{}` is not a finite number", &header[c])))?;
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::input(format!("{origin}: no data rows")));
    }
    Ok(out)
}
