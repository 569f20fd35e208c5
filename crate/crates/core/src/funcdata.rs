//! Functional samples, covariates, and their CSV interchange formats.
//!
//! Functions are stored in long format, one row per observation point:
//! `sample_id,node_id,time,value`. Covariates are one row per sample:
//! `sample_id,<var1>,...,<varq>`.
//!
//! Nodes are ordered lexicographically by id and samples by first appearance.
//! Every matrix and graph in the crate indexes nodes by this order.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;

/// One discretely observed curve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        Series { times, values }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct FunctionalDataset {
    sample_ids: Vec<String>,
    node_ids: Vec<String>,
    /// `series[i][j]` is node `j` of sample `i`, in original time units.
    series: Vec<Vec<Series>>,
    /// Original time interval `[a, b]` mapped affinely onto `[0, 1]`.
    time_interval: (f64, f64),
}

impl FunctionalDataset {
    /// Builds a dataset whose times already live on the unit domain.
    pub fn from_series(
        sample_ids: Vec<String>,
        node_ids: Vec<String>,
        series: Vec<Vec<Series>>,
    ) -> Result<Self> {
        if series.len() != sample_ids.len() {
            return Err(Error::Dimension(format!(
                "{} sample ids for {} samples",
                sample_ids.len(),
                series.len()
            )));
        }
        if let Some(i) = series.iter().position(|row| row.len() != node_ids.len()) {
            return Err(Error::Dimension(format!(
                "sample {} has {} series, expected {}",
                sample_ids[i],
                series[i].len(),
                node_ids.len()
            )));
        }
        Ok(FunctionalDataset {
            sample_ids,
            node_ids,
            series,
            time_interval: (0.0, 1.0),
        })
    }

    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn p(&self) -> usize {
        self.node_ids.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn series(&self, sample: usize, node: usize) -> &Series {
        &self.series[sample][node]
    }

    pub fn time_interval(&self) -> (f64, f64) {
        self.time_interval
    }

    /// Times of one series mapped onto the unit domain.
    pub fn unit_times(&self, sample: usize, node: usize) -> Vec<f64> {
        let (a, b) = self.time_interval;
        let span = b - a;
        self.series[sample][node]
            .times
            .iter()
            .map(|&t| ((t - a) / span).clamp(0.0, 1.0))
            .collect()
    }

    /// Restricts the dataset to a subset of samples, in the given order.
    pub fn select_samples(&self, rows: &[usize]) -> Self {
        FunctionalDataset {
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            node_ids: self.node_ids.clone(),
            series: rows.iter().map(|&i| self.series[i].clone()).collect(),
            time_interval: self.time_interval,
        }
    }
}

/// Column names for the long-format function file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub sample: String,
    pub node: String,
    pub time: String,
    pub value: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            sample: "sample_id".into(),
            node: "node_id".into(),
            time: "time".into(),
            value: "value".into(),
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(name.to_string()))
}

fn parse_cell(record: &csv::StringRecord, idx: usize, row: usize, what: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    if raw.is_empty() {
        return Err(Error::Parse {
            row,
            message: format!("missing {what}"),
        });
    }
    raw.parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("non-numeric {what} `{raw}`"),
    })
}

pub fn load_functional_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<FunctionalDataset> {
    let file = std::fs::File::open(path)?;
    read_functional_csv(file, schema)
}

/// `(time, value, row)` of one CSV observation.
type CsvPoint = (f64, f64, usize);

/// Reads long-format rows and groups them by sample and node.
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn read_functional_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<FunctionalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cs = column_index(&headers, &schema.sample)?;
    let cn = column_index(&headers, &schema.node)?;
    let ct = column_index(&headers, &schema.time)?;
    let cv = column_index(&headers, &schema.value)?;

    let mut sample_order: Vec<String> = Vec::new();
    let mut sample_index: HashMap<String, usize> = HashMap::new();
    let mut node_set: BTreeSet<String> = BTreeSet::new();
    let mut points: HashMap<(usize, String), Vec<CsvPoint>> = HashMap::new();

    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let sample = record.get(cs).unwrap_or("").trim().to_string();
        let node = record.get(cn).unwrap_or("").trim().to_string();
        if sample.is_empty() || node.is_empty() {
            return Err(Error::Parse {
                row,
                message: "missing sample or node id".into(),
            });
        }
        let time = parse_cell(&record, ct, row, "time")?;
        let value = parse_cell(&record, cv, row, "value")?;
        let si = *sample_index.entry(sample.clone()).or_insert_with(|| {
            sample_order.push(sample.clone());
            sample_order.len() - 1
        });
        node_set.insert(node.clone());
        points.entry((si, node)).or_default().push((time, value, row));
    }

    let node_ids: Vec<String> = node_set.into_iter().collect();
    let mut series = vec![vec![Series::default(); node_ids.len()]; sample_order.len()];
    let mut min_gap = f64::INFINITY;
    let mut t_lo = f64::INFINITY;
    let mut t_hi = f64::NEG_INFINITY;
    for (j, node) in node_ids.iter().enumerate() {
        for (i, row) in series.iter_mut().enumerate() {
            let Some(mut pts) = points.remove(&(i, node.clone())) else {
                continue;
            };
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pts.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Data(format!(
                        "duplicate observation (sample {}, node {}, time {}) at rows {} and {}",
                        sample_order[i], node, w[0].0, w[0].2, w[1].2
                    )));
                }
                min_gap = min_gap.min(w[1].0 - w[0].0);
            }
            t_lo = t_lo.min(pts[0].0);
            t_hi = t_hi.max(pts[pts.len() - 1].0);
            row[j] = Series {
                times: pts.iter().map(|p| p.0).collect(),
                values: pts.iter().map(|p| p.1).collect(),
            };
        }
    }

    // The first observation lands one grid step above zero, matching the
    // (0, 1] convention for equally spaced recordings.
    let time_interval = if t_lo.is_finite() && t_hi.is_finite() {
        let gap = if min_gap.is_finite() && min_gap > 0.0 { min_gap } else { 1.0 };
        (t_lo - gap, t_hi)
    } else {
        (0.0, 1.0)
    };

    Ok(FunctionalDataset {
        sample_ids: sample_order,
        node_ids,
        series,
        time_interval,
    })
}

pub fn write_functional_csv<W: Write>(ds: &FunctionalDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["sample_id", "node_id", "time", "value"])?;
    for (i, sample) in ds.sample_ids.iter().enumerate() {
        for (j, node) in ds.node_ids.iter().enumerate() {
            let s = &ds.series[i][j];
            for (t, v) in s.times.iter().zip(&s.values) {
                wtr.write_record([sample.as_str(), node.as_str(), &fmt_f64(*t), &fmt_f64(*v)])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    fn error(&mut self, location: String, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            location,
            message: message.into(),
        });
    }
}

/// Lists every violated dataset invariant. Never fails; the report is the result.
pub fn validate(ds: &FunctionalDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    if ds.n() < 2 {
        report.error("dataset".into(), format!("need at least 2 samples, found {}", ds.n()));
    }
    if ds.p() < 2 {
        report.error("dataset".into(), format!("need at least 2 nodes, found {}", ds.p()));
    }
    for (i, row) in ds.series.iter().enumerate() {
        let sid = &ds.sample_ids[i];
        if row.len() != ds.p() {
            report.error(
                format!("sample {sid}"),
                format!("has {} node series, expected {}", row.len(), ds.p()),
            );
        }
        for (j, s) in row.iter().enumerate() {
            let nid = ds.node_ids.get(j).map(String::as_str).unwrap_or("?");
            if s.is_empty() {
                report.error(format!("sample {sid}, node {nid}"), "missing node series");
                continue;
            }
            if s.times.len() != s.values.len() {
                report.error(format!("sample {sid}, node {nid}"), "time/value length mismatch");
            }
            for (l, (&t, &v)) in s.times.iter().zip(&s.values).enumerate() {
                if !t.is_finite() {
                    report.error(format!("sample {sid}, node {nid}, index {l}"), "non-finite time");
                }
                if !v.is_finite() {
                    report.error(format!("sample {sid}, node {nid}, index {l}"), "non-finite value");
                }
            }
            if let Some(l) = s.times.windows(2).position(|w| !(w[1] > w[0])) {
                report.error(
                    format!("sample {sid}, node {nid}, index {}", l + 1),
                    "times not strictly increasing",
                );
            }
        }
    }
    report
}

/// How one raw covariate column is encoded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariableKind {
    Continuous,
    /// `levels: None` infers the level set from the data.
    Categorical {
        reference: String,
        levels: Option<Vec<String>>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnMeta {
    Intercept,
    Continuous { variable: String },
    Dummy {
        variable: String,
        level: String,
        reference: String,
    },
}

/// Covariate table as read from disk: one row of string cells per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCovariates {
    pub sample_ids: Vec<String>,
    pub names: Vec<String>,
    /// `cells[i][v]`: sample `i`, variable `v`.
    pub cells: Vec<Vec<String>>,
}

impl RawCovariates {
    /// Reorders rows to follow `sample_ids`; every sample must be present.
    pub fn aligned(&self, sample_ids: &[String]) -> Result<RawCovariates> {
        let index: HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut cells = Vec::with_capacity(sample_ids.len());
        for s in sample_ids {
            let &i = index
                .get(s.as_str())
                .ok_or_else(|| Error::Data(format!("no covariate row for sample {s}")))?;
            cells.push(self.cells[i].clone());
        }
        Ok(RawCovariates {
            sample_ids: sample_ids.to_vec(),
            names: self.names.clone(),
            cells,
        })
    }

    /// Default specs: numeric columns are continuous, others categorical with
    /// the lexicographically smallest level as reference.
    pub fn infer_specs(&self) -> Vec<VariableSpec> {
        self.names
            .iter()
            .enumerate()
            .map(|(v, name)| {
                let numeric = self.cells.iter().all(|row| row[v].trim().parse::<f64>().is_ok());
                let kind = if numeric {
                    VariableKind::Continuous
                } else {
                    let levels: BTreeSet<&str> = self.cells.iter().map(|r| r[v].trim()).collect();
                    VariableKind::Categorical {
                        reference: levels.iter().next().map(|s| s.to_string()).unwrap_or_default(),
                        levels: None,
                    }
                };
                VariableSpec {
                    name: name.clone(),
                    kind,
                }
            })
            .collect()
    }
}

pub fn load_covariates_csv(path: impl AsRef<Path>) -> Result<RawCovariates> {
    read_covariates_csv(std::fs::File::open(path)?)
}

pub fn read_covariates_csv<R: Read>(reader: R) -> Result<RawCovariates> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cs = column_index(&headers, "sample_id")?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != cs)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let mut sample_ids = Vec::new();
    let mut cells = Vec::new();
    let mut seen = BTreeSet::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let sid = record.get(cs).unwrap_or("").trim().to_string();
        if !seen.insert(sid.clone()) {
            return Err(Error::Data(format!("duplicate covariate row for sample {sid} (row {row})")));
        }
        let mut vals = Vec::with_capacity(names.len());
        for (i, cell) in record.iter().enumerate() {
            if i == cs {
                continue;
            }
            if cell.trim().is_empty() {
                return Err(Error::Parse {
                    row,
                    message: format!("missing value for `{}`", headers.get(i).unwrap_or("?")),
                });
            }
            vals.push(cell.trim().to_string());
        }
        sample_ids.push(sid);
        cells.push(vals);
    }
    Ok(RawCovariates {
        sample_ids,
        names,
        cells,
    })
}

pub fn write_covariates_csv<W: Write>(raw: &RawCovariates, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_id".to_string()];
    header.extend(raw.names.iter().cloned());
    wtr.write_record(&header)?;
    for (sid, row) in raw.sample_ids.iter().zip(&raw.cells) {
        let mut rec = vec![sid.clone()];
        rec.extend(row.iter().cloned());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Design matrix `[1, x_1, ..., x_q]`, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateDesign {
    matrix: DMatrix<f64>,
    columns: Vec<ColumnMeta>,
}

impl CovariateDesign {
    pub fn intercept_only(n: usize) -> Self {
        CovariateDesign {
            matrix: DMatrix::from_element(n, 1, 1.0),
            columns: vec![ColumnMeta::Intercept],
        }
    }

    /// Wraps an explicit matrix; column 0 must be identically one.
    pub fn from_matrix(matrix: DMatrix<f64>, columns: Vec<ColumnMeta>) -> Result<Self> {
        if matrix.ncols() != columns.len() || matrix.ncols() == 0 {
            return Err(Error::Dimension("column metadata does not match matrix".into()));
        }
        if matrix.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Encoding("first design column must be identically 1".into()));
        }
        Ok(CovariateDesign { matrix, columns })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of covariates, excluding the intercept.
    pub fn q(&self) -> usize {
        self.matrix.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn value(&self, sample: usize, column: usize) -> f64 {
        self.matrix[(sample, column)]
    }

    /// True when column `c >= 1` only takes the values 0 and 1 and encodes a
    /// two-level factor (or a plain 0/1 indicator).
    pub fn is_binary(&self, c: usize) -> bool {
        if c == 0 || c > self.q() {
            return false;
        }
        let zero_one = self.matrix.column(c).iter().all(|&v| v == 0.0 || v == 1.0);
        let single_dummy = match &self.columns[c] {
            ColumnMeta::Dummy { variable, .. } => {
                self.columns
                    .iter()
                    .filter(|m| matches!(m, ColumnMeta::Dummy { variable: v, .. } if v == variable))
                    .count()
                    == 1
            }
            ColumnMeta::Continuous { .. } => true,
            ColumnMeta::Intercept => false,
        };
        zero_one && single_dummy
    }

    /// Indices of dummy (0/1 indicator) columns, used for fold stratification.
    pub fn dummy_columns(&self) -> Vec<usize> {
        (1..=self.q())
            .filter(|&c| matches!(self.columns[c], ColumnMeta::Dummy { .. }) || self.is_binary(c))
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        CovariateDesign {
            matrix: self.matrix.select_rows(rows),
            columns: self.columns.clone(),
        }
    }
}

/// Encodes raw covariates into a design matrix with a leading intercept.
///
/// A categorical variable with `l` levels becomes `l - 1` dummy columns (levels
/// in lexicographic order, reference omitted); the reference level maps to all
/// zeros. Continuous variables pass through unchanged.
pub fn encode_covariates(raw: &RawCovariates, specs: &[VariableSpec]) -> Result<CovariateDesign> {
    let n = raw.cells.len();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut meta = vec![ColumnMeta::Intercept];
    for spec in specs {
        let v = raw
            .names
            .iter()
            .position(|name| name == &spec.name)
            .ok_or_else(|| Error::Encoding(format!("unknown covariate `{}`", spec.name)))?;
        match &spec.kind {
            VariableKind::Continuous => {
                let mut col = Vec::with_capacity(n);
                for (i, row) in raw.cells.iter().enumerate() {
                    let x: f64 = row[v].trim().parse().map_err(|_| Error::Parse {
                        row: i + 1,
                        message: format!("non-numeric value `{}` for `{}`", row[v], spec.name),
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Encoding(format!("non-finite value for `{}`", spec.name)));
                    }
                    col.push(x);
                }
                if n > 0 && col.iter().all(|&x| x == col[0]) {
                    return Err(Error::Encoding(format!("covariate `{}` is constant", spec.name)));
                }
                cols.push(col);
                meta.push(ColumnMeta::Continuous {
                    variable: spec.name.clone(),
                });
            }
            VariableKind::Categorical { reference, levels } => {
                let observed: BTreeSet<String> =
                    raw.cells.iter().map(|row| row[v].trim().to_string()).collect();
                let levels: BTreeSet<String> = match levels {
                    Some(ls) => {
                        let known: BTreeSet<String> = ls.iter().cloned().collect();
                        if let Some(bad) = observed.iter().find(|l| !known.contains(*l)) {
                            return Err(Error::Encoding(format!(
                                "unseen level `{bad}` for `{}`",
                                spec.name
                            )));
                        }
                        known
                    }
                    None => observed,
                };
                if !levels.contains(reference) {
                    return Err(Error::Encoding(format!(
                        "reference level `{reference}` not among levels of `{}`",
                        spec.name
                    )));
                }
                if levels.len() < 2 {
                    return Err(Error::Encoding(format!(
                        "degenerate covariate `{}`: only one level",
                        spec.name
                    )));
                }
                for level in levels.iter().filter(|l| *l != reference) {
                    cols.push(
                        raw.cells
                            .iter()
                            .map(|row| if row[v].trim() == level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    meta.push(ColumnMeta::Dummy {
                        variable: spec.name.clone(),
                        level: level.clone(),
                        reference: reference.clone(),
                    });
                }
            }
        }
    }
    let q1 = cols.len();
    let matrix = DMatrix::from_fn(n, q1, |i, c| cols[c][i]);
    Ok(CovariateDesign {
        matrix,
        columns: meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(s: &str) -> Result<FunctionalDataset> {
        read_functional_csv(s.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn groups_single_series() {
        let ds = read("sample_id,node_id,time,value\ns1,a,0.01,1\ns1,a,0.02,2\ns1,a,0.03,3\n").unwrap();
        assert_eq!((ds.n(), ds.p()), (1, 1));
        assert_eq!(ds.series(0, 0).len(), 3);
        assert_eq!(ds.series(0, 0).values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sorts_times() {
        let ds = read("sample_id,node_id,time,value\ns1,a,0.3,3\ns1,a,0.1,1\ns1,a,0.2,2\n").unwrap();
        assert_eq!(ds.series(0, 0).times, vec![0.1, 0.2, 0.3]);
        assert_eq!(ds.series(0, 0).values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn nodes_lexicographic() {
        let ds = read("sample_id,node_id,time,value\ns1,z,1,1\ns1,b,1,1\ns1,m,1,1\n").unwrap();
        assert_eq!(ds.node_ids(), &["b", "m", "z"]);
    }

    #[test]
    fn unit_times_for_equally_spaced_recording() {
        let mut csv = String::from("sample_id,node_id,time,value\n");
        for k in 0..4 {
            csv.push_str(&format!("s1,a,{},0\n", k as f64 * 0.5));
        }
        let ds = read(&csv).unwrap();
        let t = ds.unit_times(0, 0);
        let want = [0.25, 0.5, 0.75, 1.0];
        for (a, b) in t.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = read("sample_id,node_id,value\ns1,a,1\n").unwrap_err();
        assert!(matches!(err, Error::Schema(ref c) if c == "time"));
    }

    #[test]
    fn non_numeric_reports_row() {
        let err = read("sample_id,node_id,time,value\ns1,a,0.1,1\ns1,a,0.2,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_is_data_error() {
        let err = read("sample_id,node_id,time,value\ns1,a,0.1,1\ns1,a,0.1,2\n").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    fn two_by_two() -> FunctionalDataset {
        let s = Series::new(vec![0.5, 1.0], vec![1.0, 2.0]);
        FunctionalDataset::from_series(
            vec!["s1".into(), "s2".into()],
            vec!["a".into(), "b".into()],
            vec![vec![s.clone(), s.clone()], vec![s.clone(), s]],
        )
        .unwrap()
    }

    #[test]
    fn validate_clean_dataset() {
        assert!(validate(&two_by_two()).is_empty());
    }

    #[test]
    fn validate_flags_nan() {
        let mut ds = two_by_two();
        ds.series[1][0].values[1] = f64::NAN;
        let report = validate(&ds);
        assert_eq!(report.issues.len(), 1);
        assert!(report.issues[0].location.contains("sample s2, node a, index 1"));
        assert!(report.has_errors());
    }

    #[test]
    fn validate_flags_missing_node() {
        let csv = "sample_id,node_id,time,value\ns1,a,1,1\ns1,b,1,1\ns1,c,1,1\ns2,a,1,1\ns2,b,1,1\n";
        let report = validate(&read(csv).unwrap());
        assert_eq!(report.issues.len(), 1);
        assert!(report.issues[0].message.contains("missing node"));
        assert!(report.issues[0].location.contains("node c"));
    }

    fn raw(names: &[&str], rows: &[&[&str]]) -> RawCovariates {
        RawCovariates {
            sample_ids: (0..rows.len()).map(|i| format!("s{i}")).collect(),
            names: names.iter().map(|s| s.to_string()).collect(),
            cells: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    fn categorical(name: &str, reference: &str) -> VariableSpec {
        VariableSpec {
            name: name.into(),
            kind: VariableKind::Categorical {
                reference: reference.into(),
                levels: None,
            },
        }
    }

    #[test]
    fn binary_group_encoding() {
        let r = raw(&["group"], &[&["control"], &["AUD"], &["control"], &["AUD"]]);
        let x = encode_covariates(&r, &[categorical("group", "control")]).unwrap();
        assert_eq!(x.q(), 1);
        assert_eq!(x.matrix().column(0).as_slice(), &[1.0; 4]);
        assert_eq!(x.matrix().column(1).as_slice(), &[0.0, 1.0, 0.0, 1.0]);
        assert!(x.is_binary(1));
    }

    #[test]
    fn three_levels_two_dummies() {
        let r = raw(&["f"], &[&["A"], &["B"], &["C"], &["A"]]);
        let x = encode_covariates(&r, &[categorical("f", "A")]).unwrap();
        assert_eq!(x.q(), 2);
        assert!(!x.is_binary(1));
        assert_eq!(x.matrix().row(0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn continuous_passthrough() {
        let r = raw(&["age"], &[&["31.5"], &["40"], &["22"]]);
        let spec = VariableSpec {
            name: "age".into(),
            kind: VariableKind::Continuous,
        };
        let x = encode_covariates(&r, &[spec]).unwrap();
        assert_eq!(x.matrix().column(1).as_slice(), &[31.5, 40.0, 22.0]);
    }

    #[test]
    fn unseen_and_degenerate_levels() {
        let r = raw(&["g"], &[&["a"], &["b"], &["c"]]);
        let spec = VariableSpec {
            name: "g".into(),
            kind: VariableKind::Categorical {
                reference: "a".into(),
                levels: Some(vec!["a".into(), "b".into()]),
            },
        };
        assert!(matches!(encode_covariates(&r, &[spec]), Err(Error::Encoding(_))));
        let r = raw(&["g"], &[&["a"], &["a"]]);
        assert!(matches!(
            encode_covariates(&r, &[categorical("g", "a")]),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn covariate_csv_alignment() {
        let r = read_covariates_csv("sample_id,group\nb,y\na,x\n".as_bytes()).unwrap();
        let aligned = r.aligned(&["a".to_string(), "b".to_string()]).unwrap();
        assert_eq!(aligned.cells, vec![vec!["x".to_string()], vec!["y".to_string()]]);
        assert!(r.aligned(&["c".to_string()]).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 6)) {
            let mut csv = String::from("sample_id,node_id,time,value\n");
            for (k, v) in values.iter().enumerate() {
                let node = if k % 2 == 0 { "a" } else { "b" };
                let sample = if k < 3 { "s1" } else { "s2" };
                csv.push_str(&format!("{sample},{node},{},{}\n", 0.1 * (k + 1) as f64, fmt_f64(*v)));
            }
            let ds = read(&csv).unwrap();
            let mut out = Vec::new();
            write_functional_csv(&ds, &mut out).unwrap();
            let back = read(std::str::from_utf8(&out).unwrap()).unwrap();
            for i in 0..ds.n() {
                for j in 0..ds.p() {
                    prop_assert_eq!(ds.series(i, j), back.series(i, j));
                }
            }
        }

        #[test]
        fn dummy_block_sums_to_zero_or_one(levels in proptest::collection::vec(0usize..4, 4..20)) {
            let names = ["A", "B", "C", "D"];
            let mut rows: Vec<Vec<String>> = levels.iter().map(|&l| vec![names[l].to_string()]).collect();
            // make sure at least two levels are present
            rows[0] = vec!["A".into()];
            rows[1] = vec!["B".into()];
            let r = RawCovariates {
                sample_ids: (0..rows.len()).map(|i| i.to_string()).collect(),
                names: vec!["f".into()],
                cells: rows,
            };
            let x = encode_covariates(&r, &[categorical("f", "A")]).unwrap();
            let again = encode_covariates(&r, &[categorical("f", "A")]).unwrap();
            prop_assert_eq!(&x, &again);
            for i in 0..x.n() {
                let s: f64 = (1..=x.q()).map(|c| x.value(i, c)).sum();
                prop_assert!(s == 0.0 || s == 1.0);
            }
        }
    }
}
