//! Dataset ingestion, leave-one-out folds and report serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifier::TrainingSet;
use crate::encoding::{FeatureVector, Preprocessing, Preprocessor};
use crate::error::{Error, Result};
use crate::ClassId;

/// The 150-sample Iris measurements shipped with the crate.
pub const BUNDLED_IRIS: &str = include_str!("../data/iris.csv");

pub const IRIS_FEATURES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub features: [f64; IRIS_FEATURES],
    pub species: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub rows: Vec<RawRow>,
    pub source: PathBuf,
}

pub fn load_iris(path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_iris(file, path)
}

pub fn bundled_iris() -> RawDataset {
    parse_iris(BUNDLED_IRIS.as_bytes(), "<bundled iris.csv>").expect("bundled dataset parses")
}

/// Parses `f1,f2,f3,f4,label` rows. A first row whose feature fields are not
/// numeric is treated as a header.
pub fn parse_iris(reader: impl Read, source: impl Into<PathBuf>) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(n + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(n + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != IRIS_FEATURES + 1 {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    IRIS_FEATURES + 1,
                    record.len()
                ),
            });
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().take(IRIS_FEATURES).map(f64::from_str).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if n == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: format!("non-numeric feature: {e}"),
                })
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite feature".into(),
            });
        }
        let species = record[IRIS_FEATURES].to_string();
        if species.is_empty() {
            return Err(Error::Parse {
                line,
                message: "missing label".into(),
            });
        }
        let mut features = [0.0; IRIS_FEATURES];
        features.copy_from_slice(&values);
        rows.push(RawRow {
            features,
            species,
            line,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(RawDataset {
        rows,
        source: source.into(),
    })
}

impl RawDataset {
    /// Species in first-appearance order.
    pub fn species(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.species) {
                seen.push(r.species.clone());
            }
        }
        seen
    }

    /// Labels classes A, B, C, ... by first appearance.
    pub fn into_dataset(self) -> Result<Dataset> {
        let order = self.species();
        self.into_dataset_with_order(&order)
    }

    /// Labels classes A, B, C, ... following `order`.
    pub fn into_dataset_with_order(self, order: &[String]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(self.rows.len());
        let mut labels = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let label = order.iter().position(|s| *s == r.species).ok_or_else(|| {
                Error::Parse {
                    line: r.line,
                    message: format!("species `{}` missing from class order", r.species),
                }
            })?;
            features.push(FeatureVector::new(r.features.to_vec())?);
            labels.push(label);
        }
        let class_names = (0..order.len()).map(class_letter).collect();
        Dataset::new(features, labels, class_names)
    }
}

pub fn class_letter(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        format!("C{i}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<FeatureVector>,
    labels: Vec<ClassId>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<FeatureVector>,
        labels: Vec<ClassId>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside {} classes",
                class_names.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
        })
    }

    pub fn iris() -> Dataset {
        bundled_iris().into_dataset().expect("bundled dataset is valid")
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_names.iter().position(|n| n == name)
    }

    pub(crate) fn require_per_class(&self, needed: usize) -> Result<()> {
        for (c, &count) in self.class_counts().iter().enumerate() {
            if count < needed {
                return Err(Error::TooFewSamples {
                    label: self.class_names[c].clone(),
                    count,
                    needed,
                });
            }
        }
        Ok(())
    }

    /// Maps every vector to unit norm with statistics fitted on this dataset.
    pub fn preprocess(&self, mode: Preprocessing) -> Result<Dataset> {
        Ok(Dataset {
            features: crate::encoding::preprocess(&self.features, mode)?,
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Keeps the listed classes, relabelled `0..classes.len()` in the given order.
    pub fn select_classes(&self, classes: &[ClassId]) -> Result<Dataset> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (x, &y) in self.features.iter().zip(&self.labels) {
            if let Some(k) = classes.iter().position(|&c| c == y) {
                features.push(x.clone());
                labels.push(k);
            }
        }
        let names = classes
            .iter()
            .map(|&c| {
                self.class_names.get(c).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("class index {c} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(features, labels, names)
    }

    /// Training set over every sample. Samples must already be unit vectors.
    pub fn training_set(&self) -> Result<TrainingSet> {
        TrainingSet::new(self.features.clone(), self.labels.clone(), self.num_classes())
    }
}

/// Where preprocessing statistics come from during cross-validation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StatsScope {
    #[default]
    FullDataset,
    PerFold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fold {
    pub held_out: usize,
    pub test: FeatureVector,
    pub test_label: ClassId,
    pub train: TrainingSet,
    /// Dataset index of each training sample.
    pub train_indices: Vec<usize>,
}

pub fn loocv_folds(dataset: &Dataset, mode: Preprocessing, scope: StatsScope) -> Result<Vec<Fold>> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::TooFewSamples {
            label: "dataset".into(),
            count: n,
            needed: 2,
        });
    }
    let full = match scope {
        StatsScope::FullDataset => Some(dataset.preprocess(mode)?),
        StatsScope::PerFold => None,
    };
    (0..n)
        .map(|held_out| {
            let train_indices: Vec<usize> = (0..n).filter(|&i| i != held_out).collect();
            let (test, samples) = match &full {
                Some(p) => (
                    p.features[held_out].clone(),
                    train_indices.iter().map(|&i| p.features[i].clone()).collect(),
                ),
                None => {
                    let raw: Vec<FeatureVector> = train_indices
                        .iter()
                        .map(|&i| dataset.features[i].clone())
                        .collect();
                    let pre = Preprocessor::fit(&raw, mode)?;
                    let test = pre.transform(&dataset.features[held_out])?;
                    let samples = raw
                        .iter()
                        .map(|x| pre.transform(x))
                        .collect::<Result<Vec<_>>>()?;
                    (test, samples)
                }
            };
            let labels = train_indices.iter().map(|&i| dataset.labels[i]).collect();
            Ok(Fold {
                held_out,
                test,
                test_label: dataset.labels[held_out],
                train: TrainingSet::new(samples, labels, dataset.num_classes())?,
                train_indices,
            })
        })
        .collect()
}

/// A named table of real cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new(name: impl Into<String>, row_header: impl Into<String>, columns: Vec<String>) -> Self {
        Table {
            name: name.into(),
            row_header: row_header.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, label: impl Into<String>, cells: Vec<f64>) -> &mut Self {
        self.rows.push((label.into(), cells));
        self
    }

    pub fn cell(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows
            .iter()
            .find(|(r, _)| r == row)
            .and_then(|(_, cells)| cells.get(c).copied())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub metadata: BTreeMap<String, String>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl std::fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Text => "text",
        })
    }
}

/// Formats with 6 significant digits, trimming trailing zeros.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new digit (9.999995 -> 10.00000)
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(|c: char| c == ',' || c.is_whitespace()) {
        return Err(Error::InvalidArgument(format!(
            "{what} `{s}` must be non-empty without commas or whitespace"
        )));
    }
    Ok(())
}

fn validate(report: &Report) -> Result<()> {
    for (k, v) in &report.metadata {
        check_token(k, "metadata key")?;
        if v.contains('\n') {
            return Err(Error::InvalidArgument(format!("metadata `{k}` spans lines")));
        }
    }
    for t in &report.tables {
        check_token(&t.name, "table name")?;
        check_token(&t.row_header, "row header")?;
        for c in &t.columns {
            check_token(c, "column label")?;
        }
        for (label, cells) in &t.rows {
            check_token(label, "row label")?;
            if cells.len() != t.columns.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.columns.len(),
                    found: cells.len(),
                });
            }
            if cells.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
    }
    Ok(())
}

/// Deterministic serialization; cells carry 6 significant digits.
///
/// CSV: `# key=value` metadata lines, then per table a `# table=<name>`
/// line, a header row and data rows, with tables separated by a blank line.
/// Text: a `[metadata]` block of `key = value` lines followed by
/// `[table <name>]` blocks of whitespace-separated columns.
pub fn write_report(report: &Report, format: ReportFormat) -> Result<Vec<u8>> {
    validate(report)?;
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            for (k, v) in &report.metadata {
                let _ = writeln!(out, "# {k}={v}");
            }
            for (n, t) in report.tables.iter().enumerate() {
                if n > 0 || !report.metadata.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "# table={}", t.name);
                let _ = writeln!(out, "{},{}", t.row_header, t.columns.join(","));
                for (label, cells) in &t.rows {
                    let cells: Vec<String> = cells.iter().map(|&c| format_sig6(c)).collect();
                    let _ = writeln!(out, "{label},{}", cells.join(","));
                }
            }
        }
        ReportFormat::Text => {
            out.push_str("[metadata]\n");
            for (k, v) in &report.metadata {
                let _ = writeln!(out, "{k} = {v}");
            }
            for t in &report.tables {
                let _ = writeln!(out, "\n[table {}]", t.name);
                let mut grid = vec![std::iter::once(t.row_header.clone())
                    .chain(t.columns.iter().cloned())
                    .collect::<Vec<_>>()];
                for (label, cells) in &t.rows {
                    grid.push(
                        std::iter::once(label.clone())
                            .chain(cells.iter().map(|&c| format_sig6(c)))
                            .collect(),
                    );
                }
                let widths: Vec<usize> = (0..grid[0].len())
                    .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
                    .collect();
                for row in grid {
                    let line: Vec<String> = row
                        .iter()
                        .zip(&widths)
                        .map(|(s, w)| format!("{s:<w$}"))
                        .collect();
                    let _ = writeln!(out, "{}", line.join("  ").trim_end());
                }
            }
        }
    }
    Ok(out.into_bytes())
}

fn parse_cell(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad cell `{s}`"),
    })
}

/// Reads what [`write_report`] produces.
pub fn read_report(bytes: &[u8], format: ReportFormat) -> Result<Report> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut report = Report::default();
    let mut current: Option<Table> = None;
    let mut in_metadata = false;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let l = raw.trim_end();
        match format {
            ReportFormat::Csv => {
                if l.is_empty() {
                    continue;
                }
                if let Some(rest) = l.strip_prefix("# ") {
                    let (k, v) = rest.split_once('=').ok_or_else(|| Error::Parse {
                        line,
                        message: "expected key=value".into(),
                    })?;
                    if k == "table" {
                        report.tables.extend(current.take());
                        current = Some(Table::new(v, "", Vec::new()));
                    } else {
                        report.metadata.insert(k.to_string(), v.to_string());
                    }
                    continue;
                }
                let t = current.as_mut().ok_or_else(|| Error::Parse {
                    line,
                    message: "row outside a table".into(),
                })?;
                let fields: Vec<&str> = l.split(',').collect();
                if t.row_header.is_empty() {
                    t.row_header = fields[0].to_string();
                    t.columns = fields[1..].iter().map(|s| s.to_string()).collect();
                } else {
                    let cells = fields[1..]
                        .iter()
                        .map(|s| parse_cell(s, line))
                        .collect::<Result<Vec<_>>>()?;
                    t.push_row(fields[0], cells);
                }
            }
            ReportFormat::Text => {
                if l.is_empty() {
                    continue;
                }
                if l == "[metadata]" {
                    in_metadata = true;
                    continue;
                }
                if let Some(name) = l.strip_prefix("[table ").and_then(|s| s.strip_suffix(']')) {
                    in_metadata = false;
                    report.tables.extend(current.take());
                    current = Some(Table::new(name, "", Vec::new()));
                    continue;
                }
                if in_metadata {
                    let (k, v) = l.split_once(" = ").ok_or_else(|| Error::Parse {
                        line,
                        message: "expected `key = value`".into(),
                    })?;
                    report.metadata.insert(k.to_string(), v.to_string());
                    continue;
                }
                let t = current.as_mut().ok_or_else(|| Error::Parse {
                    line,
                    message: "row outside a table".into(),
                })?;
                let fields: Vec<&str> = l.split_whitespace().collect();
                if t.row_header.is_empty() {
                    t.row_header = fields[0].to_string();
                    t.columns = fields[1..].iter().map(|s| s.to_string()).collect();
                } else {
                    let cells = fields[1..]
                        .iter()
                        .map(|s| parse_cell(s, line))
                        .collect::<Result<Vec<_>>>()?;
                    t.push_row(fields[0], cells);
                }
            }
        }
    }
    report.tables.extend(current);
    Ok(report)
}
