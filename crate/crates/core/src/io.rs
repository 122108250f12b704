//! CSV ingestion driven by a TOML schema, config loading and report output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::encoding::{Predictor, PredictorKind, PredictorSchema, RawColumn, RawTable};
use crate::vibim::{nested_model_table, VibimReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("column `{0}` not found in the CSV header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    UnparsableCell { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: level `{value}` is not declared")]
    UnknownLevel { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: response transform `{transform}` is undefined at {value}")]
    TransformDomain { row: usize, transform: &'static str, value: f64 },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("TOML error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn write_string(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    Log,
    Log1p,
}

impl Transform {
    fn name(self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Log => "log",
            Transform::Log1p => "log1p",
        }
    }

    fn apply(self, v: f64) -> Option<f64> {
        let out = match self {
            Transform::None => v,
            Transform::Log if v > 0.0 => v.ln(),
            Transform::Log1p if v > -1.0 => v.ln_1p(),
            _ => return None,
        };
        out.is_finite().then_some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NaPolicy {
    #[default]
    Error,
    DropRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub column: String,
    #[serde(default)]
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub column: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

/// The TOML dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchemaFile {
    pub response: ResponseSpec,
    pub predictors: Vec<PredictorSpec>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub na_policy: NaPolicy,
}

fn default_delimiter() -> char {
    ','
}

impl DataSchemaFile {
    pub fn from_toml_str(text: &str) -> Result<Self, IoError> {
        let file: DataSchemaFile = toml::from_str(text)?;
        file.predictor_schema()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_toml_str(&read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema files always serialize")
    }

    /// Checks the invariants and builds the predictor schema.
    pub fn predictor_schema(&self) -> Result<PredictorSchema, IoError> {
        if self.predictors.iter().any(|p| p.column == self.response.column) {
            return Err(IoError::Schema(format!("response `{}` is also listed as a predictor", self.response.column)));
        }
        if !self.delimiter.is_ascii() {
            return Err(IoError::Schema("delimiter must be a single ASCII character".into()));
        }
        let entries = self
            .predictors
            .iter()
            .map(|p| match (&p.kind, &p.levels) {
                (ColumnKind::Continuous, None) => Ok(Predictor::continuous(&p.column)),
                (ColumnKind::Continuous, Some(_)) => {
                    Err(IoError::Schema(format!("continuous column `{}` cannot declare levels", p.column)))
                }
                (ColumnKind::Categorical, Some(levels)) => Ok(Predictor::categorical(&p.column, levels.iter().cloned())),
                (ColumnKind::Categorical, None) => {
                    Err(IoError::Schema(format!("categorical column `{}` must declare its levels", p.column)))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        PredictorSchema::new(entries).map_err(|e| IoError::Schema(e.to_string()))
    }

    /// Schema file matching an in-memory predictor schema.
    pub fn from_predictor_schema(schema: &PredictorSchema, response: &str) -> Self {
        let predictors = schema
            .entries()
            .iter()
            .map(|p| match &p.kind {
                PredictorKind::Continuous => PredictorSpec { column: p.name.clone(), kind: ColumnKind::Continuous, levels: None },
                PredictorKind::Categorical { levels } => {
                    PredictorSpec { column: p.name.clone(), kind: ColumnKind::Categorical, levels: Some(levels.clone()) }
                }
            })
            .collect();
        Self {
            response: ResponseSpec { column: response.to_string(), transform: Transform::None },
            predictors,
            delimiter: ',',
            na_policy: NaPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub schema: PredictorSchema,
    pub raw: RawTable,
    pub response: Vec<f64>,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn is_na(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "NULL")
}

enum Cell {
    Num(f64),
    Level(String),
}

/// Reads a CSV with a header row. Rows with missing cells are dropped or
/// rejected per the NA policy; unknown levels and unparsable numbers are
/// always errors. Row numbers in errors are 1-based data rows.
pub fn load_dataset_from_reader<R: std::io::Read>(reader: R, file: &DataSchemaFile) -> Result<LoadedDataset, IoError> {
    let schema = file.predictor_schema()?;
    let mut csv = csv::ReaderBuilder::new().delimiter(file.delimiter as u8).has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let position = |name: &str| {
        header.iter().position(|h| h.trim() == name).ok_or_else(|| IoError::MissingColumn(name.to_string()))
    };
    let y_idx = position(&file.response.column)?;
    let x_idx: Vec<usize> = file.predictors.iter().map(|p| position(&p.column)).collect::<Result<_, _>>()?;

    let mut columns: Vec<RawColumn> = schema
        .entries()
        .iter()
        .map(|p| match p.kind {
            PredictorKind::Continuous => RawColumn::Continuous(Vec::new()),
            PredictorKind::Categorical { .. } => RawColumn::Categorical(Vec::new()),
        })
        .collect();
    let mut response = Vec::new();
    let (mut rows_read, mut rows_dropped) = (0, 0);

    for record in csv.records() {
        let record = record?;
        rows_read += 1;
        let row = rows_read;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let number = |idx: usize, column: &str| -> Result<Option<f64>, IoError> {
            let cell = get(idx);
            if is_na(cell) {
                return Ok(None);
            }
            let v: f64 = cell.trim().parse().map_err(|_| IoError::UnparsableCell {
                row,
                column: column.to_string(),
                value: cell.to_string(),
            })?;
            if v.is_finite() {
                Ok(Some(v))
            } else {
                Err(IoError::UnparsableCell { row, column: column.to_string(), value: cell.to_string() })
            }
        };

        let mut missing: Option<String> = None;
        let y = number(y_idx, &file.response.column)?;
        if y.is_none() {
            missing = Some(file.response.column.clone());
        }
        let mut cells = Vec::with_capacity(x_idx.len());
        for (p, &idx) in schema.entries().iter().zip(&x_idx) {
            let cell = match &p.kind {
                PredictorKind::Continuous => number(idx, &p.name)?.map(Cell::Num),
                PredictorKind::Categorical { levels } => {
                    let raw = get(idx);
                    if is_na(raw) {
                        None
                    } else {
                        let value = raw.trim();
                        if !levels.iter().any(|l| l == value) {
                            return Err(IoError::UnknownLevel { row, column: p.name.clone(), value: value.to_string() });
                        }
                        Some(Cell::Level(value.to_string()))
                    }
                }
            };
            if cell.is_none() && missing.is_none() {
                missing = Some(p.name.clone());
            }
            cells.push(cell);
        }
        if let Some(column) = missing {
            match file.na_policy {
                NaPolicy::Error => return Err(IoError::MissingValue { row, column }),
                NaPolicy::DropRow => {
                    rows_dropped += 1;
                    continue;
                }
            }
        }
        let y = y.expect("checked above");
        let t = file.response.transform;
        response.push(t.apply(y).ok_or(IoError::TransformDomain { row, transform: t.name(), value: y })?);
        for (col, cell) in columns.iter_mut().zip(cells) {
            match (col, cell.expect("checked above")) {
                (RawColumn::Continuous(v), Cell::Num(x)) => v.push(x),
                (RawColumn::Categorical(v), Cell::Level(s)) => v.push(s),
                _ => unreachable!("cell kind follows the schema"),
            }
        }
    }
    Ok(LoadedDataset { schema, raw: RawTable { columns }, response, rows_read, rows_dropped })
}

pub fn load_dataset(csv_path: &Path, file: &DataSchemaFile) -> Result<LoadedDataset, IoError> {
    let f = fs::File::open(csv_path).map_err(|source| IoError::File { path: csv_path.display().to_string(), source })?;
    load_dataset_from_reader(f, file)
}

/// CSV text for a dataset: response first, then predictors in schema order.
pub fn dataset_to_csv(schema: &PredictorSchema, raw: &RawTable, response: &[f64], response_name: &str) -> String {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec![response_name.to_string()];
        header.extend(schema.entries().iter().map(|p| p.name.clone()));
        w.write_record(&header).expect("writing to memory");
        for (row, y) in response.iter().enumerate() {
            let mut rec = vec![format_float(*y)];
            for col in &raw.columns {
                rec.push(match col {
                    RawColumn::Continuous(v) => format_float(v[row]),
                    RawColumn::Categorical(v) => v[row].clone(),
                });
            }
            w.write_record(&rec).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
    }
    String::from_utf8(out).expect("CSV output is UTF-8")
}

pub fn write_dataset(
    csv_path: &Path,
    schema: &PredictorSchema,
    raw: &RawTable,
    response: &[f64],
    response_name: &str,
) -> Result<(), IoError> {
    write_string(csv_path, &dataset_to_csv(schema, raw, response, response_name))
}

/// Parses a TOML file into any config type.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(toml::from_str(&read_to_string(path)?)?)
}

/// Shortest decimal that reads back to exactly `v` (at most 17 significant
/// digits), laid out like `%.17g`: plain notation for exponents in
/// `[-5, 17)`, otherwise `d.ddde+XX`. Non-finite values render as `NaN`/`inf`/`-inf`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:e}", v.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if v < 0.0 { "-" } else { "" };
    if (-5..17).contains(&exp) {
        let body = if exp < 0 {
            format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
        } else {
            let point = exp as usize + 1;
            if digits.len() <= point {
                format!("{digits}{}", "0".repeat(point - digits.len()))
            } else {
                format!("{}.{}", &digits[..point], &digits[point..])
            }
        };
        format!("{sign}{body}")
    } else {
        format!("{sign}{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// JSON with sorted keys, two-space indentation and floats from
/// [`format_float`]. Non-finite floats become `null`.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    emit(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn emit(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64 number");
                if f.is_finite() {
                    let s = format_float(f);
                    // keep floats recognizable as floats
                    if s.contains(['.', 'e']) {
                        out.push_str(&s);
                    } else {
                        let _ = write!(out, "{s}.0");
                    }
                } else {
                    out.push_str("null");
                }
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(depth + 1, out);
                emit(item, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(depth + 1, out);
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                emit(&map[*k], depth + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Tsv,
}

/// Tab-separated text with a header row. Cells must not contain tabs or newlines.
pub fn tsv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Columns of the nested-model TSV.
pub const NESTED_TSV_HEADER: [&str; 10] =
    ["size", "added", "bic", "aic", "bic_p", "aic_p", "is_lower", "is_upper", "in_window", "groups"];

pub fn nested_models_tsv(report: &VibimReport) -> String {
    let rows: Vec<Vec<String>> = nested_model_table(report)
        .into_iter()
        .map(|r| {
            vec![
                r.size.to_string(),
                r.added,
                format_float(r.bic),
                format_float(r.aic),
                format_float(r.bic_p),
                format_float(r.aic_p),
                r.is_lower.to_string(),
                r.is_upper.to_string(),
                r.in_window.to_string(),
                r.labels.join(","),
            ]
        })
        .collect();
    tsv(&NESTED_TSV_HEADER, &rows)
}

pub fn render_report(report: &VibimReport, format: ReportFormat) -> Result<String, IoError> {
    match format {
        ReportFormat::Json => to_canonical_json(report),
        ReportFormat::Tsv => Ok(nested_models_tsv(report)),
    }
}

/// JSON: the whole report. TSV: one row per nested model.
pub fn write_report(report: &VibimReport, path: &Path, format: ReportFormat) -> Result<(), IoError> {
    write_string(path, &render_report(report, format)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    write_string(path, text)
}
