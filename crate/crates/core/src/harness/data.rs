//! Dataset ingestion from CSV (header row) or JSON Lines.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    /// Guesses from the file extension: `.csv`, `.jsonl` or `.ndjson`.
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "ndjson" => Ok(Self::Jsonl),
            _ => Err(HarnessError::UnknownFormat(format!(
                "cannot infer the format of {} from its extension; pass csv or jsonl",
                path.display()
            ))),
        }
    }
}

impl FromStr for DataFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "ndjson" => Ok(Self::Jsonl),
            other => Err(HarnessError::UnknownFormat(format!("unknown format {other:?}; expected csv or jsonl"))),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Self::Train),
            "validation" | "val" | "dev" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstsRecord {
    pub text1: String,
    pub text2: String,
    pub condition: String,
    /// Gold similarity in `[1, 5]`.
    pub gold: f64,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub text: String,
    pub label: String,
    pub split: Option<Split>,
}

pub const GOLD_RANGE: (f64, f64) = (1.0, 5.0);

/// Cell values of one data row, in the order the columns were requested.
struct Row {
    line: usize,
    cells: Vec<Option<String>>,
}

fn parse_error(path: &Path, row: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_rows(path: &Path, format: DataFormat, columns: &[&str], required: usize) -> Result<Vec<Row>, HarnessError> {
    match format {
        DataFormat::Csv => read_csv(path, columns, required),
        DataFormat::Jsonl => read_jsonl(path, columns, required),
    }
}

fn read_csv(path: &Path, columns: &[&str], required: usize) -> Result<Vec<Row>, HarnessError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let positions: Vec<Option<usize>> = columns
        .iter()
        .map(|c| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(c)))
        .collect();
    if let Some(missing) = columns[..required].iter().zip(&positions).find(|(_, p)| p.is_none()) {
        return Err(HarnessError::MissingColumn {
            path: path.to_path_buf(),
            column: (*missing.0).to_owned(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cells = positions
            .iter()
            .map(|p| p.and_then(|i| record.get(i)).map(str::to_owned))
            .collect();
        rows.push(Row { line, cells });
    }
    Ok(rows)
}

fn read_jsonl(path: &Path, columns: &[&str], required: usize) -> Result<Vec<Row>, HarnessError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_error(path, line_no, format!("invalid JSON: {e}")))?;
        let object = value
            .as_object()
            .ok_or_else(|| parse_error(path, line_no, "expected a JSON object"))?;
        let mut cells = Vec::with_capacity(columns.len());
        for (c, column) in columns.iter().enumerate() {
            let cell = match object.get(*column) {
                None | Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) => Some(s.clone()),
                Some(serde_json::Value::Number(n)) => Some(n.to_string()),
                Some(other) => {
                    return Err(parse_error(
                        path,
                        line_no,
                        format!("field {column:?} must be a string or number, got {other}"),
                    ));
                }
            };
            if cell.is_none() && c < required && !object.contains_key(*column) {
                return Err(HarnessError::MissingColumn {
                    path: path.to_path_buf(),
                    column: (*column).to_owned(),
                });
            }
            cells.push(cell);
        }
        rows.push(Row { line: line_no, cells });
    }
    Ok(rows)
}

fn text_cell(path: &Path, row: &Row, index: usize, name: &str) -> Result<String, HarnessError> {
    let value = row.cells[index]
        .clone()
        .ok_or_else(|| parse_error(path, row.line, format!("{name} is null")))?;
    if value.trim().is_empty() {
        return Err(parse_error(path, row.line, format!("{name} is empty")));
    }
    if value.contains(['{', '}']) {
        return Err(parse_error(path, row.line, format!("{name} contains a brace, which prompts cannot carry")));
    }
    Ok(value)
}

fn split_cell(path: &Path, row: &Row, index: usize) -> Result<Option<Split>, HarnessError> {
    match &row.cells[index] {
        Some(s) if !s.trim().is_empty() => s.parse().map(Some).map_err(|e: String| parse_error(path, row.line, e)),
        _ => Ok(None),
    }
}

/// Reads C-STS quadruples from columns `text1,text2,condition,score` and an
/// optional `split`. Row numbers in errors are file line numbers.
pub fn load_csts(path: impl AsRef<Path>, format: DataFormat) -> Result<Vec<CstsRecord>, HarnessError> {
    let path = path.as_ref();
    let rows = read_rows(path, format, &["text1", "text2", "condition", "score", "split"], 4)?;
    rows.iter()
        .map(|row| {
            let score = row.cells[3]
                .as_deref()
                .ok_or_else(|| parse_error(path, row.line, "score is null"))?;
            let gold: f64 = score
                .trim()
                .parse()
                .map_err(|_| parse_error(path, row.line, format!("score {score:?} is not a number")))?;
            if !(GOLD_RANGE.0..=GOLD_RANGE.1).contains(&gold) {
                return Err(parse_error(path, row.line, format!("score {gold} lies outside [1, 5]")));
            }
            Ok(CstsRecord {
                text1: text_cell(path, row, 0, "text1")?,
                text2: text_cell(path, row, 1, "text2")?,
                condition: text_cell(path, row, 2, "condition")?,
                gold,
                split: split_cell(path, row, 4)?,
            })
        })
        .collect()
}

/// Reads clustering items from columns `text,label` and an optional `split`.
pub fn load_cluster_corpus(path: impl AsRef<Path>, format: DataFormat) -> Result<Vec<ClusterRecord>, HarnessError> {
    let path = path.as_ref();
    let rows = read_rows(path, format, &["text", "label", "split"], 2)?;
    rows.iter()
        .map(|row| {
            let label = row.cells[1]
                .clone()
                .filter(|l| !l.trim().is_empty())
                .ok_or_else(|| parse_error(path, row.line, "label is empty"))?;
            Ok(ClusterRecord {
                text: text_cell(path, row, 0, "text")?,
                label,
                split: split_cell(path, row, 2)?,
            })
        })
        .collect()
}

/// Distinct labels in sorted order.
pub fn label_set(records: &[ClusterRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.label.as_str()).collect()
}

/// Keeps records of `split`; `None` keeps everything.
pub fn filter_split<R: Clone>(records: &[R], split: Option<Split>, split_of: impl Fn(&R) -> Option<Split>) -> Vec<R> {
    match split {
        None => records.to_vec(),
        Some(s) => records.iter().filter(|r| split_of(r) == Some(s)).cloned().collect(),
    }
}
