//! Reading decision and label files into typed records.

use std::collections::BTreeSet;
use std::path::Path;

use fairaudit_core::{DecisionRecord, GroupKey, LabelRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Default cap on the fraction of rows that may be rejected.
pub const DEFAULT_MAX_REJECTED: f64 = 0.01;

/// Rejections kept verbatim in the summary; the count is always exact.
const MAX_LISTED_REJECTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl`, `.ndjson` and `.json` are line-delimited JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl" | "ndjson" | "json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

/// What to do with a row holding a missing or unparseable value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NullPolicy {
    #[default]
    RejectRow,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionColumns {
    pub score: String,
    pub outcome: String,
}

impl Default for DecisionColumns {
    fn default() -> Self {
        Self {
            score: "score".into(),
            outcome: "outcome".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelColumns {
    pub label: String,
    pub truth: String,
    pub labeler: String,
    pub item: String,
}

impl Default for LabelColumns {
    fn default() -> Self {
        Self {
            label: "label".into(),
            truth: "truth".into(),
            labeler: "labeler".into(),
            item: "item".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSchema {
    /// `None` picks the format from the file extension.
    pub format: Option<Format>,
    pub decisions: DecisionColumns,
    pub labels: LabelColumns,
    /// Columns forming the group key, in key order. Each column name is also
    /// the dimension name. With none, every record is in `group=all`.
    pub group: Vec<String>,
    pub null_policy: NullPolicy,
    pub max_rejected_fraction: f64,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            format: None,
            decisions: DecisionColumns::default(),
            labels: LabelColumns::default(),
            group: Vec::new(),
            null_policy: NullPolicy::default(),
            max_rejected_fraction: DEFAULT_MAX_REJECTED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line in the input file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub format: Format,
    /// Hex SHA-256 of the input bytes.
    pub sha256: String,
    pub rows: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// The first rejections, with reasons.
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub summary: IngestSummary,
}

pub fn ingest_decisions(path: &Path, schema: &IngestSchema) -> Result<Ingested<DecisionRecord>> {
    let columns = &schema.decisions;
    let required: Vec<&str> = [columns.score.as_str(), columns.outcome.as_str()]
        .into_iter()
        .chain(schema.group.iter().map(String::as_str))
        .collect();
    ingest(path, schema, &required, |row| {
        let score = parse_score(row.get(&columns.score), &columns.score)?;
        let outcome = parse_binary(row.get(&columns.outcome), &columns.outcome)?;
        let group = group_key(row, &schema.group)?;
        DecisionRecord::new(score, outcome, group).map_err(|e| e.to_string())
    })
}

pub fn ingest_labels(path: &Path, schema: &IngestSchema) -> Result<Ingested<LabelRecord>> {
    let columns = &schema.labels;
    let required: Vec<&str> = [
        columns.label.as_str(),
        columns.truth.as_str(),
        columns.labeler.as_str(),
        columns.item.as_str(),
    ]
    .into_iter()
    .chain(schema.group.iter().map(String::as_str))
    .collect();
    ingest(path, schema, &required, |row| {
        Ok(LabelRecord {
            label: parse_binary(row.get(&columns.label), &columns.label)?,
            truth: parse_binary(row.get(&columns.truth), &columns.truth)?,
            labeler: parse_text(row.get(&columns.labeler), &columns.labeler)?,
            item: parse_text(row.get(&columns.item), &columns.item)?,
            group: group_key(row, &schema.group)?,
        })
    })
}

/// Hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

enum Field<'a> {
    Null,
    Text(&'a str),
    Number(f64),
    Bool(bool),
}

enum Row<'a> {
    Csv {
        header: &'a [String],
        record: &'a csv::StringRecord,
    },
    Json(&'a serde_json::Map<String, serde_json::Value>),
}

impl<'a> Row<'a> {
    fn get(&self, column: &str) -> Field<'a> {
        match *self {
            Row::Csv { header, record } => {
                let value = header
                    .iter()
                    .position(|h| h == column)
                    .and_then(|i| record.get(i))
                    .map(str::trim)
                    .unwrap_or("");
                if value.is_empty() {
                    Field::Null
                } else {
                    Field::Text(value)
                }
            }
            Row::Json(map) => match map.get(column) {
                None | Some(serde_json::Value::Null) => Field::Null,
                Some(serde_json::Value::String(s)) if s.trim().is_empty() => Field::Null,
                Some(serde_json::Value::String(s)) => Field::Text(s.trim()),
                Some(serde_json::Value::Number(n)) => n.as_f64().map_or(Field::Null, Field::Number),
                Some(serde_json::Value::Bool(b)) => Field::Bool(*b),
                Some(_) => Field::Text(""),
            },
        }
    }
}

fn parse_score(field: Field<'_>, column: &str) -> std::result::Result<f64, String> {
    let value = match field {
        Field::Null => return Err(format!("missing value in `{column}`")),
        Field::Number(x) => x,
        Field::Text(s) => s
            .parse::<f64>()
            .map_err(|_| format!("`{column}` value `{s}` is not a number"))?,
        Field::Bool(b) => return Err(format!("`{column}` value `{b}` is not a number")),
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{column}` value `{value}` is not finite"))
    }
}

fn parse_binary(field: Field<'_>, column: &str) -> std::result::Result<bool, String> {
    match field {
        Field::Null => Err(format!("missing value in `{column}`")),
        Field::Bool(b) => Ok(b),
        Field::Text("0") => Ok(false),
        Field::Text("1") => Ok(true),
        Field::Number(x) if x == 0.0 => Ok(false),
        Field::Number(x) if x == 1.0 => Ok(true),
        Field::Text(s) => Err(format!("`{column}` value `{s}` is not 0 or 1")),
        Field::Number(x) => Err(format!("`{column}` value `{x}` is not 0 or 1")),
    }
}

fn parse_text(field: Field<'_>, column: &str) -> std::result::Result<String, String> {
    match field {
        Field::Null => Err(format!("missing value in `{column}`")),
        Field::Text("") => Err(format!("`{column}` must be a string or number")),
        Field::Text(s) => Ok(s.to_string()),
        Field::Number(x) => Ok(x.to_string()),
        Field::Bool(b) => Ok(b.to_string()),
    }
}

fn group_key(row: &Row<'_>, dims: &[String]) -> std::result::Result<GroupKey, String> {
    if dims.is_empty() {
        return Ok(GroupKey::overall());
    }
    let labels = dims
        .iter()
        .map(|d| parse_text(row.get(d), d))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    GroupKey::new(dims.iter().map(String::as_str).zip(labels.iter().map(String::as_str))).map_err(|e| e.to_string())
}

fn ingest<T, F>(path: &Path, schema: &IngestSchema, required: &[&str], mut parse: F) -> Result<Ingested<T>>
where
    F: FnMut(&Row<'_>) -> std::result::Result<T, String>,
{
    if !(0.0..=1.0).contains(&schema.max_rejected_fraction) {
        return Err(CliError::Input(format!(
            "max rejected fraction must be in [0, 1], got {}",
            schema.max_rejected_fraction
        )));
    }
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let format = schema.format.unwrap_or_else(|| Format::from_path(path));
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut rejected = 0u64;
    let mut rows = 0u64;
    let mut reject = |line: u64, reason: String| -> Result<()> {
        if schema.null_policy == NullPolicy::Fail {
            return Err(CliError::Input(format!("{}:{line}: {reason}", path.display())));
        }
        rejected += 1;
        if rejections.len() < MAX_LISTED_REJECTIONS {
            rejections.push(Rejection { line, reason });
        }
        Ok(())
    };

    match format {
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .from_reader(bytes.as_slice());
            let header: Vec<String> = reader
                .headers()
                .map_err(|e| CliError::Input(format!("{}: unreadable header: {e}", path.display())))?
                .iter()
                .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
                .collect();
            let missing: Vec<&str> = required.iter().copied().filter(|c| !header.iter().any(|h| h == c)).collect();
            if !missing.is_empty() {
                return Err(CliError::Input(format!(
                    "{}: missing column(s) {}",
                    path.display(),
                    missing.join(", ")
                )));
            }
            let mut record = csv::StringRecord::new();
            loop {
                let line = reader.position().line();
                match reader.read_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {
                        rows += 1;
                        let line = record.position().map_or(line, |p| p.line());
                        if record.len() != header.len() {
                            reject(line, format!("expected {} fields, found {}", header.len(), record.len()))?;
                            continue;
                        }
                        match parse(&Row::Csv {
                            header: &header,
                            record: &record,
                        }) {
                            Ok(r) => records.push(r),
                            Err(reason) => reject(line, reason)?,
                        }
                    }
                    Err(e) => {
                        rows += 1;
                        reject(line, format!("unreadable row: {e}"))?;
                    }
                }
            }
        }
        Format::Jsonl => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| CliError::Input(format!("{}: not UTF-8: {e}", path.display())))?;
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                rows += 1;
                let line_no = i as u64 + 1;
                match serde_json::from_str::<serde_json::Value>(line) {
                    Ok(serde_json::Value::Object(map)) => {
                        for c in required {
                            if map.contains_key(*c) {
                                seen.insert(c);
                            }
                        }
                        match parse(&Row::Json(&map)) {
                            Ok(r) => records.push(r),
                            Err(reason) => reject(line_no, reason)?,
                        }
                    }
                    Ok(_) => reject(line_no, "line is not a JSON object".into())?,
                    Err(e) => reject(line_no, format!("invalid JSON: {e}"))?,
                }
            }
            let missing: Vec<&str> = required.iter().copied().filter(|c| !seen.contains(c)).collect();
            if rows > 0 && !missing.is_empty() {
                return Err(CliError::Input(format!(
                    "{}: field(s) {} absent from every record",
                    path.display(),
                    missing.join(", ")
                )));
            }
        }
    }

    if rows > 0 && rejected as f64 > schema.max_rejected_fraction * rows as f64 {
        let first = rejections
            .first()
            .map(|r| format!("; first at line {}: {}", r.line, r.reason))
            .unwrap_or_default();
        return Err(CliError::Input(format!(
            "{}: rejected {rejected} of {rows} rows, above the cap of {}{first}",
            path.display(),
            schema.max_rejected_fraction
        )));
    }
    Ok(Ingested {
        summary: IngestSummary {
            format,
            sha256: digest(&bytes),
            rows,
            accepted: records.len() as u64,
            rejected,
            rejections,
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(name: &str, contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(contents.as_bytes()).unwrap();
        (dir, path)
    }

    fn grouped() -> IngestSchema {
        IngestSchema {
            group: vec!["g".into()],
            ..IngestSchema::default()
        }
    }

    #[test]
    fn well_formed_csv() {
        let (_d, p) = file("d.csv", "score,outcome,g\n0.1,0,a\n0.9,1,b\n0.5,1,a\n");
        let got = ingest_decisions(&p, &grouped()).unwrap();
        assert_eq!(got.records.len(), 3);
        assert_eq!(got.summary.rejected, 0);
        assert_eq!(got.records[1].group.to_string(), "g=b");
        assert!(got.records[2].outcome);
    }

    #[test]
    fn bad_outcome_is_rejected_with_reason() {
        let mut text = String::from("score,outcome\n0.5,2\n");
        for i in 0..200 {
            text.push_str(&format!("0.{},1\n", i % 10));
        }
        let (_d, p) = file("d.csv", &text);
        let got = ingest_decisions(&p, &IngestSchema::default()).unwrap();
        assert_eq!(got.summary.rejected, 1);
        assert_eq!(got.summary.rejections[0].line, 2);
        assert!(got.summary.rejections[0].reason.contains("not 0 or 1"), "{:?}", got.summary.rejections);
        assert_eq!(got.records[0].group, GroupKey::overall());
    }

    #[test]
    fn rejection_cap_and_fail_policy() {
        let (_d, p) = file("d.csv", "score,outcome\n0.5,2\n0.5,1\n");
        let e = ingest_decisions(&p, &IngestSchema::default()).unwrap_err();
        assert!(e.to_string().contains("above the cap"), "{e}");
        let schema = IngestSchema {
            null_policy: NullPolicy::Fail,
            max_rejected_fraction: 1.0,
            ..IngestSchema::default()
        };
        let e = ingest_decisions(&p, &schema).unwrap_err();
        assert!(e.to_string().contains(":2:"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_column_is_an_error() {
        let (_d, p) = file("d.csv", "score,result\n0.5,1\n");
        let e = ingest_decisions(&p, &IngestSchema::default()).unwrap_err();
        assert!(e.to_string().contains("outcome"), "{e}");
    }

    #[test]
    fn empty_cells_are_nulls() {
        let schema = IngestSchema {
            max_rejected_fraction: 1.0,
            ..grouped()
        };
        let (_d, p) = file("d.csv", "score,outcome,g\n,1,a\n0.3,1,\n0.3,0,a\n");
        let got = ingest_decisions(&p, &schema).unwrap();
        assert_eq!(got.records.len(), 1);
        let reasons: Vec<_> = got.summary.rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, ["missing value in `score`", "missing value in `g`"]);
    }

    #[test]
    fn jsonl_labels() {
        let text = concat!(
            "{\"label\": 1, \"truth\": true, \"labeler\": \"L1\", \"item\": 7, \"g\": \"a\"}\n",
            "\n",
            "{\"label\": \"0\", \"truth\": 0, \"labeler\": \"L2\", \"item\": \"x\", \"g\": \"b\"}\n",
        );
        let (_d, p) = file("l.jsonl", text);
        let got = ingest_labels(&p, &grouped()).unwrap();
        assert_eq!(got.summary.format, Format::Jsonl);
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.records[0].item, "7");
        assert!(got.records[0].label && got.records[0].truth);
        assert!(!got.records[1].label);
    }

    #[test]
    fn jsonl_absent_field_is_missing_column() {
        let (_d, p) = file("d.jsonl", "{\"score\": 0.2}\n");
        let e = ingest_decisions(&p, &IngestSchema::default()).unwrap_err();
        assert!(e.to_string().contains("absent"), "{e}");
    }

    #[test]
    fn digest_is_sha256_of_bytes() {
        assert_eq!(
            digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let (_d, p) = file("d.csv", "score,outcome\n0.5,1\n");
        let got = ingest_decisions(&p, &IngestSchema::default()).unwrap();
        assert_eq!(got.summary.sha256, digest(b"score,outcome\n0.5,1\n"));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a.JSONL")), Format::Jsonl);
        assert_eq!(Format::from_path(Path::new("a.ndjson")), Format::Jsonl);
        assert_eq!(Format::from_path(Path::new("a.tsv")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("a")), Format::Csv);
    }
}
