//! Writing records in the formats [`crate::ingest`] reads.

use std::io::Write;
use std::path::Path;

use fairaudit_core::{DecisionRecord, GroupKey, LabelRecord};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};
use crate::ingest::{DecisionColumns, Format, LabelColumns};
use crate::output::write_atomic;

/// Dimension names shared by every key, in key order.
fn shared_dimensions<'a, I>(keys: I, reserved: &[&str]) -> Result<Vec<String>>
where
    I: IntoIterator<Item = &'a GroupKey>,
{
    let mut keys = keys.into_iter();
    let Some(first) = keys.next() else {
        return Ok(Vec::new());
    };
    let dims: Vec<String> = first.dims().map(|(d, _)| d.to_string()).collect();
    if let Some(clash) = dims.iter().find(|d| reserved.contains(&d.as_str())) {
        return Err(CliError::Input(format!("group dimension `{clash}` collides with a record column")));
    }
    for key in keys {
        if !key.dims().map(|(d, _)| d).eq(dims.iter().map(String::as_str)) {
            return Err(CliError::Input(format!(
                "records mix group dimensions: `{first}` and `{key}`"
            )));
        }
    }
    Ok(dims)
}

fn binary(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn write_rows<W: Write>(out: W, format: Format, header: &[String], rows: impl Iterator<Item = Vec<Field>>) -> Result<()> {
    let io_err = |e: std::io::Error| CliError::Input(format!("write failed: {e}"));
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let csv_err = |e: csv::Error| CliError::Input(format!("write failed: {e}"));
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.write_record(row.iter().map(Field::as_text)).map_err(csv_err)?;
            }
            w.flush().map_err(io_err)
        }
        Format::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for row in rows {
                let map: Map<String, Value> = header.iter().cloned().zip(row.into_iter().map(Field::into_json)).collect();
                serde_json::to_writer(&mut out, &map).map_err(|e| CliError::Input(format!("write failed: {e}")))?;
                out.write_all(b"\n").map_err(io_err)?;
            }
            out.flush().map_err(io_err)
        }
    }
}

enum Field {
    Number(f64),
    Binary(bool),
    Text(String),
}

impl Field {
    fn as_text(&self) -> String {
        match self {
            // `Display` for f64 is the shortest string that parses back exactly.
            Field::Number(x) => x.to_string(),
            Field::Binary(b) => binary(*b).to_string(),
            Field::Text(s) => s.clone(),
        }
    }

    fn into_json(self) -> Value {
        match self {
            Field::Number(x) => Value::from(x),
            Field::Binary(b) => Value::from(u8::from(b)),
            Field::Text(s) => Value::String(s),
        }
    }
}

fn group_fields(key: &GroupKey) -> impl Iterator<Item = Field> + '_ {
    key.dims().map(|(_, v)| Field::Text(v.to_string()))
}

pub fn write_decisions<W: Write>(out: W, records: &[DecisionRecord], format: Format) -> Result<()> {
    let columns = DecisionColumns::default();
    let dims = shared_dimensions(records.iter().map(|r| &r.group), &[&columns.score, &columns.outcome])?;
    let header: Vec<String> = [columns.score, columns.outcome].into_iter().chain(dims).collect();
    let rows = records.iter().map(|r| {
        [Field::Number(r.score), Field::Binary(r.outcome)]
            .into_iter()
            .chain(group_fields(&r.group))
            .collect()
    });
    write_rows(out, format, &header, rows)
}

pub fn write_labels<W: Write>(out: W, records: &[LabelRecord], format: Format) -> Result<()> {
    let columns = LabelColumns::default();
    let dims = shared_dimensions(
        records.iter().map(|r| &r.group),
        &[&columns.label, &columns.truth, &columns.labeler, &columns.item],
    )?;
    let header: Vec<String> = [columns.label, columns.truth, columns.labeler, columns.item]
        .into_iter()
        .chain(dims)
        .collect();
    let rows = records.iter().map(|r| {
        [
            Field::Binary(r.label),
            Field::Binary(r.truth),
            Field::Text(r.labeler.clone()),
            Field::Text(r.item.clone()),
        ]
        .into_iter()
        .chain(group_fields(&r.group))
        .collect()
    });
    write_rows(out, format, &header, rows)
}

/// Group dimension names to pass back to ingest for records written by this module.
pub fn dimensions_of(key: &GroupKey) -> Vec<String> {
    key.dims().map(|(d, _)| d.to_string()).collect()
}

pub fn save_decisions(path: &Path, records: &[DecisionRecord], format: Format) -> Result<()> {
    let mut buf = Vec::new();
    write_decisions(&mut buf, records, format)?;
    write_atomic(path, &buf)
}

pub fn save_labels(path: &Path, records: &[LabelRecord], format: Format) -> Result<()> {
    let mut buf = Vec::new();
    write_labels(&mut buf, records, format)?;
    write_atomic(path, &buf)
}
