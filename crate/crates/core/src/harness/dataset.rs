use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate qid `{0}`")]
    DuplicateQid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One question. Gold answers are node ids or literal values; JSON numbers
/// are accepted and kept as their decimal text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub qid: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_expression: Option<String>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "answers_as_text"
    )]
    pub answers: Option<Vec<String>>,
}

fn answers_as_text<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<String>>, D::Error> {
    let raw: Option<Vec<serde_json::Value>> = Option::deserialize(d)?;
    Ok(raw.map(|values| {
        values
            .into_iter()
            .map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
            .collect()
    }))
}

/// Reads JSON lines, skipping blank lines. Qids must be unique.
pub fn parse_dataset(reader: impl Read) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|source| DatasetError::Json {
                line: i + 1,
                source,
            })?;
        if !seen.insert(record.qid.clone()) {
            return Err(DatasetError::DuplicateQid(record.qid));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DatasetError> {
    parse_dataset(File::open(path)?)
}
