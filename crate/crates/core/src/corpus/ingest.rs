use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, Document, TextRole};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::invalid(format!("unknown input format '{other}'"))),
        }
    }
}

/// Maps input columns (or JSON keys) onto document fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub id: String,
    pub text: String,
    pub covariates: Vec<String>,
    pub treatment: Option<String>,
    pub outcome: Option<String>,
    pub text_role: Option<TextRole>,
}

impl Default for ColumnRoles {
    fn default() -> Self {
        ColumnRoles {
            id: "id".into(),
            text: "text".into(),
            covariates: Vec::new(),
            treatment: Some("treatment".into()),
            outcome: Some("outcome".into()),
            text_role: None,
        }
    }
}

pub fn ingest(path: &Path, format: InputFormat, roles: &ColumnRoles) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let documents = match format {
        InputFormat::Jsonl => read_jsonl(BufReader::new(file), roles, path)?,
        InputFormat::Csv => read_csv(file, roles)?,
    };
    Corpus::new(documents, roles.text_role)
}

fn number(v: &Value, line: usize, key: &str) -> Result<Option<f64>> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => Ok(n.as_f64()),
        Value::Bool(b) => Ok(Some(if *b { 1.0 } else { 0.0 })),
        _ => Err(Error::Malformed {
            line,
            message: format!("field '{key}' is not a number"),
        }),
    }
}

fn read_jsonl<R: BufRead>(reader: R, roles: &ColumnRoles, path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Malformed {
            line: line_no,
            message: "record is not a JSON object".into(),
        })?;
        let string_field = |key: &str| -> Result<String> {
            match obj.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(Error::Malformed {
                    line: line_no,
                    message: format!("field '{key}' must be a string"),
                }),
                None => Err(Error::Malformed {
                    line: line_no,
                    message: format!("missing required field '{key}'"),
                }),
            }
        };
        let mut doc = Document::new(string_field(&roles.id)?, string_field(&roles.text)?);

        if let Some(cov) = obj.get("covariates") {
            let cov = cov.as_object().ok_or_else(|| Error::Malformed {
                line: line_no,
                message: "'covariates' must be an object of numbers".into(),
            })?;
            for (k, v) in cov {
                if let Some(x) = number(v, line_no, k)? {
                    doc.covariates.insert(k.clone(), x);
                }
            }
        }
        for name in &roles.covariates {
            if let Some(v) = obj.get(name) {
                if let Some(x) = number(v, line_no, name)? {
                    doc.covariates.insert(name.clone(), x);
                }
            }
        }
        if let Some(key) = &roles.treatment {
            if let Some(v) = obj.get(key) {
                doc.treatment = number(v, line_no, key)?;
            }
        }
        if let Some(key) = &roles.outcome {
            if let Some(v) = obj.get(key) {
                doc.outcome = number(v, line_no, key)?;
            }
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn read_csv<R: std::io::Read>(reader: R, roles: &ColumnRoles) -> Result<Vec<Document>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col(&roles.id)?;
    let text_col = col(&roles.text)?;
    let cov_cols: Vec<(String, usize)> = roles
        .covariates
        .iter()
        .map(|n| Ok((n.clone(), col(n)?)))
        .collect::<Result<_>>()?;
    let treat_col = roles.treatment.as_deref().map(col).transpose()?;
    let out_col = roles.outcome.as_deref().map(col).transpose()?;

    let mut docs = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        // header is line 1
        let line = idx + 2;
        let record = record.map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        let parse = |c: usize, name: &str| -> Result<Option<f64>> {
            let raw = record.get(c).unwrap_or("").trim();
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                return Ok(None);
            }
            raw.parse::<f64>().map(Some).map_err(|_| Error::Malformed {
                line,
                message: format!("column '{name}' value '{raw}' is not a number"),
            })
        };
        let id = record.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        let mut doc = Document::new(id, record.get(text_col).unwrap_or(""));
        let mut covariates = BTreeMap::new();
        for (name, c) in &cov_cols {
            if let Some(x) = parse(*c, name)? {
                covariates.insert(name.clone(), x);
            }
        }
        doc.covariates = covariates;
        if let (Some(c), Some(name)) = (treat_col, roles.treatment.as_deref()) {
            doc.treatment = parse(c, name)?;
        }
        if let (Some(c), Some(name)) = (out_col, roles.outcome.as_deref()) {
            doc.outcome = parse(c, name)?;
        }
        docs.push(doc);
    }
    Ok(docs)
}
