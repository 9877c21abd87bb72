//! Query records (one training or test example per JSONL line) and their
//! binding to a ground program.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ground::{GroundConstraint, GroundError, GroundProgram, Value};
use crate::lang::{parse_query, NppQueryKind, ParseError};
use crate::npp::NppInput;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Sym(String),
}

impl Label {
    pub fn to_value(&self) -> Value {
        match self {
            Label::Int(i) => Value::Int(*i),
            Label::Sym(s) => Value::sym(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub constraint: String,
    /// Input per NPP instance, keyed by the instance terms (`i1`, or `a,b`).
    pub data: BTreeMap<String, NppInput>,
    /// Ground-truth outcome per instance; evaluation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, Label>>,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("query `{id}`: {source}")]
    Query { id: String, source: ParseError },
    #[error("query `{id}`: {source}")]
    Ground { id: String, source: GroundError },
    #[error("query `{id}`: no data for NPP instance `{instance}`")]
    MissingData { id: String, instance: String },
    #[error("query `{id}`: label `{label}` is not an outcome of `{instance}`")]
    BadLabel { id: String, instance: String, label: String },
    #[error("NPP `{name}` is queried as {kind:?}; only P(C|X) and P(C) atoms can supply choice probabilities")]
    UnsupportedKind { name: String, kind: NppQueryKind },
}

pub fn read_jsonl(path: &Path) -> Result<Vec<QueryRecord>, DataError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DataError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, records: &[QueryRecord]) -> Result<(), DataError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// A record bound to a ground program.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedQuery {
    pub id: String,
    pub constraints: Vec<GroundConstraint>,
    /// Input per ground NPP (`None` for prior queries).
    pub inputs: Vec<Option<NppInput>>,
    /// Ground-truth outcome index per ground NPP, when labelled.
    pub labels: Vec<Option<usize>>,
}

/// Rejects NPP query kinds that do not yield a distribution over the choice
/// atoms' outcomes.
pub fn check_kinds(gp: &GroundProgram) -> Result<(), DataError> {
    for (name, sig) in &gp.signatures().by_name {
        if !matches!(sig.kind, NppQueryKind::CondClassGivenData | NppQueryKind::Prior) {
            return Err(DataError::UnsupportedKind {
                name: name.clone(),
                kind: sig.kind,
            });
        }
    }
    Ok(())
}

pub fn prepare(gp: &GroundProgram, rec: &QueryRecord) -> Result<PreparedQuery, DataError> {
    let q = parse_query(&rec.constraint).map_err(|source| DataError::Query {
        id: rec.id.clone(),
        source,
    })?;
    let constraints = gp.ground_query(&q).map_err(|source| DataError::Ground {
        id: rec.id.clone(),
        source,
    })?;
    let mut inputs = Vec::with_capacity(gp.npps.len());
    let mut labels = Vec::with_capacity(gp.npps.len());
    for npp in &gp.npps {
        let key = npp.instance_key();
        if npp.kind.needs_data() {
            let d = rec.data.get(&key).ok_or_else(|| DataError::MissingData {
                id: rec.id.clone(),
                instance: npp.to_string(),
            })?;
            inputs.push(Some(d.clone()));
        } else {
            inputs.push(None);
        }
        let label = match rec.labels.as_ref().and_then(|l| l.get(&key)) {
            Some(l) => Some(npp.outcome_index(&l.to_value()).ok_or_else(|| DataError::BadLabel {
                id: rec.id.clone(),
                instance: npp.to_string(),
                label: l.to_value().to_string(),
            })?),
            None => None,
        };
        labels.push(label);
    }
    Ok(PreparedQuery {
        id: rec.id.clone(),
        constraints,
        inputs,
        labels,
    })
}

pub fn prepare_all(gp: &GroundProgram, records: &[QueryRecord]) -> Result<Vec<PreparedQuery>, DataError> {
    records.iter().map(|r| prepare(gp, r)).collect()
}
