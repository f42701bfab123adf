//! JSON-lines corpora of graph and flat representations.
//!
//! A graph record is one JSON object per line:
//!
//! ```text
//! {"id":"s1","vars":[{"id":"e1","kind":"event"}],"instances":{"e1":{"tokens":["sleeps"],"head_index":0}},"edges":[]}
//! ```
//!
//! `id` and `layout` are optional. `layout` stores the nesting of the
//! linearized form the graph came from, so converting back reproduces the
//! original text. Strict parsing rejects unknown top-level fields; lenient
//! parsing ignores them. Fields inside spans and variables are always strict.
//!
//! A flat record is `{"preds":[{"var":"e1","kind":"event","tokens":[..],"head_index":0}],"args":[["e1","x1"]]}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::linear::Layout;
use crate::repr::{Edge, FlatRepr, GraphRepr, TokenSpan, Variable};

const GRAPH_FIELDS: [&str; 5] = ["id", "vars", "instances", "edges", "layout"];
const FLAT_FIELDS: [&str; 2] = ["preds", "args"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub vars: Vec<Variable>,
    pub instances: BTreeMap<String, TokenSpan>,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
}

impl GraphRecord {
    pub fn new(graph: GraphRepr) -> Self {
        GraphRecord { id: None, vars: graph.vars, instances: graph.instances, edges: graph.edges, layout: None }
    }

    pub fn graph(&self) -> GraphRepr {
        GraphRepr { vars: self.vars.clone(), instances: self.instances.clone(), edges: self.edges.clone() }
    }

    pub fn into_graph(self) -> GraphRepr {
        GraphRepr { vars: self.vars, instances: self.instances, edges: self.edges }
    }
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct RecordError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

fn parse_lines<T: serde::de::DeserializeOwned>(
    text: &str,
    allowed: &[&str],
    strict: bool,
) -> Result<Vec<T>, RecordError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| RecordError { line, message };
        let mut value: Value = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let obj = value.as_object_mut().ok_or_else(|| err("record is not a JSON object".into()))?;
        let unknown: Vec<String> = obj.keys().filter(|k| !allowed.contains(&k.as_str())).cloned().collect();
        if strict {
            if let Some(k) = unknown.first() {
                return Err(err(format!("unknown field `{k}`")));
            }
        }
        for k in unknown {
            obj.remove(&k);
        }
        out.push(serde_json::from_value(value).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

/// Parses graph records and validates every graph.
pub fn parse_graph_corpus(text: &str, strict: bool) -> Result<Vec<GraphRecord>, RecordError> {
    let records: Vec<GraphRecord> = parse_lines(text, &GRAPH_FIELDS, strict)?;
    for (i, record) in records.iter().enumerate() {
        let violations = record.graph().validate();
        if let Some(v) = violations.first() {
            return Err(RecordError { line: line_of(text, i), message: v.to_string() });
        }
    }
    Ok(records)
}

pub fn serialize_graph_corpus(records: &[GraphRecord]) -> String {
    serialize_lines(records)
}

pub fn parse_flat_corpus(text: &str, strict: bool) -> Result<Vec<FlatRepr>, RecordError> {
    parse_lines(text, &FLAT_FIELDS, strict)
}

pub fn serialize_flat_corpus(flats: &[FlatRepr]) -> String {
    serialize_lines(flats)
}

fn serialize_lines<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Line number of the `index`-th nonblank line.
fn line_of(text: &str, index: usize) -> usize {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).nth(index).map_or(0, |(i, _)| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"id":"s1","vars":[{"id":"e1","kind":"event"},{"id":"x1","kind":"entity"}],"instances":{"e1":{"tokens":["sleeps"],"head_index":0},"x1":{"tokens":["John"],"head_index":0}},"edges":[["e1","ARG","x1"]]}"#;

    #[test]
    fn graph_round_trip() {
        let text = format!("{LINE}\n");
        let records = parse_graph_corpus(&text, true).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].id.as_deref(), Some("s1"));
        assert_eq!(serialize_graph_corpus(&records), text);
    }

    #[test]
    fn strictness() {
        let extra = LINE.replacen('{', r#"{"note":1,"#, 1);
        assert!(parse_graph_corpus(&extra, true).unwrap_err().message.contains("note"));
        assert_eq!(parse_graph_corpus(&extra, false).unwrap().len(), 1);
    }

    #[test]
    fn invalid_graph_reports_line() {
        let bad = LINE.replace(r#"["e1","ARG","x1"]"#, r#"["e1","ARG","y"]"#);
        let text = format!("\n{bad}\n");
        assert_eq!(parse_graph_corpus(&text, true).unwrap_err().line, 2);
    }

    #[test]
    fn empty_corpus() {
        assert!(parse_graph_corpus("", true).unwrap().is_empty());
        assert_eq!(serialize_flat_corpus(&[]), "");
    }

    #[test]
    fn flat_round_trip() {
        let g = GraphRecord::new(parse_graph_corpus(LINE, true).unwrap().remove(0).into_graph()).into_graph();
        let flat = crate::repr::graph_to_flat(&g).unwrap();
        let text = serialize_flat_corpus(std::slice::from_ref(&flat));
        assert_eq!(parse_flat_corpus(&text, true).unwrap(), vec![flat]);
    }
}
