//! Flat and graph meaning representations.
//!
//! A [`GraphRepr`] is the triple of variables, an instance mapping from each
//! variable to a target-language [`TokenSpan`], and argument edges between
//! ordered variable pairs. A [`FlatRepr`] carries the same content as a bag of
//! unary predications plus first-class `ARG(governor, dependent)` assertions.
//! The two forms convert into each other without loss.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A contiguous target-language span with a designated syntactic head.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenSpan {
    pub tokens: Vec<String>,
    pub head_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_positions: Option<Vec<usize>>,
}

impl TokenSpan {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>, head_index: usize) -> Self {
        TokenSpan { tokens: tokens.into_iter().map(Into::into).collect(), head_index, origin_positions: None }
    }

    pub fn with_origins(mut self, origins: Vec<usize>) -> Self {
        self.origin_positions = Some(origins);
        self
    }

    pub fn head(&self) -> &str {
        &self.tokens[self.head_index]
    }

    /// Position of the head in the target sentence, when origins are known.
    pub fn head_origin(&self) -> Option<usize> {
        self.origin_positions.as_ref().and_then(|o| o.get(self.head_index).copied())
    }

    /// Reasons this span breaks its invariants, if any.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.tokens.is_empty() {
            out.push("span has no tokens".to_string());
        } else if self.head_index >= self.tokens.len() {
            out.push(format!("head_index {} out of range for {} tokens", self.head_index, self.tokens.len()));
        }
        if self.tokens.iter().any(|t| t.is_empty()) {
            out.push("span contains an empty token".to_string());
        }
        if let Some(origins) = &self.origin_positions {
            if origins.len() != self.tokens.len() {
                out.push(format!("origin_positions has {} entries for {} tokens", origins.len(), self.tokens.len()));
            }
            if origins.windows(2).any(|w| w[0] >= w[1]) {
                out.push("origin_positions not strictly increasing".to_string());
            }
        }
        out
    }
}

impl fmt::Display for TokenSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(tok)?;
            if i == self.head_index {
                f.write_str("_h")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Event,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub id: String,
    pub kind: VarKind,
}

impl Variable {
    pub fn event(id: impl Into<String>) -> Self {
        Variable { id: id.into(), kind: VarKind::Event }
    }

    pub fn entity(id: impl Into<String>) -> Self {
        Variable { id: id.into(), kind: VarKind::Entity }
    }
}

/// Argument relation label. Only `ARG` is defined; argument indexation is
/// left underspecified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "ARG")]
    Arg,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Arg => "ARG",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A directed argument edge, serialized as `[governor, label, dependent]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, Relation, String)", into = "(String, Relation, String)")]
pub struct Edge {
    pub governor: String,
    pub label: Relation,
    pub dependent: String,
}

impl Edge {
    pub fn arg(governor: impl Into<String>, dependent: impl Into<String>) -> Self {
        Edge { governor: governor.into(), label: Relation::Arg, dependent: dependent.into() }
    }
}

impl From<(String, Relation, String)> for Edge {
    fn from((governor, label, dependent): (String, Relation, String)) -> Self {
        Edge { governor, label, dependent }
    }
}

impl From<Edge> for (String, Relation, String) {
    fn from(e: Edge) -> Self {
        (e.governor, e.label, e.dependent)
    }
}

/// Graph representation `<V, I, R>`.
///
/// Fields are public so malformed graphs can be built and then checked with
/// [`GraphRepr::validate`]. The order of `vars` is the canonical variable
/// order used for tie-breaking in matching.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRepr {
    pub vars: Vec<Variable>,
    pub instances: BTreeMap<String, TokenSpan>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateVariable(String),
    MissingInstance(String),
    UnknownInstance(String),
    BadSpan { var: String, problem: String },
    DanglingEndpoint { governor: String, dependent: String, missing: String },
    SelfEdge(String),
    DuplicateEdge { governor: String, dependent: String },
    GovernorNotEvent { governor: String, dependent: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateVariable(v) => write!(f, "unique ids: variable `{v}` declared twice"),
            Violation::MissingInstance(v) => write!(f, "total instance mapping: `{v}` has no instance"),
            Violation::UnknownInstance(v) => {
                write!(f, "instance keys: `{v}` has an instance but is not a variable")
            }
            Violation::BadSpan { var, problem } => write!(f, "span of `{var}`: {problem}"),
            Violation::DanglingEndpoint { governor, dependent, missing } => {
                write!(f, "edge endpoints: ARG({governor}, {dependent}) names unknown variable `{missing}`")
            }
            Violation::SelfEdge(v) => write!(f, "no self-edges: ARG({v}, {v})"),
            Violation::DuplicateEdge { governor, dependent } => {
                write!(f, "one edge per pair: ARG({governor}, {dependent}) repeated")
            }
            Violation::GovernorNotEvent { governor, dependent } => {
                write!(f, "governor kind: ARG({governor}, {dependent}) is governed by an entity")
            }
        }
    }
}

/// Non-fatal observations; a graph with warnings is still valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    SharedSpan { first: String, second: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::SharedSpan { first, second } => {
                write!(f, "variables `{first}` and `{second}` share an identical span")
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ReprError {
    #[error("variable `{0}` appears more than once in the predicate bag")]
    DuplicateVariable(String),
    #[error("ARG({governor}, {dependent}) references unknown variable `{missing}`")]
    UnknownVariable { governor: String, dependent: String, missing: String },
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl GraphRepr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with its instance. Intended for building fixtures.
    pub fn add_var(&mut self, var: Variable, span: TokenSpan) -> &mut Self {
        self.instances.insert(var.id.clone(), span);
        self.vars.push(var);
        self
    }

    pub fn add_arg(&mut self, governor: &str, dependent: &str) -> &mut Self {
        self.edges.push(Edge::arg(governor, dependent));
        self
    }

    /// Copy with every `origin_positions` dropped; the linearized form does
    /// not carry them.
    pub fn without_origins(&self) -> GraphRepr {
        let mut g = self.clone();
        for span in g.instances.values_mut() {
            span.origin_positions = None;
        }
        g
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn var(&self, id: &str) -> Option<&Variable> {
        self.vars.iter().find(|v| v.id == id)
    }

    pub fn instance(&self, id: &str) -> Option<&TokenSpan> {
        self.instances.get(id)
    }

    /// `|U(I)|`, the number of instances.
    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    /// `|U(R)|`, the number of argument relations.
    pub fn relation_count(&self) -> usize {
        self.edges.len()
    }

    pub fn in_degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.dependent == id).count()
    }

    pub fn out_degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.governor == id).count()
    }

    /// Every invariant violation; empty iff the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut kinds: HashMap<&str, VarKind> = HashMap::new();
        for v in &self.vars {
            if kinds.insert(&v.id, v.kind).is_some() {
                out.push(Violation::DuplicateVariable(v.id.clone()));
            }
        }
        for v in &self.vars {
            match self.instances.get(&v.id) {
                None => out.push(Violation::MissingInstance(v.id.clone())),
                Some(span) => out.extend(
                    span.problems().into_iter().map(|problem| Violation::BadSpan { var: v.id.clone(), problem }),
                ),
            }
        }
        for id in self.instances.keys() {
            if !kinds.contains_key(id.as_str()) {
                out.push(Violation::UnknownInstance(id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let mut dangling = false;
            for end in [&e.governor, &e.dependent] {
                if !kinds.contains_key(end.as_str()) {
                    dangling = true;
                    out.push(Violation::DanglingEndpoint {
                        governor: e.governor.clone(),
                        dependent: e.dependent.clone(),
                        missing: end.clone(),
                    });
                }
            }
            if e.governor == e.dependent {
                out.push(Violation::SelfEdge(e.governor.clone()));
            }
            if !seen.insert((&e.governor, &e.dependent)) {
                out.push(Violation::DuplicateEdge { governor: e.governor.clone(), dependent: e.dependent.clone() });
            }
            if !dangling && kinds[e.governor.as_str()] != VarKind::Event {
                out.push(Violation::GovernorNotEvent { governor: e.governor.clone(), dependent: e.dependent.clone() });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Observations that do not invalidate the graph.
    pub fn warnings(&self) -> Vec<Warning> {
        let mut out = Vec::new();
        let mut first_by_span: HashMap<&TokenSpan, &str> = HashMap::new();
        for v in &self.vars {
            if let Some(span) = self.instances.get(&v.id) {
                match first_by_span.get(span) {
                    Some(first) => out.push(Warning::SharedSpan { first: first.to_string(), second: v.id.clone() }),
                    None => {
                        first_by_span.insert(span, &v.id);
                    }
                }
            }
        }
        out
    }

    pub(crate) fn ensure_valid(&self) -> Result<(), ReprError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ReprError::Invalid(violations))
        }
    }

    /// The variable kind of each governor-dependent pair, used for
    /// isomorphism signatures.
    fn signature(&self, id: &str) -> (VarKind, &TokenSpan, usize, usize) {
        (
            self.var(id).map(|v| v.kind).unwrap_or(VarKind::Entity),
            &self.instances[id],
            self.in_degree(id),
            self.out_degree(id),
        )
    }
}

/// One predication of the flat form: a variable and its span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predication {
    pub var: String,
    pub kind: VarKind,
    #[serde(flatten)]
    pub span: TokenSpan,
}

/// A first-class `ARG(governor, dependent)` assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, String)", into = "(String, String)")]
pub struct ArgAssertion {
    pub governor: String,
    pub dependent: String,
}

impl From<(String, String)> for ArgAssertion {
    fn from((governor, dependent): (String, String)) -> Self {
        ArgAssertion { governor, dependent }
    }
}

impl From<ArgAssertion> for (String, String) {
    fn from(a: ArgAssertion) -> Self {
        (a.governor, a.dependent)
    }
}

/// Flat representation `<P, A>`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatRepr {
    pub preds: Vec<Predication>,
    pub args: Vec<ArgAssertion>,
}

impl FlatRepr {
    pub fn pred(&mut self, var: Variable, span: TokenSpan) -> &mut Self {
        self.preds.push(Predication { var: var.id, kind: var.kind, span });
        self
    }

    pub fn arg(&mut self, governor: &str, dependent: &str) -> &mut Self {
        self.args.push(ArgAssertion { governor: governor.into(), dependent: dependent.into() });
        self
    }
}

pub fn flat_to_graph(flat: &FlatRepr) -> Result<GraphRepr, ReprError> {
    let mut graph = GraphRepr::new();
    for p in &flat.preds {
        if graph.instances.contains_key(&p.var) {
            return Err(ReprError::DuplicateVariable(p.var.clone()));
        }
        graph.add_var(Variable { id: p.var.clone(), kind: p.kind }, p.span.clone());
    }
    for a in &flat.args {
        for end in [&a.governor, &a.dependent] {
            if !graph.instances.contains_key(end) {
                return Err(ReprError::UnknownVariable {
                    governor: a.governor.clone(),
                    dependent: a.dependent.clone(),
                    missing: end.clone(),
                });
            }
        }
        graph.add_arg(&a.governor, &a.dependent);
    }
    graph.ensure_valid()?;
    Ok(graph)
}

pub fn graph_to_flat(graph: &GraphRepr) -> Result<FlatRepr, ReprError> {
    graph.ensure_valid()?;
    let preds = graph
        .vars
        .iter()
        .map(|v| Predication { var: v.id.clone(), kind: v.kind, span: graph.instances[&v.id].clone() })
        .collect();
    let args = graph
        .edges
        .iter()
        .map(|e| ArgAssertion { governor: e.governor.clone(), dependent: e.dependent.clone() })
        .collect();
    Ok(FlatRepr { preds, args })
}

/// Whether two valid graphs are equal up to variable renaming.
///
/// Candidates are first partitioned by (kind, span, in-degree, out-degree),
/// then a backtracking search checks edge consistency.
pub fn isomorphic(a: &GraphRepr, b: &GraphRepr) -> bool {
    if a.vars.len() != b.vars.len() || a.edges.len() != b.edges.len() {
        return false;
    }
    let edges_b: BTreeSet<(&str, Relation, &str)> =
        b.edges.iter().map(|e| (e.governor.as_str(), e.label, e.dependent.as_str())).collect();
    let mut order: Vec<&str> = a.vars.iter().map(|v| v.id.as_str()).collect();
    // Most constrained first: fewest candidates.
    let candidates: HashMap<&str, Vec<&str>> = order
        .iter()
        .map(|&va| {
            let sig = a.signature(va);
            let cands = b.vars.iter().map(|v| v.id.as_str()).filter(|&vb| b.signature(vb) == sig).collect();
            (va, cands)
        })
        .collect();
    if candidates.values().any(Vec::is_empty) {
        return false;
    }
    order.sort_by_key(|v| candidates[v].len());

    fn search<'g>(
        depth: usize,
        order: &[&'g str],
        candidates: &HashMap<&'g str, Vec<&'g str>>,
        a: &'g GraphRepr,
        edges_b: &BTreeSet<(&'g str, Relation, &'g str)>,
        map: &mut HashMap<&'g str, &'g str>,
        used: &mut BTreeSet<&'g str>,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let va = order[depth];
        for &vb in &candidates[va] {
            if used.contains(vb) {
                continue;
            }
            map.insert(va, vb);
            let consistent = a.edges.iter().all(|e| {
                if e.governor != va && e.dependent != va {
                    return true;
                }
                match (map.get(e.governor.as_str()), map.get(e.dependent.as_str())) {
                    (Some(g), Some(d)) => edges_b.contains(&(*g, e.label, *d)),
                    _ => true,
                }
            });
            if consistent {
                used.insert(vb);
                if search(depth + 1, order, candidates, a, edges_b, map, used) {
                    return true;
                }
                used.remove(vb);
            }
            map.remove(va);
        }
        false
    }

    search(0, &order, &candidates, a, &edges_b, &mut HashMap::new(), &mut BTreeSet::new())
}

/// Flat forms compared up to variable renaming.
pub fn flat_isomorphic(a: &FlatRepr, b: &FlatRepr) -> bool {
    match (flat_to_graph(a), flat_to_graph(b)) {
        (Ok(ga), Ok(gb)) => isomorphic(&ga, &gb),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sleeps() -> GraphRepr {
        let mut g = GraphRepr::new();
        g.add_var(Variable::event("e1"), TokenSpan::new(["sleeps"], 0))
            .add_var(Variable::entity("x1"), TokenSpan::new(["John"], 0))
            .add_arg("e1", "x1");
        g
    }

    #[test]
    fn flat_to_graph_rebags() {
        let mut f = FlatRepr::default();
        f.pred(Variable::event("e1"), TokenSpan::new(["sleeps"], 0))
            .pred(Variable::entity("x1"), TokenSpan::new(["John"], 0))
            .arg("e1", "x1");
        let g = flat_to_graph(&f).unwrap();
        assert_eq!(g.vars.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g, sleeps());
    }

    #[test]
    fn empty_forms() {
        assert_eq!(flat_to_graph(&FlatRepr::default()).unwrap(), GraphRepr::new());
        assert_eq!(graph_to_flat(&GraphRepr::new()).unwrap(), FlatRepr::default());
    }

    #[test]
    fn single_var_graph_to_flat() {
        let mut g = GraphRepr::new();
        g.add_var(Variable::event("e1"), TokenSpan::new(["rains"], 0));
        let f = graph_to_flat(&g).unwrap();
        assert_eq!(f.preds.len(), 1);
        assert!(f.args.is_empty());
    }

    #[test]
    fn flat_errors() {
        let mut f = FlatRepr::default();
        f.pred(Variable::event("e1"), TokenSpan::new(["a"], 0)).pred(Variable::entity("e1"), TokenSpan::new(["b"], 0));
        assert_eq!(flat_to_graph(&f), Err(ReprError::DuplicateVariable("e1".into())));

        let mut f = FlatRepr::default();
        f.pred(Variable::event("e1"), TokenSpan::new(["a"], 0)).arg("e1", "x9");
        assert!(matches!(flat_to_graph(&f), Err(ReprError::UnknownVariable { missing, .. }) if missing == "x9"));
    }

    #[test]
    fn validate_reports_each_problem() {
        assert!(sleeps().validate().is_empty());

        let mut g = sleeps();
        g.add_arg("e1", "x7");
        let v = g.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("x7"), "{}", v[0]);

        let mut g = sleeps();
        g.add_arg("e1", "e1");
        assert_eq!(g.validate(), vec![Violation::SelfEdge("e1".into())]);

        let mut g = sleeps();
        g.add_arg("x1", "e1");
        assert!(matches!(g.validate()[..], [Violation::GovernorNotEvent { .. }]));

        let mut g = sleeps();
        g.instances.insert("x1".into(), TokenSpan::new(["John"], 3));
        assert!(matches!(g.validate()[..], [Violation::BadSpan { .. }]));
    }

    #[test]
    fn shared_spans_are_warnings_only() {
        let mut g = sleeps();
        g.add_var(Variable::entity("x2"), TokenSpan::new(["John"], 0));
        assert!(g.is_valid());
        assert_eq!(g.warnings().len(), 1);
    }

    #[test]
    fn isomorphism_ignores_names() {
        let a = sleeps();
        let mut b = GraphRepr::new();
        b.add_var(Variable::entity("foo"), TokenSpan::new(["John"], 0))
            .add_var(Variable::event("bar"), TokenSpan::new(["sleeps"], 0))
            .add_arg("bar", "foo");
        assert!(isomorphic(&a, &b));
        b.edges.clear();
        assert!(!isomorphic(&a, &b));
    }

    #[test]
    fn json_shape() {
        let g = sleeps();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(
            text,
            r#"{"vars":[{"id":"e1","kind":"event"},{"id":"x1","kind":"entity"}],"instances":{"e1":{"tokens":["sleeps"],"head_index":0},"x1":{"tokens":["John"],"head_index":0}},"edges":[["e1","ARG","x1"]]}"#
        );
        let back: GraphRepr = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
    }
}
