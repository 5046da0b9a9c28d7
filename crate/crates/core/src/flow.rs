//! Flow documents: parsing, topology, and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::nodes::{self, ConfigError, NodeKind};

pub const DEFAULT_FLOW_GROUP: &str = "main";

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDef {
    pub id: String,
    pub kind: NodeKind,
    pub config: Map<String, Value>,
    pub enabled: bool,
    pub flow: String,
}

/// `(node id, port index)`.
pub type PortRef = (String, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wire {
    pub from: PortRef,
    pub to: PortRef,
}

/// Node/wire topology. Wires keep document declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowGraph {
    pub nodes: Vec<NodeDef>,
    pub wires: Vec<Wire>,
}

impl FlowGraph {
    pub fn node(&self, id: &str) -> Option<&NodeDef> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn flow_groups(&self) -> BTreeSet<&str> {
        self.nodes.iter().map(|n| n.flow.as_str()).collect()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &NodeDef> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Wires leaving `(node, egress)` in declaration order.
    pub fn wires_from<'a>(&'a self, node: &'a str, egress: usize) -> impl Iterator<Item = &'a Wire> + 'a {
        self.wires
            .iter()
            .filter(move |w| w.from.0 == node && w.from.1 == egress)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Locus {
    Graph,
    Node(String),
    Wire { from: PortRef, to: PortRef },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub locus: Locus,
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.locus {
            Locus::Graph => write!(f, "{sev}[{}]: {}", self.code, self.message),
            Locus::Node(id) => write!(f, "{sev}[{}] node `{id}`: {}", self.code, self.message),
            Locus::Wire { from, to } => write!(
                f,
                "{sev}[{}] wire {}:{} -> {}:{}: {}",
                self.code, from.0, from.1, to.0, to.1, self.message
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("node `{node}`: unknown node kind `{kind}`")]
    UnknownKind { node: String, kind: String },
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("dangling wire from `{from}` to missing node `{to}`")]
    DanglingWire { from: String, to: String },
    #[error("flow failed validation:\n{}", render(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowDoc {
    nodes: Vec<NodeDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    flow: Option<String>,
    #[serde(default)]
    config: Map<String, Value>,
    #[serde(default)]
    wires: Vec<Vec<(String, usize)>>,
    #[serde(default = "yes")]
    enabled: bool,
}

fn yes() -> bool {
    true
}

/// Parses a flow document, filling config defaults where the config decodes.
///
/// Structural problems (syntax, unknown kinds, duplicate ids, wires to
/// missing nodes) are errors; config and port problems are left for
/// [`validate_graph`].
pub fn parse_flow(text: &str) -> Result<FlowGraph, FlowError> {
    let doc: FlowDoc = serde_json::from_str(text).map_err(|e| FlowError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut seen = BTreeSet::new();
    let mut graph = FlowGraph::default();
    for n in &doc.nodes {
        if !seen.insert(n.id.clone()) {
            return Err(FlowError::DuplicateId(n.id.clone()));
        }
        let kind = NodeKind::from_name(&n.kind).ok_or_else(|| FlowError::UnknownKind {
            node: n.id.clone(),
            kind: n.kind.clone(),
        })?;
        let config = nodes::normalize_config(kind, &n.config).unwrap_or_else(|_| n.config.clone());
        graph.nodes.push(NodeDef {
            id: n.id.clone(),
            kind,
            config,
            enabled: n.enabled,
            flow: n.flow.clone().unwrap_or_else(|| DEFAULT_FLOW_GROUP.to_string()),
        });
    }
    for n in &doc.nodes {
        for (egress, targets) in n.wires.iter().enumerate() {
            for (to, ingress) in targets {
                if !seen.contains(to) {
                    return Err(FlowError::DanglingWire {
                        from: n.id.clone(),
                        to: to.clone(),
                    });
                }
                graph.wires.push(Wire {
                    from: (n.id.clone(), egress),
                    to: (to.clone(), *ingress),
                });
            }
        }
    }
    Ok(graph)
}

/// Parses and requires a diagnostic-free (warnings allowed) graph.
pub fn load_flow(text: &str) -> Result<FlowGraph, FlowError> {
    let g = parse_flow(text)?;
    let errors: Vec<_> = validate_graph(&g)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(g)
    } else {
        Err(FlowError::Invalid(errors))
    }
}

pub fn validate_graph(g: &FlowGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ports: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let groups = g.flow_groups();

    for n in &g.nodes {
        if !seen.insert(n.id.as_str()) {
            out.push(Diagnostic {
                severity: Severity::Error,
                locus: Locus::Node(n.id.clone()),
                code: "duplicate-id",
                message: "node id is not unique".into(),
            });
        }
        match nodes::normalize_config(n.kind, &n.config) {
            Ok(_) => {}
            Err(ConfigError::Invariant(msg)) => out.push(Diagnostic {
                severity: Severity::Error,
                locus: Locus::Node(n.id.clone()),
                code: "invariant",
                message: msg,
            }),
            Err(ConfigError::Decode(msg)) => out.push(Diagnostic {
                severity: Severity::Error,
                locus: Locus::Node(n.id.clone()),
                code: "config",
                message: msg,
            }),
        }
        ports.insert(n.id.as_str(), nodes::port_counts(n.kind, &n.config));
        for flow in nodes::referenced_flows(n.kind, &n.config) {
            if !groups.contains(flow.as_str()) {
                out.push(Diagnostic {
                    severity: Severity::Warning,
                    locus: Locus::Node(n.id.clone()),
                    code: "unknown-flow",
                    message: format!("references flow group `{flow}` with no nodes"),
                });
            }
        }
    }

    for w in &g.wires {
        let locus = || Locus::Wire {
            from: w.from.clone(),
            to: w.to.clone(),
        };
        match (ports.get(w.from.0.as_str()), ports.get(w.to.0.as_str())) {
            (Some(&(_, egress)), Some(&(ingress, _))) => {
                if w.from.1 >= egress {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        locus: locus(),
                        code: "port",
                        message: format!("egress {} not declared (node has {egress})", w.from.1),
                    });
                }
                if w.to.1 >= ingress {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        locus: locus(),
                        code: "port",
                        message: format!("ingress {} not declared (node has {ingress})", w.to.1),
                    });
                }
            }
            _ => out.push(Diagnostic {
                severity: Severity::Error,
                locus: locus(),
                code: "dangling",
                message: "wire endpoint references a missing node".into(),
            }),
        }
    }

    for component in cycles(g) {
        out.push(Diagnostic {
            severity: Severity::Error,
            locus: Locus::Node(component[0].clone()),
            code: "cycle",
            message: format!("cycle through {}", component.join(" -> ")),
        });
    }
    out
}

/// Strongly connected components that contain a cycle (Tarjan).
fn cycles(g: &FlowGraph) -> Vec<Vec<String>> {
    let index: BTreeMap<&str, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let n = g.nodes.len();
    let mut adj = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for w in &g.wires {
        if let (Some(&a), Some(&b)) = (index.get(w.from.0.as_str()), index.get(w.to.0.as_str())) {
            adj[a].push(b);
            if a == b {
                self_loop[a] = true;
            }
        }
    }

    struct Tarjan<'a> {
        adj: &'a [Vec<usize>],
        idx: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        counter: usize,
        comps: Vec<Vec<usize>>,
    }

    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.idx[v] = Some(self.counter);
            self.low[v] = self.counter;
            self.counter += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for i in 0..self.adj[v].len() {
                let w = self.adj[v][i];
                match self.idx[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(wi) if self.on_stack[w] => self.low[v] = self.low[v].min(wi),
                    _ => {}
                }
            }
            if Some(self.low[v]) == self.idx[v] {
                let mut comp = Vec::new();
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.comps.push(comp);
            }
        }
    }

    let mut t = Tarjan {
        adj: &adj,
        idx: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        counter: 0,
        comps: Vec::new(),
    };
    for v in 0..n {
        if t.idx[v].is_none() {
            t.visit(v);
        }
    }
    let mut found: Vec<Vec<String>> = t
        .comps
        .into_iter()
        .filter(|c| c.len() > 1 || self_loop[c[0]])
        .map(|c| c.into_iter().map(|i| g.nodes[i].id.clone()).collect())
        .collect();
    found.sort();
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"nodes":[
        {"id":"sensor","type":"mqtt-in","config":{"topic":"lab/temp"},"wires":[[["out",0]]]},
        {"id":"out","type":"debug"}
    ]}"#;

    #[test]
    fn minimal_graph_has_one_wire() {
        let g = parse_flow(MINIMAL).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.wires.len(), 1);
        assert!(validate_graph(&g).is_empty());
        assert_eq!(g.nodes[0].flow, DEFAULT_FLOW_GROUP);
    }

    #[test]
    fn dangling_wire_is_rejected() {
        let doc = r#"{"nodes":[{"id":"a","type":"debug","wires":[[["x9",0]]]}]}"#;
        match parse_flow(doc) {
            Err(FlowError::DanglingWire { to, .. }) => assert_eq!(to, "x9"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_flow("{\"nodes\": [\n  {\"id\": }\n]}") {
            Err(FlowError::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_and_duplicate_id() {
        let unknown = r#"{"nodes":[{"id":"a","type":"teleport"}]}"#;
        assert!(matches!(parse_flow(unknown), Err(FlowError::UnknownKind { .. })));
        let dup = r#"{"nodes":[{"id":"a","type":"debug"},{"id":"a","type":"debug"}]}"#;
        assert!(matches!(parse_flow(dup), Err(FlowError::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn cycle_yields_one_diagnostic() {
        let doc = r#"{"nodes":[
            {"id":"a","type":"rbe","wires":[[["b",0]]]},
            {"id":"b","type":"rbe","wires":[[["a",0]]]}
        ]}"#;
        let d = validate_graph(&parse_flow(doc).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "cycle");
    }

    #[test]
    fn inverted_thresholds_are_an_invariant_diagnostic() {
        let doc = r#"{"nodes":[{"id":"t","type":"threshold-check","config":{"low":10,"high":5}}]}"#;
        let d = validate_graph(&parse_flow(doc).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "invariant");
        assert!(d[0].message.contains("low ≤ high"));
    }

    #[test]
    fn unknown_config_key_is_a_diagnostic() {
        let doc = r#"{"nodes":[{"id":"t","type":"threshold-check","config":{"low":0,"high":5,"hi":3}}]}"#;
        let d = validate_graph(&parse_flow(doc).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "config");
    }

    #[test]
    fn undeclared_ports_are_flagged() {
        let doc = r#"{"nodes":[
            {"id":"a","type":"rbe","wires":[[],[["b",0]]]},
            {"id":"b","type":"debug"}
        ]}"#;
        let d = validate_graph(&parse_flow(doc).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "port");
    }

    #[test]
    fn defaults_are_filled() {
        let doc = r#"{"nodes":[{"id":"c","type":"compensate","config":{"interval":60000}}]}"#;
        let g = parse_flow(doc).unwrap();
        let cfg = &g.nodes[0].config;
        assert_eq!(cfg["historyMaxSize"], 10);
        assert_eq!(cfg["strategy"], "last");
    }
}
