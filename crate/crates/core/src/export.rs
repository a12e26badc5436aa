//! DOT and JSON export for graphs and contexts.
//!
//! All exports share one JSON shape (`GraphExport`), documented in
//! `docs/formats.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::contexts::{node_label, Context};
use crate::delta_pdg::{DeltaPdg, VersionTag};
use crate::pdg::{NodeId, Pdg};

pub const SCHEMA: &str = "untangle-graph/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeExport {
    pub id: String,
    pub file: String,
    pub version: String,
    pub line: u32,
    pub segment: u32,
    pub kind: String,
    pub text: String,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeExport {
    pub src: String,
    pub dst: String,
    pub kind: String,
    pub vars: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphExport {
    pub schema: String,
    pub graph: String,
    pub nodes: Vec<NodeExport>,
    pub edges: Vec<EdgeExport>,
}

impl GraphExport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("export is plain data")
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", self.graph);
        out.push_str("  node [shape=box, fontname=\"monospace\"];\n");
        for n in &self.nodes {
            let color = match n.version.as_str() {
                "before" if n.changed => "lightcoral",
                "after" if n.changed => "palegreen",
                _ => "lightgray",
            };
            let label = format!("{} {}:{}\\n{}", n.id, n.file, n.line, escape(&n.text));
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\", style=filled, fillcolor={}];",
                n.id, label, color
            );
        }
        for e in &self.edges {
            let style = match e.kind.as_str() {
                "control" => "dotted",
                "compressed" => "dashed",
                _ => "solid",
            };
            let mut label = e.vars.join(",");
            if let Some(h) = e.hop_count {
                label = format!("{label} ({h} hops)");
            }
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [style={}, label=\"{}\"];",
                e.src,
                e.dst,
                style,
                escape(&label)
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn export_pdg(pdg: &Pdg) -> GraphExport {
    let nodes = pdg
        .nodes
        .iter()
        .map(|n| NodeExport {
            id: format!("n{}", n.id),
            file: n.locus.file.clone(),
            version: pdg.version.as_str().to_string(),
            line: n.locus.line,
            segment: n.locus.segment,
            kind: n.kind.as_str().to_string(),
            text: n.text.clone(),
            changed: false,
        })
        .collect();
    let edges = pdg
        .edges
        .iter()
        .map(|e| EdgeExport {
            src: format!("n{}", e.src),
            dst: format!("n{}", e.dst),
            kind: e.kind.as_str().to_string(),
            vars: e.vars.iter().cloned().collect(),
            hop_count: None,
        })
        .collect();
    GraphExport {
        schema: SCHEMA.into(),
        graph: format!("pdg-{}", pdg.version.as_str()),
        nodes,
        edges,
    }
}

fn delta_node(g: &DeltaPdg, id: NodeId, stmts: &BTreeMap<NodeId, crate::diff_model::StmtId>) -> NodeExport {
    let n = g.node(id);
    let locus = n.after.as_ref().or(n.before.as_ref());
    NodeExport {
        id: node_label(id, stmts),
        file: n.file.clone(),
        version: n.tag.as_str().to_string(),
        line: n.line(),
        segment: locus.map(|l| l.segment).unwrap_or_default(),
        kind: n.kind.as_str().to_string(),
        text: n.text.clone(),
        changed: stmts.contains_key(&id) && n.tag != VersionTag::Both,
    }
}

fn edge(
    e: &crate::pdg::PdgEdge,
    stmts: &BTreeMap<NodeId, crate::diff_model::StmtId>,
) -> EdgeExport {
    EdgeExport {
        src: node_label(e.src, stmts),
        dst: node_label(e.dst, stmts),
        kind: e.kind.as_str().to_string(),
        vars: e.vars.iter().cloned().collect(),
        hop_count: None,
    }
}

pub fn export_delta(g: &DeltaPdg) -> GraphExport {
    let stmts = g.statement_of();
    GraphExport {
        schema: SCHEMA.into(),
        graph: "delta-pdg".into(),
        nodes: (0..g.nodes.len() as NodeId).map(|id| delta_node(g, id, &stmts)).collect(),
        edges: g.edges.iter().map(|e| edge(e, &stmts)).collect(),
    }
}

pub fn export_context(g: &DeltaPdg, ctx: Context<'_>) -> GraphExport {
    let stmts = g.statement_of();
    match ctx {
        Context::Explicit(c) => {
            let mut edges: Vec<EdgeExport> = c.direct.iter().map(|e| edge(e, &stmts)).collect();
            edges.extend(c.compressed.iter().map(|e| EdgeExport {
                src: node_label(e.src, &stmts),
                dst: node_label(e.dst, &stmts),
                kind: "compressed".into(),
                vars: e.vars.iter().cloned().collect(),
                hop_count: Some(e.hop_count),
            }));
            GraphExport {
                schema: SCHEMA.into(),
                graph: "explicit-context".into(),
                nodes: c.nodes.iter().map(|&id| delta_node(g, id, &stmts)).collect(),
                edges,
            }
        }
        Context::Implicit(c) => GraphExport {
            schema: SCHEMA.into(),
            graph: "implicit-context".into(),
            nodes: c.nodes.iter().map(|&id| delta_node(g, id, &stmts)).collect(),
            edges: c.edges.iter().map(|e| edge(e, &stmts)).collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff_model::{FilePair, Version};
    use crate::frontend::FrontEndRegistry;

    #[test]
    fn pdg_export_round_trips_through_json() {
        let files = vec![FilePair {
            path: "A.java".into(),
            before: Some("int a = 1;\nlog(\"a\" + a);\n".into()),
            after: None,
        }];
        let pdg = crate::pdg::build_pdg(&files, Version::Before, &FrontEndRegistry::with_defaults()).unwrap();
        let g = export_pdg(&pdg);
        let back: GraphExport = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert_eq!(g.edges.len(), 1);
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph \"pdg-before\""));
        assert!(dot.contains("\\\"a\\\""));
        assert!(dot.contains("\"n0\" -> \"n1\" [style=solid, label=\"a\"]"));
    }
}
