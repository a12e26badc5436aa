//! Statement-level program dependence graph of one version of a commit.
//!
//! Nodes are statement segments. Data edges come from intraprocedural,
//! branch-insensitive reaching definitions over the statement order of each
//! function, plus edges from field/enum/type declarations to every use of the
//! declared name in the same file. Control edges link each statement to the
//! predicate governing its innermost block; comments and declarations are
//! instead attached to their enclosing declaration header.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::diff_model::{FilePair, Locus, Version};
use crate::error::Result;
use crate::frontend::{FrontEndRegistry, FunctionSpan, NodeKind, Scope, SourceAnalysis};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdgNode {
    pub id: NodeId,
    pub locus: Locus,
    pub kind: NodeKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Data,
    Control,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Data => "data",
            EdgeKind::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PdgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub vars: BTreeSet<String>,
}

impl PdgEdge {
    pub fn data(src: NodeId, dst: NodeId, vars: impl IntoIterator<Item = String>) -> Self {
        Self {
            src,
            dst,
            kind: EdgeKind::Data,
            vars: vars.into_iter().collect(),
        }
    }

    pub fn control(src: NodeId, dst: NodeId) -> Self {
        Self {
            src,
            dst,
            kind: EdgeKind::Control,
            vars: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionEntry {
    pub file: String,
    pub span: FunctionSpan,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pdg {
    pub version: Version,
    pub nodes: Vec<PdgNode>,
    pub edges: Vec<PdgEdge>,
    pub function_index: Vec<FunctionEntry>,
    pub degraded_files: Vec<String>,
}

impl Pdg {
    pub fn node_by_locus(&self, locus: &Locus) -> Option<NodeId> {
        self.nodes
            .binary_search_by(|n| n.locus.cmp(locus))
            .ok()
            .map(|i| self.nodes[i].id)
    }

    pub fn node(&self, id: NodeId) -> &PdgNode {
        &self.nodes[id as usize]
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, kind: EdgeKind) -> bool {
        self.edges
            .iter()
            .any(|e| e.src == src && e.dst == dst && e.kind == kind)
    }
}

/// Def/use facts of one statement, in program order within a function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefUse {
    pub node: NodeId,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

/// Reaching definitions over a straight-line statement sequence.
///
/// Returns the data edges and, per node, the uses no earlier definition reaches.
fn reaching_definitions(nodes: &[DefUse]) -> (Vec<PdgEdge>, BTreeMap<NodeId, BTreeSet<String>>) {
    let mut last_def: BTreeMap<&str, NodeId> = BTreeMap::new();
    let mut edges: BTreeMap<(NodeId, NodeId), BTreeSet<String>> = BTreeMap::new();
    let mut unresolved: BTreeMap<NodeId, BTreeSet<String>> = BTreeMap::new();
    for node in nodes {
        for var in &node.uses {
            match last_def.get(var.as_str()) {
                Some(&def) => {
                    edges.entry((def, node.node)).or_default().insert(var.clone());
                }
                None => {
                    unresolved.entry(node.node).or_default().insert(var.clone());
                }
            }
        }
        for var in &node.defs {
            last_def.insert(var, node.node);
        }
    }
    let edges = edges
        .into_iter()
        .map(|((src, dst), vars)| PdgEdge::data(src, dst, vars))
        .collect();
    (edges, unresolved)
}

/// Data edges of one function: `d -> u` labelled with every variable whose
/// definition at `d` reaches a use at `u` with no redefinition in between.
pub fn data_dependencies(function_nodes: &[DefUse]) -> Vec<PdgEdge> {
    reaching_definitions(function_nodes).0
}

/// Control edges from each statement's innermost governing predicate.
/// Pairs are `(statement, governor)`; statements without a governor get no edge.
pub fn control_dependencies(nesting: &[(NodeId, Option<NodeId>)]) -> Vec<PdgEdge> {
    let mut edges: Vec<PdgEdge> = nesting
        .iter()
        .filter_map(|&(node, governor)| governor.filter(|&g| g != node).map(|g| PdgEdge::control(g, node)))
        .collect();
    edges.sort();
    edges
}

/// Merges edges sharing `(src, dst, kind)` by unioning their labels; output is sorted.
pub fn normalize_edges(edges: impl IntoIterator<Item = PdgEdge>) -> Vec<PdgEdge> {
    let mut merged: BTreeMap<(NodeId, NodeId, EdgeKind), BTreeSet<String>> = BTreeMap::new();
    for edge in edges {
        merged
            .entry((edge.src, edge.dst, edge.kind))
            .or_default()
            .extend(edge.vars);
    }
    merged
        .into_iter()
        .map(|((src, dst, kind), vars)| PdgEdge { src, dst, kind, vars })
        .collect()
}

/// Builds the graph of one version of the given files (files absent in that
/// version are skipped).
pub fn build_pdg(files: &[FilePair], version: Version, registry: &FrontEndRegistry) -> Result<Pdg> {
    let mut sorted: Vec<&FilePair> = files.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));

    let mut pdg = Pdg {
        version,
        nodes: Vec::new(),
        edges: Vec::new(),
        function_index: Vec::new(),
        degraded_files: Vec::new(),
    };
    let mut edges = Vec::new();
    for file in sorted {
        let Some(source) = file.side(version) else {
            continue;
        };
        let analysis = registry.for_path(&file.path)?.analyze(source);
        if analysis.degraded {
            pdg.degraded_files.push(file.path.clone());
        }
        add_file(&mut pdg, &mut edges, &file.path, version, &analysis);
    }
    pdg.edges = normalize_edges(edges);
    Ok(pdg)
}

fn add_file(pdg: &mut Pdg, edges: &mut Vec<PdgEdge>, path: &str, version: Version, analysis: &SourceAnalysis) {
    let base = pdg.nodes.len() as NodeId;
    let id_of = |i: usize| base + i as NodeId;
    for (i, facts) in analysis.segments.iter().enumerate() {
        pdg.nodes.push(PdgNode {
            id: id_of(i),
            locus: Locus {
                file: path.to_string(),
                version,
                line: facts.segment.line,
                segment: facts.segment.index,
            },
            kind: facts.node_kind,
            text: facts.segment.text.clone(),
        });
    }

    let mut unresolved: BTreeMap<NodeId, BTreeSet<String>> = BTreeMap::new();
    for (f, span) in analysis.functions.iter().enumerate() {
        let members: Vec<usize> = analysis
            .segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.scope == Scope::Function(f))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let seq: Vec<DefUse> = members
            .iter()
            .map(|&i| DefUse {
                node: id_of(i),
                defs: analysis.segments[i].defs.clone(),
                uses: analysis.segments[i].uses.clone(),
            })
            .collect();
        let (data, open) = reaching_definitions(&seq);
        edges.extend(data);
        unresolved.extend(open);
        pdg.function_index.push(FunctionEntry {
            file: path.to_string(),
            span: span.clone(),
            nodes: members.iter().map(|&i| id_of(i)).collect(),
        });
    }
    for (i, s) in analysis.segments.iter().enumerate() {
        if s.scope == Scope::TypeBody && !s.uses.is_empty() {
            unresolved.entry(id_of(i)).or_default().extend(s.uses.iter().cloned());
        }
    }

    // Declared names reach every unresolved or member use in the file.
    for (d, decl) in analysis.segments.iter().enumerate() {
        for name in &decl.declares {
            for (u, user) in analysis.segments.iter().enumerate() {
                if u == d {
                    continue;
                }
                let hit = user.member_uses.contains(name)
                    || unresolved.get(&id_of(u)).is_some_and(|open| open.contains(name));
                if hit {
                    edges.push(PdgEdge::data(id_of(d), id_of(u), [name.clone()]));
                }
            }
        }
    }

    let nesting: Vec<(NodeId, Option<NodeId>)> = analysis
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let parent = match s.node_kind {
                NodeKind::Comment | NodeKind::Decl => s.container,
                NodeKind::Statement | NodeKind::Predicate => s.governor,
            };
            (id_of(i), parent.map(id_of))
        })
        .collect();
    edges.extend(control_dependencies(&nesting));
}
