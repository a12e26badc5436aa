//! Explicit and implicit contexts of a δ-PDG, plus their prompt rendering.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::delta_pdg::{DeltaPdg, VersionTag};
use crate::diff_model::StmtId;
use crate::pdg::{EdgeKind, NodeId, PdgEdge};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CompressedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub vars: BTreeSet<String>,
    pub hop_count: usize,
    /// Full node sequence of the labelling path, endpoints included.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitContext {
    pub nodes: Vec<NodeId>,
    pub direct: Vec<PdgEdge>,
    pub compressed: Vec<CompressedEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitContext {
    pub nodes: Vec<NodeId>,
    pub changed: BTreeSet<NodeId>,
    pub edges: Vec<PdgEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub node: NodeId,
    pub locus: String,
    pub version_tag: VersionTag,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRendering {
    pub text: String,
    pub node_legend: BTreeMap<String, LegendEntry>,
}

/// Either context, for rendering and export.
#[derive(Debug, Clone, Copy)]
pub enum Context<'a> {
    Explicit(&'a ExplicitContext),
    Implicit(&'a ImplicitContext),
}

fn successors(g: &DeltaPdg) -> Vec<BTreeMap<NodeId, BTreeSet<String>>> {
    let mut out = vec![BTreeMap::<NodeId, BTreeSet<String>>::new(); g.nodes.len()];
    for e in &g.edges {
        let vars = out[e.src as usize].entry(e.dst).or_default();
        if e.kind == EdgeKind::Data {
            vars.extend(e.vars.iter().cloned());
        }
    }
    out
}

pub fn extract_explicit_context(g: &DeltaPdg) -> ExplicitContext {
    let changed = g.changed_nodes();
    let direct: Vec<PdgEdge> = g
        .edges
        .iter()
        .filter(|e| changed.contains(&e.src) && changed.contains(&e.dst))
        .cloned()
        .collect();
    let linked: BTreeSet<(NodeId, NodeId)> = direct
        .iter()
        .flat_map(|e| [(e.src, e.dst), (e.dst, e.src)])
        .collect();

    let succ = successors(g);
    let mut compressed = Vec::new();
    for &src in &changed {
        // Layered search with ascending expansion: the first arrival at a node
        // carries the lexicographically smallest shortest path.
        let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut queue = VecDeque::from([src]);
        let mut seen = BTreeSet::from([src]);
        while let Some(u) = queue.pop_front() {
            if u != src && changed.contains(&u) {
                continue;
            }
            for &w in succ[u as usize].keys() {
                if seen.insert(w) {
                    parent.insert(w, u);
                    queue.push_back(w);
                }
            }
        }
        for &dst in changed.iter().filter(|&&d| d != src) {
            if linked.contains(&(src, dst)) || !parent.contains_key(&dst) {
                continue;
            }
            let mut path = vec![dst];
            while let Some(&p) = parent.get(path.last().unwrap()) {
                path.push(p);
            }
            path.reverse();
            let vars = path
                .windows(2)
                .flat_map(|w| succ[w[0] as usize][&w[1]].iter().cloned())
                .collect();
            compressed.push(CompressedEdge {
                src,
                dst,
                vars,
                hop_count: path.len() - 1,
                path,
            });
        }
    }

    ExplicitContext {
        nodes: changed.into_iter().collect(),
        direct,
        compressed,
    }
}

pub fn extract_implicit_context(g: &DeltaPdg) -> ImplicitContext {
    let changed = g.changed_nodes();
    let mut keep = changed.clone();
    for e in &g.edges {
        if changed.contains(&e.src) {
            keep.insert(e.dst);
        }
        if changed.contains(&e.dst) {
            keep.insert(e.src);
        }
    }
    let edges = g
        .edges
        .iter()
        .filter(|e| keep.contains(&e.src) && keep.contains(&e.dst))
        .cloned()
        .collect();
    ImplicitContext {
        nodes: keep.into_iter().collect(),
        changed,
        edges,
    }
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn join(vars: &BTreeSet<String>) -> String {
    vars.iter().map(String::as_str).collect::<Vec<_>>().join(",")
}

/// Label of a node in renderings: the statement id for changed nodes, `n<id>` otherwise.
pub fn node_label(id: NodeId, stmts: &BTreeMap<NodeId, StmtId>) -> String {
    match stmts.get(&id) {
        Some(s) => s.to_string(),
        None => format!("n{id}"),
    }
}

pub fn render_context(g: &DeltaPdg, ctx: Context<'_>) -> ContextRendering {
    let stmts = g.statement_of();
    let nodes: &[NodeId] = match ctx {
        Context::Explicit(c) => &c.nodes,
        Context::Implicit(c) => &c.nodes,
    };
    // δ ids already follow (file, line, version) order.
    let mut nodes = nodes.to_vec();
    nodes.sort_unstable();

    let mut text = String::new();
    let mut node_legend = BTreeMap::new();
    for &id in &nodes {
        let n = g.node(id);
        let label = node_label(id, &stmts);
        let locus = format!("{}:{}:{}", n.file, n.tag.as_str(), n.line());
        let _ = writeln!(text, "[{label}] {locus} {} {}", n.kind.as_str(), quote(&n.text));
        node_legend.insert(
            label,
            LegendEntry {
                node: id,
                locus,
                version_tag: n.tag,
                text: n.text.clone(),
            },
        );
    }

    enum Line<'a> {
        Direct(&'a PdgEdge),
        Compressed(&'a CompressedEdge),
    }
    let mut lines: Vec<((NodeId, NodeId, u8), Line<'_>)> = Vec::new();
    match ctx {
        Context::Explicit(c) => {
            lines.extend(c.direct.iter().map(|e| ((e.src, e.dst, e.kind as u8), Line::Direct(e))));
            lines.extend(c.compressed.iter().map(|e| ((e.src, e.dst, 2), Line::Compressed(e))));
        }
        Context::Implicit(c) => {
            lines.extend(c.edges.iter().map(|e| ((e.src, e.dst, e.kind as u8), Line::Direct(e))));
        }
    }
    lines.sort_by_key(|(k, _)| *k);
    for (_, line) in lines {
        match line {
            Line::Direct(e) => {
                let _ = writeln!(
                    text,
                    "{} -{}{{{}}}-> {}",
                    node_label(e.src, &stmts),
                    e.kind.as_str(),
                    join(&e.vars),
                    node_label(e.dst, &stmts)
                );
            }
            Line::Compressed(e) => {
                let _ = writeln!(
                    text,
                    "{} ~{{{}}}~> {} ({} hops)",
                    node_label(e.src, &stmts),
                    join(&e.vars),
                    node_label(e.dst, &stmts),
                    e.hop_count
                );
            }
        }
    }
    ContextRendering { text, node_legend }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::NodeKind;

    fn graph(n: usize, changed: &[NodeId], edges: &[(NodeId, NodeId, &str)]) -> DeltaPdg {
        let nodes = (0..n as NodeId)
            .map(|id| crate::delta_pdg::DeltaNode {
                id,
                tag: if changed.contains(&id) { VersionTag::AfterOnly } else { VersionTag::Both },
                file: "F.java".into(),
                before: None,
                after: Some(crate::diff_model::Locus {
                    file: "F.java".into(),
                    version: crate::diff_model::Version::After,
                    line: id + 1,
                    segment: 0,
                }),
                kind: NodeKind::Statement,
                text: format!("stmt{id};"),
            })
            .collect();
        let edges = crate::pdg::normalize_edges(edges.iter().map(|&(s, d, v)| {
            if v.is_empty() {
                PdgEdge::control(s, d)
            } else {
                PdgEdge::data(s, d, [v.to_string()])
            }
        }));
        let change_index = changed
            .iter()
            .enumerate()
            .map(|(i, &n)| (StmtId(i as u32 + 1), n))
            .collect();
        DeltaPdg {
            nodes,
            edges,
            change_index,
        }
    }

    #[test]
    fn direct_edge_suppresses_compression() {
        let g = graph(3, &[0, 1], &[(0, 1, "a"), (0, 2, "b"), (2, 1, "c")]);
        let c = extract_explicit_context(&g);
        assert_eq!(c.direct.len(), 1);
        assert!(c.compressed.is_empty());
    }

    #[test]
    fn reverse_direct_edge_also_suppresses() {
        let g = graph(3, &[0, 1], &[(1, 0, "a"), (0, 2, "b"), (2, 1, "c")]);
        assert!(extract_explicit_context(&g).compressed.is_empty());
    }

    #[test]
    fn changed_interior_blocks_channel() {
        let g = graph(4, &[0, 2, 3], &[(0, 1, "a"), (1, 2, "b"), (2, 3, "c")]);
        let c = extract_explicit_context(&g);
        assert_eq!(c.compressed.len(), 1);
        assert_eq!((c.compressed[0].src, c.compressed[0].dst), (0, 2));
    }

    #[test]
    fn shortest_then_smallest_path_labels_channel() {
        let g = graph(
            6,
            &[0, 5],
            &[(0, 2, "x"), (2, 5, "y"), (0, 1, "p"), (1, 5, "q"), (0, 3, "m"), (3, 4, "n"), (4, 5, "o")],
        );
        let c = extract_explicit_context(&g);
        assert_eq!(c.compressed[0].path, vec![0, 1, 5]);
        assert_eq!(c.compressed[0].vars, ["p", "q"].iter().map(|s| s.to_string()).collect());
        assert_eq!(c.compressed[0].hop_count, 2);
    }

    #[test]
    fn control_hops_contribute_no_vars() {
        let g = graph(3, &[0, 2], &[(0, 1, ""), (1, 2, "v")]);
        let c = extract_explicit_context(&g);
        assert_eq!(c.compressed[0].vars.len(), 1);
    }

    #[test]
    fn single_changed_node_has_no_edges() {
        let g = graph(3, &[1], &[(0, 1, "a"), (1, 2, "b")]);
        let c = extract_explicit_context(&g);
        assert_eq!(c.nodes, vec![1]);
        assert!(c.direct.is_empty() && c.compressed.is_empty());
    }

    #[test]
    fn isolated_changed_node_implicit_context_is_itself() {
        let g = graph(3, &[1], &[(0, 2, "a")]);
        assert_eq!(extract_implicit_context(&g).nodes, vec![1]);
    }

    #[test]
    fn star_center_retains_all_leaves() {
        let g = graph(5, &[0], &[(0, 1, "a"), (2, 0, "b"), (0, 3, ""), (4, 0, "")]);
        assert_eq!(extract_implicit_context(&g).nodes, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rendering_without_edges_lists_nodes_only() {
        let g = graph(2, &[0, 1], &[]);
        let r = render_context(&g, Context::Explicit(&extract_explicit_context(&g)));
        assert_eq!(r.text.lines().count(), 2);
        assert!(r.text.lines().all(|l| l.starts_with('[')));
        assert_eq!(r.node_legend.len(), 2);
    }

    #[test]
    fn rendering_escapes_quotes() {
        let mut g = graph(1, &[0], &[]);
        g.nodes[0].text = "s = \"a\";".into();
        let r = render_context(&g, Context::Implicit(&extract_implicit_context(&g)));
        assert_eq!(r.text, "[s1] F.java:after:1 statement \"s = \\\"a\\\";\"\n");
    }
}
