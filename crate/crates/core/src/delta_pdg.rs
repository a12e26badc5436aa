//! Fusion of the before and after graphs into one multi-version graph.
//!
//! Unchanged statements (alignment pairs) collapse into a single `both`
//! node; deleted and added statements stay separate and keep their version.
//! Every edge of either input graph survives with its endpoints rewritten,
//! and edges that both versions contribute are merged with their labels
//! unioned.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::diff_model::{ChangeKind, ChangeSet, Locus, StatementAlignment, StmtId, Version};
use crate::error::{Error, Result};
use crate::frontend::NodeKind;
use crate::pdg::{normalize_edges, EdgeKind, NodeId, Pdg, PdgEdge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VersionTag {
    BeforeOnly,
    Both,
    AfterOnly,
}

impl VersionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            VersionTag::BeforeOnly => "before",
            VersionTag::Both => "both",
            VersionTag::AfterOnly => "after",
        }
    }

    pub fn includes(self, version: Version) -> bool {
        matches!(
            (self, version),
            (VersionTag::Both, _)
                | (VersionTag::BeforeOnly, Version::Before)
                | (VersionTag::AfterOnly, Version::After)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaNode {
    pub id: NodeId,
    pub tag: VersionTag,
    pub file: String,
    pub before: Option<Locus>,
    pub after: Option<Locus>,
    pub kind: NodeKind,
    pub text: String,
}

impl DeltaNode {
    /// Line shown for the node: the after-version line unless the node only exists before.
    pub fn line(&self) -> u32 {
        self.after
            .as_ref()
            .or(self.before.as_ref())
            .map(|l| l.line)
            .unwrap_or_default()
    }

    pub fn locus_in(&self, version: Version) -> Option<&Locus> {
        match version {
            Version::Before => self.before.as_ref(),
            Version::After => self.after.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaPdg {
    pub nodes: Vec<DeltaNode>,
    pub edges: Vec<PdgEdge>,
    pub change_index: BTreeMap<StmtId, NodeId>,
}

impl DeltaPdg {
    pub fn node(&self, id: NodeId) -> &DeltaNode {
        &self.nodes[id as usize]
    }

    pub fn changed_nodes(&self) -> BTreeSet<NodeId> {
        self.change_index.values().copied().collect()
    }

    /// Statement id of each changed node.
    pub fn statement_of(&self) -> BTreeMap<NodeId, StmtId> {
        self.change_index.iter().map(|(&s, &n)| (n, s)).collect()
    }

    /// Same graph with the change index limited to `keep`.
    pub fn restricted_to(&self, keep: &BTreeSet<StmtId>) -> DeltaPdg {
        let mut out = self.clone();
        out.change_index.retain(|s, _| keep.contains(s));
        out
    }

    pub fn count(&self, tag: VersionTag) -> usize {
        self.nodes.iter().filter(|n| n.tag == tag).count()
    }

    /// Edges among the nodes present in `version`, in that version's node space.
    pub fn project(&self, version: Version) -> BTreeSet<(Locus, Locus, EdgeKind, BTreeSet<String>)> {
        self.edges
            .iter()
            .filter_map(|e| {
                let src = self.node(e.src).locus_in(version)?;
                let dst = self.node(e.dst).locus_in(version)?;
                Some((src.clone(), dst.clone(), e.kind, e.vars.clone()))
            })
            .collect()
    }
}

/// Fuses the two version graphs of one commit.
pub fn build_delta_pdg(
    before: &Pdg,
    after: &Pdg,
    alignment: &StatementAlignment,
    changes: &ChangeSet,
) -> Result<DeltaPdg> {
    let mut aligned_after: BTreeMap<&Locus, &Locus> = BTreeMap::new();
    for pair in &alignment.pairs {
        if before.node_by_locus(&pair.before).is_none() {
            return Err(Error::Consistency(format!("aligned locus {} has no node", pair.before)));
        }
        if after.node_by_locus(&pair.after).is_none() {
            return Err(Error::Consistency(format!("aligned locus {} has no node", pair.after)));
        }
        if aligned_after.insert(&pair.after, &pair.before).is_some() {
            return Err(Error::Consistency(format!("{} aligned twice", pair.after)));
        }
    }

    struct Entry {
        key: (String, u32, VersionTag, u32),
        before: Option<NodeId>,
        after: Option<NodeId>,
    }
    let mut entries = Vec::with_capacity(before.nodes.len() + after.nodes.len());
    for node in &before.nodes {
        let entry = match alignment.after_of(&node.locus) {
            Some(target) => {
                let a = after.node_by_locus(target).expect("checked above");
                Entry {
                    key: (target.file.clone(), target.line, VersionTag::Both, target.segment),
                    before: Some(node.id),
                    after: Some(a),
                }
            }
            None => Entry {
                key: (node.locus.file.clone(), node.locus.line, VersionTag::BeforeOnly, node.locus.segment),
                before: Some(node.id),
                after: None,
            },
        };
        entries.push(entry);
    }
    for node in &after.nodes {
        if !aligned_after.contains_key(&node.locus) {
            entries.push(Entry {
                key: (node.locus.file.clone(), node.locus.line, VersionTag::AfterOnly, node.locus.segment),
                before: None,
                after: Some(node.id),
            });
        }
    }
    entries.sort_by(|a, b| a.key.cmp(&b.key));

    let mut from_before: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut from_after: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(entries.len());
    for (i, entry) in entries.into_iter().enumerate() {
        let id = i as NodeId;
        let b = entry.before.map(|n| before.node(n));
        let a = entry.after.map(|n| after.node(n));
        if let Some(b) = b {
            from_before.insert(b.id, id);
        }
        if let Some(a) = a {
            from_after.insert(a.id, id);
        }
        let shown = a.or(b).expect("entry has a node");
        nodes.push(DeltaNode {
            id,
            tag: entry.key.2,
            file: shown.locus.file.clone(),
            before: b.map(|n| n.locus.clone()),
            after: a.map(|n| n.locus.clone()),
            kind: shown.kind,
            text: shown.text.clone(),
        });
    }

    let rewrite = |edges: &[PdgEdge], map: &BTreeMap<NodeId, NodeId>| -> Vec<PdgEdge> {
        edges
            .iter()
            .map(|e| PdgEdge {
                src: map[&e.src],
                dst: map[&e.dst],
                kind: e.kind,
                vars: e.vars.clone(),
            })
            .collect()
    };
    let mut edges = rewrite(&before.edges, &from_before);
    edges.extend(rewrite(&after.edges, &from_after));
    let edges = normalize_edges(edges);

    let mut change_index = BTreeMap::new();
    for stmt in &changes.statements {
        let (graph, map, expected) = match stmt.kind {
            ChangeKind::Deleted => (before, &from_before, VersionTag::BeforeOnly),
            ChangeKind::Added => (after, &from_after, VersionTag::AfterOnly),
        };
        let node = graph
            .node_by_locus(&stmt.locus())
            .and_then(|n| map.get(&n).copied())
            .ok_or_else(|| Error::Consistency(format!("{} ({}) has no graph node", stmt.id, stmt.locus())))?;
        if nodes[node as usize].tag != expected {
            return Err(Error::Consistency(format!(
                "{} ({}) is changed but aligned",
                stmt.id,
                stmt.locus()
            )));
        }
        change_index.insert(stmt.id, node);
    }

    Ok(DeltaPdg {
        nodes,
        edges,
        change_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff_model::{parse_unified_diff, CommitInput, FilePair};
    use crate::frontend::FrontEndRegistry;
    use crate::pdg::build_pdg;

    fn fuse(before: &str, after: &str, diff: &str) -> (ChangeSet, Pdg, Pdg, DeltaPdg) {
        let registry = FrontEndRegistry::with_defaults();
        let commit = CommitInput {
            commit_id: "c".into(),
            message: String::new(),
            files: vec![FilePair {
                path: "A.java".into(),
                before: Some(before.into()),
                after: Some(after.into()),
            }],
        };
        let cs = parse_unified_diff(diff, &commit, &registry).unwrap();
        let b = build_pdg(&commit.files, Version::Before, &registry).unwrap();
        let a = build_pdg(&commit.files, Version::After, &registry).unwrap();
        let g = build_delta_pdg(&b, &a, &cs.alignment, &cs).unwrap();
        (cs, b, a, g)
    }

    #[test]
    fn identical_versions_fuse_to_all_both() {
        let src = "int a = 1;\nint b = a;\nif (b > 0) {\n  log(b);\n}\n";
        let (_, b, _, g) = fuse(src, src, "");
        assert!(g.nodes.iter().all(|n| n.tag == VersionTag::Both));
        assert_eq!(g.nodes.len(), b.nodes.len());
        assert_eq!(g.edges, b.edges);
    }

    #[test]
    fn replacement_keeps_both_versions_and_preserves_edges() {
        let before = "int a = 1;\nint b = a;\nlog(b);\n";
        let after = "int a = 1;\nint b = a + 1;\nlog(b);\n";
        let diff = "--- a/A.java\n+++ b/A.java\n@@ -2 +2 @@\n-int b = a;\n+int b = a + 1;\n";
        let (cs, b, a, g) = fuse(before, after, diff);
        assert_eq!(g.nodes.len(), b.nodes.len() + a.nodes.len() - cs.alignment.len());
        assert_eq!(g.count(VersionTag::Both), cs.alignment.len());
        assert_eq!(g.change_index.len(), 2);

        for (version, pdg) in [(Version::Before, &b), (Version::After, &a)] {
            let projected = g.project(version);
            for e in &pdg.edges {
                let src = pdg.node(e.src).locus.clone();
                let dst = pdg.node(e.dst).locus.clone();
                assert!(projected.iter().any(|(s, d, k, v)| *s == src && *d == dst && *k == e.kind && e.vars.is_subset(v)));
            }
        }
    }

    #[test]
    fn shared_edges_are_merged_once() {
        let before = "int a = 1;\nlog(a);\nx();\n";
        let after = "int a = 1;\nlog(a);\ny();\n";
        let diff = "--- a/A.java\n+++ b/A.java\n@@ -3 +3 @@\n-x();\n+y();\n";
        let (_, _, _, g) = fuse(before, after, diff);
        let count = g.edges.iter().filter(|e| e.kind == EdgeKind::Data).count();
        assert_eq!(count, 1);
    }

    #[test]
    fn alignment_to_missing_node_is_consistency_error() {
        let registry = FrontEndRegistry::with_defaults();
        let files = vec![FilePair {
            path: "A.java".into(),
            before: Some("a();\n".into()),
            after: Some("a();\n".into()),
        }];
        let commit = CommitInput {
            commit_id: "c".into(),
            message: String::new(),
            files: files.clone(),
        };
        let mut cs = parse_unified_diff("", &commit, &registry).unwrap();
        cs.alignment.pairs[0].after.line = 9;
        let b = build_pdg(&files, Version::Before, &registry).unwrap();
        let a = build_pdg(&files, Version::After, &registry).unwrap();
        assert!(matches!(
            build_delta_pdg(&b, &a, &cs.alignment, &cs),
            Err(Error::Consistency(_))
        ));
    }
}
