//! Language front ends.
//!
//! A front end turns one source file into statement segments plus the facts
//! the dependency graph needs: identifier def/use sets, the innermost
//! governing predicate of each segment and its enclosing declaration.
//! Everything downstream of this module is language-agnostic.
//!
//! Segment boundaries are a pure function of the line text (see
//! [`split_line`]), so an unchanged line always segments identically in the
//! before and after versions of a file. The grammar-backed analysis only
//! classifies segments and attaches facts to them.

mod java;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use java::JavaFrontEnd;

/// Coarse segment classification exposed by [`segment_statements`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Statement,
    Predicate,
    Comment,
}

/// Graph-level node classification; `Decl` covers type, member, import and
/// package declarations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Statement,
    Predicate,
    Comment,
    Decl,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Statement => "statement",
            NodeKind::Predicate => "predicate",
            NodeKind::Comment => "comment",
            NodeKind::Decl => "decl",
        }
    }

    pub fn segment_kind(self) -> SegmentKind {
        match self {
            NodeKind::Predicate => SegmentKind::Predicate,
            NodeKind::Comment => SegmentKind::Comment,
            NodeKind::Statement | NodeKind::Decl => SegmentKind::Statement,
        }
    }
}

/// One statement-level unit of a source line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// 1-based line number.
    pub line: u32,
    /// 0-based position among the segments of the same line.
    pub index: u32,
    pub text: String,
    pub kind: SegmentKind,
}

/// Where a segment lives for the purpose of data-flow analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    /// Inside the function with this index into [`SourceAnalysis::functions`].
    Function(usize),
    /// A type body outside of any function (fields, enum constants, headers).
    TypeBody,
}

/// A segment together with the facts a front end derived for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentFacts {
    pub segment: Segment,
    pub byte_range: Range<usize>,
    pub node_kind: NodeKind,
    /// Names assigned by this segment.
    pub defs: BTreeSet<String>,
    /// Names read by this segment.
    pub uses: BTreeSet<String>,
    /// Names read through a member access (`obj.name`); they never resolve to locals.
    pub member_uses: BTreeSet<String>,
    /// Field, constant and type names declared by this segment.
    pub declares: BTreeSet<String>,
    /// Index of the segment holding the innermost governing predicate.
    pub governor: Option<usize>,
    /// Index of the segment holding the innermost enclosing declaration header.
    pub container: Option<usize>,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub name: String,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, Default)]
pub struct SourceAnalysis {
    pub segments: Vec<SegmentFacts>,
    /// Index 0 is always the file-level pseudo function for top-level statements.
    pub functions: Vec<FunctionSpan>,
    /// Set when the grammar could not parse the file; facts are then empty.
    pub degraded: bool,
}

/// Result of [`segment_statements`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub degraded: bool,
}

pub trait FrontEnd: Send + Sync {
    fn id(&self) -> &str;
    fn analyze(&self, source: &str) -> SourceAnalysis;
}

/// Line-per-statement front end for files no grammar is registered for.
#[derive(Debug, Default, Clone, Copy)]
pub struct PlainTextFrontEnd;

impl FrontEnd for PlainTextFrontEnd {
    fn id(&self) -> &str {
        "text"
    }

    fn analyze(&self, source: &str) -> SourceAnalysis {
        lexical_analysis(source, false)
    }
}

/// Maps front-end ids and file extensions onto front ends.
#[derive(Clone)]
pub struct FrontEndRegistry {
    by_id: BTreeMap<String, Arc<dyn FrontEnd>>,
    by_extension: BTreeMap<String, String>,
    fallback: Option<String>,
}

impl std::fmt::Debug for FrontEndRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrontEndRegistry")
            .field("ids", &self.by_id.keys().collect::<Vec<_>>())
            .field("by_extension", &self.by_extension)
            .field("fallback", &self.fallback)
            .finish()
    }
}

impl FrontEndRegistry {
    pub fn empty() -> Self {
        Self {
            by_id: BTreeMap::new(),
            by_extension: BTreeMap::new(),
            fallback: None,
        }
    }

    /// Java for `.java` files, plain text for everything else.
    pub fn with_defaults() -> Self {
        let mut registry = Self::empty();
        registry.register(Arc::new(JavaFrontEnd), &["java"]);
        registry.register(Arc::new(PlainTextFrontEnd), &[]);
        registry.fallback = Some("text".to_string());
        registry
    }

    pub fn register(&mut self, front_end: Arc<dyn FrontEnd>, extensions: &[&str]) {
        let id = front_end.id().to_string();
        for ext in extensions {
            self.by_extension.insert(ext.to_string(), id.clone());
        }
        self.by_id.insert(id, front_end);
    }

    pub fn set_fallback(&mut self, id: Option<&str>) {
        self.fallback = id.map(str::to_string);
    }

    pub fn get(&self, id: &str) -> Result<&dyn FrontEnd> {
        self.by_id
            .get(id)
            .map(|f| f.as_ref())
            .ok_or_else(|| Error::Config(format!("no front end registered under id `{id}`")))
    }

    pub fn id_for_path(&self, path: &str) -> Result<String> {
        let ext = path.rsplit_once('.').map(|(_, ext)| ext).unwrap_or("");
        self.by_extension
            .get(ext)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| Error::Config(format!("no front end registered for `{path}`")))
    }

    pub fn for_path(&self, path: &str) -> Result<&dyn FrontEnd> {
        let id = self.id_for_path(path)?;
        self.get(&id)
    }
}

impl Default for FrontEndRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

/// Splits `source` into statement segments using the front end registered as `front_end`.
pub fn segment_statements(
    source: &str,
    front_end: &str,
    registry: &FrontEndRegistry,
) -> Result<Segmentation> {
    let analysis = registry.get(front_end)?.analyze(source);
    Ok(Segmentation {
        segments: analysis.segments.into_iter().map(|f| f.segment).collect(),
        degraded: analysis.degraded,
    })
}

/// Byte ranges (relative to `line`) of the statement segments on one line.
///
/// Lines starting like a comment form a single segment. Otherwise the line
/// is cut after every `;` outside brackets and string literals, and a
/// trailing `//` comment becomes its own segment. Surrounding whitespace is
/// trimmed from every range; blank lines yield nothing.
pub fn split_line(line: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let trimmed = line.trim_start();
    if trimmed.trim_end().is_empty() {
        return out;
    }
    if trimmed.starts_with("//") || trimmed.starts_with("/*") || trimmed.starts_with('*') {
        push_trimmed(line, 0..line.len(), &mut out);
        return out;
    }

    let bytes = line.as_bytes();
    let mut start = 0;
    let mut depth: i32 = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            q @ (b'"' | b'\'') => {
                i += 1;
                while i < bytes.len() && bytes[i] != q {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                push_trimmed(line, start..i, &mut out);
                push_trimmed(line, i..bytes.len(), &mut out);
                return out;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i += 1;
            }
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            b';' if depth <= 0 => {
                push_trimmed(line, start..i + 1, &mut out);
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    push_trimmed(line, start..bytes.len(), &mut out);
    out
}

fn push_trimmed(line: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let end = range.end.min(line.len());
    if range.start >= end {
        return;
    }
    let piece = &line[range.start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trail = piece.len() - piece.trim_end().len();
    if lead + trail < piece.len() {
        out.push(range.start + lead..end - trail);
    }
}

/// Segments every line of `source`, returning file-absolute byte ranges.
pub(crate) fn segment_ranges(source: &str) -> Vec<(Segment, Range<usize>)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (idx, raw_line) in source.split_inclusive('\n').enumerate() {
        let line = raw_line.trim_end_matches(['\n', '\r']);
        for (index, range) in split_line(line).into_iter().enumerate() {
            let text = line[range.clone()].to_string();
            let kind = if looks_like_comment(&text) {
                SegmentKind::Comment
            } else {
                SegmentKind::Statement
            };
            out.push((
                Segment {
                    line: idx as u32 + 1,
                    index: index as u32,
                    text,
                    kind,
                },
                offset + range.start..offset + range.end,
            ));
        }
        offset += raw_line.len();
    }
    out
}

fn looks_like_comment(text: &str) -> bool {
    text.starts_with("//") || text.starts_with("/*") || text.starts_with('*')
}

/// Fact-free analysis used by the plain-text front end and for files a
/// grammar failed to parse.
pub(crate) fn lexical_analysis(source: &str, degraded: bool) -> SourceAnalysis {
    let line_count = source.lines().count() as u32;
    let segments = segment_ranges(source)
        .into_iter()
        .map(|(segment, byte_range)| SegmentFacts {
            node_kind: match segment.kind {
                SegmentKind::Comment => NodeKind::Comment,
                _ => NodeKind::Statement,
            },
            segment,
            byte_range,
            defs: BTreeSet::new(),
            uses: BTreeSet::new(),
            member_uses: BTreeSet::new(),
            declares: BTreeSet::new(),
            governor: None,
            container: None,
            scope: Scope::Function(0),
        })
        .collect();
    SourceAnalysis {
        segments,
        functions: vec![FunctionSpan {
            name: "<top-level>".to_string(),
            start_line: 1,
            end_line: line_count.max(1),
        }],
        degraded,
    }
}
