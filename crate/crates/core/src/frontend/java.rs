//! Reference front end for Java and Java-like curly-brace sources, backed by
//! the tree-sitter Java grammar. Bare statement snippets (no enclosing class)
//! are accepted and analysed as one file-level function.

use std::collections::BTreeSet;
use std::ops::Range;

use tree_sitter::{Node, Parser};

use super::{
    lexical_analysis, segment_ranges, FrontEnd, FunctionSpan, NodeKind, Scope, SegmentFacts,
    SegmentKind, SourceAnalysis,
};

#[derive(Debug, Default, Clone, Copy)]
pub struct JavaFrontEnd;

impl FrontEnd for JavaFrontEnd {
    fn id(&self) -> &str {
        "java"
    }

    fn analyze(&self, source: &str) -> SourceAnalysis {
        let mut parser = Parser::new();
        if parser
            .set_language(&tree_sitter_java::LANGUAGE.into())
            .is_err()
        {
            return lexical_analysis(source, true);
        }
        let Some(tree) = parser.parse(source, None) else {
            return lexical_analysis(source, true);
        };
        let root = tree.root_node();
        if root.has_error() {
            tracing::warn!("java front end: parse errors, falling back to line segmentation");
            return lexical_analysis(source, true);
        }

        let mut facts = Facts::default();
        collect(root, None, source.as_bytes(), false, &mut facts);
        assemble(source, facts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Def,
    DefUse,
    Use,
    Member,
    Declare,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DeclKind {
    Type,
    Function,
    Member,
    Inert,
}

#[derive(Debug, Default)]
struct Facts {
    identifiers: Vec<(usize, String, Role)>,
    comments: Vec<Range<usize>>,
    predicate_anchors: Vec<usize>,
    /// Governed body range and the byte that anchors its predicate.
    governed: Vec<(Range<usize>, usize)>,
    /// Declaration anchor byte, kind, and the full declaration range.
    decls: Vec<(usize, DeclKind, Range<usize>, String)>,
}

const TYPE_DECLS: &[&str] = &[
    "class_declaration",
    "interface_declaration",
    "enum_declaration",
    "record_declaration",
    "annotation_type_declaration",
];

const FUNCTION_DECLS: &[&str] = &[
    "method_declaration",
    "constructor_declaration",
    "compact_constructor_declaration",
];

fn collect(node: Node, field: Option<&str>, src: &[u8], inert: bool, facts: &mut Facts) {
    let kind = node.kind();
    let mut inert = inert;

    match kind {
        "line_comment" | "block_comment" => {
            facts.comments.push(node.byte_range());
            return;
        }
        "import_declaration" | "package_declaration" => {
            facts
                .decls
                .push((node.start_byte(), DeclKind::Inert, node.byte_range(), String::new()));
            inert = true;
        }
        "identifier" if !inert => {
            let role = identifier_role(node, field, src);
            if role != Role::Skip {
                let name = text_of(node, src);
                facts.identifiers.push((node.start_byte(), name, role));
            }
        }
        "if_statement" | "while_statement" | "do_statement" | "switch_expression"
        | "switch_statement" => {
            if let Some(cond) = node.child_by_field_name("condition") {
                let anchor = cond.start_byte();
                facts.predicate_anchors.push(anchor);
                for body_field in ["consequence", "alternative", "body"] {
                    if let Some(body) = node.child_by_field_name(body_field) {
                        facts.governed.push((body.byte_range(), anchor));
                    }
                }
            }
        }
        "for_statement" | "enhanced_for_statement" => {
            let anchor = node.start_byte();
            facts.predicate_anchors.push(anchor);
            if let Some(body) = node.child_by_field_name("body") {
                facts.governed.push((body.byte_range(), anchor));
            }
        }
        _ => {}
    }

    if TYPE_DECLS.contains(&kind) || FUNCTION_DECLS.contains(&kind) {
        if let Some(name) = node.child_by_field_name("name") {
            let decl_kind = if FUNCTION_DECLS.contains(&kind) {
                DeclKind::Function
            } else {
                DeclKind::Type
            };
            facts.decls.push((
                name.start_byte(),
                decl_kind,
                node.byte_range(),
                text_of(name, src),
            ));
        }
    } else if kind == "field_declaration" || kind == "constant_declaration" {
        if let Some(decl) = node.child_by_field_name("declarator") {
            let anchor = decl
                .child_by_field_name("name")
                .map_or(decl.start_byte(), |n| n.start_byte());
            facts
                .decls
                .push((anchor, DeclKind::Member, node.byte_range(), String::new()));
        }
    } else if kind == "enum_constant" {
        if let Some(name) = node.child_by_field_name("name") {
            facts
                .decls
                .push((name.start_byte(), DeclKind::Member, node.byte_range(), String::new()));
        }
    }

    let mut cursor = node.walk();
    if cursor.goto_first_child() {
        loop {
            let child = cursor.node();
            let child_field = cursor.field_name();
            collect(child, child_field, src, inert, facts);
            if !cursor.goto_next_sibling() {
                break;
            }
        }
    }
}

fn identifier_role(node: Node, field: Option<&str>, src: &[u8]) -> Role {
    let Some(parent) = node.parent() else {
        return Role::Use;
    };
    match (parent.kind(), field) {
        ("variable_declarator", Some("name")) => match parent.parent().map(|g| g.kind()) {
            Some("field_declaration" | "constant_declaration") => Role::Declare,
            _ => Role::Def,
        },
        (
            "formal_parameter" | "spread_parameter" | "catch_formal_parameter" | "resource"
            | "enhanced_for_statement",
            Some("name"),
        ) => Role::Def,
        ("inferred_parameters", _) => Role::Def,
        ("lambda_expression", Some("parameters")) => Role::Def,
        ("assignment_expression", Some("left")) => {
            let compound = parent
                .child_by_field_name("operator")
                .map(|op| text_of(op, src) != "=")
                .unwrap_or(false);
            if compound {
                Role::DefUse
            } else {
                Role::Def
            }
        }
        ("update_expression", _) => Role::DefUse,
        ("field_access", Some("field")) => Role::Member,
        ("enum_constant", Some("name")) => Role::Declare,
        (k, Some("name")) if TYPE_DECLS.contains(&k) => Role::Declare,
        (k, Some("name")) if FUNCTION_DECLS.contains(&k) => Role::Skip,
        ("method_invocation", Some("name")) => Role::Skip,
        ("method_reference", _) => Role::Skip,
        ("labeled_statement" | "break_statement" | "continue_statement", _) => Role::Skip,
        ("scoped_identifier" | "scoped_type_identifier", _) => Role::Skip,
        ("marker_annotation" | "annotation", Some("name")) => Role::Skip,
        ("element_value_pair", Some("key")) => Role::Skip,
        _ => Role::Use,
    }
}

fn text_of(node: Node, src: &[u8]) -> String {
    String::from_utf8_lossy(&src[node.byte_range()]).into_owned()
}

/// Index of the segment whose byte range contains `byte`.
fn segment_at(ranges: &[Range<usize>], byte: usize) -> Option<usize> {
    let idx = ranges.partition_point(|r| r.start <= byte);
    if idx == 0 {
        return None;
    }
    let candidate = idx - 1;
    ranges[candidate].contains(&byte).then_some(candidate)
}

fn assemble(source: &str, facts: Facts) -> SourceAnalysis {
    let segs = segment_ranges(source);
    let ranges: Vec<Range<usize>> = segs.iter().map(|(_, r)| r.clone()).collect();
    let line_of = |byte: usize| source[..byte].matches('\n').count() as u32 + 1;

    let mut out: Vec<SegmentFacts> = segs
        .into_iter()
        .map(|(segment, byte_range)| SegmentFacts {
            node_kind: NodeKind::Statement,
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

    // Comment classification: every non-blank byte of the segment sits in a comment.
    let mut comment_mask = vec![false; source.len()];
    for range in &facts.comments {
        for b in comment_mask[range.clone()].iter_mut() {
            *b = true;
        }
    }
    let bytes = source.as_bytes();
    let is_comment: Vec<bool> = out
        .iter()
        .map(|f| {
            f.byte_range
                .clone()
                .all(|i| comment_mask[i] || bytes[i].is_ascii_whitespace())
        })
        .collect();

    let mut has_predicate = vec![false; out.len()];
    for &anchor in &facts.predicate_anchors {
        if let Some(i) = segment_at(&ranges, anchor) {
            has_predicate[i] = true;
        }
    }

    let mut has_decl = vec![false; out.len()];
    let mut functions = vec![FunctionSpan {
        name: "<top-level>".to_string(),
        start_line: 1,
        end_line: source.lines().count().max(1) as u32,
    }];
    // (range, header segment, function index) for scope and container lookup.
    let mut containers: Vec<(Range<usize>, Option<usize>, Option<usize>)> = Vec::new();
    for (anchor, kind, range, name) in &facts.decls {
        let header = segment_at(&ranges, *anchor);
        if let Some(i) = header {
            has_decl[i] = true;
        }
        match kind {
            DeclKind::Function => {
                functions.push(FunctionSpan {
                    name: name.clone(),
                    start_line: line_of(range.start),
                    end_line: line_of(range.end.saturating_sub(1).max(range.start)),
                });
                containers.push((range.clone(), header, Some(functions.len() - 1)));
            }
            DeclKind::Type => containers.push((range.clone(), header, None)),
            DeclKind::Member | DeclKind::Inert => {}
        }
    }

    for (i, f) in out.iter_mut().enumerate() {
        f.node_kind = if is_comment[i] {
            NodeKind::Comment
        } else if has_decl[i] {
            NodeKind::Decl
        } else if has_predicate[i] {
            NodeKind::Predicate
        } else {
            NodeKind::Statement
        };
        f.segment.kind = match f.node_kind {
            NodeKind::Comment => SegmentKind::Comment,
            NodeKind::Predicate => SegmentKind::Predicate,
            _ => SegmentKind::Statement,
        };
    }

    for (byte, name, role) in facts.identifiers {
        let Some(i) = segment_at(&ranges, byte) else {
            continue;
        };
        let f = &mut out[i];
        match role {
            Role::Def => {
                f.defs.insert(name);
            }
            Role::DefUse => {
                f.uses.insert(name.clone());
                f.defs.insert(name);
            }
            Role::Use => {
                f.uses.insert(name);
            }
            Role::Member => {
                f.member_uses.insert(name);
            }
            Role::Declare => {
                f.declares.insert(name);
            }
            Role::Skip => {}
        }
    }

    for (i, f) in out.iter_mut().enumerate() {
        let start = f.byte_range.start;

        f.governor = facts
            .governed
            .iter()
            .filter(|(range, _)| range.contains(&start))
            .filter_map(|(range, anchor)| {
                segment_at(&ranges, *anchor)
                    .filter(|&g| g != i)
                    .map(|g| (range.len(), g))
            })
            .min()
            .map(|(_, g)| g);

        let enclosing = containers
            .iter()
            .filter(|(range, header, _)| range.contains(&start) && *header != Some(i))
            .min_by_key(|(range, _, _)| range.len());
        f.container = enclosing.and_then(|(_, header, _)| *header);

        // The header segment of a function belongs to that function (parameters).
        let function = containers
            .iter()
            .filter(|(range, _, func)| func.is_some() && range.contains(&start))
            .min_by_key(|(range, _, _)| range.len())
            .and_then(|(_, _, func)| *func);
        let in_type = containers
            .iter()
            .any(|(range, header, func)| func.is_none() && range.contains(&start) && *header != Some(i));
        let is_type_header = containers
            .iter()
            .any(|(_, header, func)| func.is_none() && *header == Some(i));
        f.scope = match function {
            Some(func) => Scope::Function(func),
            None if in_type || is_type_header => Scope::TypeBody,
            None => Scope::Function(0),
        };
    }

    SourceAnalysis {
        segments: out,
        functions,
        degraded: false,
    }
}
