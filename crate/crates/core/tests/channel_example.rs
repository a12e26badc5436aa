use std::collections::BTreeSet;

use untangle_core::contexts::{extract_explicit_context, extract_implicit_context, render_context, Context};
use untangle_core::delta_pdg::{build_delta_pdg, DeltaPdg, VersionTag};
use untangle_core::diff_model::{parse_unified_diff, Version};
use untangle_core::fixtures::channel_commit;
use untangle_core::frontend::FrontEndRegistry;
use untangle_core::pdg::build_pdg;

fn example() -> DeltaPdg {
    let registry = FrontEndRegistry::with_defaults();
    let (commit, diff) = channel_commit();
    let changes = parse_unified_diff(&diff, &commit, &registry).unwrap();
    let before = build_pdg(&commit.files, Version::Before, &registry).unwrap();
    let after = build_pdg(&commit.files, Version::After, &registry).unwrap();
    build_delta_pdg(&before, &after, &changes.alignment, &changes).unwrap()
}

fn line_of(g: &DeltaPdg, id: u32) -> (VersionTag, u32) {
    let n = g.node(id);
    (n.tag, n.line())
}

#[test]
fn fused_graph_duplicates_lines_two_and_six() {
    let g = example();
    let mut changed: Vec<_> = g.changed_nodes().iter().map(|&n| line_of(&g, n)).collect();
    changed.sort();
    assert_eq!(
        changed,
        vec![
            (VersionTag::BeforeOnly, 2),
            (VersionTag::BeforeOnly, 6),
            (VersionTag::AfterOnly, 2),
            (VersionTag::AfterOnly, 6),
        ]
    );
    let gray: BTreeSet<u32> = g
        .nodes
        .iter()
        .filter(|n| n.tag == VersionTag::Both)
        .map(|n| n.line())
        .collect();
    assert_eq!(gray, [1, 3, 4, 5, 7, 8, 9].into_iter().collect());
}

#[test]
fn explicit_context_has_single_channel_through_four_and_five() {
    let g = example();
    let ctx = extract_explicit_context(&g);
    assert_eq!(ctx.nodes.len(), 4);
    assert!(ctx.direct.is_empty());
    assert_eq!(ctx.compressed.len(), 1);
    let c = &ctx.compressed[0];
    assert_eq!(line_of(&g, c.src), (VersionTag::AfterOnly, 2));
    assert_eq!(line_of(&g, c.dst), (VersionTag::AfterOnly, 6));
    let interior: Vec<u32> = c.path[1..c.path.len() - 1].iter().map(|&n| g.node(n).line()).collect();
    assert_eq!(interior, vec![4, 5]);
    assert_eq!(c.hop_count, 3);
    let vars: BTreeSet<&str> = c.vars.iter().map(String::as_str).collect();
    assert_eq!(vars, ["half", "limit", "size"].into_iter().collect());
}

#[test]
fn implicit_context_excludes_line_nine() {
    let g = example();
    let ctx = extract_implicit_context(&g);
    let lines: BTreeSet<u32> = ctx.nodes.iter().map(|&n| g.node(n).line()).collect();
    assert_eq!(lines, (1..=8).collect());
    assert!(g.nodes.iter().any(|n| n.line() == 9));
}

#[test]
fn explicit_rendering_is_frozen() {
    let g = example();
    let ctx = extract_explicit_context(&g);
    let r = render_context(&g, Context::Explicit(&ctx));
    let expected = "\
[s1] Totals.java:before:2 statement \"int count = items.size();\"
[s3] Totals.java:after:2 statement \"int size = items.size();\"
[s2] Totals.java:before:6 statement \"total = total + step;\"
[s4] Totals.java:after:6 statement \"total = total + limit;\"
s3 ~{half,limit,size}~> s4 (3 hops)
";
    assert_eq!(r.text, expected);
    assert_eq!(r.node_legend.len(), 4);
    assert_eq!(render_context(&g, Context::Explicit(&ctx)), r);
}

#[test]
fn implicit_rendering_lists_every_node_and_edge_once() {
    let g = example();
    let ctx = extract_implicit_context(&g);
    let r = render_context(&g, Context::Implicit(&ctx));
    let lines: Vec<&str> = r.text.lines().collect();
    assert_eq!(lines.len(), ctx.nodes.len() + ctx.edges.len());
    assert_eq!(lines.iter().collect::<BTreeSet<_>>().len(), lines.len());
    assert!(lines.contains(&"n0 -data{total}-> s2"));
    assert!(lines.contains(&"n8 -control{}-> n9"));
}
