//! Canonical sample inputs and random generators used by tests and benches.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::AtomicCommit;
use crate::delta_pdg::{DeltaNode, DeltaPdg, VersionTag};
use crate::diff_model::{CommitInput, FilePair, Locus, StmtId, Version};
use crate::frontend::NodeKind;
use crate::pdg::{normalize_edges, NodeId, PdgEdge};

pub const CHANNEL_PATH: &str = "Totals.java";

pub const CHANNEL_BEFORE: &str = "\
int total = 0;
int count = items.size();
int step = 1;
int half = size / 2;
int limit = half + 1;
total = total + step;
if (total > limit) {
    log(total);
}
";

pub const CHANNEL_AFTER: &str = "\
int total = 0;
int size = items.size();
int step = 1;
int half = size / 2;
int limit = half + 1;
total = total + limit;
if (total > limit) {
    log(total);
}
";

pub const CHANNEL_DIFF: &str = "\
--- a/Totals.java
+++ b/Totals.java
@@ -2 +2 @@
-int count = items.size();
+int size = items.size();
@@ -6 +6 @@
-total = total + step;
+total = total + limit;
";

/// Commit replacing lines 2 and 6, which are linked only through the
/// unchanged lines 4 and 5.
pub fn channel_commit() -> (CommitInput, String) {
    let commit = CommitInput {
        commit_id: "channel-example".into(),
        message: "derive limit from size".into(),
        files: vec![FilePair {
            path: CHANNEL_PATH.into(),
            before: Some(CHANNEL_BEFORE.into()),
            after: Some(CHANNEL_AFTER.into()),
        }],
    };
    (commit, CHANNEL_DIFF.into())
}

/// Random δ-PDG with `1..=max_nodes` nodes, `1..=max_changed` of them changed,
/// and arbitrary directed edges (cycles allowed).
pub fn random_delta_pdg<R: Rng>(rng: &mut R, max_nodes: usize, max_changed: usize) -> DeltaPdg {
    let n = rng.gen_range(1..=max_nodes);
    let k = rng.gen_range(1..=max_changed.min(n));
    let mut ids: Vec<NodeId> = (0..n as NodeId).collect();
    ids.shuffle(rng);
    let changed: BTreeSet<NodeId> = ids[..k].iter().copied().collect();

    let nodes = (0..n as NodeId)
        .map(|id| {
            let tag = if changed.contains(&id) {
                if rng.gen_bool(0.5) {
                    VersionTag::BeforeOnly
                } else {
                    VersionTag::AfterOnly
                }
            } else {
                VersionTag::Both
            };
            let locus = |version| Locus {
                file: "G.java".into(),
                version,
                line: id + 1,
                segment: 0,
            };
            DeltaNode {
                id,
                tag,
                file: "G.java".into(),
                before: tag.includes(Version::Before).then(|| locus(Version::Before)),
                after: tag.includes(Version::After).then(|| locus(Version::After)),
                kind: NodeKind::Statement,
                text: format!("s{id}();"),
            }
        })
        .collect();

    let density = rng.gen_range(0.05..0.35);
    let vars = ["a", "b", "c", "d"];
    let mut edges = Vec::new();
    for src in 0..n as NodeId {
        for dst in 0..n as NodeId {
            if src != dst && rng.gen_bool(density) {
                edges.push(if rng.gen_bool(0.7) {
                    PdgEdge::data(src, dst, [vars[rng.gen_range(0..vars.len())].to_string()])
                } else {
                    PdgEdge::control(src, dst)
                });
            }
        }
    }

    DeltaPdg {
        nodes,
        edges: normalize_edges(edges),
        change_index: changed
            .iter()
            .enumerate()
            .map(|(i, &node)| (StmtId(i as u32 + 1), node))
            .collect(),
    }
}

/// One generated statement with the variables it writes and reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedStatement {
    pub text: String,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

/// Random straight-line Java statement sequence of `1..=max_statements` statements.
pub fn random_straight_line<R: Rng>(rng: &mut R, max_statements: usize) -> Vec<GeneratedStatement> {
    const VARS: [&str; 5] = ["a", "b", "c", "d", "e"];
    let pick = |rng: &mut R| VARS[rng.gen_range(0..VARS.len())].to_string();
    let n = rng.gen_range(1..=max_statements);
    (0..n)
        .map(|_| {
            let x = pick(rng);
            let y = pick(rng);
            let z = pick(rng);
            let set = |v: &[&String]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
            match rng.gen_range(0..6) {
                0 => GeneratedStatement {
                    text: format!("int {x} = {y} + {z};"),
                    defs: set(&[&x]),
                    uses: set(&[&y, &z]),
                },
                1 => GeneratedStatement {
                    text: format!("{x} = {y} * 2;"),
                    defs: set(&[&x]),
                    uses: set(&[&y]),
                },
                2 => GeneratedStatement {
                    text: format!("{x} += {y};"),
                    defs: set(&[&x]),
                    uses: set(&[&x, &y]),
                },
                3 => GeneratedStatement {
                    text: format!("{x}++;"),
                    defs: set(&[&x]),
                    uses: set(&[&x]),
                },
                4 => GeneratedStatement {
                    text: format!("call({x}, {y});"),
                    defs: BTreeSet::new(),
                    uses: set(&[&x, &y]),
                },
                _ => GeneratedStatement {
                    text: format!("int {x} = {};", rng.gen_range(0..100)),
                    defs: set(&[&x]),
                    uses: BTreeSet::new(),
                },
            }
        })
        .collect()
}

/// Renders generated statements one per line, optionally inside a method body.
/// Returns the source and the line of each statement.
pub fn straight_line_source(stmts: &[GeneratedStatement], in_method: bool) -> (String, Vec<u32>) {
    let mut src = String::new();
    let mut lines = Vec::with_capacity(stmts.len());
    let offset = if in_method {
        src.push_str("void run() {\n");
        2
    } else {
        1
    };
    for (i, s) in stmts.iter().enumerate() {
        if in_method {
            src.push_str("    ");
        }
        src.push_str(&s.text);
        src.push('\n');
        lines.push(i as u32 + offset);
    }
    if in_method {
        src.push_str("}\n");
    }
    (src, lines)
}

pub const CHARSET_UTILS_BEFORE: &str = "\
public class TrialLicenseUtils {
    static byte[] encodeIssueTo(String issueTo) {
        return issueTo.getBytes(LicensesCharset.UTF_8);
    }
    static byte[] encodeFeature(String feature) {
        return feature.getBytes(LicensesCharset.UTF_8);
    }
    static int span(int start, int end) {
        return end-start;
    }
}
";

pub const CHARSET_UTILS_AFTER: &str = "\
public class TrialLicenseUtils {
    static byte[] encodeIssueTo(String issueTo) {
        return issueTo.getBytes(StandardCharsets.UTF_8);
    }
    static byte[] encodeFeature(String feature) {
        return feature.getBytes(StandardCharsets.UTF_8);
    }
    static int span(int start, int end) {
        return end - start;
    }
}
";

pub const CHARSET_SERVICE_BEFORE: &str = "\
public class LicenseService {
    private final Store store;

    LicenseService(Store store) {
        this.store = store;
    }

    int remaining(License license) {
        int days = license.days();
        return days;
    }

    boolean expired(License license) {  return remaining(license) <= 0;
    }
}
";

pub const CHARSET_SERVICE_AFTER: &str = "\
public class LicenseService {
    private final Store store;

    LicenseService(Store store) {
        this.store = store;
    }

    int remaining(License license) {
        int days = license.days();
        return days;
    }

    boolean expired(License license) { return remaining(license) <= 0;
    }
}
";

/// Two-concern commit: a charset replacement at lines 3 and 6 of one file,
/// and reformatting at line 9 of that file and line 13 of another.
/// Returns the commit, its diff, and the gold concern of each changed line.
pub fn charset_reformat_commit() -> (CommitInput, String, Vec<(String, u32, u32)>) {
    let utils = "TrialLicenseUtils.java";
    let service = "LicenseService.java";
    let commit = CommitInput {
        commit_id: "charset-reformat".into(),
        message: "remove LicensingCharset; reformat code".into(),
        files: vec![
            FilePair {
                path: service.into(),
                before: Some(CHARSET_SERVICE_BEFORE.into()),
                after: Some(CHARSET_SERVICE_AFTER.into()),
            },
            FilePair {
                path: utils.into(),
                before: Some(CHARSET_UTILS_BEFORE.into()),
                after: Some(CHARSET_UTILS_AFTER.into()),
            },
        ],
    };
    let diff = commit
        .files
        .iter()
        .map(|f| crate::diff_model::diff_file(&f.path, f.before.as_deref(), f.after.as_deref()))
        .collect();
    let gold = vec![
        (utils.to_string(), 3, 1),
        (utils.to_string(), 6, 1),
        (utils.to_string(), 9, 2),
        (service.to_string(), 13, 2),
    ];
    (commit, diff, gold)
}

const POOL_FILES: usize = 3;
const POOL_METHODS: usize = 4;

fn pool_method(f: usize, m: usize, edit: Option<(usize, u32)>) -> Vec<String> {
    let mut var = format!("v{m}");
    let mut step = 1;
    let mut logged = false;
    match edit {
        Some((0, k)) => var = format!("v{m}r{k}"),
        Some((1, k)) => step = k + 2,
        Some((_, _)) => logged = true,
        None => {}
    }
    let mut body = vec![
        format!("    int m{m}(int p) {{"),
        format!("        int {var} = p + {step};"),
        format!("        int w = {var} * {};", f + 2),
        format!("        int z = w - {var};"),
    ];
    if logged {
        body.push("        log(z);".to_string());
    }
    body.push("        return z;".to_string());
    body.push("    }".to_string());
    body
}

fn pool_file(f: usize, edited: Option<(usize, usize, u32)>) -> String {
    let mut lines = vec![format!("public class Svc{f} {{")];
    for m in 0..POOL_METHODS {
        if m > 0 {
            lines.push(String::new());
        }
        let edit = edited.filter(|e| e.0 == m).map(|e| (e.1, e.2));
        lines.extend(pool_method(f, m, edit));
    }
    lines.push("}".to_string());
    lines.iter().map(|l| format!("{l}\n")).collect()
}

/// Atomic commits over one shared base of three small Java classes.
///
/// Each commit edits one method: it renames the method's first local, changes
/// its initial step, or logs its result. Commits that pick the same method
/// conflict when tangled.
pub fn synthetic_pool<R: Rng>(rng: &mut R, repo: &str, commits: usize) -> Vec<AtomicCommit> {
    (0..commits)
        .map(|i| {
            let f = rng.gen_range(0..POOL_FILES);
            let m = rng.gen_range(0..POOL_METHODS);
            let kind = rng.gen_range(0..3);
            let path = format!("src/svc/Svc{f}.java");
            let commit = CommitInput {
                commit_id: format!("{repo}-{i:03}"),
                message: ["rename local", "adjust step", "log result"][kind].to_string(),
                files: vec![FilePair {
                    path,
                    before: Some(pool_file(f, None)),
                    after: Some(pool_file(f, Some((m, kind, i as u32)))),
                }],
            };
            AtomicCommit::new(commit, repo, Some(1_700_000_000 + 600 * i as i64)).expect("pool commits change code")
        })
        .collect()
}
