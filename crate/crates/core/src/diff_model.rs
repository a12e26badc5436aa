//! Statement-level change model of a commit.
//!
//! A commit arrives as before/after snapshots of the touched files plus a
//! unified diff. [`parse_unified_diff`] checks the diff against the
//! snapshots, segments both versions into statements and produces a
//! [`ChangeSet`]: the changed statements (the atoms that get clustered) and
//! the alignment of every unchanged statement across the two versions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{FrontEndRegistry, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePair {
    pub path: String,
    pub before: Option<String>,
    pub after: Option<String>,
}

impl FilePair {
    pub fn side(&self, version: Version) -> Option<&str> {
        match version {
            Version::Before => self.before.as_deref(),
            Version::After => self.after.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitInput {
    pub commit_id: String,
    pub message: String,
    pub files: Vec<FilePair>,
}

impl CommitInput {
    pub fn validate(&self) -> Result<()> {
        if self.files.is_empty() {
            return Err(Error::Input(format!("commit {} has no files", self.commit_id)));
        }
        let mut seen = BTreeSet::new();
        for file in &self.files {
            if file.before.is_none() && file.after.is_none() {
                return Err(Error::Input(format!("{} is absent on both sides", file.path)));
            }
            if !seen.insert(file.path.as_str()) {
                return Err(Error::Input(format!("{} listed twice", file.path)));
            }
        }
        Ok(())
    }

    pub fn file(&self, path: &str) -> Option<&FilePair> {
        self.files.iter().find(|f| f.path == path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Version {
    Before,
    After,
}

impl Version {
    pub fn as_str(self) -> &'static str {
        match self {
            Version::Before => "before",
            Version::After => "after",
        }
    }
}

impl FromStr for Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "before" | "old" => Ok(Version::Before),
            "after" | "new" => Ok(Version::After),
            other => Err(Error::Input(format!("unknown version `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Deleted,
}

/// Stable short statement id, rendered as `s<N>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId(pub u32);

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl FromStr for StmtId {
    type Err = Error;

    /// Accepts `s7`, `S7`, `7`, and ids followed by decoration such as `s7 (A.java:after:3)`.
    fn from_str(s: &str) -> Result<Self> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"^\s*[sS]?(\d+)\b").expect("valid regex"));
        re.captures(s)
            .and_then(|c| c[1].parse().ok())
            .map(StmtId)
            .ok_or_else(|| Error::Input(format!("not a statement id: `{s}`")))
    }
}

impl Serialize for StmtId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StmtId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Position of one statement segment in one version of a file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Locus {
    pub file: String,
    pub version: Version,
    pub line: u32,
    #[serde(default)]
    pub segment: u32,
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.version.as_str(), self.line)?;
        if self.segment > 0 {
            write!(f, "#{}", self.segment)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedStatement {
    pub id: StmtId,
    pub file: String,
    pub version: Version,
    pub line: u32,
    pub segment: u32,
    pub text: String,
    pub kind: ChangeKind,
    pub is_comment: bool,
}

impl ChangedStatement {
    pub fn locus(&self) -> Locus {
        Locus {
            file: self.file.clone(),
            version: self.version,
            line: self.line,
            segment: self.segment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub before: Locus,
    pub after: Locus,
}

/// Injective map from unchanged before-statements to their after-statements.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementAlignment {
    pub pairs: Vec<AlignedPair>,
}

impl StatementAlignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn after_of(&self, before: &Locus) -> Option<&Locus> {
        self.pairs
            .binary_search_by(|p| p.before.cmp(before))
            .ok()
            .map(|i| &self.pairs[i].after)
    }
}

/// Line-level view of one file's edit, kept so the change set can be rendered back to a diff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub deleted_lines: BTreeSet<u32>,
    pub added_lines: BTreeSet<u32>,
    /// Unchanged lines as (before line, after line).
    pub line_alignment: Vec<(u32, u32)>,
}

impl FileChange {
    pub fn is_modified(&self) -> bool {
        !self.deleted_lines.is_empty() || !self.added_lines.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub commit: CommitInput,
    pub statements: Vec<ChangedStatement>,
    pub alignment: StatementAlignment,
    pub files: Vec<FileChange>,
}

impl ChangeSet {
    pub fn ids(&self) -> Vec<StmtId> {
        self.statements.iter().map(|s| s.id).collect()
    }

    pub fn statement(&self, id: StmtId) -> Option<&ChangedStatement> {
        self.statements.iter().find(|s| s.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Drops comment statements, keeping the ids of everything else.
    pub fn without_comments(&self) -> ChangeSet {
        let mut out = self.clone();
        out.statements.retain(|s| !s.is_comment);
        out
    }

    /// Paths of files with at least one changed line.
    pub fn modified_paths(&self) -> BTreeSet<&str> {
        self.files
            .iter()
            .filter(|f| f.is_modified())
            .map(|f| f.path.as_str())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Unified diff syntax

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Removed(String),
    Added(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: u32,
    pub old_len: u32,
    pub new_start: u32,
    pub new_len: u32,
    pub lines: Vec<HunkLine>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilePatch {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FilePatch {
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or_default()
    }
}

fn hunk_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").expect("valid regex")
    })
}

fn header_path(raw: &str) -> Option<String> {
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    if raw == "/dev/null" {
        return None;
    }
    let stripped = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(stripped.to_string())
}

/// Parses unified diff text into per-file patches. Line numbers in errors are 1-based.
pub fn parse_patch(text: &str) -> Result<Vec<FilePatch>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut patches = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(old) = line.strip_prefix("--- ") {
            let Some(new) = lines.get(i + 1).and_then(|l| l.strip_prefix("+++ ")) else {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "expected `+++` header after `---`".into(),
                });
            };
            let mut patch = FilePatch {
                old_path: header_path(old),
                new_path: header_path(new),
                hunks: Vec::new(),
            };
            i += 2;
            while i < lines.len() && lines[i].starts_with("@@") {
                let (hunk, next) = parse_hunk(&lines, i)?;
                patch.hunks.push(hunk);
                i = next;
            }
            patches.push(patch);
            continue;
        }
        if line.starts_with("@@") {
            return Err(Error::Parse {
                line: i + 1,
                message: "hunk outside of a file section".into(),
            });
        }
        if line.starts_with("Binary files") {
            return Err(Error::Input(format!("binary diff at line {}", i + 1)));
        }
        i += 1;
    }
    Ok(patches)
}

fn parse_hunk(lines: &[&str], at: usize) -> Result<(Hunk, usize)> {
    let header = lines[at];
    let caps = hunk_header_re().captures(header).ok_or_else(|| Error::Parse {
        line: at + 1,
        message: format!("malformed hunk header `{header}`"),
    })?;
    let num = |idx: usize| -> u32 {
        caps.get(idx)
            .map_or(1, |m| m.as_str().parse().unwrap_or(u32::MAX))
    };
    let mut hunk = Hunk {
        old_start: num(1),
        old_len: num(2),
        new_start: num(3),
        new_len: num(4),
        lines: Vec::new(),
    };
    let (mut old_left, mut new_left) = (hunk.old_len, hunk.new_len);
    let mut i = at + 1;
    while old_left > 0 || new_left > 0 {
        let Some(&line) = lines.get(i) else {
            return Err(Error::Parse {
                line: i + 1,
                message: "unexpected end of diff inside hunk".into(),
            });
        };
        let (tag, body) = match line.chars().next() {
            Some(c @ (' ' | '-' | '+' | '\\')) => (c, &line[1..]),
            None => (' ', ""),
            Some(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "hunk shorter than its header declares".into(),
                })
            }
        };
        match tag {
            ' ' if old_left > 0 && new_left > 0 => {
                old_left -= 1;
                new_left -= 1;
                hunk.lines.push(HunkLine::Context(body.to_string()));
            }
            '-' if old_left > 0 => {
                old_left -= 1;
                hunk.lines.push(HunkLine::Removed(body.to_string()));
            }
            '+' if new_left > 0 => {
                new_left -= 1;
                hunk.lines.push(HunkLine::Added(body.to_string()));
            }
            '\\' => {}
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "hunk body does not match its header counts".into(),
                })
            }
        }
        i += 1;
    }
    while lines.get(i).is_some_and(|l| l.starts_with('\\')) {
        i += 1;
    }
    Ok((hunk, i))
}

// ---------------------------------------------------------------------------
// Change-set construction

fn source_lines(text: Option<&str>) -> Vec<&str> {
    text.map(|t| t.lines().map(|l| l.trim_end_matches('\r')).collect())
        .unwrap_or_default()
}

/// Applies the patch's hunks to the line model of `file`, checking every
/// context and removed line against the before snapshot.
fn line_change(file: &FilePair, patch: Option<&FilePatch>) -> Result<FileChange> {
    let before = source_lines(file.before.as_deref());
    let after = source_lines(file.after.as_deref());
    let mut change = FileChange {
        path: file.path.clone(),
        deleted_lines: BTreeSet::new(),
        added_lines: BTreeSet::new(),
        line_alignment: Vec::new(),
    };
    let mismatch = |what: &str, line: u32| {
        Error::Input(format!("{}: diff does not match {what} snapshot at line {line}", file.path))
    };

    let (mut o, mut n) = (1u32, 1u32);
    let hunks = patch.map(|p| p.hunks.as_slice()).unwrap_or_default();
    if let Some(p) = patch {
        if p.old_path.is_none() && file.before.is_some() {
            return Err(Error::Input(format!("{}: diff creates a file that exists", file.path)));
        }
        if p.new_path.is_none() && file.after.is_some() {
            return Err(Error::Input(format!("{}: diff deletes a file that exists", file.path)));
        }
    }
    for hunk in hunks {
        let first_old = if hunk.old_len == 0 { hunk.old_start + 1 } else { hunk.old_start };
        let first_new = if hunk.new_len == 0 { hunk.new_start + 1 } else { hunk.new_start };
        if first_old < o || first_new < n || first_old - o != first_new - n {
            return Err(Error::Input(format!(
                "{}: hunk @@ -{},{} +{},{} @@ is out of order or offset-inconsistent",
                file.path, hunk.old_start, hunk.old_len, hunk.new_start, hunk.new_len
            )));
        }
        while o < first_old {
            align(&before, &after, o, n, &mut change).map_err(|_| mismatch("before/after", o))?;
            o += 1;
            n += 1;
        }
        for line in &hunk.lines {
            match line {
                HunkLine::Context(text) => {
                    if before.get(o as usize - 1) != Some(&text.as_str()) {
                        return Err(mismatch("before", o));
                    }
                    if after.get(n as usize - 1) != Some(&text.as_str()) {
                        return Err(mismatch("after", n));
                    }
                    change.line_alignment.push((o, n));
                    o += 1;
                    n += 1;
                }
                HunkLine::Removed(text) => {
                    if before.get(o as usize - 1) != Some(&text.as_str()) {
                        return Err(mismatch("before", o));
                    }
                    change.deleted_lines.insert(o);
                    o += 1;
                }
                HunkLine::Added(text) => {
                    if after.get(n as usize - 1) != Some(&text.as_str()) {
                        return Err(mismatch("after", n));
                    }
                    change.added_lines.insert(n);
                    n += 1;
                }
            }
        }
    }
    let (b_len, a_len) = (before.len() as u32, after.len() as u32);
    if b_len + 1 - o != a_len + 1 - n {
        return Err(Error::Input(format!(
            "{}: trailing unchanged regions differ in length",
            file.path
        )));
    }
    while o <= b_len {
        align(&before, &after, o, n, &mut change).map_err(|_| mismatch("before/after", o))?;
        o += 1;
        n += 1;
    }
    Ok(change)
}

fn align(before: &[&str], after: &[&str], o: u32, n: u32, change: &mut FileChange) -> Result<(), ()> {
    if before.get(o as usize - 1) != after.get(n as usize - 1) {
        return Err(());
    }
    change.line_alignment.push((o, n));
    Ok(())
}

/// Builds the statement-level change model of a commit.
///
/// `diff_text` must only mention paths present in `commit.files`; files the
/// diff does not mention must be identical on both sides.
pub fn parse_unified_diff(
    diff_text: &str,
    commit: &CommitInput,
    registry: &FrontEndRegistry,
) -> Result<ChangeSet> {
    commit.validate()?;
    let patches = parse_patch(diff_text)?;
    let mut by_path: BTreeMap<&str, &FilePatch> = BTreeMap::new();
    for patch in &patches {
        let path = patch.path();
        if commit.file(path).is_none() {
            return Err(Error::Input(format!("diff mentions unknown path `{path}`")));
        }
        if by_path.insert(path, patch).is_some() {
            return Err(Error::Input(format!("diff mentions `{path}` twice")));
        }
    }

    let mut files: Vec<&FilePair> = commit.files.iter().collect();
    files.sort_by(|a, b| a.path.cmp(&b.path));

    let mut statements = Vec::new();
    let mut pairs = Vec::new();
    let mut changes = Vec::new();
    for file in files {
        let change = line_change(file, by_path.get(file.path.as_str()).copied())?;
        let front_end = registry.for_path(&file.path)?;
        let segs = |version: Version| {
            file.side(version)
                .map(|src| front_end.analyze(src).segments)
                .unwrap_or_default()
        };
        let before_segs = segs(Version::Before);
        let after_segs = segs(Version::After);

        for (version, segments, lines, kind) in [
            (Version::Before, &before_segs, &change.deleted_lines, ChangeKind::Deleted),
            (Version::After, &after_segs, &change.added_lines, ChangeKind::Added),
        ] {
            for facts in segments.iter().filter(|f| lines.contains(&f.segment.line)) {
                statements.push(ChangedStatement {
                    id: StmtId(0),
                    file: file.path.clone(),
                    version,
                    line: facts.segment.line,
                    segment: facts.segment.index,
                    text: facts.segment.text.clone(),
                    kind,
                    is_comment: facts.node_kind == NodeKind::Comment,
                });
            }
        }

        let mut after_by_line: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for f in &after_segs {
            after_by_line.entry(f.segment.line).or_default().push(f.segment.index);
        }
        let line_map: BTreeMap<u32, u32> = change.line_alignment.iter().copied().collect();
        for f in &before_segs {
            let Some(&after_line) = line_map.get(&f.segment.line) else {
                continue;
            };
            let after_idx = after_by_line
                .get(&after_line)
                .and_then(|v| v.get(f.segment.index as usize))
                .ok_or_else(|| {
                    Error::Consistency(format!(
                        "{}: unchanged line {} segments differently across versions",
                        file.path, f.segment.line
                    ))
                })?;
            pairs.push(AlignedPair {
                before: Locus {
                    file: file.path.clone(),
                    version: Version::Before,
                    line: f.segment.line,
                    segment: f.segment.index,
                },
                after: Locus {
                    file: file.path.clone(),
                    version: Version::After,
                    line: after_line,
                    segment: *after_idx,
                },
            });
        }
        changes.push(change);
    }

    statements.sort_by(|a, b| {
        (&a.file, a.version, a.line, a.segment).cmp(&(&b.file, b.version, b.line, b.segment))
    });
    for (i, s) in statements.iter_mut().enumerate() {
        s.id = StmtId(i as u32 + 1);
    }
    pairs.sort_by(|a, b| a.before.cmp(&b.before));

    Ok(ChangeSet {
        commit: commit.clone(),
        statements,
        alignment: StatementAlignment { pairs },
        files: changes,
    })
}

// ---------------------------------------------------------------------------
// Rendering

const CONTEXT_LINES: usize = 3;

#[derive(Clone, Copy)]
enum Op {
    Keep(u32),
    Del(u32),
    Add(u32),
}

fn edit_script(change: &FileChange, before_len: u32, after_len: u32) -> Vec<Op> {
    let mut ops = Vec::new();
    let (mut i, mut j) = (1u32, 1u32);
    loop {
        if i <= before_len && change.deleted_lines.contains(&i) {
            ops.push(Op::Del(i));
            i += 1;
        } else if j <= after_len && change.added_lines.contains(&j) {
            ops.push(Op::Add(j));
            j += 1;
        } else if i <= before_len && j <= after_len {
            ops.push(Op::Keep(i));
            i += 1;
            j += 1;
        } else {
            break;
        }
    }
    ops
}

/// Renders the line-level edits of `changes` back to unified diff text.
pub fn render_unified_diff(changes: &ChangeSet) -> String {
    let mut out = String::new();
    for change in changes.files.iter().filter(|c| c.is_modified()) {
        let Some(file) = changes.commit.file(&change.path) else {
            continue;
        };
        let before = source_lines(file.before.as_deref());
        let after = source_lines(file.after.as_deref());
        let ops = edit_script(change, before.len() as u32, after.len() as u32);
        write_file_diff(&mut out, &change.path, file.before.is_some(), file.after.is_some(), &before, &after, &ops);
    }
    out
}

/// Line diff of one file between two snapshots, as unified diff text.
///
/// Returns an empty string when the snapshots have identical lines.
pub fn diff_file(path: &str, before: Option<&str>, after: Option<&str>) -> String {
    let old = source_lines(before);
    let new = source_lines(after);
    let mut ops = Vec::new();
    for op in similar::capture_diff_slices(similar::Algorithm::Myers, &old, &new) {
        match op {
            similar::DiffOp::Equal { old_index, len, .. } => {
                ops.extend((0..len).map(|k| Op::Keep((old_index + k) as u32 + 1)));
            }
            similar::DiffOp::Delete { old_index, old_len, .. } => {
                ops.extend((0..old_len).map(|k| Op::Del((old_index + k) as u32 + 1)));
            }
            similar::DiffOp::Insert { new_index, new_len, .. } => {
                ops.extend((0..new_len).map(|k| Op::Add((new_index + k) as u32 + 1)));
            }
            similar::DiffOp::Replace { old_index, old_len, new_index, new_len } => {
                ops.extend((0..old_len).map(|k| Op::Del((old_index + k) as u32 + 1)));
                ops.extend((0..new_len).map(|k| Op::Add((new_index + k) as u32 + 1)));
            }
        }
    }
    let mut out = String::new();
    if ops.iter().any(|op| !matches!(op, Op::Keep(_))) {
        write_file_diff(&mut out, path, before.is_some(), after.is_some(), &old, &new, &ops);
    }
    out
}

/// Unified diff of one file with the deleted and added lines given explicitly.
///
/// Lines outside both sets are paired in order as context.
pub fn diff_from_edits(
    path: &str,
    before: Option<&str>,
    after: Option<&str>,
    deleted_lines: &BTreeSet<u32>,
    added_lines: &BTreeSet<u32>,
) -> String {
    let old = source_lines(before);
    let new = source_lines(after);
    let change = FileChange {
        path: path.to_string(),
        deleted_lines: deleted_lines.clone(),
        added_lines: added_lines.clone(),
        line_alignment: Vec::new(),
    };
    let mut out = String::new();
    if change.is_modified() {
        let ops = edit_script(&change, old.len() as u32, new.len() as u32);
        write_file_diff(&mut out, path, before.is_some(), after.is_some(), &old, &new, &ops);
    }
    out
}

fn write_file_diff(
    out: &mut String,
    path: &str,
    has_before: bool,
    has_after: bool,
    before: &[&str],
    after: &[&str],
    ops: &[Op],
) {
    out.push_str(&format!("diff --git a/{0} b/{0}\n", path));
    if has_before {
        out.push_str(&format!("--- a/{path}\n"));
    } else {
        out.push_str("--- /dev/null\n");
    }
    if has_after {
        out.push_str(&format!("+++ b/{path}\n"));
    } else {
        out.push_str("+++ /dev/null\n");
    }

    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for (idx, _) in ops.iter().enumerate().filter(|(_, op)| !matches!(op, Op::Keep(..))) {
        let lo = idx.saturating_sub(CONTEXT_LINES);
        let hi = (idx + CONTEXT_LINES).min(ops.len() - 1);
        match ranges.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = hi,
            _ => ranges.push((lo, hi)),
        }
    }

    for (lo, hi) in ranges {
        // Position of the first line of the hunk in each version.
        let (mut old_pos, mut new_pos) = (1u32, 1u32);
        for op in &ops[..lo] {
            match op {
                Op::Keep(..) => {
                    old_pos += 1;
                    new_pos += 1;
                }
                Op::Del(_) => old_pos += 1,
                Op::Add(_) => new_pos += 1,
            }
        }
        let slice = &ops[lo..=hi];
        let old_len = slice.iter().filter(|op| !matches!(op, Op::Add(_))).count() as u32;
        let new_len = slice.iter().filter(|op| !matches!(op, Op::Del(_))).count() as u32;
        let old_start = if old_len == 0 { old_pos - 1 } else { old_pos };
        let new_start = if new_len == 0 { new_pos - 1 } else { new_pos };
        out.push_str(&format!("@@ -{old_start},{old_len} +{new_start},{new_len} @@\n"));
        for op in slice {
            match *op {
                Op::Keep(i) => {
                    out.push(' ');
                    out.push_str(before[i as usize - 1]);
                }
                Op::Del(i) => {
                    out.push('-');
                    out.push_str(before[i as usize - 1]);
                }
                Op::Add(j) => {
                    out.push('+');
                    out.push_str(after[j as usize - 1]);
                }
            }
            out.push('\n');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commit(files: &[(&str, Option<&str>, Option<&str>)]) -> CommitInput {
        CommitInput {
            commit_id: "c1".into(),
            message: "msg".into(),
            files: files
                .iter()
                .map(|(p, b, a)| FilePair {
                    path: p.to_string(),
                    before: b.map(str::to_string),
                    after: a.map(str::to_string),
                })
                .collect(),
        }
    }

    fn registry() -> FrontEndRegistry {
        FrontEndRegistry::with_defaults()
    }

    #[test]
    fn empty_diff_aligns_every_line() {
        let src = "int a = 1;\nint b = a;\nlog(b);\n";
        let c = commit(&[("A.java", Some(src), Some(src))]);
        let cs = parse_unified_diff("", &c, &registry()).unwrap();
        assert!(cs.statements.is_empty());
        assert_eq!(cs.alignment.len(), 3);
    }

    #[test]
    fn one_line_replacement_yields_two_statements() {
        let before = "int a = 1;\nint b = a;\n";
        let after = "int a = 2;\nint b = a;\n";
        let diff = "--- a/A.java\n+++ b/A.java\n@@ -1,2 +1,2 @@\n-int a = 1;\n+int a = 2;\n int b = a;\n";
        let c = commit(&[("A.java", Some(before), Some(after))]);
        let cs = parse_unified_diff(diff, &c, &registry()).unwrap();
        assert_eq!(cs.statements.len(), 2);
        assert_eq!((cs.statements[0].version, cs.statements[0].kind), (Version::Before, ChangeKind::Deleted));
        assert_eq!((cs.statements[1].version, cs.statements[1].kind), (Version::After, ChangeKind::Added));
        assert_eq!(cs.statements[0].id.to_string(), "s1");
        assert_eq!(cs.alignment.len(), 1);
    }

    #[test]
    fn diff_file_headers_survive_leading_deletion() {
        let before = "d = c * 2;\nb++;\na += c;\n";
        let after = "b++;\nb++;\nb += c;\n";
        let diff = diff_file("A.java", Some(before), Some(after));
        assert!(diff.contains("@@ -1,3 +1,3 @@"), "{diff}");
        let c = commit(&[("A.java", Some(before), Some(after))]);
        let cs = parse_unified_diff(&diff, &c, &registry()).unwrap();
        assert_eq!(render_unified_diff(&cs), diff);
        assert_eq!(diff_file("A.java", Some(before), Some(before)), "");
    }

    #[test]
    fn malformed_hunk_header_reports_line() {
        let diff = "--- a/A.java\n+++ b/A.java\n@@ -x +1 @@\n";
        match parse_patch(diff) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_hunk_is_a_parse_error() {
        let diff = "--- a/A.java\n+++ b/A.java\n@@ -1,3 +1,3 @@\n-a\n+b\n";
        assert!(matches!(parse_patch(diff), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_path_is_input_error() {
        let c = commit(&[("A.java", Some("a;\n"), Some("b;\n"))]);
        let diff = "--- a/B.java\n+++ b/B.java\n@@ -1 +1 @@\n-a;\n+b;\n";
        assert!(matches!(parse_unified_diff(diff, &c, &registry()), Err(Error::Input(_))));
    }

    #[test]
    fn diff_that_does_not_match_snapshot_is_rejected() {
        let c = commit(&[("A.java", Some("a;\n"), Some("b;\n"))]);
        let diff = "--- a/A.java\n+++ b/A.java\n@@ -1 +1 @@\n-z;\n+b;\n";
        assert!(matches!(parse_unified_diff(diff, &c, &registry()), Err(Error::Input(_))));
    }

    #[test]
    fn added_file_and_multi_statement_lines() {
        let after = "int a = 1; int b = 2;\n// note\n";
        let diff = "--- /dev/null\n+++ b/N.java\n@@ -0,0 +1,2 @@\n+int a = 1; int b = 2;\n+// note\n";
        let c = commit(&[("N.java", None, Some(after))]);
        let cs = parse_unified_diff(diff, &c, &registry()).unwrap();
        assert_eq!(cs.statements.len(), 3);
        assert_eq!(cs.statements[1].segment, 1);
        assert!(cs.statements[2].is_comment);
        assert_eq!(cs.without_comments().statements.len(), 2);
    }

    #[test]
    fn rendering_round_trips() {
        let before = "int a = 1;\nint b = a;\nlog(b);\nx();\ny();\nz();\nw();\nv();\nu();\nt();\n";
        let after = "int a = 2;\nint b = a;\nlog(b);\nx();\ny();\nz();\nw();\nv();\nu();\nq();\nt();\n";
        let diff = "--- a/A.java\n+++ b/A.java\n@@ -1,1 +1,1 @@\n-int a = 1;\n+int a = 2;\n@@ -9,0 +10,1 @@\n+q();\n";
        let c = commit(&[("A.java", Some(before), Some(after))]);
        let cs = parse_unified_diff(diff, &c, &registry()).unwrap();
        let rendered = render_unified_diff(&cs);
        let again = parse_unified_diff(&rendered, &c, &registry()).unwrap();
        assert_eq!(cs, again);
        assert_eq!(render_unified_diff(&again), rendered);
    }

    #[test]
    fn stmt_id_parsing() {
        assert_eq!("s12".parse::<StmtId>().unwrap(), StmtId(12));
        assert_eq!("S3 (A.java:after:2)".parse::<StmtId>().unwrap(), StmtId(3));
        assert_eq!("7".parse::<StmtId>().unwrap(), StmtId(7));
        assert!("x7".parse::<StmtId>().is_err());
    }
}
