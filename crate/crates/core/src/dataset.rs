//! Synthetic tangled commits built from atomic commits, and the on-disk corpus format.
//!
//! A bundle directory holds `before/` and `after/` trees, `diff.patch`,
//! `commit.json` and, for tangled cases, `gold.json`. A corpus is a set of
//! bundles listed with their checksums in `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diff_model::{diff_file, diff_from_edits, ChangeSet, CommitInput, FilePair, Version};
use crate::error::{Error, Result};
use crate::eval::{GoldEntry, GoldFile, GoldLabels};

pub const CORPUS_SCHEMA: &str = "untangle-corpus/1";

/// A commit that addresses a single concern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicCommit {
    pub commit: CommitInput,
    pub repo: String,
    /// Seconds since the epoch, when known.
    #[serde(default)]
    pub timestamp: Option<i64>,
}

impl AtomicCommit {
    pub fn new(commit: CommitInput, repo: impl Into<String>, timestamp: Option<i64>) -> Result<Self> {
        commit.validate()?;
        let changed = commit.files.iter().any(|f| f.before != f.after);
        if !changed {
            return Err(Error::Input(format!("commit {} changes nothing", commit.commit_id)));
        }
        Ok(Self {
            commit,
            repo: repo.into(),
            timestamp,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TangledCase {
    pub case_id: String,
    pub repo: String,
    pub tangled: CommitInput,
    pub diff: String,
    /// Line labels; concern `k` is the `k`-th entry of `provenance`, counting from 1.
    pub gold: GoldFile,
    pub provenance: Vec<String>,
    pub concern_count: usize,
}

impl TangledCase {
    pub fn gold_labels(&self, changes: &ChangeSet) -> Result<GoldLabels> {
        GoldLabels::resolve(&self.gold, changes)
    }
}

struct Edit {
    commit: usize,
    start: usize,
    end: usize,
    lines: Vec<String>,
}

fn lines_of(text: Option<&str>) -> Vec<&str> {
    text.map(|t| t.lines().map(|l| l.trim_end_matches('\r')).collect())
        .unwrap_or_default()
}

fn edits_of(commit: usize, base: &[&str], after: &[&str]) -> Vec<Edit> {
    let mut out: Vec<Edit> = Vec::new();
    let mut last_equal_end = None;
    for op in similar::capture_diff_slices(similar::Algorithm::Myers, base, after) {
        let (old, new) = (op.old_range(), op.new_range());
        if matches!(op, similar::DiffOp::Equal { .. }) {
            last_equal_end = Some(old.end);
            continue;
        }
        let lines = after[new].iter().map(|l| l.to_string());
        match out.last_mut() {
            Some(prev) if prev.end == old.start && last_equal_end != Some(old.start) => {
                prev.end = old.end;
                prev.lines.extend(lines);
            }
            _ => out.push(Edit {
                commit,
                start: old.start,
                end: old.end,
                lines: lines.collect(),
            }),
        }
    }
    out
}

fn span(e: &Edit) -> String {
    if e.start == e.end {
        format!("insertion before base line {}", e.start + 1)
    } else {
        format!("base lines {}-{}", e.start + 1, e.end)
    }
}

/// Applies every commit's edits to their shared base snapshot.
///
/// Edits from different commits may not overlap or touch; such pairs would
/// not cherry-pick cleanly and are reported as [`Error::Conflict`].
pub fn tangle(commits: &[AtomicCommit]) -> Result<TangledCase> {
    if commits.len() < 2 {
        return Err(Error::Input(format!("tangling needs at least two commits, got {}", commits.len())));
    }
    let repo = commits[0].repo.clone();
    if let Some(other) = commits.iter().find(|c| c.repo != repo) {
        return Err(Error::Input(format!(
            "commits come from different repositories: {repo} and {}",
            other.repo
        )));
    }
    let ids: Vec<String> = commits.iter().map(|c| c.commit.commit_id.clone()).collect();

    let paths: BTreeSet<&str> = commits
        .iter()
        .flat_map(|c| c.commit.files.iter().map(|f| f.path.as_str()))
        .collect();
    let mut files = Vec::new();
    let mut diff = String::new();
    let mut labels = Vec::new();
    for path in paths {
        let touching: Vec<(usize, &FilePair)> = commits
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.commit.file(path).map(|f| (i, f)))
            .collect();
        let base = touching[0].1.before.as_deref();
        if let Some((i, _)) = touching.iter().find(|(_, f)| f.before.as_deref() != base) {
            return Err(Error::Input(format!(
                "{path}: {} and {} start from different snapshots",
                ids[touching[0].0], ids[*i]
            )));
        }
        let base_lines = lines_of(base);
        let mut edits: Vec<Edit> = touching
            .iter()
            .flat_map(|(i, f)| edits_of(*i, &base_lines, &lines_of(f.after.as_deref())))
            .collect();
        edits.sort_by_key(|e| (e.start, e.end, e.commit));
        for (k, a) in edits.iter().enumerate() {
            for b in &edits[k + 1..] {
                if a.commit != b.commit && a.start <= b.end && b.start <= a.end {
                    return Err(Error::Conflict(format!(
                        "{path}: {} ({}) collides with {} ({})",
                        ids[a.commit],
                        span(a),
                        ids[b.commit],
                        span(b)
                    )));
                }
            }
        }

        let deletes_file = touching.iter().any(|(_, f)| f.after.is_none());
        let mut merged: Vec<String> = Vec::new();
        let mut deleted = BTreeSet::new();
        let mut added = BTreeSet::new();
        let mut pos = 0;
        for e in &edits {
            merged.extend(base_lines[pos..e.start].iter().map(|l| l.to_string()));
            for line in e.start..e.end {
                deleted.insert(line as u32 + 1);
                labels.push(GoldEntry {
                    file: path.to_string(),
                    version: Version::Before,
                    line: line as u32 + 1,
                    concern: e.commit as u32 + 1,
                });
            }
            for text in &e.lines {
                merged.push(text.clone());
                added.insert(merged.len() as u32);
                labels.push(GoldEntry {
                    file: path.to_string(),
                    version: Version::After,
                    line: merged.len() as u32,
                    concern: e.commit as u32 + 1,
                });
            }
            pos = e.end;
        }
        merged.extend(base_lines[pos..].iter().map(|l| l.to_string()));

        let after = if deletes_file && merged.is_empty() {
            None
        } else {
            Some(merged.iter().map(|l| format!("{l}\n")).collect::<String>())
        };
        let before = base.map(str::to_string);
        diff.push_str(&diff_from_edits(path, before.as_deref(), after.as_deref(), &deleted, &added));
        files.push(FilePair {
            path: path.to_string(),
            before,
            after,
        });
    }
    labels.sort();

    let tangled = CommitInput {
        commit_id: ids.join("+"),
        message: commits
            .iter()
            .map(|c| c.commit.message.trim())
            .collect::<Vec<_>>()
            .join("\n\n"),
        files,
    };
    tangled.validate()?;
    Ok(TangledCase {
        case_id: tangled.commit_id.clone(),
        repo,
        tangled,
        diff,
        gold: GoldFile { labels },
        concern_count: ids.len(),
        provenance: ids,
    })
}

/// Optional selection heuristics over a commit pool. Unset fields admit everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolFilter {
    /// Largest allowed spread of commit timestamps, in seconds.
    pub max_time_gap_secs: Option<i64>,
    /// Minimum number of leading directory components shared by every pair of commits.
    pub min_shared_dirs: Option<usize>,
    /// Require every pair of commits to touch at least one common file.
    pub require_shared_file: bool,
}

impl PoolFilter {
    pub fn admits(&self, commits: &[&AtomicCommit]) -> bool {
        if let Some(gap) = self.max_time_gap_secs {
            let times: Vec<i64> = commits.iter().filter_map(|c| c.timestamp).collect();
            if times.len() != commits.len() {
                return false;
            }
            if times.iter().max().unwrap_or(&0) - times.iter().min().unwrap_or(&0) > gap {
                return false;
            }
        }
        for (i, a) in commits.iter().enumerate() {
            for b in &commits[i + 1..] {
                if let Some(depth) = self.min_shared_dirs {
                    if shared_dirs(a, b) < depth {
                        return false;
                    }
                }
                if self.require_shared_file && !a.commit.files.iter().any(|f| b.commit.file(&f.path).is_some()) {
                    return false;
                }
            }
        }
        true
    }
}

fn shared_dirs(a: &AtomicCommit, b: &AtomicCommit) -> usize {
    let dirs = |p: &str| -> Vec<String> {
        let mut parts: Vec<String> = p.split('/').map(str::to_string).collect();
        parts.pop();
        parts
    };
    let mut best = 0;
    for fa in &a.commit.files {
        for fb in &b.commit.files {
            let (da, db) = (dirs(&fa.path), dirs(&fb.path));
            best = best.max(da.iter().zip(&db).take_while(|(x, y)| x == y).count());
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Bundles

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FileEntry {
    path: String,
    before: bool,
    after: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CommitMeta {
    commit_id: String,
    message: String,
    #[serde(default)]
    repo: String,
    #[serde(default)]
    timestamp: Option<i64>,
    #[serde(default)]
    provenance: Vec<String>,
    files: Vec<FileEntry>,
}

/// One commit as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub commit: CommitInput,
    pub diff: String,
    pub repo: String,
    pub timestamp: Option<i64>,
    pub provenance: Vec<String>,
    pub gold: Option<GoldFile>,
}

impl Bundle {
    pub fn from_case(case: &TangledCase) -> Self {
        Self {
            commit: case.tangled.clone(),
            diff: case.diff.clone(),
            repo: case.repo.clone(),
            timestamp: None,
            provenance: case.provenance.clone(),
            gold: Some(case.gold.clone()),
        }
    }

    pub fn from_atomic(atomic: &AtomicCommit) -> Self {
        let diff = atomic
            .commit
            .files
            .iter()
            .map(|f| diff_file(&f.path, f.before.as_deref(), f.after.as_deref()))
            .collect();
        Self {
            commit: atomic.commit.clone(),
            diff,
            repo: atomic.repo.clone(),
            timestamp: atomic.timestamp,
            provenance: Vec::new(),
            gold: None,
        }
    }

    pub fn into_case(self, case_id: &str) -> Result<TangledCase> {
        let gold = self
            .gold
            .ok_or_else(|| Error::Input(format!("case {case_id} has no gold.json")))?;
        let concern_count = gold.labels.iter().map(|e| e.concern).collect::<BTreeSet<_>>().len();
        Ok(TangledCase {
            case_id: case_id.to_string(),
            repo: self.repo,
            tangled: self.commit,
            diff: self.diff,
            gold,
            concern_count: concern_count.max(self.provenance.len()),
            provenance: self.provenance,
        })
    }

    pub fn into_atomic(self) -> Result<AtomicCommit> {
        AtomicCommit::new(self.commit, self.repo, self.timestamp)
    }
}

fn check_relative(path: &str) -> Result<()> {
    let p = Path::new(path);
    if path.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(Error::Input(format!("file path `{path}` must be relative and stay inside the bundle")));
    }
    Ok(())
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Input(format!("missing file {}", path.display())),
        _ => Error::io(path.display().to_string(), e),
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes `bundle` under `dir` and returns the files written, relative to `dir`.
pub fn save_bundle(dir: &Path, bundle: &Bundle) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut put = |rel: String, contents: &[u8]| -> Result<()> {
        write(&dir.join(&rel), contents)?;
        written.push(rel);
        Ok(())
    };
    let mut entries = Vec::new();
    for f in &bundle.commit.files {
        check_relative(&f.path)?;
        if let Some(b) = &f.before {
            put(format!("before/{}", f.path), b.as_bytes())?;
        }
        if let Some(a) = &f.after {
            put(format!("after/{}", f.path), a.as_bytes())?;
        }
        entries.push(FileEntry {
            path: f.path.clone(),
            before: f.before.is_some(),
            after: f.after.is_some(),
        });
    }
    let meta = CommitMeta {
        commit_id: bundle.commit.commit_id.clone(),
        message: bundle.commit.message.clone(),
        repo: bundle.repo.clone(),
        timestamp: bundle.timestamp,
        provenance: bundle.provenance.clone(),
        files: entries,
    };
    put("commit.json".into(), to_json(&meta).as_bytes())?;
    put("diff.patch".into(), bundle.diff.as_bytes())?;
    if let Some(gold) = &bundle.gold {
        put("gold.json".into(), to_json(gold).as_bytes())?;
    }
    Ok(written)
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    if !dir.is_dir() {
        return Err(Error::Input(format!("bundle directory {} does not exist", dir.display())));
    }
    let meta: CommitMeta = parse_json(&dir.join("commit.json"))?;
    let mut files = Vec::new();
    for e in &meta.files {
        check_relative(&e.path)?;
        let side = |name: &str, present: bool| -> Result<Option<String>> {
            present.then(|| read(&dir.join(name).join(&e.path))).transpose()
        };
        files.push(FilePair {
            path: e.path.clone(),
            before: side("before", e.before)?,
            after: side("after", e.after)?,
        });
    }
    let gold_path = dir.join("gold.json");
    let gold = gold_path.exists().then(|| parse_json(&gold_path)).transpose()?;
    let commit = CommitInput {
        commit_id: meta.commit_id,
        message: meta.message,
        files,
    };
    commit.validate()?;
    Ok(Bundle {
        commit,
        diff: read(&dir.join("diff.patch"))?,
        repo: meta.repo,
        timestamp: meta.timestamp,
        provenance: meta.provenance,
        gold,
    })
}

// ---------------------------------------------------------------------------
// Corpus manifests

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Bundle directory, relative to the manifest.
    pub path: String,
    pub repo: String,
    pub concern_count: usize,
    /// SHA-256 of every bundle file, keyed by path relative to the bundle.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub cases: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes each case as a bundle under `dir/cases/` and lists them in `dir/manifest.json`.
pub fn save_corpus(dir: &Path, cases: &[TangledCase]) -> Result<PathBuf> {
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for case in cases {
        check_relative(&case.case_id)?;
        if !seen.insert(case.case_id.as_str()) {
            return Err(Error::Input(format!("duplicate case id {}", case.case_id)));
        }
        let rel = format!("cases/{}", case.case_id);
        let bundle_dir = dir.join(&rel);
        let mut checksums = BTreeMap::new();
        for f in save_bundle(&bundle_dir, &Bundle::from_case(case))? {
            let bytes = fs::read(bundle_dir.join(&f)).map_err(|e| Error::io(f.clone(), e))?;
            checksums.insert(f, sha256_hex(&bytes));
        }
        entries.push(ManifestEntry {
            id: case.case_id.clone(),
            path: rel,
            repo: case.repo.clone(),
            concern_count: case.concern_count,
            checksums,
        });
    }
    let manifest = Manifest {
        schema: CORPUS_SCHEMA.to_string(),
        cases: entries,
    };
    let path = dir.join("manifest.json");
    write(&path, to_json(&manifest).as_bytes())?;
    Ok(path)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let manifest: Manifest = parse_json(path)?;
    if manifest.schema != CORPUS_SCHEMA {
        return Err(Error::Input(format!(
            "{}: unsupported schema `{}`, expected `{CORPUS_SCHEMA}`",
            path.display(),
            manifest.schema
        )));
    }
    Ok(manifest)
}

/// Loads every case of a manifest, verifying bundle checksums.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<TangledCase>> {
    let manifest = load_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.cases.iter().map(|entry| load_case(root, entry)).collect()
}

pub fn load_case(root: &Path, entry: &ManifestEntry) -> Result<TangledCase> {
    check_relative(&entry.path)?;
    let dir = root.join(&entry.path);
    for (file, expected) in &entry.checksums {
        check_relative(file)?;
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Input(format!("missing file {}", path.display())),
            _ => Error::io(path.display().to_string(), e),
        })?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            return Err(Error::Input(format!(
                "checksum mismatch for {}: expected {expected}, found {actual}",
                path.display()
            )));
        }
    }
    load_bundle(&dir)?.into_case(&entry.id)
}

/// Writes atomic commits as bundles `dir/<index>-<id>`.
pub fn save_pool(dir: &Path, commits: &[AtomicCommit]) -> Result<()> {
    for (i, c) in commits.iter().enumerate() {
        let name: String = c
            .commit
            .commit_id
            .chars()
            .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' { ch } else { '_' })
            .collect();
        save_bundle(&dir.join(format!("{i:04}-{name}")), &Bundle::from_atomic(c))?;
    }
    Ok(())
}

/// Loads every bundle directly under `dir`, in name order.
pub fn load_pool(dir: &Path) -> Result<Vec<AtomicCommit>> {
    let listing = fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Input(format!("pool directory {} does not exist", dir.display())),
        _ => Error::io(dir.display().to_string(), e),
    })?;
    let mut dirs = Vec::new();
    for entry in listing {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        if entry.path().join("commit.json").is_file() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    dirs.iter().map(|d| load_bundle(d)?.into_atomic()).collect()
}

// ---------------------------------------------------------------------------
// Git

fn git(repo: &Path, args: &[&str]) -> Result<Option<String>> {
    let out = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(args)
        .output()
        .map_err(|e| Error::io("git", e))?;
    if !out.status.success() {
        return Ok(None);
    }
    String::from_utf8(out.stdout)
        .map(Some)
        .map_err(|_| Error::Input(format!("git {} produced non-UTF-8 output", args.join(" "))))
}

/// Builds a bundle from commit `rev` of the repository at `repo` and its first parent.
pub fn materialize_git(repo: &Path, rev: &str) -> Result<Bundle> {
    let sha = git(repo, &["rev-parse", "--verify", &format!("{rev}^{{commit}}")])?
        .ok_or_else(|| Error::Input(format!("{}: unknown revision {rev}", repo.display())))?
        .trim()
        .to_string();
    const EMPTY_TREE: &str = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";
    let parent = git(repo, &["rev-parse", "--verify", "--quiet", &format!("{sha}^")])?
        .map(|s| s.trim().to_string());
    let base = parent.clone().unwrap_or_else(|| EMPTY_TREE.to_string());
    let names = git(repo, &["diff", "--name-only", "--no-renames", "-z", &base, &sha])?
        .ok_or_else(|| Error::Input(format!("git diff failed for {sha}")))?;
    let show = |commit: &Option<String>, path: &str| -> Result<Option<String>> {
        match commit {
            Some(c) => git(repo, &["show", &format!("{c}:{path}")]),
            None => Ok(None),
        }
    };
    let mut files = Vec::new();
    let mut diff = String::new();
    for path in names.split('\0').filter(|p| !p.is_empty()) {
        let before = show(&parent, path)?;
        let after = show(&Some(sha.clone()), path)?;
        diff.push_str(&diff_file(path, before.as_deref(), after.as_deref()));
        files.push(FilePair {
            path: path.to_string(),
            before,
            after,
        });
    }
    let message = git(repo, &["log", "-1", "--format=%B", &sha])?.unwrap_or_default();
    let timestamp = git(repo, &["log", "-1", "--format=%ct", &sha])?.and_then(|t| t.trim().parse().ok());
    let commit = CommitInput {
        commit_id: sha,
        message: message.trim_end().to_string(),
        files,
    };
    commit.validate()?;
    let repo_name = fs::canonicalize(repo)
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_default();
    Ok(Bundle {
        commit,
        diff,
        repo: repo_name,
        timestamp,
        provenance: Vec::new(),
        gold: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atomic(id: &str, files: &[(&str, Option<&str>, Option<&str>)]) -> AtomicCommit {
        let commit = CommitInput {
            commit_id: id.into(),
            message: format!("{id} message"),
            files: files
                .iter()
                .map(|(p, b, a)| FilePair {
                    path: p.to_string(),
                    before: b.map(str::to_string),
                    after: a.map(str::to_string),
                })
                .collect(),
        };
        AtomicCommit::new(commit, "r", None).unwrap()
    }

    #[test]
    fn disjoint_files_split_by_file() {
        let a = atomic("a", &[("A.java", Some("x();\n"), Some("y();\n"))]);
        let b = atomic("b", &[("B.java", Some("p();\n"), Some("q();\n"))]);
        let case = tangle(&[a, b]).unwrap();
        assert_eq!(case.concern_count, 2);
        let concerns: BTreeMap<&str, BTreeSet<u32>> = case.gold.labels.iter().fold(BTreeMap::new(), |mut m, e| {
            m.entry(e.file.as_str()).or_default().insert(e.concern);
            m
        });
        assert_eq!(concerns["A.java"], BTreeSet::from([1]));
        assert_eq!(concerns["B.java"], BTreeSet::from([2]));
    }

    #[test]
    fn same_line_conflicts() {
        let base = "a();\nb();\nc();\n";
        let a = atomic("a", &[("A.java", Some(base), Some("a();\nX();\nc();\n"))]);
        let b = atomic("b", &[("A.java", Some(base), Some("a();\nY();\nc();\n"))]);
        let err = tangle(&[a, b]).unwrap_err();
        assert!(matches!(&err, Error::Conflict(m) if m.contains("base lines 2-2")), "{err}");
    }

    #[test]
    fn insertions_at_one_position_conflict() {
        let base = "a();\nb();\n";
        let a = atomic("a", &[("A.java", Some(base), Some("a();\nX();\nb();\n"))]);
        let b = atomic("b", &[("A.java", Some(base), Some("a();\nY();\nb();\n"))]);
        assert!(matches!(tangle(&[a, b]), Err(Error::Conflict(_))));
    }

    #[test]
    fn different_bases_are_rejected() {
        let a = atomic("a", &[("A.java", Some("a();\n"), Some("b();\n"))]);
        let b = atomic("b", &[("A.java", Some("z();\n"), Some("b();\n"))]);
        assert!(matches!(tangle(&[a, b]), Err(Error::Input(_))));
        let one = atomic("c", &[("A.java", Some("a();\n"), Some("b();\n"))]);
        assert!(matches!(tangle(&[one]), Err(Error::Input(_))));
    }

    #[test]
    fn empty_commit_is_not_atomic() {
        let commit = CommitInput {
            commit_id: "e".into(),
            message: String::new(),
            files: vec![FilePair {
                path: "A.java".into(),
                before: Some("a();\n".into()),
                after: Some("a();\n".into()),
            }],
        };
        assert!(matches!(AtomicCommit::new(commit, "r", None), Err(Error::Input(_))));
    }

    #[test]
    fn filters() {
        let mut a = atomic("a", &[("src/x/A.java", Some("a();\n"), Some("b();\n"))]);
        let mut b = atomic("b", &[("src/y/B.java", Some("a();\n"), Some("b();\n"))]);
        a.timestamp = Some(100);
        b.timestamp = Some(400);
        assert!(PoolFilter::default().admits(&[&a, &b]));
        let near = PoolFilter {
            max_time_gap_secs: Some(200),
            ..Default::default()
        };
        assert!(!near.admits(&[&a, &b]));
        let deep = |d| PoolFilter {
            min_shared_dirs: Some(d),
            ..Default::default()
        };
        assert!(deep(1).admits(&[&a, &b]));
        assert!(!deep(2).admits(&[&a, &b]));
        let coupled = PoolFilter {
            require_shared_file: true,
            ..Default::default()
        };
        assert!(!coupled.admits(&[&a, &b]));
    }

    #[test]
    fn bundle_paths_must_stay_inside() {
        assert!(check_relative("../x").is_err());
        assert!(check_relative("/etc/passwd").is_err());
        assert!(check_relative("a/./b").is_ok());
        assert!(check_relative("src/A.java").is_ok());
    }
}
