use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use untangle_core::agents::UntanglingResult;
use untangle_core::consultation::{run_on_task, transcript_stats, ConsultationTranscript, TranscriptStats};
use untangle_core::contexts::{extract_explicit_context, extract_implicit_context, Context};
use untangle_core::dataset::{
    load_bundle, load_manifest, load_pool, materialize_git, save_corpus, save_pool, tangle, AtomicCommit, Bundle,
    PoolFilter, TangledCase,
};
use untangle_core::diff_model::{ChangeSet, Version};
use untangle_core::eval::{aggregate, score_commit, single_cluster_baseline, EvalReport, GoldLabels};
use untangle_core::export::{export_context, export_delta, export_pdg, GraphExport};
use untangle_core::fixtures::synthetic_pool;
use untangle_core::llm::{gold_backend, single_cluster_backend, Backend, HttpBackend, ScriptedBackend};
use untangle_core::{Error, Result};

use crate::config::{BackendKind, RunConfig};
use crate::pipeline::{prepare, Prepared};

/// Where the commit to analyse comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    Bundle(PathBuf),
    Git { repo: PathBuf, rev: String },
}

impl InputSource {
    pub fn load(&self) -> Result<Bundle> {
        match self {
            InputSource::Bundle(dir) => load_bundle(dir),
            InputSource::Git { repo, rev } => materialize_git(repo, rev),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::Io { path: parent.display().to_string(), source: e })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    Ok(path.to_path_buf())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data");
    s.push('\n');
    s
}

fn load_script(path: &Path) -> Result<ScriptedBackend> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read script {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let invalid = || Error::Config(format!("{}: expected an array of replies or an object keyed by prompt hash", path.display()));
    match value {
        serde_json::Value::Array(items) => {
            let replies: Option<Vec<String>> = items.iter().map(|v| v.as_str().map(str::to_string)).collect();
            ScriptedBackend::ordered(replies.ok_or_else(invalid)?)
        }
        serde_json::Value::Object(map) => {
            let replies: Option<_> = map.iter().map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string()))).collect();
            ScriptedBackend::keyed(replies.ok_or_else(invalid)?)
        }
        _ => Err(invalid()),
    }
}

/// Backend shared across cases, or `None` when one is built per case from its labels.
fn shared_backend(cfg: &RunConfig) -> Result<Option<Arc<dyn Backend>>> {
    Ok(match cfg.backend {
        BackendKind::Http => Some(Arc::new(HttpBackend::new(cfg.llm.clone())?)),
        BackendKind::Scripted => {
            let path = cfg.script.as_deref().ok_or_else(|| Error::Config("no --script given".into()))?;
            Some(Arc::new(load_script(path)?))
        }
        BackendKind::Oracle | BackendKind::SingleCluster => None,
    })
}

fn case_backend(
    cfg: &RunConfig,
    shared: &Option<Arc<dyn Backend>>,
    prep: &Prepared,
    gold: Option<&GoldLabels>,
) -> Result<Arc<dyn Backend>> {
    if let Some(b) = shared {
        return Ok(b.clone());
    }
    Ok(match cfg.backend {
        BackendKind::Oracle => {
            let gold = gold.ok_or_else(|| Error::Input("the oracle backend needs gold labels (gold.json)".into()))?;
            Arc::new(gold_backend(&gold.restricted_to(&prep.task.universe).concerns))
        }
        _ => Arc::new(single_cluster_backend(&prep.task.universe)),
    })
}

fn gold_for(bundle_gold: Option<&untangle_core::eval::GoldFile>, changes: &ChangeSet) -> Result<Option<GoldLabels>> {
    bundle_gold.map(|g| GoldLabels::resolve(g, changes)).transpose()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementRef {
    pub id: String,
    pub file: String,
    pub version: Version,
    pub line: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcernRecord {
    pub concern_id: u32,
    pub explanation: String,
    pub statements: Vec<StatementRef>,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFile {
    pub commit_id: String,
    pub model: String,
    pub rounds_used: u32,
    pub consensus: bool,
    pub degraded: bool,
    pub concerns: Vec<ConcernRecord>,
}

impl ResultFile {
    fn new(changes: &ChangeSet, tr: &ConsultationTranscript) -> Self {
        let concerns = tr
            .final_result
            .groups
            .iter()
            .map(|g| ConcernRecord {
                concern_id: g.concern_id,
                explanation: g.explanation.clone(),
                statements: g
                    .members
                    .iter()
                    .filter_map(|id| changes.statement(*id))
                    .map(|s| StatementRef {
                        id: s.id.to_string(),
                        file: s.file.clone(),
                        version: s.version,
                        line: s.line,
                        text: s.text.clone(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            commit_id: tr.commit_id.clone(),
            model: tr.model.clone(),
            rounds_used: tr.rounds_used,
            consensus: tr.consensus,
            degraded: tr.degraded,
            concerns,
        }
    }
}

fn graph_exports(prep: &Prepared) -> Vec<(&'static str, GraphExport)> {
    let ec = extract_explicit_context(&prep.delta);
    let ic = extract_implicit_context(&prep.delta);
    vec![
        ("pdg-before", export_pdg(&prep.before)),
        ("pdg-after", export_pdg(&prep.after)),
        ("delta", export_delta(&prep.delta)),
        ("explicit", export_context(&prep.delta, Context::Explicit(&ec))),
        ("implicit", export_context(&prep.delta, Context::Implicit(&ic))),
    ]
}

pub struct UntangleOutput {
    pub result: UntanglingResult,
    pub transcript: ConsultationTranscript,
    pub files: Vec<PathBuf>,
}

/// Untangles one commit and writes `result.json`, `transcript.json` and,
/// when asked, DOT files under `out/graphs/`.
pub fn cmd_untangle(input: &InputSource, out: &Path, cfg: &RunConfig, export_dot: bool) -> Result<UntangleOutput> {
    cfg.validate()?;
    let bundle = input.load()?;
    let prep = prepare(&bundle.commit, &bundle.diff, cfg.include_comments)?;
    let gold = gold_for(bundle.gold.as_ref(), &prep.changes)?;
    let shared = shared_backend(cfg)?;
    let backend = case_backend(cfg, &shared, &prep, gold.as_ref())?;
    let transcript = run_on_task(&bundle.commit.commit_id, &prep.task, &cfg.consultation, backend.as_ref())?;

    let mut files = vec![
        write(&out.join("result.json"), &json(&ResultFile::new(&prep.changes, &transcript)))?,
        write(&out.join("transcript.json"), &(transcript.to_json() + "\n"))?,
    ];
    if export_dot {
        for (name, g) in graph_exports(&prep) {
            files.push(write(&out.join("graphs").join(format!("{name}.dot")), &g.to_dot())?);
        }
    }
    Ok(UntangleOutput {
        result: transcript.final_result.clone(),
        transcript,
        files,
    })
}

/// Writes JSON and DOT exports of both PDGs, the δ-PDG and both contexts.
pub fn cmd_graph(input: &InputSource, out: &Path, include_comments: bool) -> Result<Vec<PathBuf>> {
    let bundle = input.load()?;
    let prep = prepare(&bundle.commit, &bundle.diff, include_comments)?;
    let mut files = Vec::new();
    for (name, g) in graph_exports(&prep) {
        files.push(write(&out.join(format!("{name}.json")), &(g.to_json() + "\n"))?);
        files.push(write(&out.join(format!("{name}.dot")), &g.to_dot())?);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub repo: String,
    pub accuracy_c: f64,
    pub accuracy_a: f64,
    /// Accuracy of putting every changed statement into one concern.
    pub base1: f64,
    pub rounds_used: u32,
    pub consensus: bool,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub cases: Vec<CaseOutcome>,
    pub base1_mean: f64,
    pub stats: TranscriptStats,
}

fn eval_case(
    root: &Path,
    entry: &untangle_core::dataset::ManifestEntry,
    out: &Path,
    cfg: &RunConfig,
    shared: &Option<Arc<dyn Backend>>,
) -> Result<(CaseOutcome, untangle_core::eval::CommitScore, ConsultationTranscript)> {
    let case: TangledCase = untangle_core::dataset::load_case(root, entry)?;
    let prep = prepare(&case.tangled, &case.diff, cfg.include_comments)?;
    let gold = case.gold_labels(&prep.changes)?;
    let backend = case_backend(cfg, shared, &prep, Some(&gold))?;
    let tr = run_on_task(&case.case_id, &prep.task, &cfg.consultation, backend.as_ref())?;
    let score = score_commit(&case.case_id, &case.repo, &tr.final_result, &gold, prep.all_statements)?;

    let dir = out.join("cases").join(&case.case_id);
    write(&dir.join("result.json"), &json(&ResultFile::new(&prep.changes, &tr)))?;
    write(&dir.join("transcript.json"), &(tr.to_json() + "\n"))?;
    let outcome = CaseOutcome {
        case_id: case.case_id.clone(),
        repo: case.repo.clone(),
        accuracy_c: score.accuracy_c,
        accuracy_a: score.accuracy_a,
        base1: single_cluster_baseline(&gold),
        rounds_used: tr.rounds_used,
        consensus: tr.consensus,
        degraded: tr.degraded,
    };
    Ok((outcome, score, tr))
}

/// Untangles every case of a corpus and scores it against the gold labels.
///
/// Writes per-case results under `out/cases/`, plus `report.json` and `report.txt`.
pub fn cmd_eval(manifest_path: &Path, out: &Path, cfg: &RunConfig) -> Result<EvalOutput> {
    cfg.validate()?;
    let manifest = load_manifest(manifest_path)?;
    if manifest.cases.is_empty() {
        return Err(Error::Input(format!("{} lists no cases", manifest_path.display())));
    }
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let shared = shared_backend(cfg)?;
    // An ordered script is consumed in call order, so its cases must run one at a time.
    let threads = if cfg.backend == BackendKind::Scripted { 1 } else { cfg.parallelism };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        manifest
            .cases
            .par_iter()
            .map(|entry| eval_case(root, entry, out, cfg, &shared))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut cases = Vec::new();
    let mut scores = Vec::new();
    let mut transcripts = Vec::new();
    for (c, s, t) in results {
        cases.push(c);
        scores.push(s);
        transcripts.push(t);
    }
    let base1_mean = cases.iter().map(|c| c.base1).sum::<f64>() / cases.len() as f64;
    let output = EvalOutput {
        report: aggregate(scores),
        base1_mean,
        stats: transcript_stats(&transcripts)?,
        cases,
    };
    write(&out.join("report.json"), &json(&output))?;
    write(&out.join("report.txt"), &render_report(&output))?;
    Ok(output)
}

pub fn render_report(output: &EvalOutput) -> String {
    let mut s = output.report.to_table();
    s.push_str(&format!(
        "\nbase-1 accuracy_c {:.4}\nmean rounds {:.2}\nconsensus rate {:.4}\n",
        output.base1_mean, output.stats.mean_rounds, output.stats.consensus_rate
    ));
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TangleOptions {
    pub seed: u64,
    pub cases: usize,
    pub min_concerns: usize,
    pub max_concerns: usize,
    pub filter: PoolFilter,
}

impl Default for TangleOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 20,
            min_concerns: 2,
            max_concerns: 3,
            filter: PoolFilter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TangleReport {
    pub manifest: PathBuf,
    pub cases: usize,
    /// Draws skipped because their edits collide.
    pub conflicts: usize,
    /// Draws skipped because their commits start from different snapshots.
    pub incompatible: usize,
    /// Draws rejected by the pool filter.
    pub filtered: usize,
    pub attempts: usize,
}

/// Draws random groups of atomic commits from a pool and tangles them into a corpus.
pub fn cmd_tangle(pool_dir: &Path, out: &Path, opts: &TangleOptions) -> Result<TangleReport> {
    if opts.min_concerns < 2 || opts.max_concerns < opts.min_concerns {
        return Err(Error::Config(format!(
            "concern range {}..={} must start at 2 or more and not be empty",
            opts.min_concerns, opts.max_concerns
        )));
    }
    let pool = load_pool(pool_dir)?;
    let mut by_repo: std::collections::BTreeMap<&str, Vec<&AtomicCommit>> = Default::default();
    for c in &pool {
        by_repo.entry(c.repo.as_str()).or_default().push(c);
    }
    let repos: Vec<Vec<&AtomicCommit>> = by_repo.into_values().filter(|v| v.len() >= opts.min_concerns).collect();
    if repos.is_empty() {
        return Err(Error::Input(format!(
            "{}: no repository has {} or more commits",
            pool_dir.display(),
            opts.min_concerns
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut report = TangleReport {
        manifest: PathBuf::new(),
        cases: 0,
        conflicts: 0,
        incompatible: 0,
        filtered: 0,
        attempts: 0,
    };
    let mut cases = Vec::new();
    let budget = (opts.cases * 100).max(1000);
    while cases.len() < opts.cases && report.attempts < budget {
        report.attempts += 1;
        let repo = &repos[rng.gen_range(0..repos.len())];
        let k = rng.gen_range(opts.min_concerns..=opts.max_concerns).min(repo.len());
        let mut picked: Vec<&AtomicCommit> = repo.choose_multiple(&mut rng, k).copied().collect();
        picked.sort_by(|a, b| a.commit.commit_id.cmp(&b.commit.commit_id));
        if !seen.insert(picked.iter().map(|c| c.commit.commit_id.clone()).collect()) {
            continue;
        }
        if !opts.filter.admits(&picked) {
            report.filtered += 1;
            continue;
        }
        let owned: Vec<AtomicCommit> = picked.into_iter().cloned().collect();
        match tangle(&owned) {
            Ok(mut case) => {
                case.case_id = format!("case-{:04}", cases.len() + 1);
                cases.push(case);
            }
            Err(Error::Conflict(msg)) => {
                tracing::debug!(%msg, "skipping conflicting draw");
                report.conflicts += 1;
            }
            Err(Error::Input(msg)) => {
                tracing::debug!(%msg, "skipping incompatible draw");
                report.incompatible += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if cases.len() < opts.cases {
        tracing::warn!(wanted = opts.cases, built = cases.len(), "pool exhausted before reaching the case count");
    }
    report.cases = cases.len();
    report.manifest = save_corpus(out, &cases)?;
    Ok(report)
}

/// Writes a generated pool of atomic commits to `out`.
pub fn cmd_synth_pool(out: &Path, seed: u64, commits: usize, repo: &str) -> Result<usize> {
    if commits == 0 {
        return Err(Error::Config("the pool needs at least one commit".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = synthetic_pool(&mut rng, repo, commits);
    save_pool(out, &pool)?;
    Ok(pool.len())
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Input(_) | Error::Conflict(_) => 3,
        Error::Config(_) => 4,
        Error::Transport { .. } | Error::Scripted(_) => 5,
        Error::Protocol { .. } => 6,
        Error::Consistency(_) | Error::Io { .. } => 1,
    }
}
