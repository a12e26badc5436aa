//! Accuracy of a predicted grouping against gold concern labels.
//!
//! Predicted and gold concerns are matched one-to-one by maximum-weight
//! assignment on their contingency matrix. Statements in an unmatched
//! predicted concern count as wrong.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::agents::UntanglingResult;
use crate::diff_model::{ChangeSet, StmtId, Version};
use crate::error::{Error, Result};

/// One labelled line, as stored in `gold.json`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldEntry {
    pub file: String,
    pub version: Version,
    pub line: u32,
    pub concern: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldFile {
    pub labels: Vec<GoldEntry>,
}

/// Gold concern of every changed statement of one commit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabels {
    pub concerns: BTreeMap<StmtId, u32>,
}

impl GoldLabels {
    /// Labels each statement of `changes` with the concern of its line.
    pub fn resolve(file: &GoldFile, changes: &ChangeSet) -> Result<Self> {
        let by_line: BTreeMap<(&str, Version, u32), u32> = file
            .labels
            .iter()
            .map(|e| ((e.file.as_str(), e.version, e.line), e.concern))
            .collect();
        let mut concerns = BTreeMap::new();
        for s in &changes.statements {
            let c = by_line
                .get(&(s.file.as_str(), s.version, s.line))
                .ok_or_else(|| Error::Input(format!("no gold label for {} ({})", s.id, s.locus())))?;
            concerns.insert(s.id, *c);
        }
        Ok(Self { concerns })
    }

    pub fn restricted_to(&self, universe: &BTreeSet<StmtId>) -> Self {
        Self {
            concerns: self
                .concerns
                .iter()
                .filter(|(s, _)| universe.contains(s))
                .map(|(&s, &c)| (s, c))
                .collect(),
        }
    }

    pub fn clusters(&self) -> BTreeMap<u32, BTreeSet<StmtId>> {
        let mut out: BTreeMap<u32, BTreeSet<StmtId>> = BTreeMap::new();
        for (&s, &c) in &self.concerns {
            out.entry(c).or_default().insert(s);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Statements whose predicted concern maps onto their gold concern.
    pub correct: usize,
    pub total: usize,
    /// (predicted concern id, gold concern id) pairs.
    pub pairs: Vec<(u32, u32)>,
}

impl Matching {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Optimal one-to-one correspondence between predicted and gold concerns.
pub fn match_concerns(pred: &UntanglingResult, gold: &GoldLabels) -> Result<Matching> {
    let assigned = pred.assignment();
    let pred_universe: BTreeSet<StmtId> = assigned.keys().copied().collect();
    let gold_universe: BTreeSet<StmtId> = gold.concerns.keys().copied().collect();
    if pred_universe != gold_universe {
        let missing: Vec<String> = gold_universe.symmetric_difference(&pred_universe).map(|s| s.to_string()).collect();
        return Err(Error::Input(format!(
            "prediction and gold cover different statements: {}",
            missing.join(", ")
        )));
    }

    let pred_ids: Vec<u32> = pred.groups.iter().map(|g| g.concern_id).collect();
    let gold_ids: Vec<u32> = gold.clusters().into_keys().collect();
    if pred_ids.is_empty() {
        return Ok(Matching {
            correct: 0,
            total: 0,
            pairs: Vec::new(),
        });
    }
    let mut table = vec![vec![0i64; gold_ids.len()]; pred_ids.len()];
    for (s, p) in &assigned {
        let i = pred_ids.iter().position(|x| x == p).expect("known concern");
        let j = gold_ids.binary_search(&gold.concerns[s]).expect("known concern");
        table[i][j] += 1;
    }

    let transpose = pred_ids.len() > gold_ids.len();
    let rows: Vec<Vec<i64>> = if transpose {
        (0..gold_ids.len()).map(|j| table.iter().map(|r| r[j]).collect()).collect()
    } else {
        table.clone()
    };
    let weights = Matrix::from_rows(rows).map_err(|e| Error::Consistency(e.to_string()))?;
    let (total, assignment) = kuhn_munkres(&weights);
    let mut pairs: Vec<(u32, u32)> = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| if transpose { (c, r) } else { (r, c) })
        .filter(|&(i, j)| table[i][j] > 0)
        .map(|(i, j)| (pred_ids[i], gold_ids[j]))
        .collect();
    pairs.sort_unstable();
    Ok(Matching {
        correct: total as usize,
        total: assigned.len(),
        pairs,
    })
}

pub fn accuracy_c(pred: &UntanglingResult, gold: &GoldLabels) -> Result<f64> {
    Ok(match_concerns(pred, gold)?.fraction())
}

/// Accuracy over all statements of the commit; unchanged statements count as correct.
pub fn accuracy_a(pred: &UntanglingResult, gold: &GoldLabels, all_statement_count: usize) -> Result<f64> {
    let m = match_concerns(pred, gold)?;
    accuracy_a_from(&m, all_statement_count)
}

fn accuracy_a_from(m: &Matching, all: usize) -> Result<f64> {
    if all < m.total {
        return Err(Error::Input(format!(
            "statement count {all} is smaller than the {} changed statements",
            m.total
        )));
    }
    if all == 0 {
        return Ok(1.0);
    }
    Ok((m.correct + (all - m.total)) as f64 / all as f64)
}

/// Accuracy of putting every statement into one concern: the largest gold cluster's share.
pub fn single_cluster_baseline(gold: &GoldLabels) -> f64 {
    let n = gold.concerns.len();
    if n == 0 {
        return 1.0;
    }
    let largest = gold.clusters().values().map(BTreeSet::len).max().unwrap_or(0);
    largest as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitScore {
    pub commit_id: String,
    pub repo: String,
    pub accuracy_c: f64,
    pub accuracy_a: f64,
    pub changed: usize,
    pub all_statements: usize,
    pub correct: usize,
    pub mapping: Vec<(u32, u32)>,
}

pub fn score_commit(
    commit_id: &str,
    repo: &str,
    pred: &UntanglingResult,
    gold: &GoldLabels,
    all_statement_count: usize,
) -> Result<CommitScore> {
    let m = match_concerns(pred, gold)?;
    Ok(CommitScore {
        commit_id: commit_id.to_string(),
        repo: repo.to_string(),
        accuracy_c: m.fraction(),
        accuracy_a: accuracy_a_from(&m, all_statement_count)?,
        changed: m.total,
        all_statements: all_statement_count,
        correct: m.correct,
        mapping: m.pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub commits: usize,
    pub accuracy_c: f64,
    pub accuracy_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub commits: Vec<CommitScore>,
    pub per_repo: BTreeMap<String, Summary>,
    pub overall: Option<Summary>,
}

fn summarize<'a>(scores: impl Iterator<Item = &'a CommitScore>) -> Option<Summary> {
    let (mut n, mut c, mut a) = (0usize, 0.0, 0.0);
    for s in scores {
        n += 1;
        c += s.accuracy_c;
        a += s.accuracy_a;
    }
    (n > 0).then(|| Summary {
        commits: n,
        accuracy_c: c / n as f64,
        accuracy_a: a / n as f64,
    })
}

/// Unweighted means per repository and over all commits.
pub fn aggregate(scores: Vec<CommitScore>) -> EvalReport {
    let repos: BTreeSet<&str> = scores.iter().map(|s| s.repo.as_str()).collect();
    let mut per_repo = BTreeMap::new();
    for repo in repos {
        match summarize(scores.iter().filter(|s| s.repo == repo)) {
            Some(summary) => {
                per_repo.insert(repo.to_string(), summary);
            }
            None => tracing::warn!(repo, "no commits to aggregate"),
        }
    }
    let overall = summarize(scores.iter());
    let mut commits = scores;
    commits.sort_by(|a, b| (&a.repo, &a.commit_id).cmp(&(&b.repo, &b.commit_id)));
    EvalReport {
        commits,
        per_repo,
        overall,
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<32} {:>8} {:>11} {:>11}", "repo", "commits", "accuracy_c", "accuracy_a");
        let rows = self
            .per_repo
            .iter()
            .map(|(r, s)| (r.as_str(), s))
            .chain(self.overall.as_ref().map(|s| ("overall", s)));
        for (name, s) in rows {
            let _ = writeln!(
                out,
                "{:<32} {:>8} {:>11.4} {:>11.4}",
                name, s.commits, s.accuracy_c, s.accuracy_a
            );
        }
        out
    }
}
