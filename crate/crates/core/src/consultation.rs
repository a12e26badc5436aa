//! The consultation loop between the two workers and the reviewer.
//!
//! ```text
//! r_EA, r_IA <- untangle
//! r_RA <- synthesize(r_EA, r_IA)
//! round <- 0; consensus <- false
//! while not consensus and round < t:
//!     round += 1; consensus <- true
//!     o_EA, o_IA <- validate(r_RA)
//!     if either disagrees:
//!         consensus <- false
//!         r_RA <- stop(o_EA, o_IA, r_RA) if round = t else revise(o_EA, o_IA, r_RA)
//! final <- r_RA
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{
    reviewer_revise, reviewer_stop, reviewer_synthesize, worker_untangle, worker_validate, AgentCall, AgentError,
    AgentOpinion, CallRecord, Role, UntanglingResult, UntanglingTask, PROMPT_VERSION,
};
use crate::delta_pdg::DeltaPdg;
use crate::diff_model::ChangeSet;
use crate::error::{Error, Result};
use crate::llm::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsultationConfig {
    pub max_rounds: u32,
    /// Run the two workers' calls of a phase on separate threads.
    pub allow_concurrent_validation: bool,
}

impl Default for ConsultationConfig {
    fn default() -> Self {
        Self {
            max_rounds: 3,
            allow_concurrent_validation: false,
        }
    }
}

impl ConsultationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundAction {
    Consensus,
    Revise,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub ea_opinion: AgentOpinion,
    pub ia_opinion: AgentOpinion,
    pub action: RoundAction,
    /// Reviewer result produced by this round's revise or stop call.
    pub reviewer_result: Option<UntanglingResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultationTranscript {
    pub commit_id: String,
    pub prompt_version: String,
    pub model: String,
    pub config: ConsultationConfig,
    pub initial_ea: UntanglingResult,
    pub initial_ia: UntanglingResult,
    pub synthesized: UntanglingResult,
    pub rounds: Vec<RoundRecord>,
    pub consensus: bool,
    pub rounds_used: u32,
    pub final_result: UntanglingResult,
    pub degraded: bool,
    pub calls: Vec<CallRecord>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub elapsed_ms: u64,
}

impl ConsultationTranscript {
    /// (role, function) of every call, in canonical order.
    pub fn trace(&self) -> Vec<(Role, crate::agents::AgentFunction)> {
        self.calls.iter().map(|c| (c.role, c.function)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript is plain data")
    }
}

/// Runs `ea` and `ia`, concurrently when allowed, returning results in (EA, IA) order.
fn pair<A: Send, B: Send>(
    concurrent: bool,
    ea: impl FnOnce() -> A + Send,
    ia: impl FnOnce() -> B + Send,
) -> (A, B) {
    if concurrent {
        std::thread::scope(|s| {
            let h = s.spawn(ia);
            let a = ea();
            (a, h.join().expect("worker thread panicked"))
        })
    } else {
        let a = ea();
        (a, ia())
    }
}

struct Log {
    calls: Vec<CallRecord>,
}

impl Log {
    fn take<T>(&mut self, r: std::result::Result<AgentCall<T>, AgentError>) -> Result<T> {
        match r {
            Ok(c) => {
                self.calls.push(c.record);
                Ok(c.value)
            }
            Err(e) => {
                self.calls.push(e.record);
                Err(e.error)
            }
        }
    }
}

pub fn run_consultation(
    changes: &ChangeSet,
    g: &DeltaPdg,
    cfg: &ConsultationConfig,
    llm: &dyn Backend,
) -> Result<ConsultationTranscript> {
    let task = UntanglingTask::new(changes, g)?;
    run_on_task(&changes.commit.commit_id, &task, cfg, llm)
}

pub fn run_on_task(
    commit_id: &str,
    task: &UntanglingTask,
    cfg: &ConsultationConfig,
    llm: &dyn Backend,
) -> Result<ConsultationTranscript> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let mut log = Log { calls: Vec::new() };
    let concurrent = cfg.allow_concurrent_validation;

    let (ea, ia) = pair(
        concurrent,
        || worker_untangle(Role::Explicit, task, llm),
        || worker_untangle(Role::Implicit, task, llm),
    );
    let r_ea = log.take(ea);
    let r_ia = log.take(ia);
    let (initial_ea, initial_ia) = (r_ea?, r_ia?);
    let synthesized = log.take(reviewer_synthesize(task, &initial_ea, &initial_ia, llm))?;

    let mut own_ea = initial_ea.clone();
    let mut own_ia = initial_ia.clone();
    let mut current = synthesized.clone();
    let mut rounds = Vec::new();
    let mut consensus = false;
    let mut degraded = false;
    let mut round = 0;
    while !consensus && round < cfg.max_rounds {
        round += 1;
        consensus = true;
        let (oe, oi) = pair(
            concurrent,
            || worker_validate(Role::Explicit, task, &own_ea, &current, llm),
            || worker_validate(Role::Implicit, task, &own_ia, &current, llm),
        );
        let oe = log.take(oe);
        let oi = log.take(oi);
        let (o_ea, o_ia) = (oe?, oi?);

        let mut record = RoundRecord {
            round,
            ea_opinion: o_ea.clone(),
            ia_opinion: o_ia.clone(),
            action: RoundAction::Consensus,
            reviewer_result: None,
        };
        if !o_ea.agree || !o_ia.agree {
            consensus = false;
            if round == cfg.max_rounds {
                let stop = reviewer_stop(task, (&o_ea, &o_ia), &current, llm);
                log.calls.push(stop.record);
                degraded |= stop.degraded;
                current = stop.result;
                record.action = RoundAction::Stop;
            } else {
                current = log.take(reviewer_revise(task, (&o_ea, &o_ia), &current, llm))?;
                record.action = RoundAction::Revise;
            }
            record.reviewer_result = Some(current.clone());
        }
        if let Some(r) = o_ea.revised {
            own_ea = r;
        }
        if let Some(r) = o_ia.revised {
            own_ia = r;
        }
        rounds.push(record);
    }

    let (prompt_tokens, completion_tokens) = log.calls.iter().filter_map(|c| c.usage.as_ref()).fold((0, 0), |acc, u| {
        (
            acc.0 + u.prompt_tokens.unwrap_or(0),
            acc.1 + u.completion_tokens.unwrap_or(0),
        )
    });
    Ok(ConsultationTranscript {
        commit_id: commit_id.to_string(),
        prompt_version: PROMPT_VERSION.to_string(),
        model: llm.info().model,
        config: *cfg,
        initial_ea,
        initial_ia,
        synthesized,
        rounds,
        consensus,
        rounds_used: round,
        final_result: current,
        degraded,
        calls: log.calls,
        prompt_tokens,
        completion_tokens,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStats {
    pub count: usize,
    pub mean_rounds: f64,
    pub round_histogram: BTreeMap<u32, usize>,
    pub initial_disagreement_rate: f64,
    pub consensus_rate: f64,
    pub degraded: usize,
}

pub fn transcript_stats(transcripts: &[ConsultationTranscript]) -> Result<TranscriptStats> {
    if transcripts.is_empty() {
        return Err(Error::Input("no transcripts to summarize".into()));
    }
    let n = transcripts.len() as f64;
    let t = transcripts.iter().map(|t| t.config.max_rounds).max().unwrap_or(1);
    let mut round_histogram: BTreeMap<u32, usize> = (1..=t).map(|r| (r, 0)).collect();
    for tr in transcripts {
        *round_histogram.entry(tr.rounds_used).or_default() += 1;
    }
    let count_where = |f: &dyn Fn(&ConsultationTranscript) -> bool| transcripts.iter().filter(|t| f(t)).count();
    Ok(TranscriptStats {
        count: transcripts.len(),
        mean_rounds: transcripts.iter().map(|t| t.rounds_used as f64).sum::<f64>() / n,
        round_histogram,
        initial_disagreement_rate: count_where(&|t| !t.initial_ea.same_partition(&t.initial_ia)) as f64 / n,
        consensus_rate: count_where(&|t| t.consensus) as f64 / n,
        degraded: count_where(&|t| t.degraded),
    })
}
