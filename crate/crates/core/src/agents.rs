//! Worker and reviewer agents: prompts, rule catalogs, reply parsing and the
//! five agent functions.
//!
//! Every function that yields an [`UntanglingResult`] returns a partition of
//! the task's statement universe. Replies are parsed leniently and repaired
//! (see [`parse_reply`]) before they reach the consultation loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::contexts::{
    extract_explicit_context, extract_implicit_context, render_context, Context, ContextRendering,
};
use crate::delta_pdg::DeltaPdg;
use crate::diff_model::{render_unified_diff, ChangeSet, StmtId};
use crate::error::{Error, Result};
use crate::llm::{Backend, Usage};

pub const PROMPT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "EA")]
    Explicit,
    #[serde(rename = "IA")]
    Implicit,
    #[serde(rename = "RA")]
    Reviewer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Explicit => "EA",
            Role::Implicit => "IA",
            Role::Reviewer => "RA",
        }
    }

    fn is_worker(self) -> bool {
        self != Role::Reviewer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentFunction {
    Untangle,
    Validate,
    Synthesize,
    Revise,
    Stop,
}

impl AgentFunction {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentFunction::Untangle => "untangle",
            AgentFunction::Validate => "validate",
            AgentFunction::Synthesize => "synthesize",
            AgentFunction::Revise => "revise",
            AgentFunction::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyRuleSet {
    pub kind: RuleKind,
    pub rules: Vec<String>,
}

const EXPLICIT_RULES: [&str; 2] = [
    "Code changes with data dependencies often belong to the same concern.",
    "Code changes with control dependencies often belong to the same concern.",
];

const IMPLICIT_RULES: [&str; 3] = [
    "Code changes with semantic similarity may belong to the same concern.",
    "Code changes with high textual or structure similarity may belong to the same concern.",
    "Code changes introduced for cosmetic edits, such as syntactic formatting, refactoring, or non-functional textual modifications, often belong to the same concern.",
];

impl DependencyRuleSet {
    pub fn explicit() -> Self {
        Self {
            kind: RuleKind::Explicit,
            rules: EXPLICIT_RULES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn implicit() -> Self {
        Self {
            kind: RuleKind::Implicit,
            rules: IMPLICIT_RULES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcernGroup {
    pub concern_id: u32,
    pub members: BTreeSet<StmtId>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UntanglingResult {
    pub groups: Vec<ConcernGroup>,
    pub producer: Role,
}

impl UntanglingResult {
    /// Builds a result from member lists, numbering groups from 1.
    pub fn from_groups(producer: Role, groups: impl IntoIterator<Item = Vec<StmtId>>) -> Self {
        Self {
            groups: groups
                .into_iter()
                .enumerate()
                .map(|(i, members)| ConcernGroup {
                    concern_id: i as u32 + 1,
                    members: members.into_iter().collect(),
                    explanation: String::new(),
                })
                .collect(),
            producer,
        }
    }

    pub fn single_cluster(producer: Role, universe: &BTreeSet<StmtId>) -> Self {
        Self::from_groups(producer, [universe.iter().copied().collect()])
    }

    /// Concern id of every statement.
    pub fn assignment(&self) -> BTreeMap<StmtId, u32> {
        self.groups
            .iter()
            .flat_map(|g| g.members.iter().map(move |&s| (s, g.concern_id)))
            .collect()
    }

    /// Checks totality over `universe`, disjointness, non-empty groups and contiguous ids.
    pub fn check_partition(&self, universe: &BTreeSet<StmtId>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, g) in self.groups.iter().enumerate() {
            if g.concern_id != i as u32 + 1 {
                return Err(Error::Consistency(format!("concern ids not contiguous at group {}", i + 1)));
            }
            if g.members.is_empty() {
                return Err(Error::Consistency(format!("group {} is empty", g.concern_id)));
            }
            for s in &g.members {
                if !universe.contains(s) {
                    return Err(Error::Consistency(format!("{s} is not a changed statement")));
                }
                if !seen.insert(*s) {
                    return Err(Error::Consistency(format!("{s} appears in two groups")));
                }
            }
        }
        if seen.len() != universe.len() {
            return Err(Error::Consistency("partition does not cover every statement".into()));
        }
        Ok(())
    }

    /// Equality of the underlying partitions, ignoring ids, order and explanations.
    pub fn same_partition(&self, other: &UntanglingResult) -> bool {
        let sets = |r: &UntanglingResult| -> BTreeSet<BTreeSet<StmtId>> {
            r.groups.iter().map(|g| g.members.clone()).collect()
        };
        sets(self) == sets(other)
    }

    /// Reply-schema JSON for this result.
    pub fn to_reply_json(&self) -> Value {
        json!({
            "groups": self.groups.iter().map(|g| json!({
                "concern_id": g.concern_id,
                "statement_ids": g.members.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "explanation": g.explanation,
            })).collect::<Vec<_>>()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOpinion {
    pub agree: bool,
    pub revised: Option<UntanglingResult>,
    pub rationale: String,
}

/// One model request. `role` and `function` are metadata for backends and
/// transcripts and are not sent on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role: Role,
    pub function: AgentFunction,
    pub system: String,
    pub user: String,
}

impl PromptBundle {
    /// Hex SHA-256 over the wire content, used as a script key.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update([0u8]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Everything the agents see about one commit, rendered once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UntanglingTask {
    pub universe: BTreeSet<StmtId>,
    pub statements: String,
    pub diff: String,
    pub explicit: ContextRendering,
    pub implicit: ContextRendering,
}

impl UntanglingTask {
    pub fn new(changes: &ChangeSet, g: &DeltaPdg) -> Result<Self> {
        if changes.is_empty() {
            return Err(Error::Input(format!("commit {} has no changed statements", changes.commit.commit_id)));
        }
        let mut statements = String::new();
        for s in &changes.statements {
            let _ = writeln!(statements, "{} {} {:?}", s.id, s.locus(), s.text);
        }
        let ec = extract_explicit_context(g);
        let ic = extract_implicit_context(g);
        Ok(Self {
            universe: changes.ids().into_iter().collect(),
            statements,
            diff: render_unified_diff(changes),
            explicit: render_context(g, Context::Explicit(&ec)),
            implicit: render_context(g, Context::Implicit(&ic)),
        })
    }
}

// ---------------------------------------------------------------------------
// Prompts

const WORKER_ROLE: &str = "You are an expert in untangling tangled commits, specializing in analyzing {kind} dependencies between code changes and comprehending their underlying semantic relationships.";
const REVIEWER_ROLE: &str = "You are an expert reviewer specializing in reviewing and synthesizing untangling results from worker agents. You have deep expertise in analyzing both explicit and implicit dependencies between code changes.";
const SYSTEM_TAIL: &str = "Answer with a single JSON object in the requested format and nothing else.";

const RESULT_SCHEMA: &str = r#"Reply with one JSON object of this form:
{"groups": [{"concern_id": 1, "statement_ids": ["s1", "s2"], "explanation": "why these changes form one concern"}]}
Every changed statement id must appear in exactly one group. Number concerns from 1."#;

const OPINION_SCHEMA: &str = r#"Reply with one JSON object of this form:
{"agree": true, "rationale": "short justification"}
If you disagree, set "agree" to false and include your revised grouping:
{"agree": false, "rationale": "what is wrong", "groups": [{"concern_id": 1, "statement_ids": ["s1"], "explanation": "..."}]}"#;

/// Inputs a prompt may embed beyond the task itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptPayload<'a> {
    pub own: Option<&'a UntanglingResult>,
    pub synthesized: Option<&'a UntanglingResult>,
    pub explicit_result: Option<&'a UntanglingResult>,
    pub implicit_result: Option<&'a UntanglingResult>,
    pub opinions: Option<(&'a AgentOpinion, &'a AgentOpinion)>,
    pub current: Option<&'a UntanglingResult>,
}

fn section(out: &mut String, title: &str, body: &str) {
    let _ = write!(out, "## {title}\n{}\n\n", body.trim_end());
}

fn rules_text(set: &DependencyRuleSet) -> String {
    set.rules.iter().map(|r| format!("- {r}")).collect::<Vec<_>>().join("\n")
}

fn result_text(r: &UntanglingResult) -> String {
    serde_json::to_string_pretty(&r.to_reply_json()).expect("plain json")
}

fn opinion_text(o: &AgentOpinion) -> String {
    let mut v = json!({"agree": o.agree, "rationale": o.rationale});
    if let Some(r) = &o.revised {
        v["groups"] = r.to_reply_json()["groups"].clone();
    }
    serde_json::to_string_pretty(&v).expect("plain json")
}

pub fn build_prompt(
    role: Role,
    function: AgentFunction,
    task: &UntanglingTask,
    payload: &PromptPayload<'_>,
) -> PromptBundle {
    let role_sentence = match role {
        Role::Explicit => WORKER_ROLE.replace("{kind}", "explicit"),
        Role::Implicit => WORKER_ROLE.replace("{kind}", "implicit"),
        Role::Reviewer => REVIEWER_ROLE.to_string(),
    };
    let system = format!("{role_sentence}\n\n{SYSTEM_TAIL}");

    let instruction = match (role.is_worker(), function) {
        (true, AgentFunction::Untangle) => {
            "Untangle the commit below: group its changed statements by development concern."
        }
        (true, AgentFunction::Validate) => {
            "Compare the reviewer's synthesized grouping with your own grouping and state whether you agree with it."
        }
        (_, AgentFunction::Synthesize) => {
            "Synthesize the groupings proposed by the explicit-dependency and implicit-dependency workers into one grouping."
        }
        (_, AgentFunction::Revise) => {
            "The workers reviewed your current grouping. Revise it in light of their opinions."
        }
        (_, AgentFunction::Stop) => {
            "The consultation has reached its round limit. Produce the final grouping, taking the workers' latest opinions into account."
        }
        _ => "Group the changed statements by development concern.",
    };

    let mut user = String::new();
    section(&mut user, "Task", instruction);
    match role {
        Role::Explicit => section(&mut user, "Explicit dependency rules", &rules_text(&DependencyRuleSet::explicit())),
        Role::Implicit => section(&mut user, "Implicit dependency rules", &rules_text(&DependencyRuleSet::implicit())),
        Role::Reviewer => {
            section(&mut user, "Explicit dependency rules", &rules_text(&DependencyRuleSet::explicit()));
            section(&mut user, "Implicit dependency rules", &rules_text(&DependencyRuleSet::implicit()));
        }
    }
    section(&mut user, "Changed statements", &task.statements);

    let with_diff = matches!(function, AgentFunction::Untangle | AgentFunction::Synthesize);
    if with_diff {
        section(&mut user, "Commit diff", &format!("```diff\n{}```", task.diff));
    }
    let legend = "Lines are `[id] file:version:line kind \"text\"`; edges are `src -kind{variables}-> dst`, and `src ~{variables}~> dst (N hops)` marks a dependency path through unchanged statements.";
    match (role, function) {
        (Role::Explicit, AgentFunction::Untangle) => {
            section(&mut user, "Explicit context", &format!("{legend}\n{}", task.explicit.text));
        }
        (Role::Implicit, AgentFunction::Untangle) => {
            section(&mut user, "Implicit context", &format!("{legend}\n{}", task.implicit.text));
        }
        (Role::Reviewer, AgentFunction::Synthesize) => {
            section(&mut user, "Explicit context", &format!("{legend}\n{}", task.explicit.text));
            section(&mut user, "Implicit context", &task.implicit.text);
        }
        _ => {}
    }

    if let Some(r) = payload.explicit_result {
        section(&mut user, "Explicit worker result", &result_text(r));
    }
    if let Some(r) = payload.implicit_result {
        section(&mut user, "Implicit worker result", &result_text(r));
    }
    if let Some(r) = payload.own {
        section(&mut user, "Your grouping", &result_text(r));
    }
    if let Some(r) = payload.synthesized {
        section(&mut user, "Synthesized grouping", &result_text(r));
    }
    if let Some((ea, ia)) = payload.opinions {
        section(&mut user, "Explicit worker opinion", &opinion_text(ea));
        section(&mut user, "Implicit worker opinion", &opinion_text(ia));
    }
    if let Some(r) = payload.current {
        section(&mut user, "Current grouping", &result_text(r));
    }

    let schema = if function == AgentFunction::Validate { OPINION_SCHEMA } else { RESULT_SCHEMA };
    section(&mut user, "Reply format", schema);
    let user = user.trim_end().to_string() + "\n";

    PromptBundle {
        role,
        function,
        system,
        user,
    }
}

// ---------------------------------------------------------------------------
// Reply parsing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Result,
    Opinion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Result(UntanglingResult),
    /// `revised` may be absent on disagreement; [`worker_validate`] fills it in.
    Opinion(AgentOpinion),
}

const ORPHAN_EXPLANATION: &str = "not assigned by the model";

/// First JSON object embedded in `raw`, skipping prose, fences and invalid fragments.
fn first_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    raw.char_indices()
        .filter(|&(_, c)| c == '{')
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) => Some(map),
                _ => None,
            }
        })
}

fn stmt_id(v: &Value) -> Option<StmtId> {
    match v {
        Value::String(s) => s.parse().ok(),
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()).map(StmtId),
        _ => None,
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n))
}

/// Repairs the `groups` array of a reply into a partition of `universe`.
///
/// Returns `None` when the reply names no statement of the universe.
fn repair_groups(groups: &Value, universe: &BTreeSet<StmtId>, producer: Role) -> Option<UntanglingResult> {
    let mut assigned = BTreeSet::new();
    let mut kept: Vec<(BTreeSet<StmtId>, String)> = Vec::new();
    for g in groups.as_array()? {
        let (ids, explanation) = match g {
            Value::Object(o) => (
                field(o, &["statement_ids", "statements", "members", "ids"]),
                field(o, &["explanation", "reason", "description"])
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
            ),
            Value::Array(_) => (Some(g), String::new()),
            _ => (None, String::new()),
        };
        let members: BTreeSet<StmtId> = ids
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter_map(stmt_id)
            .filter(|s| universe.contains(s) && !assigned.contains(s))
            .collect();
        assigned.extend(members.iter().copied());
        if !members.is_empty() {
            kept.push((members, explanation));
        }
    }
    if kept.is_empty() {
        return None;
    }
    for s in universe.difference(&assigned.clone()) {
        kept.push(([*s].into_iter().collect(), ORPHAN_EXPLANATION.to_string()));
    }
    Some(UntanglingResult {
        groups: kept
            .into_iter()
            .enumerate()
            .map(|(i, (members, explanation))| ConcernGroup {
                concern_id: i as u32 + 1,
                members,
                explanation,
            })
            .collect(),
        producer,
    })
}

fn agreement(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => n.as_f64().map(|x| x != 0.0),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" | "y" | "agree" | "agreed" | "agreement" | "accept" | "accepted" | "1" => Some(true),
            "false" | "no" | "n" | "disagree" | "disagreed" | "disagreement" | "reject" | "rejected" | "0" => {
                Some(false)
            }
            _ => None,
        },
        _ => None,
    }
}

/// Extracts and repairs a reply.
///
/// The first well-formed JSON object in `raw` is used. Group repair drops
/// unknown ids, keeps a statement only in the first group naming it, removes
/// empty groups, appends every unnamed statement as its own trailing group and
/// renumbers concerns from 1.
pub fn parse_reply(raw: &str, expected: Expected, universe: &BTreeSet<StmtId>, producer: Role) -> Result<Parsed> {
    let obj = first_object(raw).ok_or_else(|| Error::protocol("reply contains no JSON object", raw))?;
    match expected {
        Expected::Result => {
            let groups = field(&obj, &["groups", "concerns", "clusters"])
                .ok_or_else(|| Error::protocol("reply has no `groups` array", raw))?;
            repair_groups(groups, universe, producer)
                .map(Parsed::Result)
                .ok_or_else(|| Error::protocol("reply names no changed statement", raw))
        }
        Expected::Opinion => {
            let agree = field(&obj, &["agree", "agreement", "agreed", "consensus"])
                .and_then(agreement)
                .ok_or_else(|| Error::protocol("reply has no recognizable `agree` flag", raw))?;
            let rationale = field(&obj, &["rationale", "reason", "explanation"])
                .and_then(Value::as_str)
                .unwrap_or_default()
                .trim()
                .to_string();
            let revised = if agree {
                None
            } else {
                field(&obj, &["groups", "concerns", "clusters"]).and_then(|g| repair_groups(g, universe, producer))
            };
            Ok(Parsed::Opinion(AgentOpinion {
                agree,
                revised,
                rationale,
            }))
        }
    }
}

// ---------------------------------------------------------------------------
// Agent functions

/// Audit record of one agent call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: Role,
    pub function: AgentFunction,
    pub prompt_hash: String,
    pub system: String,
    pub user: String,
    pub raw_reply: Option<String>,
    pub usage: Option<Usage>,
    pub error: Option<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone)]
pub struct AgentCall<T> {
    pub value: T,
    pub record: CallRecord,
}

/// Agent failure together with the record of the failed call.
#[derive(Debug)]
pub struct AgentError {
    pub error: Error,
    pub record: CallRecord,
}

impl From<AgentError> for Error {
    fn from(e: AgentError) -> Self {
        e.error
    }
}

pub type AgentResult<T> = std::result::Result<AgentCall<T>, AgentError>;

fn call<T>(
    bundle: PromptBundle,
    llm: &dyn Backend,
    parse: impl FnOnce(&str) -> Result<T>,
) -> AgentResult<T> {
    let started = Instant::now();
    let mut record = CallRecord {
        role: bundle.role,
        function: bundle.function,
        prompt_hash: bundle.hash(),
        system: bundle.system.clone(),
        user: bundle.user.clone(),
        raw_reply: None,
        usage: None,
        error: None,
        elapsed_ms: 0,
    };
    let outcome = llm.complete(&bundle).and_then(|c| {
        record.raw_reply = Some(c.text.clone());
        record.usage = Some(c.usage);
        parse(&c.text)
    });
    record.elapsed_ms = started.elapsed().as_millis() as u64;
    tracing::debug!(role = bundle.role.as_str(), function = bundle.function.as_str(), ok = outcome.is_ok(), "agent call");
    match outcome {
        Ok(value) => Ok(AgentCall { value, record }),
        Err(error) => {
            record.error = Some(error.to_string());
            Err(AgentError { error, record })
        }
    }
}

fn expect_result(parsed: Parsed) -> UntanglingResult {
    match parsed {
        Parsed::Result(r) => r,
        Parsed::Opinion(_) => unreachable!("parsed as result"),
    }
}

fn result_call(role: Role, function: AgentFunction, task: &UntanglingTask, payload: PromptPayload<'_>, llm: &dyn Backend) -> AgentResult<UntanglingResult> {
    let bundle = build_prompt(role, function, task, &payload);
    call(bundle, llm, |raw| parse_reply(raw, Expected::Result, &task.universe, role).map(expect_result))
}

pub fn worker_untangle(role: Role, task: &UntanglingTask, llm: &dyn Backend) -> AgentResult<UntanglingResult> {
    assert!(role.is_worker(), "untangle is a worker function");
    result_call(role, AgentFunction::Untangle, task, PromptPayload::default(), llm)
}

pub fn worker_validate(
    role: Role,
    task: &UntanglingTask,
    own: &UntanglingResult,
    synthesized: &UntanglingResult,
    llm: &dyn Backend,
) -> AgentResult<AgentOpinion> {
    assert!(role.is_worker(), "validate is a worker function");
    let payload = PromptPayload {
        own: Some(own),
        synthesized: Some(synthesized),
        ..Default::default()
    };
    let bundle = build_prompt(role, AgentFunction::Validate, task, &payload);
    call(bundle, llm, |raw| {
        let Parsed::Opinion(mut o) = parse_reply(raw, Expected::Opinion, &task.universe, role)? else {
            unreachable!("parsed as opinion")
        };
        if !o.agree {
            if o.revised.is_none() {
                let mut fallback = own.clone();
                fallback.producer = role;
                o.revised = Some(fallback);
            }
            if o.rationale.is_empty() {
                o.rationale = "disagrees with the synthesized grouping".into();
            }
        }
        Ok(o)
    })
}

pub fn reviewer_synthesize(
    task: &UntanglingTask,
    r_ea: &UntanglingResult,
    r_ia: &UntanglingResult,
    llm: &dyn Backend,
) -> AgentResult<UntanglingResult> {
    let payload = PromptPayload {
        explicit_result: Some(r_ea),
        implicit_result: Some(r_ia),
        ..Default::default()
    };
    result_call(Role::Reviewer, AgentFunction::Synthesize, task, payload, llm)
}

pub fn reviewer_revise(
    task: &UntanglingTask,
    opinions: (&AgentOpinion, &AgentOpinion),
    current: &UntanglingResult,
    llm: &dyn Backend,
) -> AgentResult<UntanglingResult> {
    let payload = PromptPayload {
        opinions: Some(opinions),
        current: Some(current),
        ..Default::default()
    };
    result_call(Role::Reviewer, AgentFunction::Revise, task, payload, llm)
}

/// Final reviewer call. Never fails: any error yields `current` with `degraded` set.
pub fn reviewer_stop(
    task: &UntanglingTask,
    opinions: (&AgentOpinion, &AgentOpinion),
    current: &UntanglingResult,
    llm: &dyn Backend,
) -> StopOutcome {
    let payload = PromptPayload {
        opinions: Some(opinions),
        current: Some(current),
        ..Default::default()
    };
    match result_call(Role::Reviewer, AgentFunction::Stop, task, payload, llm) {
        Ok(c) => StopOutcome {
            result: c.value,
            degraded: false,
            record: c.record,
        },
        Err(e) => {
            tracing::warn!(error = %e.error, "reviewer stop failed, keeping current grouping");
            StopOutcome {
                result: current.clone(),
                degraded: true,
                record: e.record,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StopOutcome {
    pub result: UntanglingResult,
    pub degraded: bool,
    pub record: CallRecord,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe(n: u32) -> BTreeSet<StmtId> {
        (1..=n).map(StmtId).collect()
    }

    fn result(raw: &str, n: u32) -> UntanglingResult {
        match parse_reply(raw, Expected::Result, &universe(n), Role::Reviewer).unwrap() {
            Parsed::Result(r) => r,
            other => panic!("{other:?}"),
        }
    }

    fn opinion(raw: &str, n: u32) -> AgentOpinion {
        match parse_reply(raw, Expected::Opinion, &universe(n), Role::Explicit).unwrap() {
            Parsed::Opinion(o) => o,
            other => panic!("{other:?}"),
        }
    }

    fn members(r: &UntanglingResult) -> Vec<Vec<u32>> {
        r.groups.iter().map(|g| g.members.iter().map(|s| s.0).collect()).collect()
    }

    #[test]
    fn rule_sets_are_verbatim() {
        let e = DependencyRuleSet::explicit();
        assert_eq!(e.rules.len(), 2);
        assert_eq!(e.rules[0], "Code changes with data dependencies often belong to the same concern.");
        assert_eq!(e.rules[1], "Code changes with control dependencies often belong to the same concern.");
        let i = DependencyRuleSet::implicit();
        assert_eq!(
            i.rules,
            vec![
                "Code changes with semantic similarity may belong to the same concern.",
                "Code changes with high textual or structure similarity may belong to the same concern.",
                "Code changes introduced for cosmetic edits, such as syntactic formatting, refactoring, or non-functional textual modifications, often belong to the same concern.",
            ]
        );
    }

    #[test]
    fn clean_reply_parses_verbatim() {
        let r = result(
            r#"{"groups":[{"concern_id":1,"statement_ids":["s1","s2"],"explanation":"a"},{"concern_id":2,"statement_ids":["s3"],"explanation":"b"}]}"#,
            3,
        );
        assert_eq!(members(&r), vec![vec![1, 2], vec![3]]);
        assert_eq!(r.groups[1].explanation, "b");
    }

    #[test]
    fn fenced_reply_with_prose_is_accepted() {
        let r = result("Here you go:\n```json\n{\"groups\": [{\"statement_ids\": [1, \"S2\"]}]}\n```\nDone {not json}", 2);
        assert_eq!(members(&r), vec![vec![1, 2]]);
    }

    #[test]
    fn omitted_statement_becomes_trailing_singleton() {
        let r = result(r#"{"groups":[{"statement_ids":["s1","s2"]},{"statement_ids":["s3"]}]}"#, 7);
        assert_eq!(members(&r), vec![vec![1, 2], vec![3], vec![4], vec![5], vec![6], vec![7]]);
        assert_eq!(r.groups[3].concern_id, 4);
    }

    #[test]
    fn repair_rule_table() {
        // duplicate membership, an unknown id, and a group emptied by both
        let raw = r#"{"groups":[
            {"concern_id":3,"statement_ids":["s2","s9","s1"]},
            {"concern_id":1,"statement_ids":["s1","s99"]},
            {"concern_id":2,"statement_ids":["s3","s2"]}
        ]}"#;
        let r = result(raw, 4);
        assert_eq!(members(&r), vec![vec![1, 2], vec![3], vec![4]]);
        assert_eq!(r.groups.iter().map(|g| g.concern_id).collect::<Vec<_>>(), vec![1, 2, 3]);
        r.check_partition(&universe(4)).unwrap();
    }

    #[test]
    fn no_json_or_no_known_ids_is_protocol_error() {
        for raw in ["I think s1 and s2 go together.", r#"{"groups":[{"statement_ids":["s8"]}]}"#, "{\"x\":1}"] {
            assert!(matches!(
                parse_reply(raw, Expected::Result, &universe(3), Role::Explicit),
                Err(Error::Protocol { .. })
            ));
        }
    }

    #[test]
    fn agreement_forms_are_recognized() {
        for raw in [r#"{"agree":true}"#, r#"{"agree":"Yes"}"#, r#"{"agreement":"agreed"}"#, r#"{"agree":1}"#] {
            assert!(opinion(raw, 2).agree, "{raw}");
        }
        for raw in [r#"{"agree":false}"#, r#"{"agree":"no"}"#, r#"{"agree":0}"#] {
            assert!(!opinion(raw, 2).agree, "{raw}");
        }
    }

    #[test]
    fn agreement_discards_stray_revision() {
        let o = opinion(r#"{"agree":true,"rationale":"fine","groups":[{"statement_ids":["s1"]}]}"#, 2);
        assert!(o.agree && o.revised.is_none());
    }

    #[test]
    fn disagreement_keeps_revision() {
        let o = opinion(r#"{"agree":false,"rationale":"split","groups":[{"statement_ids":["s1"]},{"statement_ids":["s2"]}]}"#, 2);
        assert_eq!(members(o.revised.as_ref().unwrap()), vec![vec![1], vec![2]]);
        assert_eq!(o.rationale, "split");
    }

    #[test]
    fn repair_is_idempotent_on_rendered_output() {
        let r = result(r#"{"groups":[{"statement_ids":["s3","s1"],"explanation":"x"},{"statement_ids":["s1"]}]}"#, 4);
        let again = result(&r.to_reply_json().to_string(), 4);
        assert_eq!(r, again);
    }

    #[test]
    fn partition_equality_ignores_labels() {
        let a = UntanglingResult::from_groups(Role::Explicit, [vec![StmtId(1)], vec![StmtId(2), StmtId(3)]]);
        let b = UntanglingResult::from_groups(Role::Implicit, [vec![StmtId(3), StmtId(2)], vec![StmtId(1)]]);
        let c = UntanglingResult::from_groups(Role::Implicit, [vec![StmtId(1), StmtId(2)], vec![StmtId(3)]]);
        assert!(a.same_partition(&b));
        assert!(!a.same_partition(&c));
    }
}
