use std::sync::Mutex;

use proptest::prelude::*;
use serde_json::json;
use untangle_core::agents::{AgentFunction, PromptBundle, Role, UntanglingTask};
use untangle_core::consultation::{run_on_task, transcript_stats, ConsultationConfig, RoundAction};
use untangle_core::delta_pdg::build_delta_pdg;
use untangle_core::diff_model::{parse_unified_diff, Version};
use untangle_core::fixtures::channel_commit;
use untangle_core::frontend::FrontEndRegistry;
use untangle_core::llm::{FnBackend, ScriptStep, ScriptedBackend};
use untangle_core::pdg::build_pdg;
use untangle_core::Error;

fn task() -> UntanglingTask {
    let registry = FrontEndRegistry::with_defaults();
    let (commit, diff) = channel_commit();
    let changes = parse_unified_diff(&diff, &commit, &registry).unwrap();
    let b = build_pdg(&commit.files, Version::Before, &registry).unwrap();
    let a = build_pdg(&commit.files, Version::After, &registry).unwrap();
    let g = build_delta_pdg(&b, &a, &changes.alignment, &changes).unwrap();
    UntanglingTask::new(&changes, &g).unwrap()
}

const SPLIT: &str = r#"{"groups":[{"concern_id":1,"statement_ids":["s1","s3"],"explanation":"a"},{"concern_id":2,"statement_ids":["s2","s4"],"explanation":"b"}]}"#;
const ONE: &str = r#"{"groups":[{"concern_id":1,"statement_ids":["s1","s2","s3","s4"],"explanation":"all"}]}"#;

/// Backend whose workers agree or disagree per round according to `pattern`.
fn patterned(pattern: Vec<(bool, bool)>) -> FnBackend {
    let seen = Mutex::new([0usize; 2]);
    FnBackend::new("pattern", move |b: &PromptBundle| {
        Ok(match b.function {
            AgentFunction::Validate => {
                let slot = if b.role == Role::Explicit { 0 } else { 1 };
                let round = {
                    let mut s = seen.lock().unwrap();
                    s[slot] += 1;
                    s[slot] - 1
                };
                let agree = if slot == 0 { pattern[round].0 } else { pattern[round].1 };
                if agree {
                    json!({"agree": true, "rationale": "ok"}).to_string()
                } else {
                    format!(r#"{{"agree": false, "rationale": "no", "groups": {}}}"#, &SPLIT[10..SPLIT.len() - 1])
                }
            }
            AgentFunction::Untangle if b.role == Role::Implicit => ONE.to_string(),
            _ => SPLIT.to_string(),
        })
    })
}

type Call = (Role, AgentFunction);

/// Step-by-step simulation of the loop, written independently of the implementation.
fn reference(t: u32, pattern: &[(bool, bool)]) -> Vec<Call> {
    use AgentFunction::*;
    let mut seq = vec![(Role::Explicit, Untangle), (Role::Implicit, Untangle), (Role::Reviewer, Synthesize)];
    for r in 1..=t {
        seq.push((Role::Explicit, Validate));
        seq.push((Role::Implicit, Validate));
        let (a, b) = pattern[r as usize - 1];
        if a && b {
            break;
        }
        seq.push((Role::Reviewer, if r == t { Stop } else { Revise }));
    }
    seq
}

#[test]
fn all_agreeing_workers_finish_in_one_round() {
    let task = task();
    let tr = run_on_task("c", &task, &ConsultationConfig::default(), &patterned(vec![(true, true); 3])).unwrap();
    assert_eq!(tr.rounds_used, 1);
    assert!(tr.consensus);
    assert_eq!(tr.final_result, tr.synthesized);
    assert_eq!(tr.rounds[0].action, RoundAction::Consensus);
}

#[test]
fn endless_disagreement_stops_at_budget() {
    let task = task();
    let tr = run_on_task("c", &task, &ConsultationConfig::default(), &patterned(vec![(true, false); 3])).unwrap();
    assert_eq!(tr.rounds_used, 3);
    assert!(!tr.consensus);
    let stops = tr.trace().iter().filter(|c| c.1 == AgentFunction::Stop).count();
    assert_eq!(stops, 1);
    assert_eq!(tr.rounds.last().unwrap().action, RoundAction::Stop);
}

#[test]
fn disagreement_then_agreement_revises_once() {
    let task = task();
    let tr = run_on_task(
        "c",
        &task,
        &ConsultationConfig::default(),
        &patterned(vec![(false, true), (true, true), (true, true)]),
    )
    .unwrap();
    assert_eq!(tr.rounds_used, 2);
    assert!(tr.consensus);
    assert_eq!(tr.trace().iter().filter(|c| c.1 == AgentFunction::Revise).count(), 1);
}

#[test]
fn every_pattern_of_three_rounds_matches_reference() {
    let task = task();
    for bits in 0u32..64 {
        let pattern: Vec<(bool, bool)> = (0..3).map(|r| (bits >> (2 * r) & 1 == 1, bits >> (2 * r + 1) & 1 == 1)).collect();
        for concurrent in [false, true] {
            let cfg = ConsultationConfig {
                max_rounds: 3,
                allow_concurrent_validation: concurrent,
            };
            let tr = run_on_task("c", &task, &cfg, &patterned(pattern.clone())).unwrap();
            assert_eq!(tr.trace(), reference(3, &pattern), "pattern {bits:06b}");
            assert!(tr.rounds_used <= 3);
            if tr.consensus {
                let last = tr.rounds.last().unwrap();
                assert!(last.ea_opinion.agree && last.ia_opinion.agree);
            }
            tr.final_result.check_partition(&task.universe).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn traces_match_reference_for_small_budgets(t in 1u32..=5, bits in any::<u32>()) {
        let task = task();
        let pattern: Vec<(bool, bool)> = (0..t).map(|r| (bits >> (2 * r) & 1 == 1, bits >> (2 * r + 1) & 1 == 1)).collect();
        let cfg = ConsultationConfig { max_rounds: t, allow_concurrent_validation: false };
        let tr = run_on_task("c", &task, &cfg, &patterned(pattern.clone())).unwrap();
        prop_assert_eq!(tr.trace(), reference(t, &pattern));
    }
}

#[test]
fn workers_validate_against_their_latest_revision() {
    let task = task();
    let tr = run_on_task("c", &task, &ConsultationConfig::default(), &patterned(vec![(false, false), (true, true), (true, true)])).unwrap();
    let second_ea_validate = tr
        .calls
        .iter()
        .filter(|c| c.role == Role::Explicit && c.function == AgentFunction::Validate)
        .nth(1)
        .unwrap();
    assert!(second_ea_validate.user.contains("\"s2\",\n        \"s4\""));
}

#[test]
fn failing_stop_falls_back_to_current() {
    let task = task();
    let disagree = format!(r#"{{"agree": false, "rationale": "no", "groups": {}}}"#, &SPLIT[10..SPLIT.len() - 1]);
    let backend = ScriptedBackend::steps([
        ScriptStep::Reply(SPLIT.into()),
        ScriptStep::Reply(ONE.into()),
        ScriptStep::Reply(ONE.into()),
        ScriptStep::Reply(disagree.clone()),
        ScriptStep::Reply(disagree),
        ScriptStep::Fail("backend down".into()),
    ])
    .unwrap();
    let cfg = ConsultationConfig {
        max_rounds: 1,
        ..Default::default()
    };
    let tr = run_on_task("c", &task, &cfg, &backend).unwrap();
    assert!(tr.degraded);
    assert_eq!(tr.final_result, tr.synthesized);
    assert!(tr.calls.last().unwrap().error.is_some());
}

#[test]
fn scripted_runs_are_deterministic() {
    let task = task();
    let run = || {
        let mut tr = run_on_task("c", &task, &ConsultationConfig::default(), &patterned(vec![(false, true), (true, false), (true, true)])).unwrap();
        tr.elapsed_ms = 0;
        tr.calls.iter_mut().for_each(|c| c.elapsed_ms = 0);
        tr.to_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn worker_failure_propagates() {
    let task = task();
    let backend = ScriptedBackend::ordered(["no json here"]).unwrap();
    assert!(matches!(
        run_on_task("c", &task, &ConsultationConfig::default(), &backend),
        Err(Error::Protocol { .. }) | Err(Error::Scripted(_))
    ));
}

#[test]
fn zero_round_budget_is_rejected() {
    let task = task();
    let cfg = ConsultationConfig {
        max_rounds: 0,
        ..Default::default()
    };
    assert!(matches!(run_on_task("c", &task, &cfg, &patterned(vec![])), Err(Error::Config(_))));
}

#[test]
fn stats_over_transcripts() {
    let task = task();
    let mut trs = Vec::new();
    for pattern in [
        vec![(true, true); 3],
        vec![(false, true), (true, true), (true, true)],
        vec![(false, false); 3],
    ] {
        trs.push(run_on_task("c", &task, &ConsultationConfig::default(), &patterned(pattern)).unwrap());
    }
    let s = transcript_stats(&trs).unwrap();
    assert_eq!(s.mean_rounds, 2.0);
    assert_eq!(s.round_histogram.values().copied().collect::<Vec<_>>(), vec![1, 1, 1]);
    // EA proposes the split, IA one cluster: initial results always differ here.
    assert_eq!(s.initial_disagreement_rate, 1.0);

    let single = transcript_stats(&trs[..1]).unwrap();
    assert_eq!(single.mean_rounds, 1.0);
    assert!(matches!(transcript_stats(&[]), Err(Error::Input(_))));
}
