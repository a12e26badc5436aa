//! From a commit to an untangling task.

use untangle_core::agents::UntanglingTask;
use untangle_core::delta_pdg::{build_delta_pdg, DeltaPdg, VersionTag};
use untangle_core::diff_model::{parse_unified_diff, ChangeSet, CommitInput, Version};
use untangle_core::frontend::{FrontEndRegistry, NodeKind};
use untangle_core::pdg::{build_pdg, Pdg};
use untangle_core::Result;

pub struct Prepared {
    pub changes: ChangeSet,
    pub before: Pdg,
    pub after: Pdg,
    pub delta: DeltaPdg,
    pub task: UntanglingTask,
    /// Changed statements plus the unchanged statements of modified files.
    pub all_statements: usize,
}

pub fn prepare(commit: &CommitInput, diff: &str, include_comments: bool) -> Result<Prepared> {
    let registry = FrontEndRegistry::with_defaults();
    let parsed = parse_unified_diff(diff, commit, &registry)?;
    let changes = if include_comments {
        parsed
    } else {
        parsed.without_comments()
    };
    let before = build_pdg(&commit.files, Version::Before, &registry)?;
    let after = build_pdg(&commit.files, Version::After, &registry)?;
    let delta = build_delta_pdg(&before, &after, &changes.alignment, &changes)?;
    let task = UntanglingTask::new(&changes, &delta)?;
    let modified = changes.modified_paths();
    let unchanged = delta
        .nodes
        .iter()
        .filter(|n| n.tag == VersionTag::Both && modified.contains(n.file.as_str()))
        .filter(|n| include_comments || n.kind != NodeKind::Comment)
        .count();
    let all_statements = task.universe.len() + unchanged;
    Ok(Prepared {
        changes,
        before,
        after,
        delta,
        task,
        all_statements,
    })
}
