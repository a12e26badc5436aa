use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use untangle_core::delta_pdg::{build_delta_pdg, VersionTag};
use untangle_core::diff_model::{diff_file, parse_unified_diff, CommitInput, FilePair, Version};
use untangle_core::fixtures::{random_straight_line, straight_line_source};
use untangle_core::frontend::FrontEndRegistry;
use untangle_core::pdg::build_pdg;

fn edited_commit(seed: u64) -> (CommitInput, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stmts = random_straight_line(&mut rng, 12);
    let in_method = rng.gen_bool(0.5);
    let (before, _) = straight_line_source(&stmts, in_method);
    for _ in 0..2 {
        let i = rng.gen_range(0..stmts.len());
        stmts[i] = random_straight_line(&mut rng, 1).remove(0);
    }
    let (after, _) = straight_line_source(&stmts, in_method);
    let diff = diff_file("P.java", Some(&before), Some(&after));
    let commit = CommitInput {
        commit_id: format!("{seed:x}"),
        message: String::new(),
        files: vec![FilePair {
            path: "P.java".into(),
            before: Some(before),
            after: Some(after),
        }],
    };
    (commit, diff)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fusion_invariants_hold(seed in any::<u64>()) {
        let registry = FrontEndRegistry::with_defaults();
        let (commit, diff) = edited_commit(seed);
        let changes = parse_unified_diff(&diff, &commit, &registry).unwrap();
        let before = build_pdg(&commit.files, Version::Before, &registry).unwrap();
        let after = build_pdg(&commit.files, Version::After, &registry).unwrap();
        let g = build_delta_pdg(&before, &after, &changes.alignment, &changes).unwrap();

        prop_assert_eq!(g.nodes.len(), before.nodes.len() + after.nodes.len() - changes.alignment.len());
        prop_assert_eq!(g.count(VersionTag::Both), changes.alignment.len());
        prop_assert_eq!(
            g.nodes.len(),
            g.count(VersionTag::Both) + g.count(VersionTag::BeforeOnly) + g.count(VersionTag::AfterOnly)
        );

        prop_assert_eq!(g.change_index.len(), changes.statements.len());
        let targets: BTreeSet<_> = g.change_index.values().collect();
        prop_assert_eq!(targets.len(), g.change_index.len());

        for (version, pdg) in [(Version::Before, &before), (Version::After, &after)] {
            let projected = g.project(version);
            for e in &pdg.edges {
                let src = &pdg.node(e.src).locus;
                let dst = &pdg.node(e.dst).locus;
                prop_assert!(projected
                    .iter()
                    .any(|(s, d, k, v)| s == src && d == dst && *k == e.kind && e.vars.is_subset(v)));
            }
        }
    }
}
