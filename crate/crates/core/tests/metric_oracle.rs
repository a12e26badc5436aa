use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use untangle_core::agents::{Role, UntanglingResult};
use untangle_core::diff_model::StmtId;
use untangle_core::eval::{accuracy_a, accuracy_c, match_concerns, single_cluster_baseline, GoldLabels};

/// Best number of correctly placed statements over every injective mapping
/// from predicted groups to gold labels (a group may stay unmapped).
fn brute_force(pred: &[usize], gold: &[usize]) -> usize {
    let p_max = pred.iter().copied().max().map_or(0, |m| m + 1);
    let g_max = gold.iter().copied().max().map_or(0, |m| m + 1);
    fn go(p: usize, p_max: usize, used: &mut Vec<bool>, map: &mut Vec<Option<usize>>, pred: &[usize], gold: &[usize]) -> usize {
        if p == p_max {
            return pred.iter().zip(gold).filter(|(a, b)| map[**a] == Some(**b)).count();
        }
        map[p] = None;
        let mut best = go(p + 1, p_max, used, map, pred, gold);
        for g in 0..used.len() {
            if !used[g] {
                used[g] = true;
                map[p] = Some(g);
                best = best.max(go(p + 1, p_max, used, map, pred, gold));
                used[g] = false;
            }
        }
        map[p] = None;
        best
    }
    go(0, p_max, &mut vec![false; g_max], &mut vec![None; p_max], pred, gold)
}

fn labelling() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..=12).prop_flat_map(|n| (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..5, n)))
}

fn to_result(pred: &[usize]) -> UntanglingResult {
    let mut groups: BTreeMap<usize, Vec<StmtId>> = BTreeMap::new();
    for (i, &p) in pred.iter().enumerate() {
        groups.entry(p).or_default().push(StmtId(i as u32 + 1));
    }
    UntanglingResult::from_groups(Role::Reviewer, groups.into_values())
}

fn to_gold(gold: &[usize], relabel: impl Fn(usize) -> u32) -> GoldLabels {
    GoldLabels {
        concerns: gold.iter().enumerate().map(|(i, &g)| (StmtId(i as u32 + 1), relabel(g))).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn accuracy_matches_brute_force((pred, gold) in labelling(), extra in 0usize..20) {
        let n = pred.len();
        let expected = brute_force(&pred, &gold);
        let r = to_result(&pred);
        let g = to_gold(&gold, |c| c as u32 * 3 + 11);
        let m = match_concerns(&r, &g).unwrap();
        prop_assert_eq!(m.correct, expected);
        prop_assert_eq!(accuracy_c(&r, &g).unwrap(), expected as f64 / n as f64);
        prop_assert_eq!(accuracy_a(&r, &g, n).unwrap(), accuracy_c(&r, &g).unwrap());
        let all = n + extra;
        prop_assert_eq!(accuracy_a(&r, &g, all).unwrap(), (expected + extra) as f64 / all as f64);

        let mut gold_used = BTreeSet::new();
        for (p, q) in &m.pairs {
            prop_assert!(gold_used.insert(*q), "gold concern {} mapped twice via {}", q, p);
        }
    }

    #[test]
    fn accuracy_ignores_label_names((pred, gold) in labelling(), shift in 0u32..1000) {
        let r = to_result(&pred);
        let a = accuracy_c(&r, &to_gold(&gold, |c| c as u32)).unwrap();
        let b = accuracy_c(&r, &to_gold(&gold, |c| 4 - c as u32 + shift)).unwrap();
        prop_assert_eq!(a, b);
        let swapped = accuracy_c(&to_result(&gold), &to_gold(&pred, |c| c as u32)).unwrap();
        prop_assert_eq!(a, swapped);
    }

    #[test]
    fn perfect_and_single_cluster_bounds((pred, gold) in labelling()) {
        let g = to_gold(&gold, |c| c as u32);
        prop_assert_eq!(accuracy_c(&to_result(&gold), &g).unwrap(), 1.0);
        let one = to_result(&vec![0; gold.len()]);
        prop_assert_eq!(accuracy_c(&one, &g).unwrap(), single_cluster_baseline(&g));
        let score = accuracy_c(&to_result(&pred), &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&score));
        prop_assert!(score * gold.len() as f64 >= 1.0 - 1e-9);
    }

    #[test]
    fn moving_one_statement_shifts_score_by_at_most_one((pred, gold) in labelling(), pick in any::<prop::sample::Index>()) {
        let g = to_gold(&gold, |c| c as u32);
        let before = accuracy_c(&to_result(&pred), &g).unwrap();
        let i = pick.index(pred.len());
        if let Some(j) = (0..pred.len()).find(|&j| j != i && gold[j] == gold[i]) {
            let mut moved = pred.clone();
            moved[i] = pred[j];
            let after = accuracy_c(&to_result(&moved), &g).unwrap();
            let gain = (after - before) * pred.len() as f64;
            prop_assert!(gain.abs() <= 1.0 + 1e-9);
        }
    }
}
