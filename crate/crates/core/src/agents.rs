//! Fairness-agent computations: windowed proportional fairness, user
//! compatibility and ballot construction.

use crate::choice::Ballot;
use crate::error::{Error, Result};
use crate::model::{AgentSpec, Catalog, HistoryWindow, ItemId, ScoredList};

/// Share of protected slots in the history window, divided by the target
/// proportion and capped at 1. An empty window scores 0.
pub fn agent_fairness(window: &HistoryWindow, spec: &AgentSpec, catalog: &Catalog) -> f64 {
    let total = window.total_slots();
    if total == 0 {
        return 0.0;
    }
    let protected = match catalog.feature_index(&spec.protected_feature) {
        Some(f) => window.protected_slots(catalog, f),
        None => 0,
    };
    proportional_fairness(protected, total, spec.target_proportion)
}

/// `min(1, (protected / total) / target)`, with 0 for an empty total.
pub fn proportional_fairness(protected: usize, total: usize, target: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (protected as f64 / total as f64 / target).min(1.0)
}

/// Protected share of a single list. Diagnostic only; agents act on the
/// windowed value.
pub fn list_proportion(items: &[ItemId], spec: &AgentSpec, catalog: &Catalog) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let protected = items
        .iter()
        .filter(|id| catalog.is_protected(id, &spec.protected_feature))
        .count();
    protected as f64 / items.len() as f64
}

/// Compatibility of a synthetic user: the propensity itself, clamped.
pub fn agent_compatibility_synthetic(propensity: f64) -> f64 {
    propensity.clamp(0.0, 1.0)
}

/// Binary entropy (bits) of the protected share of a user's profile.
pub fn agent_compatibility_entropy(protected_count: usize, total: usize) -> Result<f64> {
    if protected_count > total {
        return Err(Error::InvalidInput(format!(
            "protected count {protected_count} exceeds profile size {total}"
        )));
    }
    if total == 0 {
        return Ok(0.0);
    }
    let p = protected_count as f64 / total as f64;
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    Ok(term(p) + term(1.0 - p))
}

/// Two-tier ballot: protected candidates over unprotected ones. The
/// returned weight is 0; the simulator sets it from the allocation.
pub fn agent_ballot(spec: &AgentSpec, candidates: &ScoredList, catalog: &Catalog) -> Ballot {
    let (protected, rest): (Vec<ItemId>, Vec<ItemId>) = candidates
        .items()
        .cloned()
        .partition(|id| catalog.is_protected(id, &spec.protected_feature));
    Ballot::from_tiers(vec![protected, rest], 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(pi: f64) -> AgentSpec {
        AgentSpec::new("a", "f", pi, 0.1).unwrap()
    }

    /// 10 lists of 10 items, the first `protected` slots flagged.
    fn window_with(protected: usize) -> (HistoryWindow, Catalog) {
        let mut catalog = Catalog::new(vec!["f".into()]);
        let mut window = HistoryWindow::new(100).unwrap();
        let mut slot = 0;
        for l in 0..10 {
            let mut list = Vec::new();
            for j in 0..10 {
                let id = ItemId::new(format!("{l}-{j}"));
                catalog
                    .insert_flags(id.clone(), vec![slot < protected])
                    .unwrap();
                list.push(id);
                slot += 1;
            }
            window.push(list).unwrap();
        }
        (window, catalog)
    }

    #[test]
    fn fairness_below_target() {
        let (w, c) = window_with(20);
        assert!((agent_fairness(&w, &spec(0.25), &c) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fairness_truncates() {
        let (w, c) = window_with(30);
        assert_eq!(agent_fairness(&w, &spec(0.25), &c), 1.0);
    }

    #[test]
    fn fairness_cold_start() {
        let w = HistoryWindow::new(100).unwrap();
        assert_eq!(
            agent_fairness(&w, &spec(0.25), &Catalog::new(vec!["f".into()])),
            0.0
        );
    }

    #[test]
    fn fairness_counts_repeated_exposure() {
        let mut c = Catalog::new(vec!["f".into()]);
        c.insert_flags("p".into(), vec![true]).unwrap();
        let mut w = HistoryWindow::new(10).unwrap();
        w.push(vec!["p".into(), "x".into()]).unwrap();
        w.push(vec!["p".into(), "y".into()]).unwrap();
        // 2 of 4 slots
        assert!((agent_fairness(&w, &spec(1.0), &c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn compatibility_synthetic_clamps() {
        assert_eq!(agent_compatibility_synthetic(0.6), 0.6);
        assert_eq!(agent_compatibility_synthetic(1.3), 1.0);
        assert_eq!(agent_compatibility_synthetic(-0.1), 0.0);
    }

    #[test]
    fn compatibility_entropy_values() {
        assert!((agent_compatibility_entropy(5, 10).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(agent_compatibility_entropy(0, 10).unwrap(), 0.0);
        assert_eq!(agent_compatibility_entropy(10, 10).unwrap(), 0.0);
        assert_eq!(agent_compatibility_entropy(0, 0).unwrap(), 0.0);
        // H(0.25) = 0.25*2 + 0.75*log2(4/3)
        let expected = 0.5 + 0.75 * (4.0f64 / 3.0).log2();
        let h = agent_compatibility_entropy(1, 4).unwrap();
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 0.8113).abs() < 1e-4);
        assert!(agent_compatibility_entropy(3, 2).is_err());
    }

    #[test]
    fn ballot_partitions_candidates() {
        let mut c = Catalog::new(vec!["f".into()]);
        c.insert_flags("p".into(), vec![true]).unwrap();
        let cands = ScoredList::new(vec![
            ("x".into(), 3.0),
            ("p".into(), 2.0),
            ("y".into(), 1.0),
        ])
        .unwrap();
        let b = agent_ballot(&spec(0.25), &cands, &c);
        assert_eq!(
            b.tiers,
            vec![vec![ItemId::from("p")], vec!["x".into(), "y".into()]]
        );

        let none = ScoredList::new(vec![("x".into(), 3.0), ("y".into(), 1.0)]).unwrap();
        assert_eq!(agent_ballot(&spec(0.25), &none, &c).tiers.len(), 1);
        let all = ScoredList::new(vec![("p".into(), 3.0)]).unwrap();
        assert_eq!(agent_ballot(&spec(0.25), &all, &c).tiers.len(), 1);
    }

    proptest! {
        #[test]
        fn fairness_monotone_in_protected(a in 0usize..=100, b in 0usize..=100, pi in 0.01f64..=1.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(proportional_fairness(lo, 100, pi) <= proportional_fairness(hi, 100, pi));
            if hi as f64 / 100.0 >= pi {
                prop_assert_eq!(proportional_fairness(hi, 100, pi), 1.0);
            }
        }

        #[test]
        fn entropy_symmetric(k in 0usize..=50, extra in 0usize..=50) {
            let total = k + extra;
            let h1 = agent_compatibility_entropy(k, total).unwrap();
            let h2 = agent_compatibility_entropy(total - k, total).unwrap();
            prop_assert!((h1 - h2).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&h1));
        }

        #[test]
        fn ballot_tiers_partition(flags in proptest::collection::vec(any::<bool>(), 1..20)) {
            let mut c = Catalog::new(vec!["f".into()]);
            let mut entries = Vec::new();
            for (i, f) in flags.iter().enumerate() {
                c.insert_flags(ItemId::from(i), vec![*f]).unwrap();
                entries.push((ItemId::from(i), -(i as f64)));
            }
            let cands = ScoredList::new(entries).unwrap();
            let b = agent_ballot(&spec(0.5), &cands, &c);
            let mut all: Vec<ItemId> = b.tiers.iter().flatten().cloned().collect();
            all.sort();
            let mut expected = cands.item_ids();
            expected.sort();
            prop_assert_eq!(all, expected);
        }
    }
}
