//! Post-hoc evaluation over step records.

use std::collections::HashSet;

use crate::agents::proportional_fairness;
use crate::error::{Error, Result};
use crate::model::{AgentSpec, Catalog, ItemId};
use crate::sim::StepRecord;

/// nDCG@k of `delivered` with binary relevance against the top `k` of
/// `original`.
pub fn ndcg_at_k(delivered: &[ItemId], original: &[ItemId], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if original.is_empty() {
        return Err(Error::UndefinedMetric(
            "nDCG with an empty original list".into(),
        ));
    }
    let relevant: HashSet<&ItemId> = original.iter().take(k).collect();
    let discount = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    let dcg: f64 = delivered
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(id))
        .map(|(r, _)| discount(r))
        .sum();
    let idcg: f64 = (0..relevant.len()).map(discount).sum();
    Ok(dcg / idcg)
}

/// Mean nDCG@k over all records.
pub fn mean_ndcg(records: &[StepRecord], k: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("nDCG over an empty log".into()));
    }
    let mut sum = 0.0;
    for r in records {
        sum += ndcg_at_k(&r.delivered, &r.original, k)?;
    }
    Ok(sum / records.len() as f64)
}

/// Whole-experiment normalized fairness per agent and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessSummary {
    pub per_agent: Vec<f64>,
    pub average: f64,
}

fn summarize_counts(
    records: &[StepRecord],
    agents: &[AgentSpec],
    protected: impl Fn(&StepRecord) -> &[usize],
    slots: impl Fn(&StepRecord) -> usize,
) -> Result<FairnessSummary> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("fairness over an empty log".into()));
    }
    if agents.is_empty() {
        return Err(Error::UndefinedMetric("fairness with no agents".into()));
    }
    let total: usize = records.iter().map(&slots).sum();
    let per_agent: Vec<f64> = agents
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            let count: usize = records
                .iter()
                .map(|r| protected(r).get(a).copied().unwrap_or(0))
                .sum();
            proportional_fairness(count, total, spec.target_proportion)
        })
        .collect();
    let average = per_agent.iter().sum::<f64>() / per_agent.len() as f64;
    Ok(FairnessSummary { per_agent, average })
}

/// Fairness of the delivered lists across the whole run.
pub fn experiment_fairness(
    records: &[StepRecord],
    agents: &[AgentSpec],
) -> Result<FairnessSummary> {
    summarize_counts(
        records,
        agents,
        |r| &r.protected_delivered,
        |r| r.delivered.len(),
    )
}

/// Fairness of the recommender's own top-k lists over the same arrivals.
pub fn baseline_fairness(records: &[StepRecord], agents: &[AgentSpec]) -> Result<FairnessSummary> {
    summarize_counts(
        records,
        agents,
        |r| &r.protected_original,
        |r| r.original.len(),
    )
}

/// Same metric computed directly from lists and a catalog.
pub fn list_fairness<'a>(
    lists: impl IntoIterator<Item = &'a [ItemId]>,
    agents: &[AgentSpec],
    catalog: &Catalog,
) -> Result<FairnessSummary> {
    let lists: Vec<&[ItemId]> = lists.into_iter().collect();
    if lists.is_empty() {
        return Err(Error::UndefinedMetric("fairness over no lists".into()));
    }
    if agents.is_empty() {
        return Err(Error::UndefinedMetric("fairness with no agents".into()));
    }
    let total: usize = lists.iter().map(|l| l.len()).sum();
    let per_agent: Vec<f64> = agents
        .iter()
        .map(|spec| {
            let count = lists
                .iter()
                .flat_map(|l| l.iter())
                .filter(|id| catalog.is_protected(id, &spec.protected_feature))
                .count();
            proportional_fairness(count, total, spec.target_proportion)
        })
        .collect();
    let average = per_agent.iter().sum::<f64>() / per_agent.len() as f64;
    Ok(FairnessSummary { per_agent, average })
}

/// Per-agent series of the fairness values seen at decision time.
pub fn windowed_fairness_series(records: &[StepRecord]) -> Vec<Vec<f64>> {
    transpose(records, |r| &r.fairness)
}

/// Per-agent cumulative allocation weight.
pub fn allocation_counts(records: &[StepRecord]) -> Vec<Vec<f64>> {
    let mut series = transpose(records, |r| &r.weights);
    for s in &mut series {
        let mut acc = 0.0;
        for w in s.iter_mut() {
            acc += *w;
            *w = acc;
        }
    }
    series
}

/// Final value of each cumulative allocation series.
pub fn allocation_totals(records: &[StepRecord]) -> Vec<f64> {
    allocation_counts(records)
        .into_iter()
        .map(|s| s.last().copied().unwrap_or(0.0))
        .collect()
}

fn transpose(records: &[StepRecord], field: impl Fn(&StepRecord) -> &[f64]) -> Vec<Vec<f64>> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let n = field(first).len();
    (0..n)
        .map(|a| {
            records
                .iter()
                .map(|r| field(r).get(a).copied().unwrap_or(0.0))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HistoryWindow;
    use proptest::prelude::*;

    fn ids(s: &str) -> Vec<ItemId> {
        s.chars().map(|c| ItemId::new(c.to_string())).collect()
    }

    fn record(
        weights: Vec<f64>,
        fairness: Vec<f64>,
        delivered: Vec<ItemId>,
        protected: Vec<usize>,
    ) -> StepRecord {
        StepRecord {
            arrival: 0,
            user_id: "u".into(),
            regime: None,
            compatibility: vec![0.5; weights.len()],
            fairness,
            weights,
            scores: vec![0.0; delivered.len()],
            original: delivered.clone(),
            delivered,
            protected_original: protected.clone(),
            protected_delivered: protected,
        }
    }

    #[test]
    fn ndcg_identity_and_disjoint() {
        let orig = ids("abcdefghij");
        assert_eq!(ndcg_at_k(&orig, &orig, 10).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&ids("klmnopqrst"), &orig, 10).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_hand_cases() {
        let orig = ids("abcd");
        assert!((ndcg_at_k(&ids("bacd"), &orig, 2).unwrap() - 1.0).abs() < 1e-12);
        let v = ndcg_at_k(&ids("cabd"), &orig, 2).unwrap();
        let expected = (1.0 / 3f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.3869).abs() < 1e-4);
    }

    #[test]
    fn ndcg_errors() {
        assert!(matches!(
            ndcg_at_k(&ids("a"), &[], 10),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(ndcg_at_k(&ids("a"), &ids("a"), 0).is_err());
    }

    #[test]
    fn fairness_truncation_and_mean() {
        let agents = vec![
            AgentSpec::new("a1", "f1", 0.25, 0.1).unwrap(),
            AgentSpec::new("a2", "f2", 0.5, 0.1).unwrap(),
        ];
        // 10 slots per list, 2 and 2 protected: a1 = 0.2/0.25 = 0.8, a2 = 0.2/0.5 = 0.4
        let recs = vec![record(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            ids("abcdefghij"),
            vec![2, 2],
        )];
        let s = experiment_fairness(&recs, &agents).unwrap();
        assert!((s.per_agent[0] - 0.8).abs() < 1e-12);
        assert!((s.per_agent[1] - 0.4).abs() < 1e-12);
        assert!((s.average - 0.6).abs() < 1e-12);

        let full = vec![record(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            ids("abcdefghij"),
            vec![10, 10],
        )];
        assert_eq!(experiment_fairness(&full, &agents).unwrap().average, 1.0);
        assert!(experiment_fairness(&[], &agents).is_err());
    }

    #[test]
    fn fairness_exact_quarter() {
        let agents = vec![AgentSpec::new("a", "f", 0.25, 0.1).unwrap()];
        // 500 lists of 10; 1,250 protected slots overall
        let recs: Vec<_> = (0..500)
            .map(|i| {
                record(
                    vec![0.0],
                    vec![0.0],
                    ids("abcdefghij"),
                    vec![if i % 2 == 0 { 2 } else { 3 }],
                )
            })
            .collect();
        assert_eq!(
            experiment_fairness(&recs, &agents).unwrap().per_agent,
            [1.0]
        );
    }

    #[test]
    fn allocation_series() {
        let recs: Vec<_> = (0..10)
            .map(|_| record(vec![1.0, 0.0], vec![0.0, 1.0], ids("a"), vec![0, 0]))
            .collect();
        let c = allocation_counts(&recs);
        assert_eq!(c[0].last(), Some(&10.0));
        assert_eq!(c[1].last(), Some(&0.0));

        let recs: Vec<_> = (0..10)
            .map(|_| record(vec![0.32, 0.04], vec![0.0, 0.0], ids("a"), vec![0, 0]))
            .collect();
        let t = allocation_totals(&recs);
        assert!((t[0] - 3.2).abs() < 1e-12);
        assert!((t[1] - 0.4).abs() < 1e-12);
        assert!(allocation_counts(&[]).is_empty());
    }

    #[test]
    fn fairness_series_shape() {
        let recs: Vec<_> = (0..7)
            .map(|_| record(vec![0.0], vec![0.6], ids("a"), vec![0]))
            .collect();
        let s = windowed_fairness_series(&recs);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0], vec![0.6; 7]);
        assert!(windowed_fairness_series(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn ndcg_bounded(perm in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(), k in 1usize..12) {
            let orig: Vec<ItemId> = (0..10).map(ItemId::from).collect();
            let deliv: Vec<ItemId> = perm.into_iter().map(ItemId::from).collect();
            let v = ndcg_at_k(&deliv, &orig, k).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }

        #[test]
        fn list_metric_matches_agent_view(
            lists in proptest::collection::vec(proptest::collection::vec(0usize..30, 1..8), 1..20),
            pi in 0.05f64..=1.0,
        ) {
            let mut catalog = Catalog::new(vec!["f".into()]);
            for i in 0..30usize {
                catalog.insert_flags(ItemId::from(i), vec![i % 3 == 0]).unwrap();
            }
            let lists: Vec<Vec<ItemId>> = lists.into_iter().map(|l| l.into_iter().map(ItemId::from).collect()).collect();
            let spec = AgentSpec::new("a", "f", pi, 0.1).unwrap();
            let mut window = HistoryWindow::new(lists.len()).unwrap();
            for l in &lists {
                window.push(l.clone()).unwrap();
            }
            let direct = list_fairness(lists.iter().map(|l| l.as_slice()), std::slice::from_ref(&spec), &catalog).unwrap();
            let agent = crate::agents::agent_fairness(&window, &spec, &catalog);
            prop_assert!((direct.per_agent[0] - agent).abs() < 1e-12);
        }

        #[test]
        fn cumulative_non_decreasing(ws in proptest::collection::vec(0.0f64..=1.0, 0..30)) {
            let recs: Vec<_> = ws.iter().map(|w| record(vec![*w], vec![0.0], ids("a"), vec![0])).collect();
            for s in allocation_counts(&recs) {
                prop_assert!(s.windows(2).all(|p| p[0] <= p[1]));
            }
        }
    }
}
