use std::collections::HashSet;

use fairchoice::agents::agent_fairness;
use fairchoice::datagen::{generate, GenSpec, RegimeSpec};
use fairchoice::metrics::{experiment_fairness, list_fairness, windowed_fairness_series};
use fairchoice::runner::arrivals_from_dataset;
use fairchoice::{sim, AgentSpec, AllocationMechanism, ChoiceMechanism, HistoryWindow, SimConfig};
use proptest::prelude::*;

fn agents() -> Vec<AgentSpec> {
    vec![
        AgentSpec::new("a1", "f1", 0.25, 0.1).unwrap(),
        AgentSpec::new("a2", "f2", 0.25, 0.1).unwrap(),
    ]
}

fn small_spec(seed: u64) -> GenSpec {
    GenSpec {
        n_items: 300,
        sample_size: 40,
        list_length: 15,
        regimes: vec![RegimeSpec {
            name: "r".into(),
            count: 30,
            mean: vec![0.5, 0.6],
            stddev: vec![0.06, 0.08],
        }],
        ..GenSpec::default()
    }
    .with_seed(seed)
}

#[test]
fn default_synthetic_run_yields_500_records() {
    let data = generate(&GenSpec::default()).unwrap();
    let arrivals = arrivals_from_dataset(&data, &agents()).unwrap();
    let cfg = SimConfig::new(
        agents(),
        AllocationMechanism::Lottery,
        ChoiceMechanism::Borda,
    );
    let log = sim::run(&cfg, &arrivals, &data.catalog()).unwrap();
    assert_eq!(log.records.len(), 500);
    assert_eq!(windowed_fairness_series(&log.records)[0].len(), 500);
}

#[test]
fn whole_run_metric_matches_unbounded_window() {
    let data = generate(&small_spec(3)).unwrap();
    let catalog = data.catalog();
    let arrivals = arrivals_from_dataset(&data, &agents()).unwrap();
    let cfg = SimConfig::new(
        agents(),
        AllocationMechanism::LeastFair,
        ChoiceMechanism::Copeland,
    );
    let log = sim::run(&cfg, &arrivals, &catalog).unwrap();

    let summary = experiment_fairness(&log.records, &agents()).unwrap();
    let direct = list_fairness(
        log.records.iter().map(|r| r.delivered.as_slice()),
        &agents(),
        &catalog,
    )
    .unwrap();
    let mut window = HistoryWindow::new(log.records.len()).unwrap();
    for r in &log.records {
        window.push(r.delivered.clone()).unwrap();
    }
    for (a, spec) in agents().iter().enumerate() {
        assert!((summary.per_agent[a] - agent_fairness(&window, spec, &catalog)).abs() < 1e-12);
        assert!((summary.per_agent[a] - direct.per_agent[a]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn delivered_lists_are_valid(
        seed in 0u64..1000,
        alloc in prop::sample::select(AllocationMechanism::ALL.to_vec()),
        choice in prop::sample::select(ChoiceMechanism::ALL.to_vec()),
        window in 1usize..40,
        k in 1usize..20,
    ) {
        let data = generate(&small_spec(seed)).unwrap();
        let arrivals = arrivals_from_dataset(&data, &agents()).unwrap();
        let mut cfg = SimConfig::new(agents(), alloc, choice).with_seed(seed);
        cfg.window = window;
        cfg.list_length = k;
        let catalog = data.catalog();
        let mut simulator = sim::Simulator::new(cfg, &catalog).unwrap();
        for (i, arrival) in arrivals.iter().enumerate() {
            let r = simulator.step(i, arrival).unwrap().unwrap();
            prop_assert_eq!(simulator.window().len(), (i + 1).min(window));
            prop_assert_eq!(r.delivered.len(), k.min(arrival.candidates.len()));
            let candidates: HashSet<_> = arrival.candidates.items().collect();
            let unique: HashSet<_> = r.delivered.iter().collect();
            prop_assert_eq!(unique.len(), r.delivered.len());
            prop_assert!(r.delivered.iter().all(|id| candidates.contains(id)));
            prop_assert!(r.fairness.iter().chain(&r.compatibility).all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(r.scores.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
