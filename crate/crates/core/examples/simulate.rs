//! Runs one experiment on generated data using the library directly.

use fairchoice::datagen::{generate, GenSpec};
use fairchoice::metrics::{baseline_fairness, experiment_fairness, mean_ndcg};
use fairchoice::runner::arrivals_from_dataset;
use fairchoice::{sim, AgentSpec, AllocationMechanism, ChoiceMechanism, SimConfig};

fn main() -> fairchoice::Result<()> {
    let data = generate(&GenSpec::default())?;
    let agents = vec![
        AgentSpec::new("agent_f1", "f1", 0.25, 0.1)?,
        AgentSpec::new("agent_f2", "f2", 0.25, 0.1)?,
    ];
    let arrivals = arrivals_from_dataset(&data, &agents)?;
    let catalog = data.catalog();

    let config = SimConfig::new(
        agents.clone(),
        AllocationMechanism::Lottery,
        ChoiceMechanism::RankedPairs,
    )
    .with_seed(11);
    let log = sim::run(&config, &arrivals, &catalog)?;

    let fair = experiment_fairness(&log.records, &agents)?;
    let base = baseline_fairness(&log.records, &agents)?;
    println!("records         {}", log.records.len());
    println!("ndcg@10         {:.4}", mean_ndcg(&log.records, 10)?);
    println!("fairness        {:.4} {:?}", fair.average, fair.per_agent);
    println!("baseline        {:.4} {:?}", base.average, base.per_agent);

    let last = log.records.last().expect("non-empty run");
    println!(
        "last delivered  {:?}",
        last.delivered
            .iter()
            .map(|i| i.as_str())
            .collect::<Vec<_>>()
    );
    Ok(())
}
