//! Every allocation and choice pairing on the default synthetic data.

use fairchoice::datagen::{generate, GenSpec};
use fairchoice::metrics::{baseline_fairness, experiment_fairness, mean_ndcg};
use fairchoice::runner::arrivals_from_dataset;
use fairchoice::{sim, AgentSpec, AllocationMechanism, ChoiceMechanism, SimConfig};
use rayon::prelude::*;

fn main() -> fairchoice::Result<()> {
    let data = generate(&GenSpec::default())?;
    let agents = vec![
        AgentSpec::new("agent_f1", "f1", 0.25, 0.1)?,
        AgentSpec::new("agent_f2", "f2", 0.25, 0.1)?,
    ];
    let arrivals = arrivals_from_dataset(&data, &agents)?;
    let catalog = data.catalog();

    let pairs: Vec<_> = AllocationMechanism::ALL
        .into_iter()
        .flat_map(|a| ChoiceMechanism::ALL.into_iter().map(move |c| (a, c)))
        .collect();
    let rows = pairs
        .par_iter()
        .map(|&(a, c)| {
            let log = sim::run(&SimConfig::new(agents.clone(), a, c), &arrivals, &catalog)?;
            Ok((
                a,
                c,
                mean_ndcg(&log.records, 10)?,
                experiment_fairness(&log.records, &agents)?.average,
            ))
        })
        .collect::<fairchoice::Result<Vec<_>>>()?;

    let log = sim::run(
        &SimConfig::new(agents.clone(), pairs[0].0, pairs[0].1),
        &arrivals,
        &catalog,
    )?;
    println!(
        "baseline fairness {:.4}\n",
        baseline_fairness(&log.records, &agents)?.average
    );
    println!(
        "{:<11} {:<13} {:>7} {:>9}",
        "allocation", "choice", "ndcg", "fairness"
    );
    for (a, c, ndcg, fair) in rows {
        println!("{a:<11} {c:<13} {ndcg:>7.4} {fair:>9.4}");
    }
    Ok(())
}
