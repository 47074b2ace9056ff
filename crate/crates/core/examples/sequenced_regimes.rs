//! Least Fair allocation over users arriving in regime blocks.
//!
//! Pass `mixed` to shuffle the regimes together instead.

use std::collections::BTreeMap;

use fairchoice::datagen::{generate, ArrivalOrder, GenSpec};
use fairchoice::runner::arrivals_from_dataset;
use fairchoice::{sim, AgentSpec, AllocationMechanism, ChoiceMechanism, SimConfig};

fn main() -> fairchoice::Result<()> {
    let mut spec = GenSpec::sequenced_example();
    if std::env::args().nth(1).as_deref() == Some("mixed") {
        spec = spec.with_order(ArrivalOrder::Mixed);
    }
    let data = generate(&spec)?;
    let agents = vec![
        AgentSpec::new("agent_f1", "f1", 0.25, 0.1)?,
        AgentSpec::new("agent_f2", "f2", 0.25, 0.1)?,
    ];
    let arrivals = arrivals_from_dataset(&data, &agents)?;
    let config = SimConfig::new(
        agents,
        AllocationMechanism::LeastFair,
        ChoiceMechanism::RankedPairs,
    );
    let log = sim::run(&config, &arrivals, &data.catalog())?;

    let mut per_regime: BTreeMap<String, [f64; 2]> = BTreeMap::new();
    for r in &log.records {
        let e = per_regime
            .entry(r.regime.clone().unwrap_or_default())
            .or_default();
        e[0] += r.weights[0];
        e[1] += r.weights[1];
    }
    println!("{:<8} {:>9} {:>9}", "regime", "agent_f1", "agent_f2");
    for (regime, [a, b]) in per_regime {
        println!("{regime:<8} {a:>9} {b:>9}");
    }

    println!("\narrival  cumulative allocations");
    let (mut a, mut b) = (0.0, 0.0);
    for r in &log.records {
        a += r.weights[0];
        b += r.weights[1];
        if (r.arrival + 1) % 50 == 0 {
            println!("{:>7}  {a:>5} {b:>5}", r.arrival + 1);
        }
    }
    Ok(())
}
