//! Loads the bundled CSV fixture and runs it through the simulator.

use std::path::Path;

use fairchoice::config::parse_config;
use fairchoice::runner::{prepare_data, RunSummary};
use fairchoice::sim;

fn main() -> fairchoice::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy.toml");
    let config = parse_config(&path)?;
    let data = prepare_data(&config)?;
    println!(
        "{} arrivals over {} items",
        data.arrivals.len(),
        data.catalog.len()
    );

    for arrival in data.arrivals.iter().take(4) {
        println!(
            "{} compatibility {:?}",
            arrival.user_id, arrival.compatibility
        );
    }

    let cell = &config.cells()[0].sim;
    let log = sim::run(cell, &data.arrivals, &data.catalog)?;
    let summary = RunSummary::compute(&log.records, &cell.agents, cell.list_length)?;
    for (metric, value) in summary.rows() {
        println!("{metric:<28} {value:.4}");
    }
    Ok(())
}
