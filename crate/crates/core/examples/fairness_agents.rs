//! Windowed fairness, compatibility and ballots for a single agent.

use fairchoice::agents::{agent_ballot, agent_compatibility_entropy, agent_fairness};
use fairchoice::model::{AgentSpec, Catalog, HistoryWindow, ItemId, ScoredList};

fn main() -> fairchoice::Result<()> {
    let mut catalog = Catalog::new(vec!["large_loan".into()]);
    for i in 0..20 {
        catalog.insert_flags(ItemId::from(i), vec![i % 5 == 0])?;
    }
    let agent = AgentSpec::new("loan_size", "large_loan", 0.3, 0.1)?;

    let mut window = HistoryWindow::new(3)?;
    println!(
        "cold start fairness: {}",
        agent_fairness(&window, &agent, &catalog)
    );
    let lists: [&[usize]; 4] = [
        &[0, 1, 2, 3, 4],
        &[5, 10, 15, 1, 2],
        &[6, 7, 8, 9, 11],
        &[12, 13, 14, 16, 17],
    ];
    for list in lists {
        window.push(list.iter().map(|&i| ItemId::from(i)).collect())?;
        println!(
            "after {list:?} fairness {:.3} ({} of {} slots protected)",
            agent_fairness(&window, &agent, &catalog),
            window.protected_slots(&catalog, 0),
            window.total_slots()
        );
    }

    for (protected, total) in [(0, 8), (2, 8), (4, 8)] {
        println!(
            "profile {protected}/{total} protected -> compatibility {:.4}",
            agent_compatibility_entropy(protected, total)?
        );
    }

    let candidates = ScoredList::from_unsorted(
        (0..8)
            .map(|i| (ItemId::from(i), 1.0 - i as f64 / 10.0))
            .collect(),
    )?;
    let ballot = agent_ballot(&agent, &candidates, &catalog);
    for (rank, tier) in ballot.tiers.iter().enumerate() {
        let ids: Vec<&str> = tier.iter().map(ItemId::as_str).collect();
        println!("tier {rank}: {}", ids.join(" "));
    }
    Ok(())
}
