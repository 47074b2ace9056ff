//! Aggregates one recommender list and two agent ballots with each rule.

use fairchoice::choice::{
    aggregate_borda, aggregate_copeland, aggregate_rescoring, ranked_pairs_traced, Ballot, Profile,
};
use fairchoice::model::{AgentSpec, AllocationResult, Catalog, ScoredList};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(label: &str, list: &ScoredList) {
    let items: Vec<String> = list
        .entries()
        .iter()
        .map(|(id, s)| format!("{id}:{s}"))
        .collect();
    println!("{label:<13} {}", items.join("  "));
}

fn main() -> fairchoice::Result<()> {
    let recs = ScoredList::new(vec![
        ("a".into(), 0.95),
        ("b".into(), 0.90),
        ("p".into(), 0.88),
        ("c".into(), 0.60),
        ("q".into(), 0.55),
    ])?;

    let mut catalog = Catalog::new(vec!["f".into()]);
    for (id, protected) in [
        ("a", false),
        ("b", false),
        ("c", false),
        ("p", true),
        ("q", true),
    ] {
        catalog.insert_flags(id.into(), vec![protected])?;
    }
    let agent = AgentSpec::new("agent", "f", 0.25, 0.1)?;
    let allocation = AllocationResult::single(1, 0);

    let ballot = Ballot::from_tiers(
        vec![
            vec!["p".into(), "q".into()],
            vec!["a".into(), "b".into(), "c".into()],
        ],
        1.5,
    );
    let profile = Profile::new(&recs, 1.0, vec![ballot])?;

    show("recommender", &recs);
    show(
        "rescoring",
        &aggregate_rescoring(&recs, &allocation, std::slice::from_ref(&agent), &catalog),
    );
    show("borda", &aggregate_borda(&profile));
    show("copeland", &aggregate_copeland(&profile));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (ranked, trace) = ranked_pairs_traced(&profile, &mut rng);
    show("ranked_pairs", &ranked);
    for d in &trace.decisions {
        let state = if d.locked { "locked" } else { "skipped" };
        println!("  {} > {} margin {} {state}", d.winner, d.loser, d.margin);
    }
    Ok(())
}
