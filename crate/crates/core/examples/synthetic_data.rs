//! Generates the default synthetic dataset and prints its shape.

use fairchoice::datagen::{generate, GenSpec};

fn main() -> fairchoice::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let data = generate(&GenSpec::default().with_seed(seed))?;

    println!("users {}  items {}", data.users.len(), data.items.len());
    for (name, share) in data
        .spec
        .feature_names
        .iter()
        .zip(data.catalog_prevalence())
    {
        println!("protected share of {name}: {share:.4}");
    }
    for (f, name) in data.spec.feature_names.iter().enumerate() {
        let mean =
            data.users.iter().map(|u| u.propensities[f]).sum::<f64>() / data.users.len() as f64;
        println!("mean user propensity for {name}: {mean:.4}");
    }
    let first = &data.recommendations[data.arrivals[0]];
    println!("first arrival gets {} items, top three:", first.len());
    for (id, score) in first.entries().iter().take(3) {
        println!("  {id} {score:.3}");
    }
    Ok(())
}
