//! Compares the three allocation mechanisms on one opportunity.

use fairchoice::allocation::{lottery_weights, AllocationMechanism, OpportunityContext};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fairchoice::Result<()> {
    // agent 0 is further from its target, agent 1 suits this user better
    let ctx = OpportunityContext::new(vec![0.2, 0.6], vec![0.5, 0.9])?;
    let exponent = 2.0;
    println!("need: {:?}", ctx.need(exponent));
    println!("lottery odds: {:?}", lottery_weights(&ctx, exponent));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for mechanism in AllocationMechanism::ALL {
        let result = mechanism.allocate(&ctx, exponent, &mut rng)?;
        println!("{mechanism:<10} {:?}", result.weights);
    }

    let draws = 10_000;
    let mut wins = [0usize; 2];
    for _ in 0..draws {
        let r = AllocationMechanism::Lottery.allocate(&ctx, exponent, &mut rng)?;
        let winner = r.allocated().next().map(|(a, _)| a);
        if let Some(a) = winner {
            wins[a] += 1;
        }
    }
    println!(
        "lottery over {draws} draws: {:.3} / {:.3}",
        wins[0] as f64 / draws as f64,
        wins[1] as f64 / draws as f64
    );
    Ok(())
}
