//! Matching fairness agents to a single recommendation opportunity.
//!
//! Each agent arrives with its windowed fairness and its compatibility with
//! the current user. The allocation need of an agent is
//! `(1 - fairness) * compatibility^exponent`.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AllocationResult;

/// Compatibility exponent used when none is configured.
pub const DEFAULT_COMPATIBILITY_EXPONENT: f64 = 2.0;

/// Per-agent fairness and compatibility for one user arrival, in agent
/// declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct OpportunityContext {
    fairness: Vec<f64>,
    compatibility: Vec<f64>,
}

impl OpportunityContext {
    pub fn new(fairness: Vec<f64>, compatibility: Vec<f64>) -> Result<Self> {
        if fairness.len() != compatibility.len() {
            return Err(Error::InvalidInput(format!(
                "{} fairness values but {} compatibility values",
                fairness.len(),
                compatibility.len()
            )));
        }
        for (name, values) in [("fairness", &fairness), ("compatibility", &compatibility)] {
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidInput(format!(
                    "{name} value {v} outside [0, 1]"
                )));
            }
        }
        Ok(OpportunityContext {
            fairness,
            compatibility,
        })
    }

    pub fn len(&self) -> usize {
        self.fairness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fairness.is_empty()
    }

    pub fn fairness(&self) -> &[f64] {
        &self.fairness
    }

    pub fn compatibility(&self) -> &[f64] {
        &self.compatibility
    }

    /// `(1 - fairness) * compatibility^exponent` for every agent.
    pub fn need(&self, exponent: f64) -> Vec<f64> {
        self.fairness
            .iter()
            .zip(&self.compatibility)
            .map(|(f, c)| (1.0 - f) * c.powf(exponent))
            .collect()
    }
}

/// Allocates the agent with the lowest fairness; ties go to the agent
/// declared first. Compatibility plays no part.
pub fn allocate_least_fair(ctx: &OpportunityContext) -> Result<AllocationResult> {
    let winner = ctx
        .fairness
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &f)| match best {
            Some((_, bf)) if bf <= f => best,
            _ => Some((i, f)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Config("least-fair allocation needs at least one agent".into()))?;
    Ok(AllocationResult::single(ctx.len(), winner))
}

/// Lottery distribution over agents, or `None` when no agent has any need.
pub fn lottery_weights(ctx: &OpportunityContext, exponent: f64) -> Option<Vec<f64>> {
    let raw = ctx.need(exponent);
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        Some(raw.into_iter().map(|r| r / total).collect())
    } else {
        None
    }
}

/// Draws a single agent from [`lottery_weights`]. An empty distribution
/// allocates nobody.
pub fn allocate_lottery<R: Rng + ?Sized>(
    ctx: &OpportunityContext,
    exponent: f64,
    rng: &mut R,
) -> AllocationResult {
    match lottery_weights(ctx, exponent) {
        Some(p) => {
            let dist = WeightedIndex::new(&p).expect("normalized non-negative weights");
            AllocationResult::single(ctx.len(), dist.sample(rng))
        }
        None => AllocationResult::none(ctx.len()),
    }
}

/// Allocates every agent with its raw, un-normalized need as weight.
pub fn allocate_weighted(ctx: &OpportunityContext, exponent: f64) -> AllocationResult {
    AllocationResult {
        weights: ctx.need(exponent),
    }
}

/// The three allocation rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMechanism {
    LeastFair,
    Lottery,
    Weighted,
}

impl AllocationMechanism {
    pub const ALL: [AllocationMechanism; 3] = [
        AllocationMechanism::LeastFair,
        AllocationMechanism::Lottery,
        AllocationMechanism::Weighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AllocationMechanism::LeastFair => "least_fair",
            AllocationMechanism::Lottery => "lottery",
            AllocationMechanism::Weighted => "weighted",
        }
    }

    pub fn allocate<R: Rng + ?Sized>(
        self,
        ctx: &OpportunityContext,
        exponent: f64,
        rng: &mut R,
    ) -> Result<AllocationResult> {
        match self {
            AllocationMechanism::LeastFair => allocate_least_fair(ctx),
            AllocationMechanism::Lottery => Ok(allocate_lottery(ctx, exponent, rng)),
            AllocationMechanism::Weighted => Ok(allocate_weighted(ctx, exponent)),
        }
    }
}

impl fmt::Display for AllocationMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for AllocationMechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AllocationMechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown allocation mechanism {s:?} (expected one of least_fair, lottery, weighted)"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(f: &[f64], c: &[f64]) -> OpportunityContext {
        OpportunityContext::new(f.to_vec(), c.to_vec()).unwrap()
    }

    #[test]
    fn least_fair_picks_minimum() {
        let a = allocate_least_fair(&ctx(&[0.2, 0.8], &[0.0, 1.0])).unwrap();
        assert_eq!(a.weights, [1.0, 0.0]);
    }

    #[test]
    fn least_fair_ties_by_declaration() {
        let a = allocate_least_fair(&ctx(&[0.5, 0.5], &[0.1, 0.9])).unwrap();
        assert_eq!(a.weights, [1.0, 0.0]);
        let a = allocate_least_fair(&ctx(&[0.7, 0.5, 0.5], &[0.1, 0.1, 0.9])).unwrap();
        assert_eq!(a.weights, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn least_fair_single_fair_agent() {
        let a = allocate_least_fair(&ctx(&[1.0], &[0.3])).unwrap();
        assert_eq!(a.weights, [1.0]);
    }

    #[test]
    fn least_fair_needs_agents() {
        assert!(matches!(
            allocate_least_fair(&ctx(&[], &[])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lottery_weights_by_hand() {
        let w = lottery_weights(&ctx(&[0.5, 0.75], &[0.8, 0.4]), 2.0).unwrap();
        assert!((w[0] - 8.0 / 9.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn lottery_weights_empty_when_all_fair() {
        assert_eq!(lottery_weights(&ctx(&[1.0, 1.0], &[0.8, 0.4]), 2.0), None);
        let a = allocate_lottery(
            &ctx(&[1.0, 1.0], &[0.8, 0.4]),
            2.0,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(a.is_empty());
    }

    #[test]
    fn lottery_single_agent() {
        assert_eq!(lottery_weights(&ctx(&[0.0], &[1.0]), 2.0), Some(vec![1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(
                allocate_lottery(&ctx(&[0.0, 1.0], &[1.0, 1.0]), 2.0, &mut rng).weights,
                [1.0, 0.0]
            );
        }
    }

    #[test]
    fn lottery_exponent_zero_ignores_compatibility() {
        let w = lottery_weights(&ctx(&[0.5, 0.75], &[0.0, 0.9]), 0.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_raw_products() {
        let a = allocate_weighted(&ctx(&[0.5, 0.75], &[0.8, 0.4]), 2.0);
        assert!((a.weights[0] - 0.32).abs() < 1e-12);
        assert!((a.weights[1] - 0.04).abs() < 1e-12);
        assert_eq!(
            allocate_weighted(&ctx(&[1.0, 1.0], &[0.8, 0.4]), 2.0).weights,
            [0.0, 0.0]
        );
        assert_eq!(allocate_weighted(&ctx(&[0.0], &[1.0]), 2.0).weights, [1.0]);
    }

    #[test]
    fn context_validation() {
        assert!(OpportunityContext::new(vec![0.5], vec![]).is_err());
        assert!(OpportunityContext::new(vec![1.5], vec![0.5]).is_err());
        assert!(OpportunityContext::new(vec![0.5], vec![-0.1]).is_err());
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in AllocationMechanism::ALL {
            assert_eq!(m.name().parse::<AllocationMechanism>().unwrap(), m);
        }
        assert!("round_robin".parse::<AllocationMechanism>().is_err());
    }

    fn arb_ctx() -> impl Strategy<Value = OpportunityContext> {
        (1usize..6).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..=1.0, n),
                proptest::collection::vec(0.0f64..=1.0, n),
            )
                .prop_map(|(f, c)| OpportunityContext::new(f, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn lottery_sums_to_one(c in arb_ctx(), exp in 0.0f64..4.0) {
            if let Some(w) = lottery_weights(&c, exp) {
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }

        #[test]
        fn weights_in_unit_interval(c in arb_ctx(), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for m in AllocationMechanism::ALL {
                let a = m.allocate(&c, 2.0, &mut rng).unwrap();
                prop_assert!(a.weights.iter().all(|w| (0.0..=1.0).contains(w)));
            }
            let lf = allocate_least_fair(&c).unwrap();
            prop_assert_eq!(lf.allocated().count(), 1);
        }

        #[test]
        fn weighted_is_monotone(c in arb_ctx(), agent in 0usize..6, bump in 0.0f64..0.5) {
            let agent = agent % c.len();
            let base = allocate_weighted(&c, 2.0).weights[agent];

            let mut fair = c.fairness().to_vec();
            fair[agent] = (fair[agent] - bump).max(0.0);
            let less_fair = OpportunityContext::new(fair, c.compatibility().to_vec()).unwrap();
            prop_assert!(allocate_weighted(&less_fair, 2.0).weights[agent] >= base);

            let mut compat = c.compatibility().to_vec();
            compat[agent] = (compat[agent] + bump).min(1.0);
            let more_compat = OpportunityContext::new(c.fairness().to_vec(), compat).unwrap();
            prop_assert!(allocate_weighted(&more_compat, 2.0).weights[agent] >= base);
        }
    }
}
