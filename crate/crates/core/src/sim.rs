//! The per-arrival re-ranking loop.
//!
//! For every arriving user the simulator measures each agent's fairness on
//! the current history window, allocates agents, builds the ballots of the
//! allocated agents, aggregates them with the recommender's list, delivers
//! the top `k` and pushes that list into the window.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{agent_ballot, agent_fairness};
use crate::allocation::{AllocationMechanism, OpportunityContext, DEFAULT_COMPATIBILITY_EXPONENT};
use crate::choice::{
    aggregate_borda, aggregate_copeland, aggregate_ranked_pairs, aggregate_rescoring,
    ChoiceMechanism, Profile,
};
use crate::error::{Error, Result};
use crate::model::{
    AgentSpec, AgentState, AllocationResult, Catalog, HistoryWindow, ItemId, ScoredList,
};

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_LIST_LENGTH: usize = 10;
pub const DEFAULT_RECOMMENDER_WEIGHT: f64 = 1.0;

/// Everything one simulation run needs besides its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub agents: Vec<AgentSpec>,
    pub allocation: AllocationMechanism,
    pub choice: ChoiceMechanism,
    pub recommender_weight: f64,
    pub compatibility_exponent: f64,
    pub window: usize,
    pub list_length: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(
        agents: Vec<AgentSpec>,
        allocation: AllocationMechanism,
        choice: ChoiceMechanism,
    ) -> Self {
        SimConfig {
            agents,
            allocation,
            choice,
            recommender_weight: DEFAULT_RECOMMENDER_WEIGHT,
            compatibility_exponent: DEFAULT_COMPATIBILITY_EXPONENT,
            window: DEFAULT_WINDOW,
            list_length: DEFAULT_LIST_LENGTH,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        for a in &self.agents {
            a.validate()?;
        }
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if self.list_length == 0 {
            return Err(Error::Config("list_length must be >= 1".into()));
        }
        if !(self.recommender_weight >= 0.0 && self.recommender_weight.is_finite()) {
            return Err(Error::Config("recommender_weight must be >= 0".into()));
        }
        if !(self.compatibility_exponent >= 0.0 && self.compatibility_exponent.is_finite()) {
            return Err(Error::Config("compatibility_exponent must be >= 0".into()));
        }
        Ok(())
    }
}

/// One user arrival with its recommender output.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub user_id: String,
    pub regime: Option<String>,
    pub candidates: ScoredList,
    /// Per-agent compatibility in agent declaration order.
    pub compatibility: Vec<f64>,
}

/// Audit record of one processed arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub arrival: usize,
    pub user_id: String,
    pub regime: Option<String>,
    pub fairness: Vec<f64>,
    pub compatibility: Vec<f64>,
    pub weights: Vec<f64>,
    pub delivered: Vec<ItemId>,
    pub scores: Vec<f64>,
    /// Top `k` of the recommender's own list.
    pub original: Vec<ItemId>,
    /// Protected slots per agent in `delivered`.
    pub protected_delivered: Vec<usize>,
    /// Protected slots per agent in `original`.
    pub protected_original: Vec<usize>,
}

/// The records of a run and the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub config: SimConfig,
    pub records: Vec<StepRecord>,
}

/// Single-writer simulation state.
pub struct Simulator<'a> {
    config: SimConfig,
    catalog: &'a Catalog,
    feature_index: Vec<Option<usize>>,
    window: HistoryWindow,
    rng: ChaCha8Rng,
}

impl<'a> Simulator<'a> {
    pub fn new(config: SimConfig, catalog: &'a Catalog) -> Result<Self> {
        config.validate()?;
        let window = HistoryWindow::new(config.window)?;
        Self::with_window(config, catalog, window)
    }

    /// Starts from a pre-filled history window.
    pub fn with_window(
        config: SimConfig,
        catalog: &'a Catalog,
        window: HistoryWindow,
    ) -> Result<Self> {
        config.validate()?;
        if window.capacity() != config.window {
            return Err(Error::Config(format!(
                "window capacity {} does not match configured window {}",
                window.capacity(),
                config.window
            )));
        }
        let feature_index = config
            .agents
            .iter()
            .map(|a| catalog.feature_index(&a.protected_feature))
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Simulator {
            config,
            catalog,
            feature_index,
            window,
            rng,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn window(&self) -> &HistoryWindow {
        &self.window
    }

    /// Current agent states measured on the window.
    pub fn agent_states(&self) -> Vec<AgentState> {
        self.config
            .agents
            .iter()
            .map(|spec| AgentState {
                spec: spec.clone(),
                fairness: agent_fairness(&self.window, spec, self.catalog),
            })
            .collect()
    }

    fn protected_counts(&self, items: &[ItemId]) -> Vec<usize> {
        self.feature_index
            .iter()
            .map(|f| match f {
                Some(f) => items
                    .iter()
                    .filter(|id| self.catalog.is_protected_at(id, *f))
                    .count(),
                None => 0,
            })
            .collect()
    }

    /// Processes one arrival. Users without candidates are skipped and
    /// yield `None`.
    pub fn step(&mut self, index: usize, arrival: &Arrival) -> Result<Option<StepRecord>> {
        if arrival.candidates.is_empty() {
            log::warn!(
                "arrival {index} (user {}) has no candidates; skipped",
                arrival.user_id
            );
            return Ok(None);
        }
        let n_agents = self.config.agents.len();
        if arrival.compatibility.len() != n_agents {
            return Err(Error::InvalidInput(format!(
                "user {} has {} compatibility values for {n_agents} agents",
                arrival.user_id,
                arrival.compatibility.len()
            )));
        }

        let fairness: Vec<f64> = self
            .agent_states()
            .into_iter()
            .map(|s| s.fairness)
            .collect();
        let compatibility: Vec<f64> = arrival
            .compatibility
            .iter()
            .map(|c| c.clamp(0.0, 1.0))
            .collect();
        let ctx = OpportunityContext::new(fairness.clone(), compatibility.clone())?;
        let allocation = self.config.allocation.allocate(
            &ctx,
            self.config.compatibility_exponent,
            &mut self.rng,
        )?;

        let ranked = self.aggregate(&arrival.candidates, &allocation)?;
        let k = self.config.list_length;
        let delivered_list = ranked.top(k);
        let delivered = delivered_list.item_ids();
        let original = arrival.candidates.top(k).item_ids();

        let record = StepRecord {
            arrival: index,
            user_id: arrival.user_id.clone(),
            regime: arrival.regime.clone(),
            fairness,
            compatibility,
            weights: allocation.weights,
            scores: delivered_list.scores().collect(),
            protected_delivered: self.protected_counts(&delivered),
            protected_original: self.protected_counts(&original),
            delivered: delivered.clone(),
            original,
        };
        self.window.push(delivered)?;
        Ok(Some(record))
    }

    fn aggregate(
        &mut self,
        candidates: &ScoredList,
        allocation: &AllocationResult,
    ) -> Result<ScoredList> {
        let agents = &self.config.agents;
        if self.config.choice == ChoiceMechanism::Rescoring {
            return Ok(aggregate_rescoring(
                candidates,
                allocation,
                agents,
                self.catalog,
            ));
        }
        let ballots = allocation
            .allocated()
            .map(|(a, w)| agent_ballot(&agents[a], candidates, self.catalog).with_weight(w))
            .collect();
        let profile = Profile::new(candidates, self.config.recommender_weight, ballots)?;
        Ok(match self.config.choice {
            ChoiceMechanism::Borda => aggregate_borda(&profile),
            ChoiceMechanism::Copeland => aggregate_copeland(&profile),
            ChoiceMechanism::RankedPairs => aggregate_ranked_pairs(&profile, &mut self.rng),
            ChoiceMechanism::Rescoring => unreachable!(),
        })
    }

    /// Folds [`Simulator::step`] over `arrivals` in order.
    pub fn run_all(&mut self, arrivals: &[Arrival]) -> Result<Vec<StepRecord>> {
        let mut records = Vec::with_capacity(arrivals.len());
        for (index, arrival) in arrivals.iter().enumerate() {
            let step = self.step(index, arrival).map_err(|e| Error::AtArrival {
                index,
                source: Box::new(e),
            })?;
            records.extend(step);
        }
        Ok(records)
    }
}

/// Runs a fresh simulation over `arrivals`.
pub fn run(config: &SimConfig, arrivals: &[Arrival], catalog: &Catalog) -> Result<ExperimentLog> {
    let mut sim = Simulator::new(config.clone(), catalog)?;
    let records = sim.run_all(arrivals)?;
    Ok(ExperimentLog {
        config: config.clone(),
        records,
    })
}
