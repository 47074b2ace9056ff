//! Multi-agent fairness-aware re-ranking.
//!
//! Fairness agents watch a sliding window of delivered lists. On each user
//! arrival an allocation mechanism picks which agents get a say, each
//! allocated agent casts a ballot favouring its protected items, and a
//! voting rule merges those ballots with the recommender's own list.

pub mod agents;
pub mod allocation;
pub mod choice;
pub mod config;
pub mod datagen;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod runner;
pub mod sim;

pub use allocation::AllocationMechanism;
pub use choice::ChoiceMechanism;
pub use error::{Error, Result};
pub use model::{AgentSpec, Catalog, HistoryWindow, ItemId, ScoredList};
pub use sim::{Arrival, ExperimentLog, SimConfig, Simulator, StepRecord};
