//! Scenario loading and network generation, plus the slotted event engine
//! that drives energy arrivals and records metrics.

pub mod config;
pub mod engine;
pub mod fields;
pub mod metrics;
pub mod rng;
pub mod tiers;

use thiserror::Error;

pub use config::{load_scenario, parse_scenario, Access, ConfigError, ScenarioConfig};
pub use engine::{alive_log, flow_problem, run, FlowProblem};
pub use metrics::{emit_metrics, Metrics, MetricsError, MetricsFormat, Summary};
pub use tiers::{generate_tiers, Network, Role};

use crate::planner::PlanError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario places no animals")]
    EmptyNetwork,
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("slot {slot}{}: {message}", .node.map(|n| format!(", node {n}")).unwrap_or_default())]
    Module {
        slot: u64,
        node: Option<u32>,
        message: String,
    },
    #[error("charge planning for node {node}: {source}")]
    Plan { node: u32, source: PlanError },
    #[error("invariant violated at slot {slot}, node {node}: {message}")]
    Invariant { slot: u64, node: u32, message: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
