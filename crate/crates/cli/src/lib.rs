//! Scenario presets, Monte Carlo sweeps and the worked-example replay for
//! the `harq-qac` simulator.

use std::path::PathBuf;

use thiserror::Error;

pub mod compare;
pub mod config;
pub mod scenario;
pub mod schedule;
pub mod stats;
pub mod sweep;

pub use compare::{compare_lambda, CompareResult};
pub use config::{ConfigError, ScenarioConfig};
pub use scenario::{run_scenario, ScenarioOutcome};
pub use schedule::{derive_example1_schedule, Anchor, Derivation};
pub use sweep::{run_sweep, SweepConfig, SweepResult};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("graph: {0}")]
    Graph(#[from] harq_qac::GraphError),
    #[error("channel: {0}")]
    Channel(#[from] harq_qac::ChannelError),
    #[error("simulation: {0}")]
    Engine(#[from] harq_qac::EngineError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv export: {0}")]
    Csv(#[from] csv::Error),
}
