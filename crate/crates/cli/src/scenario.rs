use harq_qac::{HaltReason, RunTrace, World};

use crate::config::{seeded_rng, stream, ScenarioConfig};
use crate::ScenarioError;

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub trace: RunTrace,
    pub initial_values: Vec<i64>,
}

impl ScenarioOutcome {
    pub fn converged(&self) -> bool {
        self.trace.halt_reason() == HaltReason::Converged
    }

    /// Iterations until every node first held the exact average.
    pub fn iterations(&self) -> Option<u64> {
        self.trace.first_converged()
    }
}

pub fn build_world(cfg: &ScenarioConfig) -> Result<(World, Vec<i64>), ScenarioError> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let values = cfg.build_values(graph.node_count())?;
    let channel = cfg.build_channel()?;
    Ok((World::new(graph, &values, channel)?, values))
}

/// Builds the world, runs it and, when `cfg.out` is set, writes the three
/// trace CSVs there.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let (mut world, initial_values) = build_world(cfg)?;
    let trace = world.run(
        cfg.halt_config(),
        &mut seeded_rng(cfg.seed, stream::CHANNEL),
    )?;
    if let Some(dir) = &cfg.out {
        trace.export(dir)?;
    }
    Ok(ScenarioOutcome {
        trace,
        initial_values,
    })
}
