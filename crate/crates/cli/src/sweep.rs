//! Monte Carlo sweep over (error rate, lambda) cells on one fixed topology.
//!
//! The topology and the initial values are drawn once from the base seed so
//! every cell sees the same network; only the channel randomness differs
//! between replicas. Replica `i` of cell `c` uses
//! `base_seed + (c << 32 | i)`, so any single cell can be rerun alone.

use std::path::{Path, PathBuf};

use harq_qac::{ChannelModel, Digraph, HaltConfig, World};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{seeded_rng, stream, ConfigError};
use crate::stats;
use crate::ScenarioError;

fn default_nodes() -> usize {
    20
}

fn default_extra_edge_prob() -> f64 {
    0.2
}

fn default_value_high() -> i64 {
    100
}

fn default_max_rounds() -> u64 {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub error_rates: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub tau_bar: u32,
    pub replicas: usize,
    pub base_seed: u64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_extra_edge_prob")]
    pub extra_edge_prob: f64,
    #[serde(default)]
    pub value_low: i64,
    #[serde(default = "default_value_high")]
    pub value_high: i64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: SweepConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.error_rates.is_empty() {
            return Err(ConfigError::new("error_rates", "must not be empty"));
        }
        if self.lambdas.is_empty() {
            return Err(ConfigError::new("lambdas", "must not be empty"));
        }
        if let Some(p) = self.error_rates.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(ConfigError::new(
                "error_rates",
                format!("{p} is outside [0, 1)"),
            ));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(ConfigError::new(
                "lambdas",
                format!("{l} is outside [0, 1]"),
            ));
        }
        if self.replicas == 0 {
            return Err(ConfigError::new("replicas", "must be at least 1"));
        }
        if self.nodes < 2 {
            return Err(ConfigError::new("nodes", "need at least 2 nodes"));
        }
        if !(0.0..=1.0).contains(&self.extra_edge_prob) {
            return Err(ConfigError::new("extra_edge_prob", "must lie in [0, 1]"));
        }
        if self.value_low > self.value_high {
            return Err(ConfigError::new("value_low", "must not exceed value_high"));
        }
        if self.max_rounds == 0 {
            return Err(ConfigError::new("max_rounds", "must be at least 1"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.error_rates.len() * self.lambdas.len()
    }

    /// `(error_rate, lambda)` of a cell; rates vary slowest.
    pub fn cell(&self, index: usize) -> (f64, f64) {
        let l = self.lambdas.len();
        (self.error_rates[index / l], self.lambdas[index % l])
    }

    pub fn replica_seed(&self, cell: usize, replica: usize) -> u64 {
        self.base_seed
            .wrapping_add(((cell as u64) << 32) | replica as u64)
    }
}

/// The fixed network every cell runs on.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub graph: Digraph,
    pub values: Vec<i64>,
}

impl SweepSetup {
    pub fn new(cfg: &SweepConfig) -> Result<Self, ScenarioError> {
        use rand::Rng;
        let graph = Digraph::random_strongly_connected(
            cfg.nodes,
            cfg.extra_edge_prob,
            &mut seeded_rng(cfg.base_seed, stream::GRAPH),
        )?;
        let mut rng = seeded_rng(cfg.base_seed, stream::VALUES);
        let values = (0..cfg.nodes)
            .map(|_| rng.random_range(cfg.value_low..=cfg.value_high))
            .collect();
        Ok(SweepSetup { graph, values })
    }
}

/// Iterations to convergence for one run, `None` if `max_rounds` ran out.
pub fn run_replica(
    graph: &Digraph,
    values: &[i64],
    channel: ChannelModel,
    seed: u64,
    max_rounds: u64,
) -> Result<Option<u64>, ScenarioError> {
    let mut world = World::new(graph.clone(), values, channel)?;
    let halt = HaltConfig::new(max_rounds, 0)?;
    let trace = world.run(halt, &mut seeded_rng(seed, stream::CHANNEL))?;
    Ok(trace.first_converged())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub error_rate: f64,
    pub lambda: f64,
    /// One entry per replica, in replica order.
    pub iterations: Vec<Option<u64>>,
}

impl CellResult {
    pub fn converged_sorted(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.iterations.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn failures(&self) -> usize {
        self.iterations.iter().filter(|i| i.is_none()).count()
    }

    pub fn median(&self) -> Option<f64> {
        stats::median(&self.converged_sorted())
    }

    pub fn iqr(&self) -> Option<f64> {
        stats::iqr(&self.converged_sorted())
    }

    pub fn row(&self) -> SweepRow {
        let sorted = self.converged_sorted();
        SweepRow {
            error_rate: self.error_rate,
            lambda: self.lambda,
            median_iters: stats::median(&sorted),
            mean_iters: stats::mean(&sorted),
            min_iters: sorted.first().copied(),
            max_iters: sorted.last().copied(),
            failures: self.failures(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub error_rate: f64,
    pub lambda: f64,
    pub median_iters: Option<f64>,
    pub mean_iters: Option<f64>,
    pub min_iters: Option<u64>,
    pub max_iters: Option<u64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn get(&self, error_rate: f64, lambda: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.error_rate == error_rate && c.lambda == lambda)
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells.iter().map(CellResult::row).collect()
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(CellResult::failures).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ScenarioError> {
        let file = std::fs::File::create(path).map_err(|e| ScenarioError::Io {
            path: path.into(),
            source: e,
        })?;
        harq_qac::trace::write_rows(file, &self.rows())?;
        Ok(())
    }
}

/// Runs every replica of one cell.
pub fn run_cell(
    cfg: &SweepConfig,
    setup: &SweepSetup,
    cell: usize,
) -> Result<CellResult, ScenarioError> {
    let (error_rate, lambda) = cfg.cell(cell);
    let iterations = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| {
            let channel = ChannelModel::harq(error_rate, lambda, cfg.tau_bar)?;
            run_replica(
                &setup.graph,
                &setup.values,
                channel,
                cfg.replica_seed(cell, i),
                cfg.max_rounds,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CellResult {
        error_rate,
        lambda,
        iterations,
    })
}

/// Runs the whole grid; writes `sweep.csv` into `cfg.out` when set.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult, ScenarioError> {
    cfg.validate()?;
    let setup = SweepSetup::new(cfg)?;
    let cells = (0..cfg.cell_count())
        .map(|c| run_cell(cfg, &setup, c))
        .collect::<Result<Vec<_>, _>>()?;
    let result = SweepResult { cells };
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Io {
            path: dir.clone(),
            source: e,
        })?;
        result.write_csv(&dir.join("sweep.csv"))?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig::from_toml(
            "error_rates = [0.0, 0.5]\nlambdas = [0.0, 1.0]\ntau_bar = 2\nreplicas = 4\nbase_seed = 9\nnodes = 6\n",
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_cells() {
        let cfg = small();
        assert_eq!(cfg.max_rounds, 20_000);
        assert_eq!(cfg.extra_edge_prob, 0.2);
        assert_eq!(cfg.cell_count(), 4);
        assert_eq!(cfg.cell(1), (0.0, 1.0));
        assert_eq!(cfg.cell(2), (0.5, 0.0));
        assert_ne!(cfg.replica_seed(0, 1), cfg.replica_seed(1, 0));
        assert_eq!(SweepConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn validation() {
        let mut cfg = small();
        cfg.replicas = 0;
        assert_eq!(cfg.validate().unwrap_err().field, "replicas");
        let mut cfg = small();
        cfg.lambdas.clear();
        assert_eq!(cfg.validate().unwrap_err().field, "lambdas");
        let mut cfg = small();
        cfg.error_rates.push(1.0);
        assert_eq!(cfg.validate().unwrap_err().field, "error_rates");
    }

    #[test]
    fn cells_rerun_in_isolation() {
        let cfg = small();
        let full = run_sweep(&cfg).unwrap();
        let setup = SweepSetup::new(&cfg).unwrap();
        for c in 0..cfg.cell_count() {
            assert_eq!(run_cell(&cfg, &setup, c).unwrap(), full.cells[c]);
        }
        let zero_a = full.get(0.0, 0.0).unwrap();
        let zero_b = full.get(0.0, 1.0).unwrap();
        assert_eq!(zero_a.iterations, zero_b.iterations);
        assert_eq!(full.total_failures(), 0);
    }
}
