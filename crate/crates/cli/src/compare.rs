//! Paired comparison of two lambda values on otherwise identical runs.

use harq_qac::{ChannelModel, LinkParams};
use rayon::prelude::*;

use crate::config::{ConfigError, ScenarioConfig};
use crate::scenario::build_world;
use crate::stats;
use crate::sweep::run_replica;
use crate::ScenarioError;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub lambdas: (f64, f64),
    /// Iterations to convergence per seed, `(first lambda, second lambda)`.
    pub pairs: Vec<(Option<u64>, Option<u64>)>,
}

impl CompareResult {
    fn sorted(&self, second: bool) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .pairs
            .iter()
            .filter_map(|&(a, b)| if second { b } else { a })
            .collect();
        v.sort_unstable();
        v
    }

    pub fn median_first(&self) -> Option<f64> {
        stats::median(&self.sorted(false))
    }

    pub fn median_second(&self) -> Option<f64> {
        stats::median(&self.sorted(true))
    }

    /// Median over seeds of `iters(second) - iters(first)`, counting only
    /// seeds where both runs converged.
    pub fn median_difference(&self) -> Option<f64> {
        let diffs: Vec<i64> = self
            .pairs
            .iter()
            .filter_map(|&(a, b)| Some(b? as i64 - a? as i64))
            .collect();
        stats::median_i64(&diffs)
    }

    pub fn failures(&self) -> (usize, usize) {
        (
            self.pairs.iter().filter(|p| p.0.is_none()).count(),
            self.pairs.iter().filter(|p| p.1.is_none()).count(),
        )
    }
}

/// Runs `replicas` seeds (`cfg.seed + i`) under both lambdas. The topology,
/// initial values, `p` and retransmission limit come from `cfg`.
pub fn compare_lambda(
    cfg: &ScenarioConfig,
    lambdas: (f64, f64),
    replicas: usize,
) -> Result<CompareResult, ScenarioError> {
    let base = cfg.link_params().ok_or_else(|| {
        ConfigError::new(
            "channel.model",
            "lambda comparison needs an ideal, bernoulli or harq channel",
        )
    })?;
    for l in [lambdas.0, lambdas.1] {
        LinkParams::new(base.p, l, base.max_retx)
            .map_err(|e| ConfigError::new("lambdas", e.to_string()))?;
    }
    let (world, values) = build_world(cfg)?;
    let graph = world.graph();
    let max_rounds = cfg.halt.max_rounds;
    let pairs = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let run = |lambda| {
                let channel = ChannelModel::harq(base.p, lambda, base.max_retx)?;
                run_replica(graph, &values, channel, seed, max_rounds)
            };
            Ok((run(lambdas.0)?, run(lambdas.1)?))
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    Ok(CompareResult { lambdas, pairs })
}
