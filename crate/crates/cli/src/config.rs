//! Scenario configuration: TOML files, presets and validation.

use std::path::PathBuf;

use harq_qac::{ChannelModel, Digraph, HaltConfig, LinkParams, Schedule};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::schedule::derive_example1_schedule;
use crate::ScenarioError;

/// RNG streams carved out of one seed, so adding draws to one consumer never
/// shifts another.
pub mod stream {
    pub const CHANNEL: u64 = 0;
    pub const GRAPH: u64 = 1;
    pub const VALUES: u64 = 2;
}

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("{field}: {msg}")]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, msg: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Example1,
    File { path: PathBuf },
    Random { nodes: usize, extra_edge_prob: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialValues {
    Explicit {
        values: Vec<i64>,
    },
    /// Uniform integers in `low..=high`.
    Random {
        low: i64,
        high: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Ideal,
    Bernoulli {
        p: f64,
        tau_bar: u32,
    },
    Harq {
        p: f64,
        lambda: f64,
        tau_bar: u32,
    },
    /// Replays a schedule file; without `path` the derived worked-example
    /// schedule is used.
    Scripted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        tau_bar: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaltSpec {
    pub max_rounds: u64,
    #[serde(default)]
    pub stability_window: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub graph: GraphSource,
    pub initial: InitialValues,
    pub channel: ChannelSpec,
    pub halt: HaltSpec,
}

pub const EXAMPLE1_VALUES: [i64; 4] = [2, 6, 2, 6];
pub const PRESETS: [&str; 4] = ["sc1", "sc2", "sc3", "example1"];

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let channel = match name {
            "sc1" => ChannelSpec::Ideal,
            "sc2" => ChannelSpec::Harq {
                p: 0.6,
                lambda: 1.0,
                tau_bar: 2,
            },
            "sc3" => ChannelSpec::Harq {
                p: 0.6,
                lambda: 0.3,
                tau_bar: 2,
            },
            "example1" => ChannelSpec::Scripted {
                path: None,
                tau_bar: 2,
            },
            other => {
                return Err(ConfigError::new(
                    "preset",
                    format!(
                        "unknown preset {other:?}, expected one of {}",
                        PRESETS.join(", ")
                    ),
                ))
            }
        };
        // The replay schedule covers a fixed horizon, so the run must stop inside it.
        let halt = if name == "example1" {
            HaltSpec {
                max_rounds: crate::schedule::REPLAY_HORIZON,
                stability_window: 1,
            }
        } else {
            HaltSpec {
                max_rounds: 1000,
                stability_window: 3,
            }
        };
        Ok(ScenarioConfig {
            seed: 0,
            out: None,
            graph: GraphSource::Example1,
            initial: InitialValues::Explicit {
                values: EXAMPLE1_VALUES.to_vec(),
            },
            channel,
            halt,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.graph {
            GraphSource::Random {
                nodes,
                extra_edge_prob,
            } => {
                if *nodes < 2 {
                    return Err(ConfigError::new("graph.nodes", "need at least 2 nodes"));
                }
                if !(0.0..=1.0).contains(extra_edge_prob) {
                    return Err(ConfigError::new(
                        "graph.extra_edge_prob",
                        "must lie in [0, 1]",
                    ));
                }
            }
            GraphSource::Example1 | GraphSource::File { .. } => {}
        }
        if let InitialValues::Random { low, high } = self.initial {
            if low > high {
                return Err(ConfigError::new(
                    "initial.low",
                    "must not exceed initial.high",
                ));
            }
        }
        match self.channel {
            ChannelSpec::Bernoulli { p, .. } | ChannelSpec::Harq { p, .. }
                if !(0.0..1.0).contains(&p) =>
            {
                return Err(ConfigError::new(
                    "channel.p",
                    format!("{p} is outside [0, 1)"),
                ));
            }
            ChannelSpec::Harq { lambda, .. } if !(0.0..=1.0).contains(&lambda) => {
                return Err(ConfigError::new(
                    "channel.lambda",
                    format!("{lambda} is outside [0, 1]"),
                ));
            }
            _ => {}
        }
        if self.halt.max_rounds == 0 {
            return Err(ConfigError::new("halt.max_rounds", "must be at least 1"));
        }
        Ok(())
    }

    pub fn halt_config(&self) -> HaltConfig {
        HaltConfig::new(self.halt.max_rounds, self.halt.stability_window)
            .expect("validated max_rounds is positive")
    }

    pub fn build_graph(&self) -> Result<Digraph, ScenarioError> {
        Ok(match &self.graph {
            GraphSource::Example1 => Digraph::example1(),
            GraphSource::File { path } => std::fs::read_to_string(path)
                .map_err(|e| ScenarioError::Io {
                    path: path.clone(),
                    source: e,
                })?
                .parse()?,
            GraphSource::Random {
                nodes,
                extra_edge_prob,
            } => Digraph::random_strongly_connected(
                *nodes,
                *extra_edge_prob,
                &mut seeded_rng(self.seed, stream::GRAPH),
            )?,
        })
    }

    pub fn build_values(&self, n: usize) -> Result<Vec<i64>, ConfigError> {
        match &self.initial {
            InitialValues::Explicit { values } => {
                if values.len() != n {
                    return Err(ConfigError::new(
                        "initial.values",
                        format!("expected {n} values for {n} nodes, got {}", values.len()),
                    ));
                }
                Ok(values.clone())
            }
            InitialValues::Random { low, high } => {
                let mut rng = seeded_rng(self.seed, stream::VALUES);
                Ok((0..n).map(|_| rng.random_range(*low..=*high)).collect())
            }
        }
    }

    pub fn build_channel(&self) -> Result<ChannelModel, ScenarioError> {
        Ok(match &self.channel {
            ChannelSpec::Ideal => ChannelModel::Ideal,
            ChannelSpec::Bernoulli { p, tau_bar } => ChannelModel::bernoulli(*p, *tau_bar)?,
            ChannelSpec::Harq { p, lambda, tau_bar } => ChannelModel::harq(*p, *lambda, *tau_bar)?,
            ChannelSpec::Scripted { path, tau_bar } => {
                let schedule = match path {
                    Some(path) => Schedule::load(path)?,
                    None => derive_example1_schedule().schedule,
                };
                ChannelModel::Scripted {
                    schedule,
                    max_retx: *tau_bar,
                }
            }
        })
    }

    /// Base link parameters for configs that describe a lossy channel.
    pub fn link_params(&self) -> Option<LinkParams> {
        match self.channel {
            ChannelSpec::Bernoulli { p, tau_bar } => LinkParams::arq(p, tau_bar).ok(),
            ChannelSpec::Harq { p, lambda, tau_bar } => LinkParams::new(p, lambda, tau_bar).ok(),
            ChannelSpec::Ideal => LinkParams::new(0.0, 1.0, 0).ok(),
            ChannelSpec::Scripted { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            ScenarioConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(ScenarioConfig::preset("sc9").unwrap_err().field, "preset");
    }

    #[test]
    fn parses_a_full_file() {
        let text = r#"
seed = 7
out = "runs/x"

[graph]
source = "random"
nodes = 10
extra_edge_prob = 0.2

[initial]
kind = "random"
low = -5
high = 5

[channel]
model = "harq"
p = 0.6
lambda = 0.3
tau_bar = 2

[halt]
max_rounds = 500
"#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(
            cfg.graph,
            GraphSource::Random {
                nodes: 10,
                extra_edge_prob: 0.2
            }
        );
        assert_eq!(
            cfg.halt,
            HaltSpec {
                max_rounds: 500,
                stability_window: 0
            }
        );
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let values = cfg.build_values(10).unwrap();
        assert!(values.iter().all(|v| (-5..=5).contains(v)));
        assert_eq!(values, cfg.build_values(10).unwrap());
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ScenarioConfig::preset("sc3").unwrap();
        cfg.channel = ChannelSpec::Harq {
            p: 1.0,
            lambda: 0.3,
            tau_bar: 2,
        };
        assert_eq!(cfg.validate().unwrap_err().field, "channel.p");
        cfg.channel = ChannelSpec::Harq {
            p: 0.5,
            lambda: 1.3,
            tau_bar: 2,
        };
        assert_eq!(cfg.validate().unwrap_err().field, "channel.lambda");
        cfg.channel = ChannelSpec::Ideal;
        cfg.halt.max_rounds = 0;
        assert_eq!(cfg.validate().unwrap_err().field, "halt.max_rounds");
        cfg.halt.max_rounds = 10;
        cfg.initial = InitialValues::Explicit {
            values: vec![1, 2, 3],
        };
        assert_eq!(cfg.build_values(4).unwrap_err().field, "initial.values");
        assert!(ScenarioConfig::from_toml("seed = 1\n").is_err());
    }
}
