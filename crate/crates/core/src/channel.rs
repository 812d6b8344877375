//! Per-packet delivery outcomes over unreliable links.
//!
//! The channel is stateless: the attempt index `r` travels with the packet,
//! and the drop probability of attempt `r` is `p * lambda^r`. Feedback is
//! error-free, so the acknowledgement a sender sees always equals the
//! delivery outcome.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digraph::{Digraph, NodeId};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid link parameters: {0}")]
    InvalidParams(String),
    #[error("attempt index {r} exceeds the retransmission limit {max_retx}")]
    AttemptBeyondLimit { r: u32, max_retx: u32 },
    #[error("no link from {src} to {dst}")]
    NoSuchEdge { src: NodeId, dst: NodeId },
    #[error("scripted schedule has no entry for round {} link {}->{} ordinal {}", .0.round, .0.src, .0.dst, .0.ordinal)]
    ScriptedEntryMissing(DeliveryKey),
    #[error("schedule file: {0}")]
    Csv(#[from] csv::Error),
    #[error("schedule file: {0}")]
    Io(#[from] io::Error),
}

/// Loss parameters of one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Drop probability of a fresh transmission.
    pub p: f64,
    /// Per-retransmission decay of the drop probability; 1 means plain ARQ.
    pub lambda: f64,
    /// Retransmissions allowed before the sender takes the mass back.
    pub max_retx: u32,
}

impl LinkParams {
    /// `lambda = 0` is accepted and means every retransmission succeeds.
    pub fn new(p: f64, lambda: f64, max_retx: u32) -> Result<Self, ChannelError> {
        if !(0.0..1.0).contains(&p) {
            return Err(ChannelError::InvalidParams(format!(
                "p = {p} must lie in [0, 1)"
            )));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(ChannelError::InvalidParams(format!(
                "lambda = {lambda} must lie in [0, 1]"
            )));
        }
        Ok(LinkParams {
            p,
            lambda,
            max_retx,
        })
    }

    pub fn arq(p: f64, max_retx: u32) -> Result<Self, ChannelError> {
        Self::new(p, 1.0, max_retx)
    }
}

/// Drop probability of attempt `r` (0 = fresh transmission).
pub fn error_probability(params: &LinkParams, r: u32) -> Result<f64, ChannelError> {
    if r > params.max_retx {
        return Err(ChannelError::AttemptBeyondLimit {
            r,
            max_retx: params.max_retx,
        });
    }
    let exp = i32::try_from(r).unwrap_or(i32::MAX);
    Ok(params.p * params.lambda.powi(exp))
}

/// Uniform link parameters with optional per-link overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTable {
    pub default: LinkParams,
    pub overrides: BTreeMap<(NodeId, NodeId), LinkParams>,
}

impl LinkTable {
    pub fn uniform(default: LinkParams) -> Self {
        LinkTable {
            default,
            overrides: BTreeMap::new(),
        }
    }

    pub fn get(&self, src: NodeId, dst: NodeId) -> &LinkParams {
        self.overrides.get(&(src, dst)).unwrap_or(&self.default)
    }
}

/// Identifies one attempted delivery. `ordinal` is the packet's position in
/// the per-link list for that round (fresh packet first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeliveryKey {
    pub round: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub ordinal: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryOutcome {
    pub success: bool,
    pub feedback: bool,
}

impl DeliveryOutcome {
    pub fn from_success(success: bool) -> Self {
        DeliveryOutcome {
            success,
            feedback: success,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Drop,
}

impl From<bool> for Outcome {
    fn from(success: bool) -> Self {
        if success {
            Outcome::Ok
        } else {
            Outcome::Drop
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct ScheduleRecord {
    round: u64,
    src: NodeId,
    dst: NodeId,
    ordinal: u32,
    outcome: Outcome,
}

/// Predetermined delivery outcomes, keyed per attempted delivery.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    entries: BTreeMap<DeliveryKey, bool>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: DeliveryKey, success: bool) -> Option<bool> {
        self.entries.insert(key, success)
    }

    pub fn get(&self, key: &DeliveryKey) -> Option<bool> {
        self.entries.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Last round with any entry.
    pub fn last_round(&self) -> Option<u64> {
        self.entries.keys().map(|k| k.round).max()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DeliveryKey, &bool)> {
        self.entries.iter()
    }

    pub fn from_csv_reader<R: io::Read>(reader: R) -> Result<Self, ChannelError> {
        let mut schedule = Schedule::new();
        for rec in csv::Reader::from_reader(reader).deserialize() {
            let rec: ScheduleRecord = rec?;
            let key = DeliveryKey {
                round: rec.round,
                src: rec.src,
                dst: rec.dst,
                ordinal: rec.ordinal,
            };
            schedule.insert(key, rec.outcome == Outcome::Ok);
        }
        Ok(schedule)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), ChannelError> {
        let mut w = csv::Writer::from_writer(writer);
        for (k, &ok) in &self.entries {
            w.serialize(ScheduleRecord {
                round: k.round,
                src: k.src,
                dst: k.dst,
                ordinal: k.ordinal,
                outcome: ok.into(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ChannelError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ChannelError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Every packet arrives.
    Ideal,
    /// Constant drop probability per attempt, whatever `r` is.
    Bernoulli(LinkTable),
    /// Drop probability decays as `p * lambda^r`.
    Harq(LinkTable),
    /// Outcomes replayed from a schedule; `max_retx` applies to every link.
    Scripted { schedule: Schedule, max_retx: u32 },
}

impl ChannelModel {
    pub fn bernoulli(p: f64, max_retx: u32) -> Result<Self, ChannelError> {
        Ok(ChannelModel::Bernoulli(LinkTable::uniform(
            LinkParams::arq(p, max_retx)?,
        )))
    }

    pub fn harq(p: f64, lambda: f64, max_retx: u32) -> Result<Self, ChannelError> {
        Ok(ChannelModel::Harq(LinkTable::uniform(LinkParams::new(
            p, lambda, max_retx,
        )?)))
    }

    /// Retransmission limit of the link `src -> dst`.
    pub fn max_retx(&self, src: NodeId, dst: NodeId) -> u32 {
        match self {
            ChannelModel::Ideal => 0,
            ChannelModel::Bernoulli(t) | ChannelModel::Harq(t) => t.get(src, dst).max_retx,
            ChannelModel::Scripted { max_retx, .. } => *max_retx,
        }
    }

    /// Decides whether attempt `r` of the packet identified by `key` arrives.
    pub fn resolve<R: Rng + ?Sized>(
        &self,
        graph: &Digraph,
        key: DeliveryKey,
        r: u32,
        rng: &mut R,
    ) -> Result<DeliveryOutcome, ChannelError> {
        if !graph.contains_edge(key.src, key.dst) {
            return Err(ChannelError::NoSuchEdge {
                src: key.src,
                dst: key.dst,
            });
        }
        let success = match self {
            ChannelModel::Ideal => true,
            ChannelModel::Bernoulli(t) => {
                let params = t.get(key.src, key.dst);
                if r > params.max_retx {
                    return Err(ChannelError::AttemptBeyondLimit {
                        r,
                        max_retx: params.max_retx,
                    });
                }
                rng.random::<f64>() >= params.p
            }
            ChannelModel::Harq(t) => {
                let perr = error_probability(t.get(key.src, key.dst), r)?;
                rng.random::<f64>() >= perr
            }
            ChannelModel::Scripted { schedule, .. } => schedule
                .get(&key)
                .ok_or(ChannelError::ScriptedEntryMissing(key))?,
        };
        Ok(DeliveryOutcome::from_success(success))
    }
}
