//! Per-round run records and their CSV export.

use std::fs::File;
use std::io;
use std::path::Path;

use num_rational::Ratio;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::channel::Outcome;
use crate::digraph::NodeId;
use crate::engine::DeliveryEvent;
use crate::protocol::{MassPair, PacketKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSnapshot {
    pub mass: MassPair,
    pub state: MassPair,
    pub q: Ratio<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub nodes: Vec<NodeSnapshot>,
    pub consensus_error: f64,
    pub total: MassPair,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    /// Every node held the exact average for the whole stability window.
    Converged,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    rounds: Vec<RoundRecord>,
    events: Vec<DeliveryEvent>,
    first_converged: Option<u64>,
    halt: HaltReason,
}

impl RunTrace {
    pub(crate) fn new(initial: RoundRecord) -> Self {
        RunTrace {
            rounds: vec![initial],
            events: Vec::new(),
            first_converged: None,
            halt: HaltReason::MaxRounds,
        }
    }

    pub(crate) fn push(&mut self, record: RoundRecord, events: Vec<DeliveryEvent>) {
        self.rounds.push(record);
        self.events.extend(events);
    }

    pub(crate) fn finish(&mut self, first_converged: Option<u64>, halt: HaltReason) {
        self.first_converged = first_converged;
        self.halt = halt;
    }

    /// Round 0 snapshot followed by one record per executed round.
    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn events(&self) -> &[DeliveryEvent] {
        &self.events
    }

    pub fn rounds_executed(&self) -> u64 {
        self.rounds.len() as u64 - 1
    }

    /// First round from which every node held the exact average.
    pub fn first_converged(&self) -> Option<u64> {
        self.first_converged
    }

    pub fn halt_reason(&self) -> HaltReason {
        self.halt
    }

    pub fn state_rows(&self) -> Vec<StateRow> {
        self.rounds
            .iter()
            .flat_map(|rec| {
                rec.nodes.iter().enumerate().map(move |(i, s)| StateRow {
                    round: rec.round,
                    node: NodeId::from_index(i),
                    y: s.mass.y,
                    z: s.mass.z,
                    ys: s.state.y,
                    zs: s.state.z,
                    q_num: *s.q.numer(),
                    q_den: *s.q.denom(),
                })
            })
            .collect()
    }

    pub fn event_rows(&self) -> Vec<EventRow> {
        self.events
            .iter()
            .map(|e| EventRow {
                round: e.round,
                src: e.src,
                dst: e.dst,
                ordinal: e.ordinal,
                r: e.r,
                kind: e.kind.into(),
                outcome: e.success.into(),
            })
            .collect()
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        self.rounds
            .iter()
            .map(|rec| MetricRow {
                round: rec.round,
                consensus_error: rec.consensus_error,
                y_total: rec.total.y,
                z_total: rec.total.z,
            })
            .collect()
    }

    /// Writes `states.csv`, `events.csv` and `metrics.csv` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), csv::Error> {
        std::fs::create_dir_all(dir)?;
        write_rows(File::create(dir.join("states.csv"))?, &self.state_rows())?;
        write_rows(File::create(dir.join("events.csv"))?, &self.event_rows())?;
        write_rows(File::create(dir.join("metrics.csv"))?, &self.metric_rows())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRow {
    pub round: u64,
    pub node: NodeId,
    pub y: i64,
    pub z: u64,
    pub ys: i64,
    pub zs: u64,
    pub q_num: i64,
    pub q_den: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Fresh,
    Retx,
}

impl From<PacketKind> for EventKind {
    fn from(kind: PacketKind) -> Self {
        match kind {
            PacketKind::Fresh => EventKind::Fresh,
            PacketKind::Retx => EventKind::Retx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRow {
    pub round: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub ordinal: u32,
    pub r: u32,
    pub kind: EventKind,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub round: u64,
    pub consensus_error: f64,
    pub y_total: i64,
    pub z_total: u64,
}

pub fn write_rows<W: io::Write, T: Serialize>(writer: W, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: io::Read, T: DeserializeOwned>(reader: R) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub fn read_rows_from<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, csv::Error> {
    read_rows(File::open(path)?)
}
