//! Per-node state machine of the HARQ-based quantized averaging protocol.
//!
//! Each node carries a transferable mass pair `(y, z)` and a state pair
//! `(y^s, z^s)` whose ratio is its estimate of the average. Whenever the
//! accumulated mass beats the state (larger `z`, or equal `z` with `y` at
//! least as large) the node adopts the mass as its new state and ships the
//! whole mass to its next out-neighbor in round-robin port order.
//!
//! Shipped mass is snapshotted into a per-link FIFO at transmit time and
//! stays there until acknowledged. A NACKed snapshot is retransmitted
//! unchanged with an incremented attempt index; once the retransmission
//! limit is spent the snapshot is folded back into the sender's local mass.

use std::collections::VecDeque;

use num_rational::Ratio;
use thiserror::Error;

use crate::channel::DeliveryOutcome;
use crate::digraph::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("node {0} has no out-neighbors")]
    NoOutNeighbors(NodeId),
    #[error("node {node} lists out-neighbor {neighbor} more than once or as itself")]
    BadPorts { node: NodeId, neighbor: NodeId },
    #[error("node {node} was handed a delivered pair with z = 0")]
    EmptyDelivery { node: NodeId },
    #[error("{neighbor} is not an out-neighbor of {node}")]
    UnknownOutNeighbor { node: NodeId, neighbor: NodeId },
    #[error("feedback for entry {entry} on link {node}->{neighbor}, which holds no such entry")]
    NoSuchEntry {
        node: NodeId,
        neighbor: NodeId,
        entry: u64,
    },
}

/// Numerator/denominator mass. Every transmitted pair has `z >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MassPair {
    pub y: i64,
    pub z: u64,
}

impl MassPair {
    pub const ZERO: MassPair = MassPair { y: 0, z: 0 };

    pub fn new(y: i64, z: u64) -> Self {
        MassPair { y, z }
    }

    pub fn is_zero(&self) -> bool {
        self.y == 0 && self.z == 0
    }
}

impl std::ops::Add for MassPair {
    type Output = MassPair;

    fn add(self, rhs: MassPair) -> MassPair {
        MassPair {
            y: self.y + rhs.y,
            z: self.z + rhs.z,
        }
    }
}

impl std::ops::AddAssign for MassPair {
    fn add_assign(&mut self, rhs: MassPair) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for MassPair {
    fn sum<I: Iterator<Item = MassPair>>(iter: I) -> MassPair {
        iter.fold(MassPair::ZERO, |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    Fresh,
    Retx,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Fresh => "fresh",
            PacketKind::Retx => "retx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub src: NodeId,
    pub dst: NodeId,
    pub mass: MassPair,
    /// Attempt index: 0 for the fresh transmission, `i` for the i-th retransmission.
    pub r: u32,
    /// Sender-local id of the queued snapshot this packet carries.
    pub entry: u64,
    pub kind: PacketKind,
}

/// A shipped but not yet acknowledged mass snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InFlightEntry {
    pub id: u64,
    pub snapshot: MassPair,
    pub r: u32,
}

/// What a feedback bit did to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackEffect {
    Acknowledged,
    Retry,
    FoldedBack,
}

/// C1: strictly more tokens. C2: as many tokens and at least as much value.
pub fn evaluate_trigger(z_new: u64, y_new: i64, z_s: u64, y_s: i64) -> bool {
    z_new > z_s || (z_new == z_s && y_new >= y_s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    id: NodeId,
    mass: MassPair,
    state: MassPair,
    // Indexed by port - 1.
    ports: Vec<NodeId>,
    queues: Vec<VecDeque<InFlightEntry>>,
    tr: usize,
    next_entry: u64,
}

impl NodeState {
    /// Initializes the node and ships its whole initial mass on port 1.
    ///
    /// `ports[0]` is the out-neighbor with port 1.
    pub fn init(id: NodeId, y0: i64, ports: &[NodeId]) -> Result<(Self, Packet), ProtocolError> {
        if ports.is_empty() {
            return Err(ProtocolError::NoOutNeighbors(id));
        }
        for (i, &l) in ports.iter().enumerate() {
            if l == id || ports[..i].contains(&l) {
                return Err(ProtocolError::BadPorts {
                    node: id,
                    neighbor: l,
                });
            }
        }
        let start = MassPair::new(y0, 1);
        let mut node = NodeState {
            id,
            mass: start,
            state: start,
            ports: ports.to_vec(),
            queues: vec![VecDeque::new(); ports.len()],
            tr: 1,
            next_entry: 0,
        };
        let packet = node.ship(1);
        Ok((node, packet))
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn mass(&self) -> MassPair {
        self.mass
    }

    pub fn state(&self) -> MassPair {
        self.state
    }

    /// Current round-robin pointer, a port in `1..=out_degree`.
    pub fn tr(&self) -> usize {
        self.tr
    }

    pub fn ports(&self) -> &[NodeId] {
        &self.ports
    }

    pub fn queue(&self, out_neighbor: NodeId) -> Option<&VecDeque<InFlightEntry>> {
        self.port_index(out_neighbor).map(|i| &self.queues[i])
    }

    /// Sum of every snapshot still awaiting acknowledgement.
    pub fn queued_mass(&self) -> MassPair {
        self.queues.iter().flatten().map(|e| e.snapshot).sum()
    }

    pub fn has_queued(&self) -> bool {
        self.queues.iter().any(|q| !q.is_empty())
    }

    fn port_index(&self, out_neighbor: NodeId) -> Option<usize> {
        self.ports.iter().position(|&l| l == out_neighbor)
    }

    /// Moves the whole local mass into the queue of `port` and returns the
    /// fresh packet carrying it.
    fn ship(&mut self, port: usize) -> Packet {
        let entry = InFlightEntry {
            id: self.next_entry,
            snapshot: self.mass,
            r: 0,
        };
        self.next_entry += 1;
        self.queues[port - 1].push_back(entry);
        self.mass = MassPair::ZERO;
        Packet {
            src: self.id,
            dst: self.ports[port - 1],
            mass: entry.snapshot,
            r: 0,
            entry: entry.id,
            kind: PacketKind::Fresh,
        }
    }

    /// Adds successfully delivered pairs to the local mass.
    pub fn absorb(&mut self, delivered: &[MassPair]) -> Result<(), ProtocolError> {
        if delivered.iter().any(|m| m.z == 0) {
            return Err(ProtocolError::EmptyDelivery { node: self.id });
        }
        self.mass += delivered.iter().copied().sum();
        Ok(())
    }

    /// Applies the acknowledgement bit for the attempt that carried `entry`
    /// over the link to `out_neighbor`.
    pub fn on_feedback(
        &mut self,
        out_neighbor: NodeId,
        entry: u64,
        outcome: DeliveryOutcome,
        max_retx: u32,
    ) -> Result<FeedbackEffect, ProtocolError> {
        let port = self
            .port_index(out_neighbor)
            .ok_or(ProtocolError::UnknownOutNeighbor {
                node: self.id,
                neighbor: out_neighbor,
            })?;
        let queue = &mut self.queues[port];
        let pos = queue
            .iter()
            .position(|e| e.id == entry)
            .ok_or(ProtocolError::NoSuchEntry {
                node: self.id,
                neighbor: out_neighbor,
                entry,
            })?;
        if outcome.feedback {
            queue.remove(pos);
            return Ok(FeedbackEffect::Acknowledged);
        }
        if queue[pos].r < max_retx {
            queue[pos].r += 1;
            return Ok(FeedbackEffect::Retry);
        }
        let folded = queue.remove(pos).map(|e| e.snapshot).unwrap_or_default();
        self.mass += folded;
        Ok(FeedbackEffect::FoldedBack)
    }

    /// Evaluates the trigger once; on firing, adopts the mass as state and
    /// ships it to the next port.
    pub fn trigger_step(&mut self) -> Option<Packet> {
        if !evaluate_trigger(self.mass.z, self.mass.y, self.state.z, self.state.y) {
            return None;
        }
        self.state = self.mass;
        self.tr = self.tr % self.ports.len() + 1;
        Some(self.ship(self.tr))
    }

    /// Head-of-queue snapshots that were NACKed and still await another try,
    /// at most one per out-link, in port order.
    pub fn pending_retransmissions(&self) -> Vec<Packet> {
        self.queues
            .iter()
            .zip(&self.ports)
            .filter_map(|(q, &dst)| {
                let head = q.front()?;
                (head.r >= 1).then_some(Packet {
                    src: self.id,
                    dst,
                    mass: head.snapshot,
                    r: head.r,
                    entry: head.id,
                    kind: PacketKind::Retx,
                })
            })
            .collect()
    }

    /// The node's estimate `y^s / z^s`, exact.
    pub fn output(&self) -> Ratio<i64> {
        Ratio::new(self.state.y, self.state.z as i64)
    }
}
