//! Synchronous-round scheduler.
//!
//! Packets sent in round `k` are resolved at the start of round `k + 1`.
//! Within a round the phases run in a fixed order:
//!
//! 1. resolve every outbox packet against the channel;
//! 2. hand feedback to senders, ascending `(src, dst)`;
//! 3. hand successful packets to receivers, summed in ascending `src`;
//! 4. evaluate the trigger once per node, ascending node order;
//! 5. collect fresh packets and head-of-queue retransmissions as the next outbox.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::Rng;
use thiserror::Error;

use crate::channel::{ChannelError, ChannelModel, DeliveryKey, DeliveryOutcome};
use crate::digraph::{Digraph, NodeId};
use crate::protocol::{FeedbackEffect, MassPair, NodeState, Packet, PacketKind, ProtocolError};
use crate::trace::{HaltReason, NodeSnapshot, RoundRecord, RunTrace};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("expected {expected} initial values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("the digraph is not strongly connected")]
    NotStronglyConnected,
    #[error("max_rounds must be at least 1")]
    ZeroMaxRounds,
    #[error("round {round}: {source}")]
    Channel {
        round: u64,
        #[source]
        source: ChannelError,
    },
    #[error("round {round}: {source}")]
    Protocol {
        round: u64,
        #[source]
        source: ProtocolError,
    },
}

/// One resolved delivery attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryEvent {
    /// Round in which the packet was sent.
    pub round: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub ordinal: u32,
    pub r: u32,
    pub kind: PacketKind,
    pub success: bool,
    pub mass: MassPair,
    pub entry: u64,
    pub effect: FeedbackEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaltConfig {
    max_rounds: u64,
    stability_window: u64,
}

impl HaltConfig {
    pub fn new(max_rounds: u64, stability_window: u64) -> Result<Self, EngineError> {
        if max_rounds == 0 {
            return Err(EngineError::ZeroMaxRounds);
        }
        Ok(HaltConfig {
            max_rounds,
            stability_window,
        })
    }

    pub fn max_rounds(&self) -> u64 {
        self.max_rounds
    }

    pub fn stability_window(&self) -> u64 {
        self.stability_window
    }
}

#[derive(Debug, Clone)]
pub struct World {
    graph: Digraph,
    nodes: Vec<NodeState>,
    channel: ChannelModel,
    round: u64,
    outbox: Vec<Packet>,
    target: MassPair,
}

impl World {
    pub fn new(graph: Digraph, y0: &[i64], channel: ChannelModel) -> Result<Self, EngineError> {
        let n = graph.node_count();
        if y0.len() != n {
            return Err(EngineError::LengthMismatch {
                expected: n,
                got: y0.len(),
            });
        }
        if !graph.is_strongly_connected() {
            return Err(EngineError::NotStronglyConnected);
        }
        let mut nodes = Vec::with_capacity(n);
        let mut outbox = Vec::with_capacity(n);
        for (j, &y) in graph.nodes().zip(y0) {
            let (node, packet) = NodeState::init(j, y, graph.out_neighbors(j))
                .map_err(|source| EngineError::Protocol { round: 0, source })?;
            nodes.push(node);
            outbox.push(packet);
        }
        let target = MassPair::new(y0.iter().sum(), n as u64);
        Ok(World {
            graph,
            nodes,
            channel,
            round: 0,
            outbox,
            target,
        })
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Packets sent this round, to be resolved by the next [`World::step`].
    pub fn outbox(&self) -> &[Packet] {
        &self.outbox
    }

    /// `(sum of initial values, n)`: the state every node must reach.
    pub fn target(&self) -> MassPair {
        self.target
    }

    /// Local mass plus every unacknowledged snapshot. Outbox packets are
    /// copies of queued snapshots and are not counted twice.
    pub fn total_mass(&self) -> MassPair {
        self.nodes.iter().map(|n| n.mass() + n.queued_mass()).sum()
    }

    pub fn converged(&self) -> bool {
        self.nodes.iter().all(|n| n.state() == self.target)
    }

    /// Euclidean distance of the output vector from the exact average.
    pub fn consensus_error(&self) -> f64 {
        let avg = Ratio::new(self.target.y as i128, self.target.z as i128);
        self.nodes
            .iter()
            .map(|n| {
                let q = n.output();
                let d = Ratio::new(*q.numer() as i128, *q.denom() as i128) - avg;
                let d = d.to_f64().unwrap_or(f64::NAN);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Delivery keys and attempt indices of the outbox, in resolution order:
    /// ascending `(src, dst)`, fresh before retransmission on a shared link.
    pub fn pending_deliveries(&self) -> Vec<(DeliveryKey, u32)> {
        let mut outbox = self.outbox.clone();
        outbox.sort_by_key(|p| (p.src, p.dst, p.kind));
        Self::keyed(self.round, &outbox)
            .into_iter()
            .map(|(k, p)| (k, p.r))
            .collect()
    }

    fn keyed(round: u64, sorted: &[Packet]) -> Vec<(DeliveryKey, Packet)> {
        let mut out = Vec::with_capacity(sorted.len());
        let mut ordinal = 0;
        for (i, packet) in sorted.iter().enumerate() {
            if i > 0 && (sorted[i - 1].src, sorted[i - 1].dst) == (packet.src, packet.dst) {
                ordinal += 1;
            } else {
                ordinal = 0;
            }
            out.push((
                DeliveryKey {
                    round,
                    src: packet.src,
                    dst: packet.dst,
                    ordinal,
                },
                *packet,
            ));
        }
        out
    }

    /// Executes one synchronous round and returns the resolved deliveries.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<Vec<DeliveryEvent>, EngineError> {
        self.advance(|channel, graph, key, r| channel.resolve(graph, key, r, rng))
    }

    /// Executes one round with outcomes chosen by `decide` instead of the channel.
    pub fn step_with_outcomes<F>(
        &mut self,
        mut decide: F,
    ) -> Result<Vec<DeliveryEvent>, EngineError>
    where
        F: FnMut(DeliveryKey, u32) -> bool,
    {
        self.advance(|_, _, key, r| Ok(DeliveryOutcome::from_success(decide(key, r))))
    }

    fn advance<F>(&mut self, mut resolve: F) -> Result<Vec<DeliveryEvent>, EngineError>
    where
        F: FnMut(
            &ChannelModel,
            &Digraph,
            DeliveryKey,
            u32,
        ) -> Result<DeliveryOutcome, ChannelError>,
    {
        let round = self.round;
        let mut outbox = std::mem::take(&mut self.outbox);
        outbox.sort_by_key(|p| (p.src, p.dst, p.kind));

        let mut events = Vec::with_capacity(outbox.len());
        for (key, packet) in Self::keyed(round, &outbox) {
            let outcome = resolve(&self.channel, &self.graph, key, packet.r)
                .map_err(|source| EngineError::Channel { round, source })?;
            let max_retx = self.channel.max_retx(packet.src, packet.dst);
            let effect = self.nodes[packet.src.index()]
                .on_feedback(packet.dst, packet.entry, outcome, max_retx)
                .map_err(|source| EngineError::Protocol { round, source })?;
            events.push(DeliveryEvent {
                round,
                src: packet.src,
                dst: packet.dst,
                ordinal: key.ordinal,
                r: packet.r,
                kind: packet.kind,
                success: outcome.success,
                mass: packet.mass,
                entry: packet.entry,
                effect,
            });
        }

        let mut inbox: Vec<Vec<MassPair>> = vec![Vec::new(); self.nodes.len()];
        for e in events.iter().filter(|e| e.success) {
            inbox[e.dst.index()].push(e.mass);
        }
        for (node, delivered) in self.nodes.iter_mut().zip(&inbox) {
            node.absorb(delivered)
                .map_err(|source| EngineError::Protocol { round, source })?;
        }

        let mut next: Vec<Packet> = self
            .nodes
            .iter_mut()
            .filter_map(NodeState::trigger_step)
            .collect();
        for node in &self.nodes {
            next.extend(node.pending_retransmissions());
        }
        self.outbox = next;
        self.round += 1;
        Ok(events)
    }

    fn snapshot(&self) -> RoundRecord {
        RoundRecord {
            round: self.round,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSnapshot {
                    mass: n.mass(),
                    state: n.state(),
                    q: n.output(),
                })
                .collect(),
            consensus_error: self.consensus_error(),
            total: self.total_mass(),
            converged: self.converged(),
        }
    }

    /// Steps until the network has sat at the exact average for
    /// `stability_window` rounds, or until `max_rounds` steps have run.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        halt: HaltConfig,
        rng: &mut R,
    ) -> Result<RunTrace, EngineError> {
        let mut trace = RunTrace::new(self.snapshot());
        let mut first_converged = self.converged().then_some(self.round);
        let mut executed = 0;
        while executed < halt.max_rounds {
            if let Some(c) = first_converged {
                if self.round >= c + halt.stability_window {
                    break;
                }
            }
            let events = self.step(rng)?;
            executed += 1;
            let record = self.snapshot();
            if !record.converged {
                first_converged = None;
            } else if first_converged.is_none() {
                first_converged = Some(self.round);
            }
            trace.push(record, events);
        }
        let stable = first_converged.is_some_and(|c| self.round >= c + halt.stability_window);
        trace.finish(
            first_converged,
            if stable {
                HaltReason::Converged
            } else {
                HaltReason::MaxRounds
            },
        );
        Ok(trace)
    }
}
