//! Replay schedule for the four-node worked example.
//!
//! The published walkthrough only pins a handful of states, so the outcome
//! of every delivery attempt is recovered by depth-first search over the
//! per-round outcome combinations, most-successes first. Anchors that no
//! outcome assignment can satisfy are reported rather than silently dropped.

use std::collections::BTreeSet;
use std::fmt;

use harq_qac::{
    ChannelModel, DeliveryEvent, DeliveryKey, Digraph, HaltConfig, MassPair, NodeId, Schedule,
    World,
};

use crate::config::{seeded_rng, EXAMPLE1_VALUES};

/// Rounds covered by the derived schedule (rounds `0..REPLAY_HORIZON`).
pub const REPLAY_HORIZON: u64 = 9;
/// Retransmission limit used throughout the example.
pub const EXAMPLE1_TAU_BAR: u32 = 2;
/// The latest round by which every node must hold the exact average.
pub const CONSENSUS_DEADLINE: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Anchor {
    /// Round 0: exactly one packet arrives, it carries (6, 1) into node 3, and
    /// node 3 holds state (6, 1) at k = 1.
    SingleFirstDelivery,
    /// At k = 1 exactly nodes 1, 3 and 4 hold unacknowledged snapshots.
    BufferedSenders,
    /// Node 1 holds state (8, 2) at k = 2.
    NodeOneAtTwo,
    /// Every node holds (16, 4) by k = 8.
    ConsensusByEight,
}

impl Anchor {
    pub const ALL: [Anchor; 4] = [
        Anchor::SingleFirstDelivery,
        Anchor::BufferedSenders,
        Anchor::NodeOneAtTwo,
        Anchor::ConsensusByEight,
    ];

    /// Round after which the anchor can be checked.
    fn round(self) -> u64 {
        match self {
            Anchor::SingleFirstDelivery | Anchor::BufferedSenders => 1,
            Anchor::NodeOneAtTwo => 2,
            Anchor::ConsensusByEight => CONSENSUS_DEADLINE,
        }
    }

    /// Checks the anchor right after the step that produced round `world.round()`.
    fn holds(self, world: &World, events: &[DeliveryEvent]) -> bool {
        match self {
            Anchor::SingleFirstDelivery => {
                let mut delivered = events.iter().filter(|e| e.success);
                let only = delivered.next();
                delivered.next().is_none()
                    && only.is_some_and(|e| e.dst == NodeId(3) && e.mass == MassPair::new(6, 1))
                    && world.node(NodeId(3)).state() == MassPair::new(6, 1)
            }
            Anchor::BufferedSenders => {
                let buffered: BTreeSet<usize> = world
                    .nodes()
                    .iter()
                    .filter(|n| n.has_queued())
                    .map(|n| n.id().0)
                    .collect();
                buffered == BTreeSet::from([1, 3, 4])
            }
            Anchor::NodeOneAtTwo => world.node(NodeId(1)).state() == MassPair::new(8, 2),
            Anchor::ConsensusByEight => world.converged(),
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Anchor::SingleFirstDelivery => "k=0: only v2->v3 (6,1) arrives; v3 state (6,1) at k=1",
            Anchor::BufferedSenders => "k=1: exactly v1, v3, v4 hold unacknowledged packets",
            Anchor::NodeOneAtTwo => "k=2: v1 state (8,2)",
            Anchor::ConsensusByEight => "k<=8: every node at (16,4)",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub schedule: Schedule,
    /// The largest satisfiable anchor subset, in [`Anchor::ALL`] order.
    pub satisfied: Vec<Anchor>,
    pub unsatisfied: Vec<Anchor>,
    /// First round at which the replayed schedule reaches consensus.
    pub first_converged: Option<u64>,
}

impl Derivation {
    pub fn is_complete(&self) -> bool {
        self.unsatisfied.is_empty()
    }
}

pub fn example1_world(model: ChannelModel) -> World {
    World::new(Digraph::example1(), &EXAMPLE1_VALUES, model).expect("example world is valid")
}

/// Searches outcome assignments for the largest satisfiable anchor subset
/// and returns a schedule covering rounds `0..REPLAY_HORIZON`.
pub fn derive_example1_schedule() -> Derivation {
    // Outcomes are injected directly; the empty schedule only carries the limit.
    let start = example1_world(ChannelModel::Scripted {
        schedule: Schedule::new(),
        max_retx: EXAMPLE1_TAU_BAR,
    });
    for size in (0..=Anchor::ALL.len()).rev() {
        for subset in subsets(&Anchor::ALL, size) {
            if let Some((world, chosen)) = search(start.clone(), &subset) {
                let mut schedule = Schedule::new();
                for (key, ok) in chosen {
                    schedule.insert(key, ok);
                }
                extend_with_successes(world, &mut schedule);
                let unsatisfied = Anchor::ALL
                    .iter()
                    .copied()
                    .filter(|a| !subset.contains(a))
                    .collect();
                let first_converged = replay_first_converged(&schedule);
                return Derivation {
                    schedule,
                    satisfied: subset,
                    unsatisfied,
                    first_converged,
                };
            }
        }
    }
    unreachable!("the empty anchor set is always satisfiable")
}

fn subsets(items: &[Anchor], size: usize) -> Vec<Vec<Anchor>> {
    let n = items.len();
    let mut out: Vec<Vec<Anchor>> = (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| {
            (0..n)
                .filter(|i| m & (1 << i) != 0)
                .map(|i| items[i])
                .collect()
        })
        .collect();
    out.sort();
    out
}

/// Returns the world at the point where every anchor in `anchors` has been
/// met, plus the outcomes chosen on the way there.
fn search(world: World, anchors: &[Anchor]) -> Option<(World, Vec<(DeliveryKey, bool)>)> {
    let k = world.round();
    let wants_consensus = anchors.contains(&Anchor::ConsensusByEight);
    let last = anchors
        .iter()
        .filter(|a| **a != Anchor::ConsensusByEight)
        .map(|a| a.round())
        .max()
        .unwrap_or(0);
    if k >= last && (!wants_consensus || world.converged()) {
        return Some((world, Vec::new()));
    }
    if k >= CONSENSUS_DEADLINE {
        return None;
    }

    let deliveries = world.pending_deliveries();
    let mut masks: Vec<u64> = (0..1u64 << deliveries.len()).collect();
    masks.sort_by_key(|mask| (std::cmp::Reverse(mask.count_ones()), *mask));
    for mask in masks {
        let chosen: Vec<(DeliveryKey, bool)> = deliveries
            .iter()
            .enumerate()
            .map(|(i, (key, _))| (*key, mask & (1 << i) != 0))
            .collect();
        let mut next = world.clone();
        let events = next
            .step_with_outcomes(|key, _| chosen.iter().any(|&(k, ok)| k == key && ok))
            .ok()?;
        let round = next.round();
        let ok = anchors
            .iter()
            .filter(|a| a.round() == round && **a != Anchor::ConsensusByEight)
            .all(|a| a.holds(&next, &events));
        if !ok {
            continue;
        }
        if let Some((done, rest)) = search(next, anchors) {
            return Some((done, chosen.into_iter().chain(rest).collect()));
        }
    }
    None
}

fn extend_with_successes(mut world: World, schedule: &mut Schedule) {
    while world.round() < REPLAY_HORIZON {
        for (key, _) in world.pending_deliveries() {
            schedule.insert(key, true);
        }
        world
            .step_with_outcomes(|_, _| true)
            .expect("all-success rounds cannot fail");
    }
}

fn replay_first_converged(schedule: &Schedule) -> Option<u64> {
    let model = ChannelModel::Scripted {
        schedule: schedule.clone(),
        max_retx: EXAMPLE1_TAU_BAR,
    };
    let mut world = example1_world(model);
    let halt = HaltConfig::new(REPLAY_HORIZON, 0).expect("positive horizon");
    world
        .run(halt, &mut seeded_rng(0, 0))
        .ok()?
        .first_converged()
}
