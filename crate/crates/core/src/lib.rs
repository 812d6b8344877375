//! Quantized average consensus over packet-dropping directed links.
//!
//! Nodes hold integer values and exchange integer mass pairs over a strongly
//! connected digraph whose links drop packets. Senders learn every outcome
//! through an error-free one-bit feedback channel, retransmit NACKed packets
//! with a decaying drop probability, and take the mass back once the
//! retransmission limit is spent. Every node ends up holding the exact
//! average as a ratio of integers.
//!
//! - [`digraph`]: topologies, port orders, random strongly connected graphs.
//! - [`channel`]: ideal, ARQ, HARQ and scripted delivery models.
//! - [`protocol`]: the per-node state machine.
//! - [`engine`]: the synchronous round scheduler and convergence checks.
//! - [`trace`]: run records and CSV export.

pub mod channel;
pub mod digraph;
pub mod engine;
pub mod protocol;
pub mod trace;

pub use channel::{
    error_probability, ChannelError, ChannelModel, DeliveryKey, DeliveryOutcome, LinkParams,
    LinkTable, Outcome, Schedule,
};
pub use digraph::{Digraph, GraphError, NodeId};
pub use engine::{DeliveryEvent, EngineError, HaltConfig, World};
pub use protocol::{
    evaluate_trigger, FeedbackEffect, InFlightEntry, MassPair, NodeState, Packet, PacketKind,
    ProtocolError,
};
pub use trace::{HaltReason, RunTrace};
