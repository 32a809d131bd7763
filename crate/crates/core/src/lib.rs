//! Transaction placement for UTXO-based sharded ledgers.
//!
//! * [`txgraph`]: stream model, ingestion and dependency statistics.
//! * [`placement`]: hashing, greedy and fitness-propagation placers.
//! * [`workload`]: seeded synthetic stream generator.
//! * [`simulator`]: discrete-event model of lock/commit execution.
//! * [`metrics`]: partition quality and report export.

pub mod metrics;
pub mod placement;
pub mod rng;
pub mod simulator;
pub mod txgraph;
pub mod workload;

// Lets the stream builders shared with the acceptance suite name this crate
// the same way from unit tests.
#[cfg(test)]
extern crate self as shardplace_core;
#[cfg(test)]
#[path = "../tests/common/mod.rs"]
mod test_streams;

pub use placement::{Algorithm, PlacementDecision, Placer, PlacerState, ShardId};
pub use txgraph::{Transaction, TxId, TxStream, UtxoRef};
pub use workload::{Preset, WorkloadSpec};
