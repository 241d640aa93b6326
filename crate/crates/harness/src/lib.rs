//! Command-line workflows around the follow-the-leader stack: data
//! collection, training, evaluation, closed-loop driving, benchmarks and
//! the live WebSocket endpoint.

pub mod bench;
pub mod collect;
pub mod data;
pub mod drive;
pub mod metrics;
pub mod protocol;
pub mod scenario;
pub mod serve;
pub mod train;
