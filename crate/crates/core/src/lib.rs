//! Hawkes-process driven text cascades.
//!
//! A multivariate exponential-kernel Hawkes process, fitted to a stream of
//! node-labeled events, decides when each node activates and which earlier
//! node outputs enter the next prompt. A pluggable text generator writes the
//! event text; diagnostics compare the generated trajectory against held-out
//! references and split drift into global and local parts.

pub mod cascade;
pub mod diagnostics;
pub mod event_stream;
pub mod hawkes;
pub mod memory;
pub mod node;
pub mod pipeline;
pub mod text;

pub use node::{Arrival, NodeId};
