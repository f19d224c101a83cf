//! Packet-level FEC for a QUIC-like transport, with a deterministic network
//! simulator and an experiment harness.

pub mod codec;
pub mod fecframe;
pub mod gf256;
pub mod harness;
pub mod netem;
pub mod sched;
pub mod transport;
pub mod xdesign;
