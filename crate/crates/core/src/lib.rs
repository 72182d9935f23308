//! Models for multi-hop backscatter tag-to-tag networks.
//!
//! Tags in these networks do not generate their own carrier. An external
//! exciter illuminates the field and a tag talks by switching its antenna
//! between two reflection coefficients, so every link budget depends on the
//! tag's distance to the exciter as much as on the distance to its peer.
//! This crate models that physical layer and everything stacked on it:
//!
//! * [`rf`] - free-space power, link-alive predicate, phase cancellation
//! * [`topology`] - deployments and directed link graphs
//! * [`analysis`] - line networks: asymmetry, relay gain, optimal spacing
//! * [`coverage`] - Monte-Carlo connectivity experiments
//! * [`codec`] - frame layout, CRC-16, FM0 baseband coding
//! * [`flood`] - duplicate suppression and relay decisions
//! * [`mac`] - discrete-event simulation of the low-power-listening MAC
//! * [`efficiency`] - closed-form message/latency/delivery models
//!
//! All randomness is seeded and all containers iterate deterministically,
//! so any experiment re-run with the same seed reproduces its output
//! byte for byte.

pub mod analysis;
pub mod codec;
pub mod coverage;
pub mod efficiency;
pub mod error;
pub mod flood;
pub mod mac;
pub mod rf;
pub mod topology;

pub use error::{Error, Result};
pub use rf::{Position, RfEnvironment};
pub use topology::{Deployment, LinkGraph, TagId};
