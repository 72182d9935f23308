//! Duplicate suppression and relay decisions for flooded frames.
//!
//! Flooding keeps no routes: every fresh frame not addressed to the node
//! itself is rebroadcast, and a small FIFO of recently seen
//! (originator, message id) keys stops the broadcast storm. Forwarded
//! frames are relayed unchanged, so the originator's id is the dedup key
//! at every hop.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::codec::Frame;
use crate::error::{Error, Result};

pub const DEFAULT_DEDUP_CAPACITY: usize = 10;
pub const DEFAULT_REBROADCAST_LIMIT: u32 = 1;

// ---------------------------------------------------------------------------
// Dedup ring
// ---------------------------------------------------------------------------

/// Fixed-capacity FIFO of recently seen frame keys; remembering a key
/// beyond capacity evicts the oldest one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupRing {
    capacity: usize,
    keys: VecDeque<(u8, u8)>,
}

impl DedupRing {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("dedup capacity must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            keys: VecDeque::with_capacity(capacity),
        })
    }

    pub fn contains(&self, key: (u8, u8)) -> bool {
        self.keys.contains(&key)
    }

    pub fn remember(&mut self, key: (u8, u8)) {
        if self.keys.len() == self.capacity {
            self.keys.pop_front();
        }
        self.keys.push_back(key);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Relay policy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayPolicy {
    /// How many recently seen frame keys each node remembers.
    pub dedup_capacity: usize,
    /// How many times a fresh frame is queued for rebroadcast.
    pub rebroadcast_limit: u32,
}

impl Default for RelayPolicy {
    fn default() -> Self {
        Self {
            dedup_capacity: DEFAULT_DEDUP_CAPACITY,
            rebroadcast_limit: DEFAULT_REBROADCAST_LIMIT,
        }
    }
}

/// What a node does with a frame that passed CRC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameAction {
    /// Addressed to this node: hand to the application.
    Deliver,
    /// Fresh and addressed elsewhere: queue `copies` rebroadcasts.
    Forward { copies: u32 },
    /// Seen recently: ignore.
    DropDuplicate,
}

/// Per-node flooding state.
#[derive(Debug, Clone)]
pub struct FloodState {
    ring: DedupRing,
    policy: RelayPolicy,
}

impl FloodState {
    pub fn new(policy: RelayPolicy) -> Result<Self> {
        Ok(Self {
            ring: DedupRing::new(policy.dedup_capacity)?,
            policy,
        })
    }

    /// Decide delivery/forwarding for a validated frame arriving at
    /// `node_id`. Fresh frames are remembered whether delivered or
    /// forwarded, so later copies of either kind are dropped.
    pub fn handle_frame(&mut self, node_id: u8, frame: &Frame) -> FrameAction {
        let key = (frame.sender, frame.message_id);
        if self.ring.contains(key) {
            return FrameAction::DropDuplicate;
        }
        self.ring.remember(key);
        if frame.receiver == node_id {
            FrameAction::Deliver
        } else {
            FrameAction::Forward {
                copies: self.policy.rebroadcast_limit,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parallel-relay delivery model
// ---------------------------------------------------------------------------

/// Probability that a flooded frame reaches its destination when the
/// direct path and `relay_candidates` independent relay paths each fail
/// with probability `p_cancel`: `1 - p_cancel^(relays + 1)`.
pub fn flood_delivery_probability(relay_candidates: u32, p_cancel: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_cancel) {
        return Err(Error::Domain(format!(
            "cancellation probability must be in [0, 1], got {p_cancel}"
        )));
    }
    Ok(1.0 - p_cancel.powi(relay_candidates as i32 + 1))
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::MESSAGE_TYPE_BROADCAST;
    use proptest::prelude::*;

    fn frame(sender: u8, receiver: u8, message_id: u8) -> Frame {
        Frame {
            sender,
            receiver,
            message_type: MESSAGE_TYPE_BROADCAST,
            message_id,
            payload: [0; 4],
        }
    }

    #[test]
    fn ring_requires_capacity() {
        assert!(DedupRing::new(0).is_err());
        assert!(DedupRing::new(1).is_ok());
    }

    #[test]
    fn deliver_forward_drop() {
        let mut state = FloodState::new(RelayPolicy::default()).unwrap();
        let to_me = frame(7, 1, 0);
        assert_eq!(state.handle_frame(1, &to_me), FrameAction::Deliver);
        // Same key again: duplicate even though it was delivered.
        assert_eq!(state.handle_frame(1, &to_me), FrameAction::DropDuplicate);
        let elsewhere = frame(7, 9, 1);
        assert_eq!(
            state.handle_frame(1, &elsewhere),
            FrameAction::Forward { copies: 1 }
        );
        assert_eq!(state.handle_frame(1, &elsewhere), FrameAction::DropDuplicate);
    }

    #[test]
    fn eviction_reopens_forwarding() {
        let mut state = FloodState::new(RelayPolicy::default()).unwrap();
        let first = frame(2, 9, 0);
        assert!(matches!(
            state.handle_frame(1, &first),
            FrameAction::Forward { .. }
        ));
        // Ten fresh keys push the first one out of the ring.
        for id in 1..=10 {
            state.handle_frame(1, &frame(2, 9, id));
        }
        assert!(
            matches!(state.handle_frame(1, &first), FrameAction::Forward { .. }),
            "evicted key must be treated as fresh again"
        );
    }

    #[test]
    fn delivery_probability_reference_values() {
        assert!((flood_delivery_probability(3, 0.3).unwrap() - 0.9919).abs() < 1e-12);
        assert!((flood_delivery_probability(0, 0.25).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(flood_delivery_probability(5, 0.0).unwrap(), 1.0);
        assert_eq!(flood_delivery_probability(5, 1.0).unwrap(), 0.0);
        assert!(flood_delivery_probability(1, 1.2).is_err());
    }

    proptest! {
        /// The ring behaves exactly like the last-c window of the key
        /// history.
        #[test]
        fn ring_matches_sliding_window_oracle(
            capacity in 1usize..12,
            ops in proptest::collection::vec((0u8..6, 0u8..6), 1..200),
        ) {
            let mut ring = DedupRing::new(capacity).unwrap();
            let mut history: Vec<(u8, u8)> = Vec::new();
            for key in ops {
                let window_start = history.len().saturating_sub(capacity);
                let expect = history[window_start..].contains(&key);
                prop_assert_eq!(ring.contains(key), expect);
                ring.remember(key);
                history.push(key);
            }
        }

        /// More relays help, more cancellation hurts. Strictness only
        /// applies while 1 - p^(m+1) is still representably below 1;
        /// past that the curve saturates to exactly 1.0 in f64.
        #[test]
        fn delivery_probability_monotonicity(
            m in 0u32..20,
            p in 0.01f64..0.99,
        ) {
            let base = flood_delivery_probability(m, p).unwrap();
            let more_relays = flood_delivery_probability(m + 1, p).unwrap();
            let more_cancel = flood_delivery_probability(m, p + 0.005).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!(more_relays >= base);
            prop_assert!(more_cancel <= base);
            if more_relays < 1.0 {
                prop_assert!(more_relays > base);
                prop_assert!(more_cancel < base);
            }
        }
    }
}
