//! Cost and delivery comparison of the two link-repair strategies.
//!
//! A backscatter link can die two ways: the receiver sits where the
//! carrier and the reflection null each other (cancellation), or it
//! sits beyond single-hop range. Two remedies exist. Quarter-turn
//! repetition retransmits every frame once with a shifted phase, which
//! always clears a cancellation null but cannot add range. Flooding
//! lets neighbours rebroadcast, which adds range and rides around
//! cancelled links, at the price of extra transmissions and latency.
//!
//! [`evaluate`] prices one (strategy, topology knowledge, reachability)
//! cell in frame transmissions, end-to-end latency, and delivery
//! probability. [`cross_validate`] then checks the closed-form flooding
//! delivery probability against the event-driven MAC simulator on a
//! star of relay candidates with per-link cancellation draws.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::Frame;
use crate::coverage::{binomial_two_sided_p, splitmix64};
use crate::error::{Error, Result};
use crate::flood::flood_delivery_probability;
use crate::mac::{simulate, ChannelCancellation, Injection, MacScenario};
use crate::topology::{LinkGraph, TagId};

/// Two-sided tail mass of a normal three standard deviations out; the
/// significance level at which simulation and prediction must agree.
pub const THREE_SIGMA_LEVEL: f64 = 0.002699796063260207;

// ---------------------------------------------------------------------------
// Cell coordinates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Countermeasure {
    /// Send every frame twice, the repeat with a quarter-turn phase.
    PhaseShift,
    /// Let every fresh overhearer rebroadcast once.
    Flooding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKnowledge {
    /// Senders know the graph and can source-route a relay chain.
    Known,
    /// Senders know nothing; relays are whoever happens to hear.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkRange {
    /// Destination hears the sender directly (when not cancelled).
    SingleHop,
    /// Destination is only reachable through relays.
    MultiHop,
}

// ---------------------------------------------------------------------------
// Parameters and costs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyParams {
    /// Airtime of one frame copy, seconds.
    pub frame_airtime_s: f64,
    /// Per-relay receive-to-rebroadcast turnaround, seconds.
    pub processing_s: f64,
    /// Route length for source-routed multi-hop delivery.
    pub hops: Option<u32>,
    /// Relay candidates in earshot when flooding blind.
    pub relay_candidates: Option<u32>,
    /// Chance an individual link copy is cancelled.
    pub cancellation_probability: Option<f64>,
}

impl Default for EfficiencyParams {
    fn default() -> Self {
        Self {
            frame_airtime_s: 0.0448,
            processing_s: 0.001,
            hops: None,
            relay_candidates: None,
            cancellation_probability: None,
        }
    }
}

/// Price of serving one frame from a given cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCost {
    pub frame_transmissions: f64,
    pub latency_s: f64,
    pub delivery_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub countermeasure: Countermeasure,
    pub knowledge: TopologyKnowledge,
    pub range: LinkRange,
    pub cost: CellCost,
}

fn cell_name(cm: Countermeasure, knowledge: TopologyKnowledge, range: LinkRange) -> String {
    format!("({cm:?}, {knowledge:?}, {range:?})")
}

/// Transmissions, latency, and delivery probability for one strategy
/// cell.
///
/// Quarter-turn repetition always costs two copies. It guarantees
/// delivery on an in-range link (the two phases cannot both sit in a
/// null) and never delivers to an out-of-range destination. Flooding
/// with a known route costs one transmission per hop; blind flooding
/// costs the sender plus every relay candidate, and fails only when all
/// of those copies land cancelled at once.
pub fn evaluate(
    cm: Countermeasure,
    knowledge: TopologyKnowledge,
    range: LinkRange,
    params: &EfficiencyParams,
) -> Result<CellCost> {
    if !(params.frame_airtime_s > 0.0) {
        return Err(Error::Domain(format!(
            "frame airtime {} s must be positive",
            params.frame_airtime_s
        )));
    }
    if !(params.processing_s >= 0.0) {
        return Err(Error::Domain(format!(
            "processing time {} s must be non-negative",
            params.processing_s
        )));
    }
    let t_f = params.frame_airtime_s;
    let t_proc = params.processing_s;
    let need = |what: &str| {
        Error::Config(format!(
            "cell {} needs {what}",
            cell_name(cm, knowledge, range)
        ))
    };
    match (cm, knowledge, range) {
        (Countermeasure::PhaseShift, _, LinkRange::SingleHop) => Ok(CellCost {
            frame_transmissions: 2.0,
            latency_s: 2.0 * t_f,
            delivery_probability: 1.0,
        }),
        (Countermeasure::PhaseShift, _, LinkRange::MultiHop) => Ok(CellCost {
            frame_transmissions: 2.0,
            latency_s: 2.0 * t_f,
            delivery_probability: 0.0,
        }),
        (Countermeasure::Flooding, TopologyKnowledge::Known, LinkRange::SingleHop) => {
            Ok(CellCost {
                frame_transmissions: 1.0,
                latency_s: t_f,
                delivery_probability: 1.0,
            })
        }
        (Countermeasure::Flooding, TopologyKnowledge::Known, LinkRange::MultiHop) => {
            let hops = params.hops.ok_or_else(|| need("the hop count"))?;
            if hops == 0 {
                return Err(Error::Domain("a route needs at least one hop".into()));
            }
            Ok(CellCost {
                frame_transmissions: hops as f64,
                // The first hop has no relay turnaround in front of it.
                latency_s: hops as f64 * (t_f + t_proc) - t_proc,
                delivery_probability: 1.0,
            })
        }
        (Countermeasure::Flooding, TopologyKnowledge::Unknown, _) => {
            let m = params
                .relay_candidates
                .ok_or_else(|| need("the relay candidate count"))?;
            let p = params
                .cancellation_probability
                .ok_or_else(|| need("the cancellation probability"))?;
            Ok(CellCost {
                frame_transmissions: (m + 1) as f64,
                latency_s: m as f64 * (t_f + t_proc) + t_f,
                delivery_probability: flood_delivery_probability(m, p)?,
            })
        }
    }
}

/// All eight cells in a fixed order; requires every parameter.
pub fn evaluate_all(params: &EfficiencyParams) -> Result<Vec<EfficiencyRow>> {
    let mut rows = Vec::with_capacity(8);
    for cm in [Countermeasure::PhaseShift, Countermeasure::Flooding] {
        for knowledge in [TopologyKnowledge::Known, TopologyKnowledge::Unknown] {
            for range in [LinkRange::SingleHop, LinkRange::MultiHop] {
                rows.push(EfficiencyRow {
                    countermeasure: cm,
                    knowledge,
                    range,
                    cost: evaluate(cm, knowledge, range, params)?,
                });
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Simulator cross-validation
// ---------------------------------------------------------------------------

/// One (relay count, cancellation probability) comparison between the
/// closed-form delivery probability and the MAC simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationCell {
    pub relay_candidates: u32,
    pub cancellation_probability: f64,
    pub runs: u32,
    pub predicted: f64,
    pub observed: f64,
    /// Exact binomial two-sided p-value of the observed tally under
    /// the predicted rate.
    pub p_value: f64,
    /// p-value at or above the three-sigma significance level.
    pub consistent: bool,
}

const SRC: TagId = TagId(1);
const DST: TagId = TagId(2);

/// A source, a destination, and `m` relay candidates all in earshot of
/// each other. Cancellation draws apply only to the links into the
/// destination, so every relay hears the source and the delivery odds
/// reduce to the closed form: fail only if all m + 1 inbound copies are
/// cancelled.
fn star_scenario(m: u32, p: f64) -> Result<MacScenario> {
    if m > 200 {
        return Err(Error::Config(format!(
            "{m} relay candidates exceed the address space"
        )));
    }
    let relays: Vec<TagId> = (0..m).map(|k| TagId(3 + k as u8)).collect();
    let mut nodes = vec![SRC, DST];
    nodes.extend(&relays);
    let mut links = BTreeMap::new();
    for &a in &nodes {
        for &b in &nodes {
            if a != b {
                links.insert((a, b), 1e-6);
            }
        }
    }
    let graph = LinkGraph::from_links(nodes, links)?;

    let mut p_by_link = BTreeMap::new();
    p_by_link.insert((SRC, DST), p);
    for &r in &relays {
        p_by_link.insert((r, DST), p);
    }

    let mut scenario = MacScenario::new(graph, 900_000);
    scenario.cancellation = ChannelCancellation::PerLinkBernoulli { p_by_link };
    // Plain periodic listening with staggered anchors keeps the relays'
    // observe windows spread without random cycle slack.
    scenario.cfg.cycle_slack_max_us = 0;
    scenario.wake_anchor_us.insert(DST, 3_000);
    for (k, &r) in relays.iter().enumerate() {
        scenario
            .wake_anchor_us
            .insert(r, 8_000 * (k as u64 + 1));
    }
    scenario.injections.push(Injection {
        time_us: 60_000,
        frame: Frame {
            sender: SRC.0,
            receiver: DST.0,
            message_type: 0x01,
            message_id: 1,
            payload: [0; 4],
        },
    });
    Ok(scenario)
}

/// Sweep relay counts and cancellation probabilities, running `runs`
/// independent seeded simulations per cell, and test each observed
/// delivery tally against the closed form at the three-sigma level.
pub fn cross_validate(
    relay_counts: &[u32],
    cancel_probs: &[f64],
    runs: u32,
    seed: u64,
) -> Result<Vec<CrossValidationCell>> {
    if runs == 0 {
        return Err(Error::Config("cross-validation needs at least one run".into()));
    }
    let mut cells = Vec::new();
    for &m in relay_counts {
        for &p in cancel_probs {
            let scenario = star_scenario(m, p)?;
            let cell_seed = splitmix64(
                seed ^ splitmix64(((m as u64) << 16) | (p * 1000.0).round() as u64),
            );
            let mut delivered = 0u32;
            for run in 0..runs {
                let run_seed = splitmix64(cell_seed ^ splitmix64(run as u64));
                let report = simulate(&scenario, run_seed)?;
                if report
                    .deliveries
                    .iter()
                    .any(|d| d.sender == SRC.0 && d.destination == DST.0)
                {
                    delivered += 1;
                }
            }
            let predicted = flood_delivery_probability(m, p)?;
            let p_value = binomial_two_sided_p(runs as u64, delivered as u64, predicted)?;
            cells.push(CrossValidationCell {
                relay_candidates: m,
                cancellation_probability: p,
                runs,
                predicted,
                observed: delivered as f64 / runs as f64,
                p_value,
                consistent: p_value >= THREE_SIGMA_LEVEL,
            });
        }
    }
    Ok(cells)
}

// ===========================================================================
// Tests
// ===========================================================================
