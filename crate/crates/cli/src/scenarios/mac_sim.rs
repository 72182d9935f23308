//! Run the MAC simulator on a synthetic mesh or chain and dump the full
//! report plus a per-node summary table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use t2t_core::codec::{BitTiming, Frame};
use t2t_core::mac::{simulate, Injection, MacConfig, MacScenario, SimReport};
use t2t_core::{LinkGraph, TagId};

use crate::artifact::{csv, Artifact};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// Every pair in range of each other.
    Mesh,
    /// Only adjacent tags in range; frames must be relayed.
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub time_us: u64,
    pub sender: u8,
    pub receiver: u8,
    pub message_id: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub topology: TopologyKind,
    pub n_tags: u8,
    /// Received power reported for every alive link, watts.
    pub link_power_w: f64,
    pub duration_us: u64,
    pub mac: MacConfig,
    pub injections: Vec<InjectionSpec>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            topology: TopologyKind::Chain,
            n_tags: 4,
            link_power_w: 1e-6,
            duration_us: 2_000_000,
            mac: MacConfig::default(),
            injections: vec![InjectionSpec {
                time_us: 50_000,
                sender: 1,
                receiver: 4,
                message_id: 1,
            }],
        }
    }
}

fn build_topology(kind: TopologyKind, n: u8, power: f64) -> Result<LinkGraph, CliError> {
    if n < 2 {
        return Err(CliError::Config("need at least two tags".into()));
    }
    if n as usize > 200 {
        return Err(CliError::Config(format!(
            "{n} tags exceed the address space"
        )));
    }
    let nodes: Vec<TagId> = (1..=n).map(TagId).collect();
    let mut links = BTreeMap::new();
    match kind {
        TopologyKind::Mesh => {
            for &a in &nodes {
                for &b in &nodes {
                    if a != b {
                        links.insert((a, b), power);
                    }
                }
            }
        }
        TopologyKind::Chain => {
            for pair in nodes.windows(2) {
                links.insert((pair[0], pair[1]), power);
                links.insert((pair[1], pair[0]), power);
            }
        }
    }
    Ok(LinkGraph::from_links(nodes, links)?)
}

pub fn compute(cfg: &Config, seed: u64) -> Result<SimReport, CliError> {
    // The serde path does not go through the timing constructor, so an
    // edited config could smuggle in an unsupported bit length.
    BitTiming::from_cycles(cfg.mac.timing.bit_length_cycles())?;
    let graph = build_topology(cfg.topology, cfg.n_tags, cfg.link_power_w)?;
    let mut scenario = MacScenario::new(graph, cfg.duration_us);
    scenario.cfg = cfg.mac.clone();
    for inj in &cfg.injections {
        scenario.injections.push(Injection {
            time_us: inj.time_us,
            frame: Frame {
                sender: inj.sender,
                receiver: inj.receiver,
                message_type: 0x01,
                message_id: inj.message_id,
                payload: [0; 4],
            },
        });
    }
    Ok(simulate(&scenario, seed)?)
}

pub fn artifacts(report: &SimReport) -> Vec<Artifact> {
    let mut report_json = serde_json::to_vec_pretty(report).expect("report serializes");
    report_json.push(b'\n');

    let rows: Vec<Vec<String>> = report
        .nodes
        .iter()
        .map(|(id, node)| {
            let c = &node.counters;
            let t = &node.time_us;
            let e = &node.energy_mj;
            vec![
                id.to_string(),
                c.wakes.to_string(),
                c.busy_wakes.to_string(),
                c.false_wakes.to_string(),
                c.frames_received.to_string(),
                c.collisions.to_string(),
                c.frames_delivered.to_string(),
                c.duplicates_dropped.to_string(),
                c.forwards_committed.to_string(),
                c.tx_frames_started.to_string(),
                c.tx_drops.to_string(),
                c.rx_drops.to_string(),
                t.sleep_us.to_string(),
                t.observe_us.to_string(),
                t.receive_us.to_string(),
                t.validate_us.to_string(),
                t.transmit_us.to_string(),
                t.tx_onair_us.to_string(),
                e.radio_rx_mj.to_string(),
                e.radio_tx_mj.to_string(),
                e.mcu_mj.to_string(),
                e.total_mj.to_string(),
            ]
        })
        .collect();
    vec![
        Artifact::new("mac_report.json", report_json),
        Artifact::new(
            "mac_summary.csv",
            csv(
                &[
                    "node",
                    "wakes",
                    "busy_wakes",
                    "false_wakes",
                    "frames_received",
                    "collisions",
                    "frames_delivered",
                    "duplicates_dropped",
                    "forwards_committed",
                    "tx_frames_started",
                    "tx_drops",
                    "rx_drops",
                    "sleep_us",
                    "observe_us",
                    "receive_us",
                    "validate_us",
                    "transmit_us",
                    "tx_onair_us",
                    "radio_rx_mj",
                    "radio_tx_mj",
                    "mcu_mj",
                    "total_mj",
                ],
                &rows,
            ),
        ),
    ]
}

pub fn run(cfg: &Config, seed: u64) -> Result<Vec<Artifact>, CliError> {
    Ok(artifacts(&compute(cfg, seed)?))
}
