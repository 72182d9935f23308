//! Two-exciter bridge: a relay line spanning the gap between two
//! illuminated zones, where no single exciter powers the whole path and
//! the end tags cannot hear each other directly. Link budgets take the
//! best exciter per link; the MAC simulator then carries a frame across.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use t2t_core::codec::Frame;
use t2t_core::mac::{simulate, Injection, MacConfig, MacScenario, SimReport};
use t2t_core::{LinkGraph, Position, RfEnvironment, TagId};

use crate::artifact::{csv, Artifact};
use crate::scenarios::flag;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub env: RfEnvironment,
    pub exciters: Vec<Position>,
    /// Tags sit on the line between the exciters, at these x offsets.
    pub tag_xs: Vec<f64>,
    pub duration_us: u64,
    pub mac: MacConfig,
    pub injection_time_us: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            env: RfEnvironment::default(),
            exciters: vec![Position::new(0.0, 0.0), Position::new(14.0, 0.0)],
            tag_xs: vec![3.0, 4.5, 5.5, 6.5, 7.5, 8.5, 9.5],
            duration_us: 2_000_000,
            mac: MacConfig::default(),
            injection_time_us: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub tx: u8,
    pub rx: u8,
    pub distance_m: f64,
    /// Strongest received power over the exciters, watts.
    pub best_power_w: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Output {
    pub links: Vec<LinkRow>,
    pub direct_link_alive: bool,
    /// Shortest source-to-destination path length in the link graph.
    pub graph_hops: Option<usize>,
    pub report: SimReport,
    pub delivery: Option<DeliverySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliverySummary {
    pub time_us: u64,
    pub hops: u32,
    pub path: Vec<u8>,
}

pub fn compute(cfg: &Config, seed: u64) -> Result<Output, CliError> {
    cfg.env.validate()?;
    if cfg.exciters.is_empty() {
        return Err(CliError::Config("need at least one exciter".into()));
    }
    if cfg.tag_xs.len() < 2 {
        return Err(CliError::Config("a bridge needs at least two tags".into()));
    }
    if cfg.tag_xs.len() > 200 {
        return Err(CliError::Config("too many tags for the address space".into()));
    }
    let tags: Vec<(TagId, Position)> = cfg
        .tag_xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (TagId(i as u8 + 1), Position::new(x, 0.0)))
        .collect();
    for (id, pos) in &tags {
        if cfg.exciters.iter().any(|e| e.distance(pos) < 1e-9) {
            return Err(CliError::Config(format!("{id} sits on an exciter")));
        }
    }

    let mut rows = Vec::new();
    let mut links = BTreeMap::new();
    for &(tx, tx_pos) in &tags {
        for &(rx, rx_pos) in &tags {
            if tx == rx {
                continue;
            }
            let mut best = 0.0f64;
            for exciter in &cfg.exciters {
                best = best.max(cfg.env.received_power(exciter, &tx_pos, &rx_pos)?);
            }
            let alive = best >= cfg.env.sensitivity_w;
            if alive {
                links.insert((tx, rx), best);
            }
            rows.push(LinkRow {
                tx: tx.0,
                rx: rx.0,
                distance_m: tx_pos.distance(&rx_pos),
                best_power_w: best,
                alive,
            });
        }
    }
    let node_ids: Vec<TagId> = tags.iter().map(|(id, _)| *id).collect();
    let src = node_ids[0];
    let dst = *node_ids.last().expect("at least two tags");
    let graph = LinkGraph::from_links(node_ids, links)?;
    let direct_link_alive = graph.has_link(src, dst);
    let graph_hops = graph.hop_count(src, dst)?;

    let mut scenario = MacScenario::new(graph, cfg.duration_us);
    scenario.cfg = cfg.mac.clone();
    scenario.injections.push(Injection {
        time_us: cfg.injection_time_us,
        frame: Frame {
            sender: src.0,
            receiver: dst.0,
            message_type: 0x01,
            message_id: 1,
            payload: [0; 4],
        },
    });
    let report = simulate(&scenario, seed)?;
    let delivery = report
        .deliveries
        .iter()
        .find(|d| d.sender == src.0 && d.destination == dst.0)
        .map(|d| DeliverySummary {
            time_us: d.time_us,
            hops: d.hops,
            path: d.path.clone(),
        });
    Ok(Output {
        links: rows,
        direct_link_alive,
        graph_hops,
        report,
        delivery,
    })
}

pub fn artifacts(out: &Output) -> Vec<Artifact> {
    let link_rows: Vec<Vec<String>> = out
        .links
        .iter()
        .map(|l| {
            vec![
                l.tx.to_string(),
                l.rx.to_string(),
                l.distance_m.to_string(),
                l.best_power_w.to_string(),
                flag(l.alive),
            ]
        })
        .collect();
    let path = out
        .delivery
        .as_ref()
        .map(|d| {
            d.path
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join("-")
        })
        .unwrap_or_default();
    let summary_row = vec![vec![
        flag(out.direct_link_alive),
        out.graph_hops.map(|h| h.to_string()).unwrap_or_default(),
        flag(out.delivery.is_some()),
        out.delivery
            .as_ref()
            .map(|d| d.time_us.to_string())
            .unwrap_or_default(),
        out.delivery
            .as_ref()
            .map(|d| d.hops.to_string())
            .unwrap_or_default(),
        path,
    ]];
    vec![
        Artifact::new(
            "bridge_links.csv",
            csv(&["tx", "rx", "distance_m", "best_power_w", "alive"], &link_rows),
        ),
        Artifact::new(
            "bridge_summary.csv",
            csv(
                &[
                    "direct_link_alive",
                    "graph_hops",
                    "delivered",
                    "delivery_time_us",
                    "delivery_hops",
                    "path",
                ],
                &summary_row,
            ),
        ),
    ]
}

pub fn run(cfg: &Config, seed: u64) -> Result<Vec<Artifact>, CliError> {
    Ok(artifacts(&compute(cfg, seed)?))
}
