//! Deployed relay lines versus a single backward hop: place tags at
//! (slightly shrunken) optimal spacings, verify on the resulting link
//! graph that the far tag really reaches the first tag only through the
//! expected relay chain, and report the range extension over the
//! two-tag baseline.

use serde::{Deserialize, Serialize};
use t2t_core::analysis::max_range_ladder;
use t2t_core::topology::{build_graph, CancellationMode};
use t2t_core::{Deployment, RfEnvironment, TagId};

use crate::artifact::{csv, Artifact};
use crate::scenarios::flag;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub env: RfEnvironment,
    pub first_tag_distance_m: f64,
    pub antenna_dim_m: f64,
    /// Largest line length to deploy.
    pub max_tags: usize,
    /// Deployed spacings are the optimal ones scaled by this factor, so
    /// every backward link sits strictly above the sensitivity floor
    /// instead of exactly on it.
    pub spacing_shrink: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            env: RfEnvironment::default(),
            first_tag_distance_m: 3.0,
            antenna_dim_m: 0.17,
            max_tags: 5,
            spacing_shrink: 0.999,
        }
    }
}

/// One deployed line, checked against its own link graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRow {
    pub n_tags: usize,
    /// Hops the far tag needs to reach the first tag.
    pub hops_to_first: usize,
    /// Whether the far tag hears the first tag's echo range directly.
    pub direct_link_alive: bool,
    /// Exciter distance of the deployed far tag, metres.
    pub range_m: f64,
    /// Deployed two-tag baseline range, metres.
    pub single_hop_range_m: f64,
    pub range_ratio: f64,
}

pub fn compute(cfg: &Config) -> Result<Vec<LineRow>, CliError> {
    if !(cfg.spacing_shrink > 0.0 && cfg.spacing_shrink < 1.0) {
        return Err(CliError::Config(format!(
            "spacing_shrink must be in (0, 1), got {}",
            cfg.spacing_shrink
        )));
    }
    if cfg.max_tags < 2 {
        return Err(CliError::Config(
            "a relay line needs at least two tags".into(),
        ));
    }
    let ladder = max_range_ladder(
        &cfg.env,
        cfg.first_tag_distance_m,
        cfg.antenna_dim_m,
        cfg.max_tags,
    )?;
    if ladder.len() < 2 {
        return Err(CliError::Config(
            "far-field floor leaves no room for a second tag".into(),
        ));
    }

    let deployed: Vec<f64> = ladder[1..]
        .iter()
        .map(|s| s.spacing_m * cfg.spacing_shrink)
        .collect();
    let two_tag_range = cfg.first_tag_distance_m + deployed[0];

    let mut rows = Vec::new();
    for n in 2..=ladder.len() {
        let spacings = &deployed[..n - 1];
        let dep = Deployment::line(cfg.first_tag_distance_m, spacings)?;
        let graph = build_graph(&cfg.env, &dep, CancellationMode::Off, 0)?;
        let far = TagId(n as u8);
        let first = TagId(1);
        let hops = graph
            .hop_count(far, first)?
            .ok_or_else(|| CliError::Runtime(format!("{n}-tag line is disconnected")))?;
        let range_m = cfg.first_tag_distance_m + spacings.iter().sum::<f64>();
        rows.push(LineRow {
            n_tags: n,
            hops_to_first: hops,
            direct_link_alive: graph.has_link(far, first),
            range_m,
            single_hop_range_m: two_tag_range,
            range_ratio: range_m / two_tag_range,
        });
    }
    Ok(rows)
}

pub fn artifacts(rows: &[LineRow]) -> Vec<Artifact> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n_tags.to_string(),
                r.hops_to_first.to_string(),
                flag(r.direct_link_alive),
                r.range_m.to_string(),
                r.single_hop_range_m.to_string(),
                r.range_ratio.to_string(),
            ]
        })
        .collect();
    vec![Artifact::new(
        "line_range.csv",
        csv(
            &[
                "n_tags",
                "hops_to_first",
                "direct_link_alive",
                "range_m",
                "single_hop_range_m",
                "range_ratio",
            ],
            &table,
        ),
    )]
}

pub fn run(cfg: &Config) -> Result<Vec<Artifact>, CliError> {
    Ok(artifacts(&compute(cfg)?))
}
