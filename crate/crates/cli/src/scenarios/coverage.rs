//! Monte-Carlo connectivity sweep over random placements in a square
//! working area: how often `n` tags form a fully connected network with
//! and without relaying.

use serde::{Deserialize, Serialize};
use t2t_core::coverage::{run_coverage, CoverageExperiment, CoveragePoint};
use t2t_core::topology::CancellationMode;
use t2t_core::{Position, RfEnvironment};

use crate::artifact::{csv, Artifact};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub env: RfEnvironment,
    pub exciter: Position,
    pub area_side_m: f64,
    pub tag_counts: Vec<usize>,
    pub runs_per_point: usize,
    pub cancellation: CancellationMode,
    pub min_spacing_m: f64,
}

impl Default for Config {
    fn default() -> Self {
        // Seed is irrelevant here; the CLI seed replaces it at run time.
        let exp = CoverageExperiment::new(RfEnvironment::default(), 0);
        Self {
            env: exp.env,
            exciter: exp.exciter,
            area_side_m: exp.area_side_m,
            tag_counts: exp.tag_counts,
            runs_per_point: exp.runs_per_point,
            cancellation: exp.cancellation,
            min_spacing_m: exp.min_spacing_m,
        }
    }
}

pub fn compute(cfg: &Config, seed: u64) -> Result<Vec<CoveragePoint>, CliError> {
    let exp = CoverageExperiment {
        env: cfg.env.clone(),
        exciter: cfg.exciter,
        area_side_m: cfg.area_side_m,
        tag_counts: cfg.tag_counts.clone(),
        runs_per_point: cfg.runs_per_point,
        cancellation: cfg.cancellation,
        min_spacing_m: cfg.min_spacing_m,
        base_seed: seed,
    };
    Ok(run_coverage(&exp)?)
}

pub fn artifacts(points: &[CoveragePoint]) -> Vec<Artifact> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.n_tags.to_string(),
                p.runs.to_string(),
                p.single_hop_rate.to_string(),
                p.single_hop_ci_half_width.to_string(),
                p.multi_hop_rate.to_string(),
                p.multi_hop_ci_half_width.to_string(),
            ]
        })
        .collect();
    vec![Artifact::new(
        "coverage.csv",
        csv(
            &[
                "n_tags",
                "runs",
                "single_hop_rate",
                "single_hop_ci",
                "multi_hop_rate",
                "multi_hop_ci",
            ],
            &rows,
        ),
    )]
}

pub fn run(cfg: &Config, seed: u64) -> Result<Vec<Artifact>, CliError> {
    Ok(artifacts(&compute(cfg, seed)?))
}
