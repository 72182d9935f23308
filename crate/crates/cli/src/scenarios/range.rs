//! Analytic maximum-range ladder: grow a relay line from the first tag
//! outward, each new tag at the widest spacing that still lets it talk
//! backward, until spacings hit the far-field floor.

use serde::{Deserialize, Serialize};
use t2t_core::analysis::RangeStep;
use t2t_core::coverage::run_max_range_curve;
use t2t_core::RfEnvironment;

use crate::artifact::{csv, Artifact};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub env: RfEnvironment,
    /// Exciter distance of the first tag, metres.
    pub first_tag_distance_m: f64,
    /// Largest tag antenna dimension, metres (sets the far-field floor).
    pub antenna_dim_m: f64,
    pub max_tags: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            env: RfEnvironment::default(),
            first_tag_distance_m: 3.0,
            antenna_dim_m: 0.17,
            max_tags: 12,
        }
    }
}

pub fn compute(cfg: &Config) -> Result<Vec<RangeStep>, CliError> {
    Ok(run_max_range_curve(
        &cfg.env,
        cfg.first_tag_distance_m,
        cfg.antenna_dim_m,
        cfg.max_tags,
    )?)
}

pub fn artifacts(steps: &[RangeStep]) -> Vec<Artifact> {
    let rows: Vec<Vec<String>> = steps
        .iter()
        .map(|s| {
            vec![
                s.n_tags.to_string(),
                s.range_m.to_string(),
                s.spacing_m.to_string(),
            ]
        })
        .collect();
    vec![Artifact::new(
        "range.csv",
        csv(&["n_tags", "range_m", "spacing_m"], &rows),
    )]
}

pub fn run(cfg: &Config) -> Result<Vec<Artifact>, CliError> {
    Ok(artifacts(&compute(cfg)?))
}
