//! Closed-form cost of the countermeasure strategies, optionally
//! cross-validated against the MAC simulator on star topologies.

use serde::{Deserialize, Serialize};
use t2t_core::efficiency::{
    cross_validate, evaluate_all, CrossValidationCell, EfficiencyParams, EfficiencyRow,
};

use crate::artifact::{csv, Artifact};
use crate::scenarios::flag;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub params: EfficiencyParams,
    /// Also run the simulator sweep (hundreds of runs; slow).
    pub cross_validate: bool,
    pub relay_counts: Vec<u32>,
    pub cancel_probs: Vec<f64>,
    pub runs_per_cell: u32,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            params: EfficiencyParams {
                hops: Some(3),
                relay_candidates: Some(3),
                cancellation_probability: Some(0.3),
                ..EfficiencyParams::default()
            },
            cross_validate: false,
            relay_counts: vec![1, 2, 3],
            cancel_probs: vec![0.1, 0.3, 0.5],
            runs_per_cell: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub rows: Vec<EfficiencyRow>,
    pub cross_validation: Option<Vec<CrossValidationCell>>,
}

/// snake_case name of a serde unit variant, for CSV cells.
fn variant_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v).expect("variant serializes") {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

pub fn compute(cfg: &Config, seed: u64) -> Result<Output, CliError> {
    let rows = evaluate_all(&cfg.params)?;
    let cross_validation = if cfg.cross_validate {
        Some(cross_validate(
            &cfg.relay_counts,
            &cfg.cancel_probs,
            cfg.runs_per_cell,
            seed,
        )?)
    } else {
        None
    };
    Ok(Output {
        rows,
        cross_validation,
    })
}

pub fn artifacts(out: &Output) -> Vec<Artifact> {
    let rows: Vec<Vec<String>> = out
        .rows
        .iter()
        .map(|r| {
            vec![
                variant_name(&r.countermeasure),
                variant_name(&r.knowledge),
                variant_name(&r.range),
                r.cost.frame_transmissions.to_string(),
                r.cost.latency_s.to_string(),
                r.cost.delivery_probability.to_string(),
            ]
        })
        .collect();
    let mut artifacts = vec![Artifact::new(
        "efficiency.csv",
        csv(
            &[
                "countermeasure",
                "knowledge",
                "range",
                "frame_transmissions",
                "latency_s",
                "delivery_probability",
            ],
            &rows,
        ),
    )];
    if let Some(cells) = &out.cross_validation {
        let rows: Vec<Vec<String>> = cells
            .iter()
            .map(|c| {
                vec![
                    c.relay_candidates.to_string(),
                    c.cancellation_probability.to_string(),
                    c.runs.to_string(),
                    c.predicted.to_string(),
                    c.observed.to_string(),
                    c.p_value.to_string(),
                    flag(c.consistent),
                ]
            })
            .collect();
        artifacts.push(Artifact::new(
            "crossval.csv",
            csv(
                &[
                    "relay_candidates",
                    "cancellation_probability",
                    "runs",
                    "predicted",
                    "observed",
                    "p_value",
                    "consistent",
                ],
                &rows,
            ),
        ));
    }
    artifacts
}

pub fn run(cfg: &Config, seed: u64) -> Result<Vec<Artifact>, CliError> {
    Ok(artifacts(&compute(cfg, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_emits_all_eight_cells_without_simulation() {
        let cfg = Config::default();
        let arts = run(&cfg, 1).unwrap();
        assert_eq!(arts.len(), 1);
        let text = String::from_utf8(arts[0].bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.contains("phase_shift"));
        assert!(text.contains("multi_hop"));
    }

    #[test]
    fn cross_validation_adds_the_sweep_table() {
        let cfg = Config {
            cross_validate: true,
            relay_counts: vec![1],
            cancel_probs: vec![0.5],
            runs_per_cell: 25,
            ..Config::default()
        };
        let out = compute(&cfg, 7).unwrap();
        let cells = out.cross_validation.as_ref().unwrap();
        assert_eq!(cells.len(), 1);
        assert!((cells[0].predicted - 0.75).abs() < 1e-12);
        assert_eq!(artifacts(&out).len(), 2);
    }
}
