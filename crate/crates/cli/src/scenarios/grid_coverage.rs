//! Link coverage map around a fixed tag: for every point of a small
//! grid, can the fixed tag talk to a tag placed there, in each
//! direction, under three methods - a single plain copy, the
//! quarter-turn repeat, and relaying through one intermediate tag at
//! the grid point nearest the midpoint of the pair.

use serde::{Deserialize, Serialize};
use t2t_core::{Position, RfEnvironment};

use crate::artifact::{csv, Artifact};
use crate::scenarios::flag;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub env: RfEnvironment,
    pub exciter: Position,
    pub fixed_tag: Position,
    pub grid_min_m: f64,
    pub grid_max_m: f64,
    pub grid_step_m: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            env: RfEnvironment::default(),
            exciter: Position::new(0.0, 0.0),
            fixed_tag: Position::new(0.5, 0.5),
            grid_min_m: 0.0,
            grid_max_m: 2.0,
            grid_step_m: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Fixed tag transmits, grid tag receives.
    Forward,
    /// Grid tag transmits, fixed tag receives.
    Backward,
}

impl Direction {
    fn label(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub direction: Direction,
    /// Single plain copy: in range and not nulled.
    pub vanilla: bool,
    /// Quarter-turn repeat: in range (one of the two phases always
    /// clears the null band, which is narrower than the quarter turn).
    pub phase_repeat: bool,
    /// Plain copies only, but a relay at the grid point nearest the
    /// pair's midpoint may carry the frame in two hops.
    pub multihop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub direction: Direction,
    pub method: String,
    pub covered: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutput {
    pub cells: Vec<GridCell>,
    pub summary: Vec<SummaryRow>,
}

fn grid_points(cfg: &Config) -> Result<Vec<Position>, CliError> {
    if !(cfg.grid_step_m > 0.0) || cfg.grid_max_m < cfg.grid_min_m {
        return Err(CliError::Config(format!(
            "bad grid bounds [{}, {}] step {}",
            cfg.grid_min_m, cfg.grid_max_m, cfg.grid_step_m
        )));
    }
    let steps = ((cfg.grid_max_m - cfg.grid_min_m) / cfg.grid_step_m).round() as usize;
    if (steps + 1).pow(2) > 10_000 {
        return Err(CliError::Config("grid has more than 10000 points".into()));
    }
    let coord = |i: usize| cfg.grid_min_m + i as f64 * cfg.grid_step_m;
    let mut pts = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            pts.push(Position::new(coord(i), coord(j)));
        }
    }
    Ok(pts)
}

fn coincident(a: &Position, b: &Position) -> bool {
    a.distance(b) < 1e-9
}

/// One plain copy gets through: the link meets the power floor and the
/// arrival phases do not land in the cancellation band.
fn plain_ok(env: &RfEnvironment, exciter: &Position, tx: &Position, rx: &Position) -> Result<bool, CliError> {
    Ok(env.link_alive(exciter, tx, rx)? && !env.link_cancelled(exciter, tx, rx, 0.0)?)
}

/// The relay position for a pair: the usable grid point nearest their
/// midpoint, the pair itself excluded. Ties go to the first point in
/// grid order (ascending x, then y).
fn midpoint_relay(usable: &[Position], cell: &Position, fixed: &Position) -> Option<Position> {
    let mid = Position::new((cell.x + fixed.x) / 2.0, (cell.y + fixed.y) / 2.0);
    let mut best: Option<(f64, Position)> = None;
    for &p in usable {
        if coincident(&p, cell) {
            continue;
        }
        let d = p.distance(&mid);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p)
}

pub fn compute(cfg: &Config) -> Result<GridOutput, CliError> {
    cfg.env.validate()?;
    let points = grid_points(cfg)?;
    // Grid points sitting on the exciter or the fixed tag have no
    // defined link geometry; they are skipped as cells and as relays.
    let usable: Vec<Position> = points
        .into_iter()
        .filter(|p| !coincident(p, &cfg.exciter) && !coincident(p, &cfg.fixed_tag))
        .collect();

    let mut cells = Vec::new();
    for &cell in &usable {
        // The relay spot depends only on the pair, not on who transmits.
        let relay = midpoint_relay(&usable, &cell, &cfg.fixed_tag);
        for direction in [Direction::Forward, Direction::Backward] {
            let (tx, rx) = match direction {
                Direction::Forward => (cfg.fixed_tag, cell),
                Direction::Backward => (cell, cfg.fixed_tag),
            };
            let alive = cfg.env.link_alive(&cfg.exciter, &tx, &rx)?;
            let vanilla = alive && !cfg.env.link_cancelled(&cfg.exciter, &tx, &rx, 0.0)?;
            let mut multihop = vanilla;
            if !multihop {
                if let Some(relay) = relay {
                    multihop = plain_ok(&cfg.env, &cfg.exciter, &tx, &relay)?
                        && plain_ok(&cfg.env, &cfg.exciter, &relay, &rx)?;
                }
            }
            cells.push(GridCell {
                x: cell.x,
                y: cell.y,
                direction,
                vanilla,
                phase_repeat: alive,
                multihop,
            });
        }
    }

    let mut summary = Vec::new();
    for direction in [Direction::Forward, Direction::Backward] {
        let in_dir: Vec<&GridCell> = cells.iter().filter(|c| c.direction == direction).collect();
        let total = in_dir.len();
        for (method, pick) in [
            ("vanilla", Box::new(|c: &GridCell| c.vanilla) as Box<dyn Fn(&GridCell) -> bool>),
            ("phase_repeat", Box::new(|c: &GridCell| c.phase_repeat)),
            ("multihop", Box::new(|c: &GridCell| c.multihop)),
        ] {
            let covered = in_dir.iter().filter(|c| pick(c)).count();
            summary.push(SummaryRow {
                direction,
                method: method.to_string(),
                covered,
                total,
                fraction: covered as f64 / total as f64,
            });
        }
    }
    Ok(GridOutput { cells, summary })
}

pub fn artifacts(out: &GridOutput) -> Vec<Artifact> {
    let cell_rows: Vec<Vec<String>> = out
        .cells
        .iter()
        .map(|c| {
            vec![
                c.x.to_string(),
                c.y.to_string(),
                c.direction.label().to_string(),
                flag(c.vanilla),
                flag(c.phase_repeat),
                flag(c.multihop),
            ]
        })
        .collect();
    let summary_rows: Vec<Vec<String>> = out
        .summary
        .iter()
        .map(|s| {
            vec![
                s.direction.label().to_string(),
                s.method.clone(),
                s.covered.to_string(),
                s.total.to_string(),
                s.fraction.to_string(),
            ]
        })
        .collect();
    vec![
        Artifact::new(
            "grid_cells.csv",
            csv(
                &["x", "y", "direction", "vanilla", "phase_repeat", "multihop"],
                &cell_rows,
            ),
        ),
        Artifact::new(
            "grid_summary.csv",
            csv(
                &["direction", "method", "covered", "total", "fraction"],
                &summary_rows,
            ),
        ),
    ]
}

pub fn run(cfg: &Config) -> Result<Vec<Artifact>, CliError> {
    Ok(artifacts(&compute(cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeat_and_relaying_never_lose_cells() {
        let out = compute(&Config::default()).unwrap();
        assert!(!out.cells.is_empty());
        for c in &out.cells {
            if c.vanilla {
                assert!(c.phase_repeat, "repeat lost covered cell ({}, {})", c.x, c.y);
                assert!(c.multihop, "relaying lost covered cell ({}, {})", c.x, c.y);
            }
        }
        // 5x5 grid minus the exciter corner and the fixed tag's point,
        // both directions.
        assert_eq!(out.cells.len(), 2 * (25 - 2));
        assert_eq!(out.summary.len(), 6);
    }

    #[test]
    fn grid_rejects_zero_step() {
        let cfg = Config {
            grid_step_m: 0.0,
            ..Config::default()
        };
        assert!(matches!(compute(&cfg), Err(CliError::Config(_))));
    }
}
