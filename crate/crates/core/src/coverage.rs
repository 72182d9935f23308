//! Monte-Carlo connectivity experiments over random deployments.
//!
//! For each tag count, tags are scattered uniformly over a square working
//! area and the resulting link graph is classified as single-hop
//! connected (every ordered pair direct) and/or multi-hop connected
//! (strongly connected). Rates over many placements, with Wilson score
//! intervals, show how relaying widens coverage as density grows.

use serde::{Deserialize, Serialize};

use crate::analysis::{fraunhofer_distance, max_range_ladder, RangeStep};
use crate::error::Result;
use crate::rf::{Position, RfEnvironment};
use crate::topology::{build_graph, CancellationMode, Deployment};

/// Stateless seed mixer (splitmix64); keeps per-run seeds decorrelated
/// without any platform-dependent hashing.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for (point, run); distinct inputs give distinct streams.
fn child_seed(base: u64, point: usize, run: usize) -> u64 {
    splitmix64(base ^ splitmix64(((point as u64) << 32) ^ run as u64))
}

/// Two-sided exact binomial p-value: the probability, under success
/// rate `p`, of a count at least as far from the mean `n p` as the
/// observed `successes`. Unlike a z-test this stays honest when `n p`
/// or `n (1 - p)` is tiny, which is exactly where simulated delivery
/// rates near 1 live.
pub fn binomial_two_sided_p(trials: u64, successes: u64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(crate::error::Error::Domain(format!(
            "success probability {p} outside [0, 1]"
        )));
    }
    if successes > trials {
        return Err(crate::error::Error::Domain(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    if trials == 0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(if successes == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if successes == trials { 1.0 } else { 0.0 });
    }
    let n = trials as usize;
    // ln n! table; pmf via logs so extreme tails do not underflow to
    // zero before they are compared.
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_pmf = |k: usize| -> f64 {
        ln_fact[n] - ln_fact[k] - ln_fact[n - k]
            + k as f64 * p.ln()
            + (n - k) as f64 * (1.0 - p).ln()
    };
    let mean = trials as f64 * p;
    let dev = (successes as f64 - mean).abs();
    let mut total = 0.0f64;
    for k in 0..=n {
        if (k as f64 - mean).abs() >= dev - 1e-9 {
            total += ln_pmf(k).exp();
        }
    }
    Ok(total.min(1.0))
}

/// 95% Wilson score interval for `successes` out of `trials`:
/// (center, half width). Well-behaved at rates of 0 and 1, unlike the
/// normal approximation.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.5, 0.5);
    }
    let z = 1.959963984540054; // 97.5% normal quantile
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (center, half)
}

// ---------------------------------------------------------------------------
// Experiment definition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageExperiment {
    pub env: RfEnvironment,
    pub exciter: Position,
    /// Side of the square working area, metres.
    pub area_side_m: f64,
    /// Tag counts to sweep.
    pub tag_counts: Vec<usize>,
    pub runs_per_point: usize,
    pub cancellation: CancellationMode,
    /// Placement rejection radius; defaults to the far-field limit of a
    /// 17 cm tag so the free-space model stays valid.
    pub min_spacing_m: f64,
    pub base_seed: u64,
}

impl CoverageExperiment {
    /// The reference sweep: 30 m square, exciter at (0, 3), 2..=15 tags,
    /// 1000 placements per point.
    pub fn new(env: RfEnvironment, base_seed: u64) -> Self {
        let min_spacing_m = fraunhofer_distance(&env, 0.17);
        Self {
            env,
            exciter: Position::new(0.0, 3.0),
            area_side_m: 30.0,
            tag_counts: (2..=15).collect(),
            runs_per_point: 1000,
            cancellation: CancellationMode::Off,
            min_spacing_m,
            base_seed,
        }
    }
}

/// One swept tag count, with connectivity rates and Wilson 95% CIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub n_tags: usize,
    pub runs: usize,
    pub single_hop_rate: f64,
    pub single_hop_ci_half_width: f64,
    pub multi_hop_rate: f64,
    pub multi_hop_ci_half_width: f64,
}

/// Run the sweep. Each (point, run) pair has its own derived seed, so the
/// whole result is a pure function of the experiment description.
pub fn run_coverage(exp: &CoverageExperiment) -> Result<Vec<CoveragePoint>> {
    exp.env.validate()?;
    let mut points = Vec::with_capacity(exp.tag_counts.len());
    for (point_idx, &n_tags) in exp.tag_counts.iter().enumerate() {
        let mut sh = 0usize;
        let mut mh = 0usize;
        for run in 0..exp.runs_per_point {
            let seed = child_seed(exp.base_seed, point_idx, run);
            let dep = Deployment::random(
                exp.exciter,
                n_tags,
                exp.area_side_m,
                exp.min_spacing_m,
                splitmix64(seed),
            )?;
            let graph = build_graph(&exp.env, &dep, exp.cancellation, splitmix64(seed ^ 1))?;
            if graph.is_single_hop_connected() {
                sh += 1;
            }
            if graph.is_multi_hop_connected() {
                mh += 1;
            }
        }
        let (_, sh_half) = wilson_interval(sh, exp.runs_per_point);
        let (_, mh_half) = wilson_interval(mh, exp.runs_per_point);
        points.push(CoveragePoint {
            n_tags,
            runs: exp.runs_per_point,
            single_hop_rate: sh as f64 / exp.runs_per_point as f64,
            single_hop_ci_half_width: sh_half,
            multi_hop_rate: mh as f64 / exp.runs_per_point as f64,
            multi_hop_ci_half_width: mh_half,
        });
    }
    Ok(points)
}

/// Deterministic companion curve: the analytic maximum line range per tag
/// count (no randomness involved).
pub fn run_max_range_curve(
    env: &RfEnvironment,
    d1: f64,
    antenna_dim_m: f64,
    max_tags: usize,
) -> Result<Vec<RangeStep>> {
    max_range_ladder(env, d1, antenna_dim_m, max_tags)
}

// ===========================================================================
// Tests
// ===========================================================================
