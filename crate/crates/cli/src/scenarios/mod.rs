//! The runnable scenarios. Each module pairs a serde config struct
//! (whose defaults are the reference setup) with a `compute` function
//! returning typed results and an `artifacts` function rendering them
//! to files. Scenarios that draw randomness take the CLI seed; the
//! others ignore it.

pub mod bridge;
pub mod coverage;
pub mod efficiency;
pub mod grid_coverage;
pub mod line_range;
pub mod mac_sim;
pub mod range;

/// 0/1 column for boolean CSV fields.
pub(crate) fn flag(b: bool) -> String {
    if b { "1".into() } else { "0".into() }
}
