//! Closed-form analysis of tags deployed on a line through the exciter.
//!
//! Two facts drive everything here. First, a link budget depends on the
//! product of the transmitter's exciter distance and the hop distance, so
//! the farther tag of a pair is always the weaker talker. Second, because
//! of that product rule, relaying a backward message through interior tags
//! beats the direct long hop by a factor that grows with line length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::RfEnvironment;

// ---------------------------------------------------------------------------
// Line geometry
// ---------------------------------------------------------------------------

/// Tags 1..=N on a ray from the exciter: `d1` is the exciter-to-tag-1
/// distance, `spacings[k]` the distance from tag k+1 to tag k+2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTopology {
    d1: f64,
    spacings: Vec<f64>,
}

impl LineTopology {
    pub fn new(d1: f64, spacings: Vec<f64>) -> Result<Self> {
        for d in std::iter::once(&d1).chain(&spacings) {
            if !(*d > 0.0 && d.is_finite()) {
                return Err(Error::Domain(format!(
                    "line distances must be positive, got {d}"
                )));
            }
        }
        Ok(Self { d1, spacings })
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn n_tags(&self) -> usize {
        1 + self.spacings.len()
    }

    /// Hop distance d_k (1-indexed; d_1 is the exciter leg).
    fn hop(&self, k: usize) -> f64 {
        if k == 1 {
            self.d1
        } else {
            self.spacings[k - 2]
        }
    }

    /// Sum of hop distances a..=b, the distance between tag a-1 (or the
    /// exciter for a = 1) and tag b.
    pub fn span(&self, a: usize, b: usize) -> Result<f64> {
        if a < 1 || b < a || b > self.n_tags() {
            return Err(Error::Domain(format!(
                "span {a}..={b} outside 1..={}",
                self.n_tags()
            )));
        }
        Ok((a..=b).map(|k| self.hop(k)).sum())
    }

    /// Exciter distance of tag i.
    pub fn exciter_distance(&self, i: usize) -> Result<f64> {
        self.span(1, i)
    }

    pub fn total_length(&self) -> f64 {
        self.span(1, self.n_tags()).expect("full span is valid")
    }
}

// ---------------------------------------------------------------------------
// Link asymmetry
// ---------------------------------------------------------------------------

/// Ratio of the two directions of a pair, `P(n->m) / P(m->n)`, from the
/// endpoints' exciter legs alone:
/// `(G_E(n) / G_E(m)) * (d(E,m) / d(E,n))^2`.
///
/// Wavelength, tag gain, reflection coefficient, and the hop distance all
/// cancel, which is why only exciter geometry appears.
pub fn asymmetry_ratio(
    gain_toward_n: f64,
    gain_toward_m: f64,
    d_exciter_n: f64,
    d_exciter_m: f64,
) -> Result<f64> {
    for (v, name) in [
        (gain_toward_n, "gain_toward_n"),
        (gain_toward_m, "gain_toward_m"),
        (d_exciter_n, "d_exciter_n"),
        (d_exciter_m, "d_exciter_m"),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok((gain_toward_n / gain_toward_m) * (d_exciter_m / d_exciter_n).powi(2))
}

// ---------------------------------------------------------------------------
// Relay gain on a line
// ---------------------------------------------------------------------------

/// Power advantage of receiving tag N's backward message via interior tag
/// i instead of directly at tag 1:
/// `(l(1,N) * l(2,N) / (l(1,i) * l(2,i)))^2` with i strictly between 1 and N.
pub fn backward_multihop_gain(line: &LineTopology, i: usize) -> Result<f64> {
    let n = line.n_tags();
    if n < 3 || i < 2 || i > n - 1 {
        return Err(Error::RelayIndex {
            index: i,
            max: n.saturating_sub(1),
            n_tags: n,
        });
    }
    let num = line.span(1, n)? * line.span(2, n)?;
    let den = line.span(1, i)? * line.span(2, i)?;
    Ok((num / den).powi(2))
}

/// [`backward_multihop_gain`] specialised to equal spacing, where it
/// collapses to `(N (N-1) / (i (i-1)))^2`.
pub fn equal_spacing_gain(n_tags: usize, i: usize) -> Result<f64> {
    if n_tags < 3 || i < 2 || i > n_tags - 1 {
        return Err(Error::RelayIndex {
            index: i,
            max: n_tags.saturating_sub(1),
            n_tags,
        });
    }
    let (n, i) = (n_tags as f64, i as f64);
    Ok((n * (n - 1.0) / (i * (i - 1.0))).powi(2))
}

/// Interior tag with the largest backward relay gain; ties go to the
/// smaller index. The gain is monotone in `1 / (l(1,i) * l(2,i))`, and on
/// an equally spaced line the winner is always tag 2.
pub fn optimal_relay_index(line: &LineTopology) -> Result<usize> {
    let n = line.n_tags();
    if n < 3 {
        return Err(Error::RelayIndex {
            index: 2,
            max: n.saturating_sub(1),
            n_tags: n,
        });
    }
    let mut best = (2, backward_multihop_gain(line, 2)?);
    for i in 3..n {
        let gain = backward_multihop_gain(line, i)?;
        if gain > best.1 {
            best = (i, gain);
        }
    }
    Ok(best.0)
}

// ---------------------------------------------------------------------------
// Spacing design
// ---------------------------------------------------------------------------

/// Largest value of `d(E,tx) * d(tx,rx)` (metres squared) at which a link
/// still meets the sensitivity floor. A link is alive exactly when the
/// product of its two legs stays at or below this number.
pub fn alive_distance_product(env: &RfEnvironment, exciter_gain: f64) -> f64 {
    let lambda = env.wavelength_m();
    lambda * lambda / (4.0 * std::f64::consts::PI).powi(2)
        * env.tag_gain
        * env.k0
        * (env.exciter_power_w * exciter_gain * env.tag_gain / env.sensitivity_w).sqrt()
}

/// Largest spacing `d` for a new tag after a line of length `prefix_len`
/// such that the new tag can still talk backward to its predecessor:
/// positive root of `d^2 + prefix_len * d - e = 0`, with `e` the alive
/// distance product. At that spacing the backward link sits exactly at
/// the sensitivity floor.
pub fn optimal_spacing_after(
    env: &RfEnvironment,
    prefix_len: f64,
    exciter_gain: f64,
) -> Result<f64> {
    if !(prefix_len > 0.0 && prefix_len.is_finite()) {
        return Err(Error::Domain(format!(
            "prefix length must be positive, got {prefix_len}"
        )));
    }
    env.validate()?;
    let e = alive_distance_product(env, exciter_gain);
    Ok(0.5 * ((prefix_len * prefix_len + 4.0 * e).sqrt() - prefix_len))
}

/// [`optimal_spacing_after`] for tag `i` of a line whose first `i - 1`
/// spacings are already fixed.
pub fn optimal_spacing(
    env: &RfEnvironment,
    line_prefix: &LineTopology,
    i: usize,
    exciter_gain: f64,
) -> Result<f64> {
    if i < 2 || i > line_prefix.n_tags() + 1 {
        return Err(Error::Domain(format!(
            "tag index {i} needs a prefix of {} spacings, line has {}",
            i.saturating_sub(1),
            line_prefix.n_tags()
        )));
    }
    optimal_spacing_after(env, line_prefix.span(1, i - 1)?, exciter_gain)
}

/// Far-field (Fraunhofer) limit `2 D^2 / lambda` for an antenna whose
/// largest dimension is `antenna_dim_m`; spacings below this are outside
/// the free-space model's validity.
pub fn fraunhofer_distance(env: &RfEnvironment, antenna_dim_m: f64) -> f64 {
    2.0 * antenna_dim_m * antenna_dim_m / env.wavelength_m()
}

/// One rung of [`max_range_ladder`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeStep {
    pub n_tags: usize,
    /// Exciter distance of the farthest tag, metres.
    pub range_m: f64,
    /// Spacing that placed the farthest tag, metres.
    pub spacing_m: f64,
}

/// Grow a line from `d1` by repeatedly appending the optimal spacing,
/// until the next spacing would violate the far-field limit or `max_tags`
/// is reached. The exciter is assumed to face along the line, so the
/// boresight gain applies throughout.
pub fn max_range_ladder(
    env: &RfEnvironment,
    d1: f64,
    antenna_dim_m: f64,
    max_tags: usize,
) -> Result<Vec<RangeStep>> {
    env.validate()?;
    if !(d1 > 0.0 && d1.is_finite()) {
        return Err(Error::Domain(format!("d1 must be positive, got {d1}")));
    }
    if !(antenna_dim_m > 0.0 && antenna_dim_m.is_finite()) {
        return Err(Error::Domain(format!(
            "antenna dimension must be positive, got {antenna_dim_m}"
        )));
    }
    if max_tags < 1 {
        return Err(Error::Domain("max_tags must be at least 1".into()));
    }
    let min_spacing = fraunhofer_distance(env, antenna_dim_m);
    let mut steps = vec![RangeStep {
        n_tags: 1,
        range_m: d1,
        spacing_m: d1,
    }];
    let mut length = d1;
    while steps.len() < max_tags {
        let d = optimal_spacing_after(env, length, env.exciter_gain)?;
        if d < min_spacing {
            break;
        }
        length += d;
        steps.push(RangeStep {
            n_tags: steps.len() + 1,
            range_m: length,
            spacing_m: d,
        });
    }
    Ok(steps)
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rf::Position;
    use proptest::prelude::*;

    // Hand evaluation with the default environment: the alive distance
    // product, the spacing after a 3 m prefix, and the resulting ladder.
    const ALIVE_PRODUCT: f64 = 6.764601518935609;
    const D2_AFTER_3M: f64 = 1.5024326002319537;
    const RANGE_2_TAGS: f64 = 4.502432600231954;
    const RANGE_5_TAGS: f64 = 7.591672155244753;
    const FRAUNHOFER_17CM: f64 = 0.1673504408172937;

    fn assert_close(actual: f64, expected: f64, rel: f64, what: &str) {
        let err = (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        assert!(
            err <= rel,
            "{what}: got {actual:e}, expected {expected:e} (rel err {err:e})"
        );
    }

    #[test]
    fn span_accounting() {
        let line = LineTopology::new(1.0, vec![0.1, 5.0, 5.0]).unwrap();
        assert_eq!(line.n_tags(), 4);
        assert_close(line.span(1, 4).unwrap(), 11.1, 1e-12, "full span");
        assert_close(line.span(2, 4).unwrap(), 10.1, 1e-12, "tail span");
        assert_close(line.exciter_distance(2).unwrap(), 1.1, 1e-12, "tag 2");
        assert!(line.span(3, 2).is_err());
        assert!(line.span(1, 5).is_err());
        assert!(LineTopology::new(0.0, vec![]).is_err());
    }

    #[test]
    fn asymmetry_doubled_exciter_leg_costs_factor_four() {
        // Same gain both ways, m twice as far from the exciter as n.
        let r = asymmetry_ratio(1.0, 1.0, 1.5, 3.0).unwrap();
        assert_close(r, 4.0, 1e-12, "asymmetry");
        assert!(asymmetry_ratio(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn asymmetry_matches_power_ratio() {
        let env = RfEnvironment::default();
        let e = Position::new(0.0, 0.0);
        let n = Position::new(2.0, 1.0);
        let m = Position::new(4.0, -1.5);
        let forward = env.received_power(&e, &n, &m).unwrap();
        let backward = env.received_power(&e, &m, &n).unwrap();
        let predicted = asymmetry_ratio(
            env.exciter_gain_toward(&e, &n),
            env.exciter_gain_toward(&e, &m),
            e.distance(&n),
            e.distance(&m),
        )
        .unwrap();
        assert_close(forward / backward, predicted, 1e-12, "ratio identity");
    }

    #[test]
    fn equal_spacing_gain_reference() {
        let line = LineTopology::new(2.0, vec![2.0, 2.0]).unwrap();
        let g = backward_multihop_gain(&line, 2).unwrap();
        assert_close(g, 9.0, 1e-12, "N=3 midpoint gain");
        assert_close(
            equal_spacing_gain(3, 2).unwrap(),
            9.0,
            1e-12,
            "closed form",
        );
    }

    #[test]
    fn gain_index_bounds() {
        let line = LineTopology::new(2.0, vec![2.0, 2.0]).unwrap();
        assert!(matches!(
            backward_multihop_gain(&line, 1),
            Err(Error::RelayIndex { .. })
        ));
        assert!(backward_multihop_gain(&line, 3).is_err());
        let two = LineTopology::new(2.0, vec![2.0]).unwrap();
        assert!(backward_multihop_gain(&two, 2).is_err());
        assert!(optimal_relay_index(&two).is_err());
    }

    #[test]
    fn optimal_relay_on_lopsided_line() {
        // Tag 2 hugs tag 1, tags 3 and 4 are far out: the relay gain at
        // i=2 is about 1.04e6 versus 13 at i=3.
        let line = LineTopology::new(1.0, vec![0.1, 5.0, 5.0]).unwrap();
        assert_eq!(optimal_relay_index(&line).unwrap(), 2);
        let g2 = backward_multihop_gain(&line, 2).unwrap();
        assert_close(g2, 1038731.5785123963, 1e-12, "gain at 2");
    }

    #[test]
    fn alive_product_is_the_link_threshold() {
        let env = RfEnvironment::default();
        let e = alive_distance_product(&env, env.exciter_gain);
        assert_close(e, ALIVE_PRODUCT, 1e-12, "alive product");
        // Split the product across the two legs and probe both sides of
        // the threshold.
        let exciter = Position::new(0.0, 0.0);
        let d_e = 3.0;
        let tx = Position::new(d_e, 0.0);
        for (scale, expect_alive) in [(1.0 - 1e-9, true), (1.0 + 1e-9, false)] {
            let d = e / d_e * scale;
            let alive = env
                .link_alive(&exciter, &tx, &Position::new(d_e, d))
                .unwrap();
            assert_eq!(alive, expect_alive, "scale {scale}");
        }
    }

    #[test]
    fn optimal_spacing_reference_value() {
        let env = RfEnvironment::default();
        let d2 = optimal_spacing_after(&env, 3.0, env.exciter_gain).unwrap();
        assert_close(d2, D2_AFTER_3M, 1e-12, "spacing after 3 m");
        // Defining quadratic holds to numerical precision.
        let e = alive_distance_product(&env, env.exciter_gain);
        let residual = (d2 * d2 + 3.0 * d2 - e).abs();
        assert!(residual < 1e-9 * e, "residual {residual:e}");
    }

    #[test]
    fn optimal_spacing_back_substitutes_to_sensitivity() {
        let env = RfEnvironment::default();
        let prefix = 3.0;
        let d = optimal_spacing_after(&env, prefix, env.exciter_gain).unwrap();
        let exciter = Position::new(0.0, 0.0);
        let new_tag = Position::new(prefix + d, 0.0);
        let predecessor = Position::new(prefix, 0.0);
        let p = env.received_power(&exciter, &new_tag, &predecessor).unwrap();
        assert_close(p, env.sensitivity_w, 1e-6, "backward link at floor");
    }

    #[test]
    fn optimal_spacing_line_form_matches() {
        let env = RfEnvironment::default();
        let line = LineTopology::new(3.0, vec![]).unwrap();
        let via_line = optimal_spacing(&env, &line, 2, env.exciter_gain).unwrap();
        assert_close(via_line, D2_AFTER_3M, 1e-15, "line form");
        assert!(optimal_spacing(&env, &line, 4, env.exciter_gain).is_err());
        assert!(optimal_spacing(&env, &line, 1, env.exciter_gain).is_err());
    }

    #[test]
    fn fraunhofer_reference_value() {
        let env = RfEnvironment::default();
        assert_close(
            fraunhofer_distance(&env, 0.17),
            FRAUNHOFER_17CM,
            1e-12,
            "far-field limit",
        );
    }

    #[test]
    fn ladder_reference_values_and_termination() {
        let env = RfEnvironment::default();
        let steps = max_range_ladder(&env, 3.0, 0.17, 500).unwrap();
        assert_eq!(steps[0].n_tags, 1);
        assert_close(steps[0].range_m, 3.0, 1e-15, "first rung");
        assert_close(steps[1].range_m, RANGE_2_TAGS, 1e-12, "second rung");
        assert_close(steps[1].spacing_m, D2_AFTER_3M, 1e-12, "second spacing");
        assert_close(steps[4].range_m, RANGE_5_TAGS, 1e-12, "fifth rung");
        // Terminated because the next spacing fell under the far-field
        // limit, not because of the tag cap.
        let last = steps.last().unwrap();
        assert!(steps.len() < 500);
        let min = fraunhofer_distance(&env, 0.17);
        assert!(last.spacing_m >= min);
        let next = optimal_spacing_after(&env, last.range_m, env.exciter_gain).unwrap();
        assert!(next < min, "ladder stopped too early");
    }

    #[test]
    fn ladder_respects_tag_cap() {
        let env = RfEnvironment::default();
        let steps = max_range_ladder(&env, 3.0, 0.17, 4).unwrap();
        assert_eq!(steps.len(), 4);
        assert!(max_range_ladder(&env, -1.0, 0.17, 4).is_err());
        assert!(max_range_ladder(&env, 3.0, 0.0, 4).is_err());
    }

    proptest! {
        /// Interior relaying always beats the direct backward hop.
        #[test]
        fn interior_gain_exceeds_one(
            d1 in 0.2f64..10.0,
            spacings in proptest::collection::vec(0.05f64..5.0, 2..12),
        ) {
            let line = LineTopology::new(d1, spacings).unwrap();
            for i in 2..line.n_tags() {
                prop_assert!(backward_multihop_gain(&line, i).unwrap() > 1.0);
            }
        }

        /// On an equally spaced line the best relay is tag 2 and the
        /// closed form agrees with the general expression.
        #[test]
        fn equal_spacing_agreement(
            d in 0.1f64..5.0,
            n in 3usize..50,
        ) {
            let line = LineTopology::new(d, vec![d; n - 1]).unwrap();
            prop_assert_eq!(optimal_relay_index(&line).unwrap(), 2);
            for i in 2..n {
                let general = backward_multihop_gain(&line, i).unwrap();
                let closed = equal_spacing_gain(n, i).unwrap();
                prop_assert!((general / closed - 1.0).abs() < 1e-9);
            }
        }

        /// Brute-force argmax agrees with `optimal_relay_index`.
        #[test]
        fn relay_index_matches_scan(
            d1 in 0.2f64..10.0,
            spacings in proptest::collection::vec(0.05f64..5.0, 2..10),
        ) {
            let line = LineTopology::new(d1, spacings).unwrap();
            let best = optimal_relay_index(&line).unwrap();
            for i in 2..line.n_tags() {
                prop_assert!(
                    backward_multihop_gain(&line, i).unwrap()
                        <= backward_multihop_gain(&line, best).unwrap()
                );
            }
        }

        /// Ladder ranges grow, spacings shrink.
        #[test]
        fn ladder_monotonicity(d1 in 0.5f64..8.0, dim in 0.05f64..0.3) {
            let env = RfEnvironment::default();
            let steps = max_range_ladder(&env, d1, dim, 64).unwrap();
            for w in steps.windows(2) {
                prop_assert!(w[1].range_m > w[0].range_m);
                if w[0].n_tags >= 2 {
                    prop_assert!(w[1].spacing_m < w[0].spacing_m);
                }
            }
        }
    }
}
