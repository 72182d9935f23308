//! Free-space RF primitives for backscatter links.
//!
//! A tag never amplifies. The exciter delivers power to the transmitting
//! tag over one free-space leg, the tag reflects a fraction of it, and the
//! reflection travels a second free-space leg to the receiver. Received
//! power therefore falls with the product of the two path losses, which is
//! what makes these links short and direction-dependent.
//!
//! All powers are linear watts and all gains linear ratios; dB only at the
//! API edges via [`dbm_to_watts`] / [`watts_to_dbm`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

// ---------------------------------------------------------------------------
// Unit helpers
// ---------------------------------------------------------------------------

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1000.0).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Distance on the unit circle, in [0, pi].
pub fn circular_distance_rad(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// A point in the deployment plane, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

fn distance_checked(a: &Position, b: &Position, what: &str) -> Result<f64> {
    let d = a.distance(b);
    if d <= 0.0 || !d.is_finite() {
        return Err(Error::CoincidentPositions(what.to_string()));
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

/// Sector approximation of a directive exciter antenna: boresight gain
/// inside the beam, a small floor outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorBeam {
    /// Boresight direction, degrees, measured from the +x axis.
    pub direction_deg: f64,
    /// Full beam width, degrees.
    pub width_deg: f64,
}

/// RF constants shared by every link computation.
///
/// The default is the 868 MHz reference setup used throughout the tests:
/// 33 dBm exciter with a 4 dBi antenna, 0 dBi tags, reflection
/// coefficients 0.4 / 0.9, -50 dBm tag sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfEnvironment {
    pub carrier_hz: f64,
    /// Exciter transmit power, watts.
    pub exciter_power_w: f64,
    /// Exciter boresight gain, linear.
    pub exciter_gain: f64,
    /// `None` treats the exciter as isotropic at `exciter_gain`.
    pub exciter_beam: Option<SectorBeam>,
    /// Gain used for a target outside the sector beam, linear.
    pub off_beam_gain: f64,
    /// Tag antenna gain, linear (same antenna on every tag).
    pub tag_gain: f64,
    /// Reflection coefficient of the tag's absorbing state.
    pub k0: f64,
    /// Reflection coefficient of the tag's reflecting state.
    pub k1: f64,
    /// Minimum detectable received power, watts.
    pub sensitivity_w: f64,
    /// Half-width of the phase band around the cancellation angle inside
    /// which a link is considered dead, radians. Must stay below pi/4 so
    /// that a quarter-turn phase retry always clears the band.
    pub cancellation_band_rad: f64,
}

impl Default for RfEnvironment {
    fn default() -> Self {
        Self {
            carrier_hz: 868e6,
            exciter_power_w: dbm_to_watts(33.0),
            exciter_gain: db_to_linear(4.0),
            exciter_beam: None,
            off_beam_gain: 0.01,
            tag_gain: 1.0,
            k0: 0.4,
            k1: 0.9,
            sensitivity_w: dbm_to_watts(-50.0),
            cancellation_band_rad: 0.2,
        }
    }
}

impl RfEnvironment {
    /// Default environment with the sector beam from the reference setup
    /// (boresight -45 degrees, 40 degree width).
    pub fn with_reference_beam() -> Self {
        Self {
            exciter_beam: Some(SectorBeam {
                direction_deg: -45.0,
                width_deg: 40.0,
            }),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(v: f64, name: &str) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        }
        positive(self.carrier_hz, "carrier_hz")?;
        positive(self.exciter_power_w, "exciter_power_w")?;
        positive(self.exciter_gain, "exciter_gain")?;
        positive(self.off_beam_gain, "off_beam_gain")?;
        positive(self.tag_gain, "tag_gain")?;
        positive(self.sensitivity_w, "sensitivity_w")?;
        if !(self.k0 > 0.0 && self.k0 < self.k1 && self.k1 <= 1.0) {
            return Err(Error::Domain(format!(
                "need 0 < k0 < k1 <= 1, got k0={} k1={}",
                self.k0, self.k1
            )));
        }
        if let Some(beam) = &self.exciter_beam {
            if !(beam.width_deg > 0.0 && beam.width_deg <= 360.0) {
                return Err(Error::Domain(format!(
                    "beam width must be in (0, 360], got {}",
                    beam.width_deg
                )));
            }
        }
        if !(self.cancellation_band_rad > 0.0
            && self.cancellation_band_rad < std::f64::consts::FRAC_PI_4)
        {
            return Err(Error::Domain(format!(
                "cancellation band must be in (0, pi/4), got {}",
                self.cancellation_band_rad
            )));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.carrier_hz
    }

    /// Exciter gain seen from `target`, honouring the sector beam if any.
    pub fn exciter_gain_toward(&self, exciter_pos: &Position, target: &Position) -> f64 {
        let Some(beam) = &self.exciter_beam else {
            return self.exciter_gain;
        };
        let angle = (target.y - exciter_pos.y)
            .atan2(target.x - exciter_pos.x)
            .to_degrees();
        // Wrap the offset into [-180, 180] so beams straddling the +/-180
        // seam still compare correctly.
        let mut off = (angle - beam.direction_deg) % 360.0;
        if off > 180.0 {
            off -= 360.0;
        } else if off < -180.0 {
            off += 360.0;
        }
        if off.abs() <= beam.width_deg / 2.0 {
            self.exciter_gain
        } else {
            self.off_beam_gain
        }
    }

    /// Carrier power a tag at `tag_pos` can draw on, watts.
    ///
    /// One free-space leg from the exciter:
    /// `P = P_E * G_E(theta) * G * lambda^2 / (4 pi d)^2`.
    pub fn available_power(&self, exciter_pos: &Position, tag_pos: &Position) -> Result<f64> {
        let d = distance_checked(exciter_pos, tag_pos, "exciter and tag")?;
        let lambda = self.wavelength_m();
        let ge = self.exciter_gain_toward(exciter_pos, tag_pos);
        Ok(self.exciter_power_w * ge * self.tag_gain * lambda * lambda
            / (4.0 * std::f64::consts::PI * d).powi(2))
    }

    /// Power arriving at `rx` when `tx` backscatters, watts.
    ///
    /// Second free-space leg applied to the available power, with the
    /// absorbing-state coefficient `k0` as the conservative reflection
    /// strength (the reflecting state `k1` only does better):
    /// `P_rx = P_avail * (k0 * G * lambda)^2 / (4 pi d)^2`.
    pub fn received_power(
        &self,
        exciter_pos: &Position,
        tx: &Position,
        rx: &Position,
    ) -> Result<f64> {
        let avail = self.available_power(exciter_pos, tx)?;
        let d = distance_checked(tx, rx, "transmitter and receiver")?;
        let lambda = self.wavelength_m();
        Ok(avail * (self.k0 * self.tag_gain * lambda).powi(2)
            / (4.0 * std::f64::consts::PI * d).powi(2))
    }

    /// Whether `rx` can detect a transmission from `tx` on power alone.
    pub fn link_alive(&self, exciter_pos: &Position, tx: &Position, rx: &Position) -> Result<bool> {
        Ok(self.received_power(exciter_pos, tx, rx)? >= self.sensitivity_w)
    }

    /// Exciter-to-transmitter phase offset that nulls the backscatter
    /// signal at the receiver, radians.
    ///
    /// `None` when no such angle exists for the geometry (the arccos
    /// argument falls outside [-1, 1]), meaning the direct carrier can
    /// never be fully cancelled there.
    pub fn phase_cancellation_angle(
        &self,
        exciter_pos: &Position,
        tx: &Position,
        rx: &Position,
    ) -> Result<Option<f64>> {
        let d_e_tx = distance_checked(exciter_pos, tx, "exciter and transmitter")?;
        let d_e_rx = distance_checked(exciter_pos, rx, "exciter and receiver")?;
        let d_tx_rx = distance_checked(tx, rx, "transmitter and receiver")?;
        Ok(self.cancellation_angle_from_distances(d_e_tx, d_e_rx, d_tx_rx, self.tag_gain))
    }

    /// Distance-parameterised form of [`Self::phase_cancellation_angle`].
    ///
    /// `d_exciter_tx` is the exciter leg of the transmitter, `d_exciter_rx`
    /// the exciter leg of the receiver whose gain is `rx_gain`.
    pub fn cancellation_angle_from_distances(
        &self,
        d_exciter_tx: f64,
        d_exciter_rx: f64,
        d_tx_rx: f64,
        rx_gain: f64,
    ) -> Option<f64> {
        let arg = -((self.k0 + self.k1) * d_exciter_tx * self.wavelength_m() * rx_gain)
            / (8.0 * std::f64::consts::PI * d_exciter_rx * d_tx_rx);
        if arg.abs() > 1.0 {
            None
        } else {
            Some(arg.acos())
        }
    }

    /// Phase difference between the backscattered signal and the direct
    /// carrier as observed at `rx`, in [0, 2 pi).
    ///
    /// Purely geometric: the reflection travels `d(E,tx) + d(tx,rx)` while
    /// the carrier travels `d(E,rx)`.
    pub fn phase_difference_of_arrival(
        &self,
        exciter_pos: &Position,
        tx: &Position,
        rx: &Position,
    ) -> Result<f64> {
        let d_e_tx = distance_checked(exciter_pos, tx, "exciter and transmitter")?;
        let d_e_rx = distance_checked(exciter_pos, rx, "exciter and receiver")?;
        let d_tx_rx = distance_checked(tx, rx, "transmitter and receiver")?;
        let excess = d_e_tx + d_tx_rx - d_e_rx;
        Ok((std::f64::consts::TAU * excess / self.wavelength_m())
            .rem_euclid(std::f64::consts::TAU))
    }

    /// Whether the link `tx -> rx` sits inside the cancellation band.
    ///
    /// `extra_phase_rad` is added to the geometric phase; a transmitter
    /// that repeats a frame with a quarter-turn offset passes pi/2 here.
    pub fn link_cancelled(
        &self,
        exciter_pos: &Position,
        tx: &Position,
        rx: &Position,
        extra_phase_rad: f64,
    ) -> Result<bool> {
        let Some(theta_c) = self.phase_cancellation_angle(exciter_pos, tx, rx)? else {
            return Ok(false);
        };
        let theta_d = self.phase_difference_of_arrival(exciter_pos, tx, rx)? + extra_phase_rad;
        Ok(circular_distance_rad(theta_d, theta_c) < self.cancellation_band_rad)
    }
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Hand-evaluated from the formulas above with the default environment
    // (lambda = 299792458 / 868e6 = 0.34538301612903227 m).
    const AVAILABLE_3M_W: f64 = 4.206682337342401e-4;
    const RECEIVED_3M_2M_W: f64 = 1.271106491944054e-8;
    const RECEIVED_3M_3M_W: f64 = 5.649362186418018e-9;
    const THETA_C_3_3_2: f64 = 1.5797289754070536;
    const PDA_EXAMPLE: f64 = 0.2349790367932698;

    fn assert_close(actual: f64, expected: f64, rel: f64, what: &str) {
        let err = (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        assert!(
            err <= rel,
            "{what}: got {actual:e}, expected {expected:e} (rel err {err:e})"
        );
    }

    #[test]
    fn default_environment_is_valid() {
        RfEnvironment::default().validate().unwrap();
        RfEnvironment::with_reference_beam().validate().unwrap();
    }

    #[test]
    fn wavelength_matches_carrier() {
        let env = RfEnvironment::default();
        assert_close(env.wavelength_m(), 0.34538301612903227, 1e-15, "lambda");
    }

    #[test]
    fn dbm_conversions_roundtrip() {
        assert_close(dbm_to_watts(33.0), 1.9952623149688788, 1e-15, "33 dBm");
        assert_close(dbm_to_watts(-50.0), 1e-8, 1e-12, "-50 dBm");
        assert_close(watts_to_dbm(dbm_to_watts(7.25)), 7.25, 1e-12, "roundtrip");
    }

    #[test]
    fn available_power_reference_value() {
        let env = RfEnvironment::default();
        let e = Position::new(0.0, 0.0);
        let p = env
            .available_power(&e, &Position::new(3.0, 0.0))
            .unwrap();
        assert_close(p, AVAILABLE_3M_W, 1e-12, "available power at 3 m");
        assert_close(watts_to_dbm(p), -3.7606028198064605, 1e-12, "in dBm");
    }

    #[test]
    fn received_power_reference_values() {
        let env = RfEnvironment::default();
        let e = Position::new(0.0, 0.0);
        let tx = Position::new(3.0, 0.0);
        let p2 = env
            .received_power(&e, &tx, &Position::new(3.0, 2.0))
            .unwrap();
        assert_close(p2, RECEIVED_3M_2M_W, 1e-12, "received at 2 m");
        let p3 = env
            .received_power(&e, &tx, &Position::new(3.0, 3.0))
            .unwrap();
        assert_close(p3, RECEIVED_3M_3M_W, 1e-12, "received at 3 m");
    }

    #[test]
    fn link_alive_tracks_sensitivity() {
        let env = RfEnvironment::default();
        let e = Position::new(0.0, 0.0);
        let tx = Position::new(3.0, 0.0);
        // -48.96 dBm clears the -50 dBm floor, -52.48 dBm does not.
        assert!(env.link_alive(&e, &tx, &Position::new(3.0, 2.0)).unwrap());
        assert!(!env.link_alive(&e, &tx, &Position::new(3.0, 3.0)).unwrap());
    }

    #[test]
    fn coincident_positions_are_rejected() {
        let env = RfEnvironment::default();
        let p = Position::new(1.0, 1.0);
        assert!(matches!(
            env.available_power(&p, &p),
            Err(Error::CoincidentPositions(_))
        ));
        assert!(matches!(
            env.received_power(&Position::new(0.0, 0.0), &p, &p),
            Err(Error::CoincidentPositions(_))
        ));
    }

    #[test]
    fn cancellation_angle_reference_value() {
        let env = RfEnvironment::default();
        // Positions realising d(E,tx) = 3, d(E,rx) = 3, d(tx,rx) = 2.
        let e = Position::new(0.0, 0.0);
        let tx = Position::new(3.0, 0.0);
        let rx = Position::new(7.0 / 3.0, (32.0f64 / 9.0).sqrt());
        let theta = env.phase_cancellation_angle(&e, &tx, &rx).unwrap().unwrap();
        assert_close(theta, THETA_C_3_3_2, 1e-12, "cancellation angle");
        let direct = env
            .cancellation_angle_from_distances(3.0, 3.0, 2.0, 1.0)
            .unwrap();
        assert_close(direct, THETA_C_3_3_2, 1e-15, "distance form");
    }

    #[test]
    fn cancellation_angle_can_be_absent() {
        let env = RfEnvironment::default();
        // Transmitter far out, both receiver legs tiny: |arccos arg| > 1.
        assert!(env
            .cancellation_angle_from_distances(100.0, 0.05, 0.05, 1.0)
            .is_none());
    }

    #[test]
    fn phase_difference_reference_value() {
        let env = RfEnvironment::default();
        let theta = env
            .phase_difference_of_arrival(
                &Position::new(0.0, 0.0),
                &Position::new(3.0, 0.0),
                &Position::new(3.0, 2.0),
            )
            .unwrap();
        assert_close(theta, PDA_EXAMPLE, 1e-12, "phase difference");
    }

    #[test]
    fn link_cancelled_honours_band_and_quarter_turn() {
        let env = RfEnvironment::default();
        let e = Position::new(0.0, 0.0);
        let tx = Position::new(3.0, 0.0);
        let rx = Position::new(3.0, 2.0);
        let theta_c = env.phase_cancellation_angle(&e, &tx, &rx).unwrap().unwrap();
        let theta_d = env.phase_difference_of_arrival(&e, &tx, &rx).unwrap();
        // Steer the phase exactly onto the null, then a quarter turn off it.
        let onto_null = theta_c - theta_d;
        assert!(env.link_cancelled(&e, &tx, &rx, onto_null).unwrap());
        assert!(!env
            .link_cancelled(&e, &tx, &rx, onto_null + std::f64::consts::FRAC_PI_2)
            .unwrap());
        assert!(!env
            .link_cancelled(&e, &tx, &rx, onto_null + env.cancellation_band_rad + 1e-9)
            .unwrap());
    }

    #[test]
    fn sector_beam_gain() {
        let env = RfEnvironment::with_reference_beam();
        let e = Position::new(0.0, 0.0);
        // On boresight (-45 deg).
        let on = env.exciter_gain_toward(&e, &Position::new(1.0, -1.0));
        assert_close(on, db_to_linear(4.0), 1e-12, "on boresight");
        // 45 deg off boresight, outside the 20 deg half-width.
        let off = env.exciter_gain_toward(&e, &Position::new(1.0, 0.0));
        assert_close(off, 0.01, 1e-12, "off beam floor");
    }

    #[test]
    fn sector_beam_wraps_at_180() {
        let mut env = RfEnvironment::default();
        env.exciter_beam = Some(SectorBeam {
            direction_deg: 170.0,
            width_deg: 40.0,
        });
        let e = Position::new(0.0, 0.0);
        // Target at -175 deg: 15 deg from boresight across the seam.
        let target = Position::new(-(175f64.to_radians().cos()).abs(), -(175f64.to_radians().sin()).abs());
        let g = env.exciter_gain_toward(&e, &target);
        assert_close(g, env.exciter_gain, 1e-12, "wrapped beam");
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let mut env = RfEnvironment::default();
        env.k0 = 0.9;
        env.k1 = 0.4;
        assert!(matches!(env.validate(), Err(Error::Domain(_))));
        let mut env = RfEnvironment::default();
        env.sensitivity_w = 0.0;
        assert!(env.validate().is_err());
        let mut env = RfEnvironment::default();
        env.cancellation_band_rad = 1.0; // >= pi/4
        assert!(env.validate().is_err());
    }

    proptest! {
        /// Farther is always weaker, on both legs.
        #[test]
        fn power_decreases_with_distance(
            d1 in 0.5f64..50.0,
            d2 in 0.5f64..50.0,
            grow in 1.01f64..3.0,
        ) {
            let env = RfEnvironment::default();
            let e = Position::new(0.0, 0.0);
            let tx = Position::new(d1, 0.0);
            let tx_far = Position::new(d1 * grow, 0.0);
            let rx = Position::new(d1, d2);
            let rx_far = Position::new(d1, d2 * grow);
            let base = env.received_power(&e, &tx, &rx).unwrap();
            prop_assert!(env.received_power(&e, &tx_far, &Position::new(d1 * grow, d2)).unwrap() < base);
            prop_assert!(env.received_power(&e, &tx, &rx_far).unwrap() < base);
        }

        /// Available power is linear in exciter power and quadratic in
        /// wavelength (halving the carrier doubles lambda).
        #[test]
        fn available_power_scalings(
            d in 0.5f64..40.0,
            p_scale in 0.1f64..10.0,
        ) {
            let env = RfEnvironment::default();
            let e = Position::new(0.0, 0.0);
            let tag = Position::new(0.0, d);
            let base = env.available_power(&e, &tag).unwrap();

            let mut scaled = env.clone();
            scaled.exciter_power_w *= p_scale;
            let p = scaled.available_power(&e, &tag).unwrap();
            prop_assert!((p / base - p_scale).abs() <= 1e-12 * p_scale);

            let mut half_carrier = env.clone();
            half_carrier.carrier_hz /= 2.0;
            let q = half_carrier.available_power(&e, &tag).unwrap();
            prop_assert!((q / base - 4.0).abs() <= 1e-12 * 4.0);
        }

        /// The geometric phase difference always lands in [0, 2 pi).
        #[test]
        fn phase_difference_range(
            tx_x in -20.0f64..20.0,
            tx_y in -20.0f64..20.0,
            rx_x in -20.0f64..20.0,
            rx_y in -20.0f64..20.0,
        ) {
            let env = RfEnvironment::default();
            let e = Position::new(21.0, 21.0);
            let tx = Position::new(tx_x, tx_y);
            let rx = Position::new(rx_x, rx_y);
            prop_assume!(tx.distance(&rx) > 1e-6);
            let theta = env.phase_difference_of_arrival(&e, &tx, &rx).unwrap();
            prop_assert!((0.0..std::f64::consts::TAU).contains(&theta));
        }
    }
}
