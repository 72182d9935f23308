//! Frame layout, CRC-16, and FM0 baseband coding.
//!
//! On air a transmission is a long time-based preamble of repeated 0xBB
//! bytes (long enough that any duty-cycled listener samples it at least
//! once), an 0xAA start delimiter, an 8-byte body, and a 2-byte CRC. The
//! byte stream is FM0 coded: the line level flips at every bit boundary
//! and once more mid-bit for a data 0, so the decoder only needs
//! transition timing, never absolute polarity.
//!
//! This module works in the symbol domain, on half-bit levels. Mapping
//! symbols onto microseconds is the MAC's job.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PREAMBLE_BYTE: u8 = 0xBB;
pub const SFD_BYTE: u8 = 0xAA;
/// Message type carried by flooded frames.
pub const MESSAGE_TYPE_BROADCAST: u8 = 0xFF;

/// Bits on air after the preamble: SFD + body + CRC, 11 bytes.
pub const AIR_BITS_AFTER_PREAMBLE: usize = 11 * 8;

// ---------------------------------------------------------------------------
// Frame
// ---------------------------------------------------------------------------

/// The fixed 8-byte frame body (before SFD/CRC framing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub sender: u8,
    pub receiver: u8,
    pub message_type: u8,
    pub message_id: u8,
    pub payload: [u8; 4],
}

impl Frame {
    pub fn body_bytes(&self) -> [u8; 8] {
        let mut b = [0u8; 8];
        b[0] = self.sender;
        b[1] = self.receiver;
        b[2] = self.message_type;
        b[3] = self.message_id;
        b[4..8].copy_from_slice(&self.payload);
        b
    }

    pub fn from_body(body: &[u8; 8]) -> Self {
        Self {
            sender: body[0],
            receiver: body[1],
            message_type: body[2],
            message_id: body[3],
            payload: [body[4], body[5], body[6], body[7]],
        }
    }

    pub fn crc(&self) -> u16 {
        crc16(&self.body_bytes())
    }
}

/// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection,
/// no output xor. Check value: `crc16(b"123456789") == 0x29B1`.
pub fn crc16(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= (byte as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

// ---------------------------------------------------------------------------
// Bit timing
// ---------------------------------------------------------------------------

/// Symbol clocking, expressed the way the radio hardware states it: MCU
/// clock cycles per bit at 16 MHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitTiming {
    bit_length_cycles: u32,
}

pub const SYMBOL_CLOCK_HZ: f64 = 16e6;
const SUPPORTED_BIT_LENGTHS: [u32; 3] = [1600, 16_000, 31_250];

impl BitTiming {
    /// `cycles` must be one of the hardware-supported bit lengths
    /// (1600, 16000, 31250), i.e. 10 kbps, 1 kbps, or 512 bps.
    pub fn from_cycles(cycles: u32) -> Result<Self> {
        if SUPPORTED_BIT_LENGTHS.contains(&cycles) {
            Ok(Self {
                bit_length_cycles: cycles,
            })
        } else {
            Err(Error::Domain(format!(
                "unsupported bit length {cycles} cycles (supported: {SUPPORTED_BIT_LENGTHS:?})"
            )))
        }
    }

    pub fn bit_length_cycles(&self) -> u32 {
        self.bit_length_cycles
    }

    pub fn data_rate_bps(&self) -> f64 {
        SYMBOL_CLOCK_HZ / self.bit_length_cycles as f64
    }

    pub fn bit_duration_us(&self) -> f64 {
        self.bit_length_cycles as f64 / (SYMBOL_CLOCK_HZ / 1e6)
    }

    /// Airtime of the post-preamble portion of one frame, microseconds.
    pub fn frame_body_airtime_us(&self) -> f64 {
        AIR_BITS_AFTER_PREAMBLE as f64 * self.bit_duration_us()
    }
}

impl Default for BitTiming {
    /// 10 kbps, the rate all the reference timing constants assume.
    fn default() -> Self {
        Self {
            bit_length_cycles: 1600,
        }
    }
}

// ---------------------------------------------------------------------------
// FM0 coding
// ---------------------------------------------------------------------------

/// FM0-code `bits` into half-bit line levels, starting from
/// `initial_level` (the idle level preceding the first symbol).
pub fn fm0_encode(bits: impl IntoIterator<Item = bool>, initial_level: bool) -> Vec<bool> {
    let mut level = initial_level;
    let mut out = Vec::new();
    for bit in bits {
        // Transition at the symbol boundary, always.
        level = !level;
        out.push(level);
        // Data 0 transitions again mid-symbol.
        if !bit {
            level = !level;
        }
        out.push(level);
    }
    out
}

fn byte_bits(byte: u8) -> impl Iterator<Item = bool> {
    (0..8).map(move |i| byte & (0x80 >> i) != 0)
}

fn bytes_bits(bytes: &[u8]) -> impl Iterator<Item = bool> + '_ {
    bytes.iter().copied().flat_map(byte_bits)
}

/// Run-length encoding of a half-bit level trace; compact form for golden
/// files and logs.
pub fn to_run_lengths(halves: &[bool]) -> Vec<(bool, u32)> {
    let mut out: Vec<(bool, u32)> = Vec::new();
    for &h in halves {
        match out.last_mut() {
            Some((level, n)) if *level == h => *n += 1,
            _ => out.push((h, 1)),
        }
    }
    out
}

pub fn from_run_lengths(rle: &[(bool, u32)]) -> Vec<bool> {
    rle.iter()
        .flat_map(|&(level, n)| std::iter::repeat(level).take(n as usize))
        .collect()
}

// ---------------------------------------------------------------------------
// Frame encoding
// ---------------------------------------------------------------------------

fn air_bytes(frame: &Frame, crc: u16, preamble_bytes: usize) -> Vec<u8> {
    let mut bytes = vec![PREAMBLE_BYTE; preamble_bytes];
    bytes.push(SFD_BYTE);
    bytes.extend_from_slice(&frame.body_bytes());
    bytes.extend_from_slice(&crc.to_be_bytes());
    bytes
}

/// FM0-code a full transmission: preamble, SFD, body, CRC.
///
/// The preamble is quantized to whole bytes (`preamble_us` divided by the
/// byte duration, rounded) and must come out at two bytes or more so a
/// decoder always has 16 pattern bits to lock onto.
pub fn encode_frame(frame: &Frame, preamble_us: f64, timing: &BitTiming) -> Result<Vec<bool>> {
    let byte_us = 8.0 * timing.bit_duration_us();
    let preamble_bytes = (preamble_us / byte_us).round() as i64;
    if preamble_bytes < 2 {
        return Err(Error::Domain(format!(
            "preamble of {preamble_us} us is under the 2-byte minimum at this rate"
        )));
    }
    let bytes = air_bytes(frame, frame.crc(), preamble_bytes as usize);
    Ok(fm0_encode(bytes_bits(&bytes), true))
}

// ---------------------------------------------------------------------------
// Stream decoding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedFrame {
    pub frame: Frame,
    pub crc_ok: bool,
}

/// Result of scanning a half-bit level stream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodeOutput {
    pub frames: Vec<DecodedFrame>,
    /// Stretches of plausible FM0 activity (>= 16 bits) that never turned
    /// into a frame; what a listener wastes energy on.
    pub false_preambles: u32,
    /// Syncs whose body ended early or lost FM0 coherence mid-frame.
    pub truncated_frames: u32,
}

const SYNC_BYTES: [u8; 3] = [PREAMBLE_BYTE, PREAMBLE_BYTE, SFD_BYTE];
const SYNC_HALVES: usize = SYNC_BYTES.len() * 16;
const BODY_HALVES: usize = 10 * 16; // body + CRC
const PREAMBLE_BYTE_HALVES: usize = 16;
const MIN_ACTIVITY_HALVES: usize = 32; // 16 bits

/// `Some(inverted)` when `window` equals `template` up to polarity.
fn match_template(window: &[bool], template: &[bool]) -> Option<bool> {
    if window.iter().zip(template).all(|(w, t)| w == t) {
        Some(false)
    } else if window.iter().zip(template).all(|(w, t)| w != t) {
        Some(true)
    } else {
        None
    }
}

/// Scan a level trace for frames. Sync is a polarity-insensitive match of
/// the last two preamble bytes plus the SFD at half-bit granularity, so no
/// prior bit alignment is assumed.
pub fn decode_stream(halves: &[bool]) -> DecodeOutput {
    // 0xBB codes with an even number of transitions, so the preamble
    // pattern repeats exactly every 16 halves and one template (plus its
    // inverse) covers any number of preamble bytes.
    let template = fm0_encode(bytes_bits(&SYNC_BYTES), true);
    let mut out = DecodeOutput::default();
    let mut covered = vec![false; halves.len()];
    let mut i = 0;
    while i + SYNC_HALVES <= halves.len() {
        let Some(inverted) = match_template(&halves[i..i + SYNC_HALVES], &template) else {
            i += 1;
            continue;
        };
        // Attach any earlier whole preamble bytes to this sync so they are
        // not mistaken for unframed activity later.
        let mut span_start = i;
        while span_start >= PREAMBLE_BYTE_HALVES {
            let chunk = &halves[span_start - PREAMBLE_BYTE_HALVES..span_start];
            if match_template(chunk, &template[..PREAMBLE_BYTE_HALVES]) == Some(inverted) {
                span_start -= PREAMBLE_BYTE_HALVES;
            } else {
                break;
            }
        }
        let body_start = i + SYNC_HALVES;
        if body_start + BODY_HALVES > halves.len() {
            out.truncated_frames += 1;
            covered[span_start..].iter_mut().for_each(|c| *c = true);
            return out;
        }
        match decode_body(&halves[body_start - 1..body_start + BODY_HALVES]) {
            Some(decoded) => {
                out.frames.push(decoded);
                covered[span_start..body_start + BODY_HALVES]
                    .iter_mut()
                    .for_each(|c| *c = true);
                i = body_start + BODY_HALVES;
            }
            None => {
                // Lost FM0 coherence mid-body: a cut-off transmission.
                out.truncated_frames += 1;
                covered[span_start..body_start].iter_mut().for_each(|c| *c = true);
                i = body_start;
            }
        }
    }
    out.false_preambles = count_unframed_activity(halves, &covered);
    out
}

/// Decode 80 bits from `halves[1..]`; `halves[0]` is the last sync level,
/// needed to verify the first boundary transition.
fn decode_body(halves: &[bool]) -> Option<DecodedFrame> {
    let mut bytes = [0u8; 10];
    let mut prev = halves[0];
    for k in 0..80 {
        let h0 = halves[1 + 2 * k];
        let h1 = halves[2 + 2 * k];
        if h0 == prev {
            return None; // missing boundary transition
        }
        if h0 == h1 {
            bytes[k / 8] |= 0x80 >> (k % 8);
        }
        prev = h1;
    }
    let body: &[u8; 8] = bytes[..8].try_into().expect("8 bytes");
    let crc_read = u16::from_be_bytes([bytes[8], bytes[9]]);
    Some(DecodedFrame {
        frame: Frame::from_body(body),
        crc_ok: crc16(body) == crc_read,
    })
}

/// Count maximal stretches that look like live FM0 (no level held longer
/// than two halves) of at least 16 bits, outside any decoded frame.
fn count_unframed_activity(halves: &[bool], covered: &[bool]) -> u32 {
    let mut count = 0;
    let mut seg_start: Option<usize> = None;
    let mut run = 0usize;
    let mut close = |start: Option<usize>, end: usize, covered: &[bool]| {
        if let Some(s) = start {
            let uncovered = covered[s..end].iter().filter(|c| !*c).count();
            if uncovered >= MIN_ACTIVITY_HALVES {
                count += 1;
            }
        }
    };
    for j in 0..halves.len() {
        run = if j > 0 && halves[j] == halves[j - 1] {
            run + 1
        } else {
            1
        };
        if run <= 2 {
            seg_start.get_or_insert(j);
        } else if run == 3 {
            // Level held too long: the segment ended two halves back.
            close(seg_start.take(), j - 2, covered);
        }
    }
    close(seg_start.take(), halves.len(), covered);
    count
}

// ===========================================================================
// Tests
// ===========================================================================
