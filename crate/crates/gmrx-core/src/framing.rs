//! Packet framing: preamble, header, pilot-interleaved payload, and the
//! geometry of two partially overlapping frames.
//!
//! Frames are BPSK: bit 0 maps to +1, bit 1 to -1. A frame is
//! `[preamble | header | payload region]`. The preamble is a fixed
//! pseudo-random +/-1 sequence shared by all transmitters (receivers
//! correlate against it to find a second packet). The header carries the
//! total frame length in big-endian bits. Within the payload region, every
//! position with `slot % pilot_period == 0` is a pilot fixed at +1; the rest
//! carry payload bits.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;

/// Off-peak autocorrelation screen for generated preambles, as a fraction of
/// the peak. Sequences failing it are re-drawn deterministically.
pub const PREAMBLE_AUTOCORR_LIMIT: f64 = 0.35;

/// Static layout of one packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PacketSpec {
    pub preamble_len: usize,
    pub header_len: usize,
    pub payload_len: usize,
    pub pilot_period: usize,
}

impl PacketSpec {
    pub fn validate(&self) -> Result<()> {
        if self.preamble_len == 0 {
            return Err(Error::Parameter("preamble_len must be >= 1".into()));
        }
        if self.pilot_period < 2 {
            return Err(Error::Parameter("pilot_period must be >= 2".into()));
        }
        if self.header_len == 0 || self.header_len > 32 {
            return Err(Error::Parameter("header_len must be in 1..=32".into()));
        }
        let l = self.frame_len();
        if l >= (1usize << self.header_len) {
            return Err(Error::Parameter(format!(
                "frame length {l} does not fit in a {}-bit header",
                self.header_len
            )));
        }
        Ok(())
    }

    /// Number of payload-region slots (pilots plus data) needed to carry
    /// `payload_len` data symbols at one pilot per `pilot_period` slots.
    pub fn payload_region_len(&self) -> usize {
        if self.payload_len == 0 {
            return 0;
        }
        let data_per_block = self.pilot_period - 1;
        let full = self.payload_len / data_per_block;
        let rem = self.payload_len % data_per_block;
        full * self.pilot_period + if rem > 0 { rem + 1 } else { 0 }
    }

    pub fn frame_len(&self) -> usize {
        self.preamble_len + self.header_len + self.payload_region_len()
    }

    pub fn num_pilots(&self) -> usize {
        self.payload_region_len() - self.payload_len
    }

    /// Inverse layout helper: choose `payload_len` so the frame has exactly
    /// `frame_len` symbols. Fails when no payload length fits.
    pub fn for_frame_len(
        preamble_len: usize,
        header_len: usize,
        pilot_period: usize,
        frame_len: usize,
    ) -> Result<PacketSpec> {
        let overhead = preamble_len + header_len;
        let region = frame_len
            .checked_sub(overhead)
            .ok_or_else(|| Error::Parameter(format!("frame_len {frame_len} shorter than overhead {overhead}")))?;
        // Data symbols in a region of `region` slots with leading pilots.
        let payload_len = region - region.div_ceil(pilot_period);
        let spec = PacketSpec { preamble_len, header_len, payload_len, pilot_period };
        spec.validate()?;
        if spec.frame_len() != frame_len {
            return Err(Error::Parameter(format!(
                "no payload length yields frame_len {frame_len} at pilot_period {pilot_period} \
                 (region of {region} slots would end in a lone pilot)"
            )));
        }
        Ok(spec)
    }
}

/// One modulated packet.
#[derive(Clone, Debug)]
pub struct Frame {
    pub spec: PacketSpec,
    /// BPSK symbols, +/-1.
    pub symbols: Vec<i8>,
    /// True exactly at pilot positions (payload region only; the preamble is
    /// known to receivers but is not part of the pilot pattern).
    pub pilot_map: Vec<bool>,
    pub header_span: Range<usize>,
    pub payload_span: Range<usize>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Absolute indices of payload data symbols (payload region minus pilots).
    pub fn data_positions(&self) -> Vec<usize> {
        self.payload_span.clone().filter(|&i| !self.pilot_map[i]).collect()
    }

    /// Payload bits recovered from the frame's own symbols.
    pub fn payload_bits(&self) -> Vec<u8> {
        self.data_positions().iter().map(|&i| demap_bit(self.symbols[i])).collect()
    }
}

#[inline]
pub fn map_bit(bit: u8) -> i8 {
    if bit == 0 {
        1
    } else {
        -1
    }
}

#[inline]
pub fn demap_bit(sym: i8) -> u8 {
    if sym > 0 {
        0
    } else {
        1
    }
}

/// Maximum absolute aperiodic autocorrelation at nonzero lags, normalized by
/// the sequence length.
fn off_peak_autocorr(s: &[i8]) -> f64 {
    let n = s.len();
    let mut worst = 0.0f64;
    for lag in 1..n {
        let sum: i64 = (0..n - lag).map(|k| (s[k] * s[k + lag]) as i64).sum();
        worst = worst.max(sum.abs() as f64 / n as f64);
    }
    worst
}

/// Deterministic +/-1 preamble of length `len`. Draws from a ChaCha stream
/// seeded by `seed` and re-draws with `seed+1, seed+2, ...` until the
/// off-peak autocorrelation screen passes. Lengths 1 and 2 skip the screen
/// (a 2-symbol sequence always has lag-1 autocorrelation 1/2).
pub fn gen_preamble(len: usize, seed: u64) -> Vec<i8> {
    assert!(len >= 1, "preamble length must be >= 1");
    let mut attempt = seed;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt);
        let s: Vec<i8> = (0..len).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        if len <= 2 || off_peak_autocorr(&s) < PREAMBLE_AUTOCORR_LIMIT {
            return s;
        }
        attempt = attempt.wrapping_add(1);
    }
}

/// Header payload: the total frame length, big-endian, `header_len` bits.
pub fn encode_header_bits(frame_len: usize, header_len: usize) -> Vec<u8> {
    (0..header_len).map(|i| ((frame_len >> (header_len - 1 - i)) & 1) as u8).collect()
}

pub fn decode_header_bits(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// Assemble a frame from payload bits. `seed` selects the preamble sequence;
/// all frames of one deployment share it.
pub fn build_frame(spec: &PacketSpec, payload_bits: &[u8], seed: u64) -> Result<Frame> {
    spec.validate()?;
    if payload_bits.len() != spec.payload_len {
        return Err(Error::Shape(format!(
            "payload has {} bits, spec requires {}",
            payload_bits.len(),
            spec.payload_len
        )));
    }
    if let Some(bad) = payload_bits.iter().find(|&&b| b > 1) {
        return Err(Error::Parameter(format!("payload bits must be 0/1, found {bad}")));
    }

    let frame_len = spec.frame_len();
    let mut symbols = Vec::with_capacity(frame_len);
    let mut pilot_map = vec![false; frame_len];

    symbols.extend_from_slice(&gen_preamble(spec.preamble_len, seed));
    for bit in encode_header_bits(frame_len, spec.header_len) {
        symbols.push(map_bit(bit));
    }
    let header_span = spec.preamble_len..spec.preamble_len + spec.header_len;
    let payload_start = header_span.end;

    let mut bits = payload_bits.iter();
    for slot in 0..spec.payload_region_len() {
        if slot % spec.pilot_period == 0 {
            pilot_map[payload_start + slot] = true;
            symbols.push(1);
        } else {
            symbols.push(map_bit(*bits.next().expect("region sized to payload")));
        }
    }
    debug_assert!(bits.next().is_none());

    Ok(Frame {
        spec: *spec,
        symbols,
        pilot_map,
        header_span,
        payload_span: payload_start..frame_len,
    })
}

/// Two frames at one receiver, the second starting `offset` symbols after
/// the first. `power_ratio_db` is the interferer's average receive power
/// relative to the desired user's (0 = equal, negative = weaker).
#[derive(Clone, Debug)]
pub struct CollisionScene {
    pub frame_a: Frame,
    pub frame_b: Frame,
    pub offset: usize,
    pub power_ratio_db: f64,
}

impl CollisionScene {
    /// Length of the reception window covering both packets.
    pub fn window_len(&self) -> usize {
        self.frame_a.len().max(self.offset + self.frame_b.len())
    }

    /// Absolute-time range where both packets are on the air.
    pub fn overlap(&self) -> Range<usize> {
        let start = self.offset.min(self.frame_a.len());
        let end = (self.offset + self.frame_b.len()).min(self.frame_a.len());
        start..end.max(start)
    }

    /// Desired user's symbol at absolute time `t`, 0 when silent.
    #[inline]
    pub fn symbol_a(&self, t: usize) -> i8 {
        self.frame_a.symbols.get(t).copied().unwrap_or(0)
    }

    /// Interferer's symbol at absolute time `t`, 0 when silent.
    #[inline]
    pub fn symbol_b(&self, t: usize) -> i8 {
        if t < self.offset {
            0
        } else {
            self.frame_b.symbols.get(t - self.offset).copied().unwrap_or(0)
        }
    }
}

/// Place `frame_b` starting `offset` symbols into `frame_a`'s reception.
/// `offset == frame_a.len()` is allowed and means no overlap.
pub fn make_collision(frame_a: Frame, frame_b: Frame, offset: usize) -> Result<CollisionScene> {
    if offset > frame_a.len() {
        return Err(Error::Parameter(format!(
            "offset {offset} beyond first frame end {}",
            frame_a.len()
        )));
    }
    Ok(CollisionScene { frame_a, frame_b, offset, power_ratio_db: 0.0 })
}
