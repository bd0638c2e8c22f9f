//! Bitmaps, plain PBM files, and whole-image transmission.

use rayon::prelude::*;
use serde::Serialize;

use super::send::{send_bit, BinSchedule, BitReport, ReceivedBit};
use super::{Bit, Channel, ImperfectionModel};
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Binary image, row-major, 1 = black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Parse(format!(
                "{} bits do not fill a {width}x{height} bitmap",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Parse("bitmap pixels must be 0 or 1".into()));
        }
        Ok(Bitmap { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.width + x]
    }
}

/// Linear raster scan, row by row.
pub fn raster_encode(bm: &Bitmap) -> Vec<u8> {
    bm.bits.clone()
}

pub fn raster_decode(bits: &[u8], width: usize, height: usize) -> Result<Bitmap> {
    Bitmap::new(width, height, bits.to_vec())
}

/// Parses a plain (`P1`) PBM file. Comments run from `#` to end of line;
/// pixels may or may not be separated by whitespace.
pub fn parse_pbm(text: &str) -> Result<Bitmap> {
    let mut chars = text.chars().peekable();
    let mut token = || -> Option<String> {
        loop {
            match chars.peek()? {
                '#' => {
                    while chars.next().is_some_and(|c| c != '\n') {}
                }
                c if c.is_ascii_whitespace() => {
                    chars.next();
                }
                _ => break,
            }
        }
        let mut t = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_ascii_whitespace() || c == '#' {
                break;
            }
            t.push(c);
            chars.next();
        }
        Some(t)
    };
    if token().as_deref() != Some("P1") {
        return Err(Error::Parse("not a plain PBM file (expected magic P1)".into()));
    }
    let mut dim = |what: &str| -> Result<usize> {
        token()
            .ok_or_else(|| Error::Parse(format!("PBM header ends before the {what}")))?
            .parse()
            .map_err(|_| Error::Parse(format!("PBM {what} is not a number")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let mut bits = Vec::with_capacity(width * height);
    while let Some(t) = token() {
        for c in t.chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                other => return Err(Error::Parse(format!("unexpected character {other:?} in PBM data"))),
            }
        }
    }
    if bits.len() != width * height {
        return Err(Error::Parse(format!(
            "PBM declares {width}x{height} pixels but holds {}",
            bits.len()
        )));
    }
    Bitmap::new(width, height, bits)
}

/// Writes a plain PBM with lines of at most 70 characters.
pub fn write_pbm(bm: &Bitmap) -> String {
    let mut out = format!("P1\n{} {}\n", bm.width, bm.height);
    for row in bm.bits.chunks(bm.width.max(1)) {
        let mut line = String::new();
        for b in row {
            if line.len() + 2 > 70 {
                out.push_str(line.trim_end());
                out.push('\n');
                line.clear();
            }
            line.push(if *b == 1 { '1' } else { '0' });
            line.push(' ');
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmitStats {
    pub pixel_error_rate: f64,
    /// Bit-0 pixels received as 1, over bit-0 pixels that were not erased.
    pub err0: f64,
    /// Bit-1 pixels received as 0, over bit-1 pixels that were not erased.
    pub err1: f64,
    pub erasures: u64,
    pub seed: u64,
    pub trials_used: u64,
    pub bits: u64,
    pub clicks: u64,
    /// Photons that reached no detector; they may have passed the channel.
    pub lost_photons: u64,
    pub policy: String,
}

#[derive(Debug, Clone)]
pub struct Transmission {
    /// Erased pixels are written as white.
    pub received: Bitmap,
    pub stats: TransmitStats,
}

/// Sends every pixel as one bit, each on its own random substream.
pub fn transmit_image(
    bm: &Bitmap,
    channel: &Channel,
    model: &ImperfectionModel,
    schedule: &BinSchedule,
    seed: u64,
) -> Result<Transmission> {
    schedule.validate()?;
    model.validate()?;
    let bits = raster_encode(bm);
    let reports: Vec<BitReport> = bits
        .par_iter()
        .enumerate()
        .map(|(i, &b)| send_bit(Bit::from_value(b), channel, model, schedule, &mut substream(seed, Domain::Bit, i as u64)))
        .collect();

    let mut received = Vec::with_capacity(bits.len());
    let (mut wrong, mut erasures) = (0u64, 0u64);
    let mut sent = [0u64; 2];
    let mut flipped = [0u64; 2];
    let (mut trials, mut clicks, mut lost) = (0u64, 0u64, 0u64);
    for (&b, r) in bits.iter().zip(&reports) {
        trials += r.trials;
        clicks += r.clicks;
        lost += r.lost;
        let got = match r.received {
            ReceivedBit::Erasure => {
                erasures += 1;
                0
            }
            other => {
                sent[b as usize] += 1;
                let v = other.value().unwrap_or(0);
                if v != b {
                    flipped[b as usize] += 1;
                }
                v
            }
        };
        if got != b {
            wrong += 1;
        }
        received.push(got);
    }
    let rate = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Ok(Transmission {
        received: Bitmap::new(bm.width, bm.height, received)?,
        stats: TransmitStats {
            pixel_error_rate: rate(wrong, bits.len() as u64),
            err0: rate(flipped[0], sent[0]),
            err1: rate(flipped[1], sent[1]),
            erasures,
            seed,
            trials_used: trials,
            bits: bits.len() as u64,
            clicks,
            lost_photons: lost,
            policy: schedule.policy.to_string(),
        },
    })
}
