//! Partitioned Elias-Fano coding of strictly ascending `u64` lists.
//!
//! The list is cut into fixed-length segments. A first level records the
//! segment boundaries (the first ID of every segment plus the last ID of the
//! list) as a plain Elias-Fano sequence relative to the first ID; every
//! segment is then Elias-Fano coded relative to its own starting ID, so a
//! segment only pays for its local sub-universe.
//!
//! Bit layout, LSB-first (see `docs/FORMAT.md`):
//!
//! ```text
//! count:32
//! -- only when count > 0 --
//! segment_len:16  base:64  first_level_width:6  segment_width:6 x t
//! first level: upper (unary gaps, t+1 values) | lower (t+1 x width)
//! segment j:   upper (unary gaps)             | lower (len_j x width_j)
//! ```

use crate::bits::{bytes_to_words, words_to_bytes, BitReader, BitWriter};
use crate::error::{Error, Result};

pub const DEFAULT_SEGMENT_LEN: usize = 128;

const COUNT_BITS: u32 = 32;
const SEGMENT_LEN_BITS: u32 = 16;
const BASE_BITS: u32 = 64;
const WIDTH_BITS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EfParams {
    pub segment_len: usize,
    /// Largest ID the caller expects; encode rejects anything above it.
    pub universe_hint: Option<u64>,
}

impl Default for EfParams {
    fn default() -> Self {
        Self { segment_len: DEFAULT_SEGMENT_LEN, universe_hint: None }
    }
}

impl EfParams {
    pub fn with_segment_len(segment_len: usize) -> Self {
        Self { segment_len, universe_hint: None }
    }

    fn validate(&self) -> Result<()> {
        if self.segment_len < 2 || self.segment_len >= 1 << SEGMENT_LEN_BITS {
            return Err(Error::InvalidArgument(format!("segment length {} outside [2, 65535]", self.segment_len)));
        }
        Ok(())
    }
}

/// An encoded list. `len_bits` is the exact encoded length; the byte form
/// pads the tail with zero bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EfBitstream {
    words: Vec<u64>,
    len_bits: usize,
}

impl EfBitstream {
    pub fn len_bits(&self) -> usize {
        self.len_bits
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        words_to_bytes(&self.words, self.len_bits)
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self { words: bytes_to_words(bytes), len_bits: bytes.len() * 8 }
    }
}

/// Shape of one segment, exposed so callers can audit the space bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentInfo {
    pub len: usize,
    pub sub_universe: u128,
    pub lower_width: u32,
    /// Upper plus lower bits, excluding the header.
    pub payload_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub header_bits: usize,
    pub first_level_bits: usize,
    pub segments: Vec<SegmentInfo>,
}

impl Layout {
    pub fn total_bits(&self) -> usize {
        self.header_bits + self.first_level_bits + self.segments.iter().map(|s| s.payload_bits).sum::<usize>()
    }
}

/// Smallest `l` with `count * 2^l >= universe`. Never exceeds 63 for the
/// universes produced here: a segment of one element has sub-universe 1.
fn lower_width(universe: u128, count: usize) -> u32 {
    let count = count as u128;
    let mut l = 0;
    while count << l < universe {
        l += 1;
    }
    l
}

fn check_ascending(ids: &[u64], p: &EfParams) -> Result<()> {
    if let Some(w) = ids.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "list not strictly ascending at index {}: {} then {}",
            w + 1,
            ids[w],
            ids[w + 1]
        )));
    }
    if let (Some(hint), Some(&last)) = (p.universe_hint, ids.last()) {
        if last > hint {
            return Err(Error::InvalidArgument(format!("id {last} exceeds universe hint {hint}")));
        }
    }
    Ok(())
}

/// Boundaries relative to `ids[0]`: the start of every segment, then the last ID.
fn boundaries(ids: &[u64], s: usize) -> Vec<u64> {
    let base = ids[0];
    let mut out: Vec<u64> = ids.chunks(s).map(|c| c[0] - base).collect();
    out.push(ids[ids.len() - 1] - base);
    out
}

/// Sub-universe of segment `j` given the relative boundaries.
fn segment_universe(bounds: &[u64], j: usize) -> u128 {
    let t = bounds.len() - 1;
    if j + 1 < t {
        (bounds[j + 1] - bounds[j]) as u128
    } else {
        (bounds[t] - bounds[j]) as u128 + 1
    }
}

/// Bits used by a plain Elias-Fano sequence whose largest value is `max`.
fn plain_ef_bits(count: usize, max: u64, width: u32) -> usize {
    count + (max >> width) as usize + count * width as usize
}

pub fn layout(ids: &[u64], p: &EfParams) -> Result<Layout> {
    p.validate()?;
    check_ascending(ids, p)?;
    if ids.is_empty() {
        return Ok(Layout { header_bits: COUNT_BITS as usize, first_level_bits: 0, segments: vec![] });
    }
    let s = p.segment_len;
    let bounds = boundaries(ids, s);
    let t = bounds.len() - 1;
    let header_bits = (COUNT_BITS + SEGMENT_LEN_BITS + BASE_BITS + WIDTH_BITS) as usize + t * WIDTH_BITS as usize;
    let top = bounds[t];
    let fw = lower_width(top as u128 + 1, t + 1);
    let first_level_bits = plain_ef_bits(t + 1, top, fw);
    let segments = ids
        .chunks(s)
        .enumerate()
        .map(|(j, chunk)| {
            let universe = segment_universe(&bounds, j);
            let width = lower_width(universe, chunk.len());
            let max_rel = chunk[chunk.len() - 1] - chunk[0];
            SegmentInfo {
                len: chunk.len(),
                sub_universe: universe,
                lower_width: width,
                payload_bits: plain_ef_bits(chunk.len(), max_rel, width),
            }
        })
        .collect();
    Ok(Layout { header_bits, first_level_bits, segments })
}

/// Exact length in bits of `encode(ids, p)`.
pub fn encoded_size_bits(ids: &[u64], p: &EfParams) -> Result<usize> {
    Ok(layout(ids, p)?.total_bits())
}

fn write_plain_ef<I: IntoIterator<Item = u64> + Clone>(w: &mut BitWriter, values: I, width: u32) {
    let mut prev_high = 0u64;
    for v in values.clone() {
        let high = v >> width;
        w.write_unary(high - prev_high);
        prev_high = high;
    }
    for v in values {
        w.write_bits(v, width);
    }
}

fn read_plain_ef(r: &mut BitReader<'_>, count: usize, width: u32, out: &mut Vec<u64>) -> Result<()> {
    let start = out.len();
    let mut high = 0u64;
    for _ in 0..count {
        let gap = r.read_unary()?;
        high = high.checked_add(gap).ok_or_else(|| Error::decode("upper bits overflow"))?;
        out.push(high);
    }
    for slot in &mut out[start..] {
        let low = r.read_bits(width)?;
        if width > 0 && *slot >> (64 - width) != 0 {
            return Err(Error::decode("value overflow"));
        }
        *slot = (*slot << width) | low;
    }
    Ok(())
}

pub fn encode(ids: &[u64], p: &EfParams) -> Result<EfBitstream> {
    let shape = layout(ids, p)?;
    let mut w = BitWriter::new();
    w.write_bits(ids.len() as u64, COUNT_BITS);
    if !ids.is_empty() {
        let s = p.segment_len;
        let bounds = boundaries(ids, s);
        let t = bounds.len() - 1;
        let fw = lower_width(bounds[t] as u128 + 1, t + 1);
        let stored = if ids.len() <= s { ids.len().max(2) } else { s };
        w.write_bits(stored as u64, SEGMENT_LEN_BITS);
        w.write_bits(ids[0], BASE_BITS);
        w.write_bits(fw as u64, WIDTH_BITS);
        for seg in &shape.segments {
            w.write_bits(seg.lower_width as u64, WIDTH_BITS);
        }
        write_plain_ef(&mut w, bounds.iter().copied(), fw);
        for (chunk, seg) in ids.chunks(s).zip(&shape.segments) {
            let start = chunk[0];
            write_plain_ef(&mut w, chunk.iter().map(|&x| x - start), seg.lower_width);
        }
    }
    let (words, len_bits) = w.into_parts();
    debug_assert_eq!(len_bits, shape.total_bits());
    Ok(EfBitstream { words, len_bits })
}

pub fn decode(stream: &EfBitstream) -> Result<Vec<u64>> {
    let mut r = BitReader::new(&stream.words, stream.len_bits);
    let n = r.read_bits(COUNT_BITS)? as usize;
    if n == 0 {
        return Ok(Vec::new());
    }
    // every element costs at least one upper bit
    if n > r.remaining() {
        return Err(Error::decode(format!("count {n} exceeds stream length")));
    }
    let s = r.read_bits(SEGMENT_LEN_BITS)? as usize;
    if s < 2 {
        return Err(Error::decode(format!("segment length {s} < 2")));
    }
    let base = r.read_bits(BASE_BITS)?;
    let t = n.div_ceil(s);
    if t == 1 && s != n.max(2) {
        return Err(Error::decode(format!("segment length {s} is not canonical for {n} ids")));
    }
    let fw = r.read_bits(WIDTH_BITS)? as u32;
    let mut widths = Vec::with_capacity(t);
    for _ in 0..t {
        widths.push(r.read_bits(WIDTH_BITS)? as u32);
    }
    let mut bounds = Vec::with_capacity(t + 1);
    read_plain_ef(&mut r, t + 1, fw, &mut bounds)?;
    if bounds[0] != 0 || bounds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::decode("first level is not a valid boundary list"));
    }
    if fw != lower_width(bounds[t] as u128 + 1, t + 1) {
        return Err(Error::decode("first level width mismatch"));
    }
    if t > 1 && bounds[..t].windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::decode("empty segment"));
    }
    if base.checked_add(bounds[t]).is_none() {
        return Err(Error::decode("ids overflow u64"));
    }

    let mut out = Vec::with_capacity(n);
    let mut rel = Vec::with_capacity(s);
    for (j, &width) in widths.iter().enumerate() {
        let len = if j + 1 < t { s } else { n - s * (t - 1) };
        let universe = segment_universe(&bounds, j);
        if width != lower_width(universe, len) {
            return Err(Error::decode(format!("segment {j} width mismatch")));
        }
        rel.clear();
        read_plain_ef(&mut r, len, width, &mut rel)?;
        if rel[0] != 0 || rel.windows(2).any(|w| w[0] >= w[1]) || rel[len - 1] as u128 >= universe {
            return Err(Error::decode(format!("segment {j} is not strictly ascending")));
        }
        if j + 1 == t && rel[len - 1] != bounds[t] - bounds[j] {
            return Err(Error::decode("last id does not match the first level"));
        }
        let start = base + bounds[j];
        out.extend(rel.iter().map(|&v| start + v));
    }
    // trailing bits may only be byte padding
    if r.remaining() >= 8 {
        return Err(Error::decode("trailing data after the last segment"));
    }
    Ok(out)
}
