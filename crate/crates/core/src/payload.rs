//! Adjacency payloads and the graph merge operator.
//!
//! A payload is either a *pivot* (the consolidated neighbor lists of a vertex)
//! or a *delta* (edge additions and removals to apply on top of whatever is
//! older). Every list is strictly ascending. Deltas compose like the set
//! functions `S -> (S - removes) + adds`, which makes delta merging
//! associative, so compaction order never changes what a read returns.
//!
//! Wire format:
//!
//! ```text
//! header:1   bits 0-1 kind (0 pivot, 1 delta), bit 2 directed,
//!            bits 3-4 codec (0 raw, 1 elias-fano), bit 5 creates
//!            (deltas only), bits 6-7 zero
//! lists      out-add, out-remove [, in-add, in-remove when directed]
//!            omitted entirely when every list is empty
//! list       varint count, then either count x u64 LE (raw), or
//!            varint byte_len + partitioned Elias-Fano bytes when the codec
//!            is elias-fano and count >= 8
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ef::{self, EfBitstream, EfParams};
use crate::error::{Error, Result};
use crate::varint;

/// Lists shorter than this are always stored raw.
pub const EF_MIN_LIST_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMode {
    Undirected,
    Directed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodecMode {
    Raw,
    EliasFano,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    Pivot,
    Delta,
}

/// Which neighbor list of a vertex an edge half-update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOp {
    Add,
    Remove,
}

/// One direction of a payload. A pivot only ever has `adds` (its members).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeList {
    pub adds: Vec<u64>,
    pub removes: Vec<u64>,
}

impl EdgeList {
    pub fn is_empty(&self) -> bool {
        self.adds.is_empty() && self.removes.is_empty()
    }

    /// The label for `id`, if this list mentions it.
    pub fn label(&self, id: u64) -> Option<EdgeOp> {
        if self.adds.binary_search(&id).is_ok() {
            Some(EdgeOp::Add)
        } else if self.removes.binary_search(&id).is_ok() {
            Some(EdgeOp::Remove)
        } else {
            None
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        for (name, list) in [("add", &self.adds), ("remove", &self.removes)] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::decode(format!("{what} {name} list not strictly ascending")));
            }
        }
        if !intersection_is_empty(&self.adds, &self.removes) {
            return Err(Error::decode(format!("{what} list both adds and removes an id")));
        }
        Ok(())
    }

    /// Applies `newer` on top of `self`, both read as deltas.
    fn compose(&self, newer: &EdgeList) -> EdgeList {
        EdgeList {
            adds: union(&difference(&self.adds, &newer.removes), &newer.adds),
            removes: union(&difference(&self.removes, &newer.adds), &newer.removes),
        }
    }

    /// Applies the delta `newer` to a pivot member list.
    fn apply_to_members(&self, newer: &EdgeList) -> EdgeList {
        EdgeList { adds: union(&difference(&self.adds, &newer.removes), &newer.adds), removes: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyPayload {
    pub kind: PayloadKind,
    pub mode: DirectionMode,
    pub out: EdgeList,
    /// Always empty for undirected graphs.
    pub inc: EdgeList,
    /// Set on deltas that bring the vertex into existence (any edge add
    /// does). A chain of deltas without it describes a vertex that may not
    /// exist, e.g. one that only saw edge removals.
    pub creates: bool,
}

impl AdjacencyPayload {
    pub fn empty_pivot(mode: DirectionMode) -> Self {
        Self { kind: PayloadKind::Pivot, mode, out: EdgeList::default(), inc: EdgeList::default(), creates: false }
    }

    pub fn empty_delta(mode: DirectionMode) -> Self {
        Self { kind: PayloadKind::Delta, ..Self::empty_pivot(mode) }
    }

    /// Builds a pivot from unsorted neighbor IDs; duplicates collapse.
    pub fn pivot(mode: DirectionMode, out: impl IntoIterator<Item = u64>, inc: impl IntoIterator<Item = u64>) -> Self {
        let sorted = |it: Box<dyn Iterator<Item = u64> + '_>| {
            let mut v: Vec<u64> = it.collect();
            v.sort_unstable();
            v.dedup();
            EdgeList { adds: v, removes: vec![] }
        };
        let inc = sorted(Box::new(inc.into_iter()));
        assert!(mode == DirectionMode::Directed || inc.is_empty(), "undirected payloads have no in-list");
        Self { kind: PayloadKind::Pivot, mode, out: sorted(Box::new(out.into_iter())), inc, creates: false }
    }

    /// A delta carrying exactly one labeled edge.
    pub fn single_edge(mode: DirectionMode, dir: Direction, op: EdgeOp, neighbor: u64) -> Self {
        let mut p = Self::empty_delta(mode);
        p.creates = op == EdgeOp::Add;
        let list = p.list_mut(dir);
        match op {
            EdgeOp::Add => list.adds.push(neighbor),
            EdgeOp::Remove => list.removes.push(neighbor),
        }
        p
    }

    pub fn is_pivot(&self) -> bool {
        self.kind == PayloadKind::Pivot
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty() && self.inc.is_empty()
    }

    pub fn list(&self, dir: Direction) -> &EdgeList {
        match dir {
            Direction::Out => &self.out,
            Direction::In => &self.inc,
        }
    }

    pub fn list_mut(&mut self, dir: Direction) -> &mut EdgeList {
        match dir {
            Direction::Out => &mut self.out,
            Direction::In => &mut self.inc,
        }
    }

    /// Neighbors a reader sees. For a delta without a pivot beneath, these
    /// are its additions.
    pub fn out_neighbors(&self) -> &[u64] {
        &self.out.adds
    }

    pub fn in_neighbors(&self) -> &[u64] {
        &self.inc.adds
    }

    /// Total neighbor count used as the vertex degree (out plus in).
    pub fn degree(&self) -> usize {
        self.out.adds.len() + self.inc.adds.len()
    }

    /// Turns a delta into a pivot by applying it to an empty neighborhood.
    pub fn into_resolved(mut self) -> Self {
        self.kind = PayloadKind::Pivot;
        self.creates = false;
        self.out.removes.clear();
        self.inc.removes.clear();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.out.validate("out")?;
        self.inc.validate("in")?;
        if self.kind == PayloadKind::Pivot && !(self.out.removes.is_empty() && self.inc.removes.is_empty()) {
            return Err(Error::decode("pivot payload carries remove labels"));
        }
        if self.kind == PayloadKind::Pivot && self.creates {
            return Err(Error::decode("pivot payload carries the creates flag"));
        }
        if self.mode == DirectionMode::Undirected && !self.inc.is_empty() {
            return Err(Error::decode("undirected payload carries an in-list"));
        }
        Ok(())
    }
}

/// Accumulates labeled edges for one vertex; a later operation on the same
/// neighbor replaces an earlier one.
#[derive(Debug, Clone)]
pub struct DeltaBuilder {
    mode: DirectionMode,
    out: BTreeMap<u64, EdgeOp>,
    inc: BTreeMap<u64, EdgeOp>,
    creates: bool,
}

impl DeltaBuilder {
    pub fn new(mode: DirectionMode) -> Self {
        Self { mode, out: BTreeMap::new(), inc: BTreeMap::new(), creates: false }
    }

    pub fn push(&mut self, dir: Direction, op: EdgeOp, neighbor: u64) -> &mut Self {
        assert!(self.mode == DirectionMode::Directed || dir == Direction::Out);
        self.creates |= op == EdgeOp::Add;
        match dir {
            Direction::Out => self.out.insert(neighbor, op),
            Direction::In => self.inc.insert(neighbor, op),
        };
        self
    }

    pub fn build(&self) -> AdjacencyPayload {
        let split = |m: &BTreeMap<u64, EdgeOp>| {
            let mut list = EdgeList::default();
            for (&id, &op) in m {
                match op {
                    EdgeOp::Add => list.adds.push(id),
                    EdgeOp::Remove => list.removes.push(id),
                }
            }
            list
        };
        AdjacencyPayload {
            kind: PayloadKind::Delta,
            mode: self.mode,
            out: split(&self.out),
            inc: split(&self.inc),
            creates: self.creates,
        }
    }
}

fn union(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn difference(a: &[u64], b: &[u64]) -> Vec<u64> {
    if b.is_empty() {
        return a.to_vec();
    }
    let mut out = Vec::with_capacity(a.len());
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            out.push(x);
        }
    }
    out
}

fn intersection_is_empty(a: &[u64], b: &[u64]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => return false,
        }
    }
    true
}

/// Combines two payloads of the same vertex, `newer` written after `older`.
///
/// Pivot on top replaces everything; a delta on a pivot yields a pivot; two
/// deltas yield a delta whose remove labels keep masking older pivots.
pub fn merge_values(older: &AdjacencyPayload, newer: &AdjacencyPayload) -> Result<AdjacencyPayload> {
    if older.mode != newer.mode {
        return Err(Error::decode("merging payloads of different direction modes"));
    }
    if newer.kind == PayloadKind::Pivot {
        return Ok(newer.clone());
    }
    let merged = match older.kind {
        PayloadKind::Pivot => AdjacencyPayload {
            kind: PayloadKind::Pivot,
            mode: older.mode,
            out: older.out.apply_to_members(&newer.out),
            inc: older.inc.apply_to_members(&newer.inc),
            creates: false,
        },
        PayloadKind::Delta => AdjacencyPayload {
            kind: PayloadKind::Delta,
            mode: older.mode,
            out: older.out.compose(&newer.out),
            inc: older.inc.compose(&newer.inc),
            creates: older.creates || newer.creates,
        },
    };
    Ok(merged)
}

/// Left fold of `merge_values` over a chain ordered oldest to newest.
/// `None` for an empty chain.
pub fn fold_chain(chain: &[AdjacencyPayload]) -> Result<Option<AdjacencyPayload>> {
    let mut iter = chain.iter();
    let Some(first) = iter.next() else {
        return Ok(None);
    };
    let mut acc = first.clone();
    for p in iter {
        acc = merge_values(&acc, p)?;
    }
    Ok(Some(acc))
}

// ---------------------------------------------------------------------------
// wire format

const KIND_MASK: u8 = 0b11;
const DIRECTED_BIT: u8 = 1 << 2;
const CODEC_SHIFT: u8 = 3;
const CREATES_BIT: u8 = 1 << 5;
const RESERVED_MASK: u8 = 0b1100_0000;

fn header(p: &AdjacencyPayload, codec: CodecMode) -> u8 {
    let kind = match p.kind {
        PayloadKind::Pivot => 0,
        PayloadKind::Delta => 1,
    };
    let dir = match p.mode {
        DirectionMode::Undirected => 0,
        DirectionMode::Directed => DIRECTED_BIT,
    };
    let codec = match codec {
        CodecMode::Raw => 0,
        CodecMode::EliasFano => 1 << CODEC_SHIFT,
    };
    let creates = if p.creates { CREATES_BIT } else { 0 };
    kind | dir | codec | creates
}

fn encode_list(out: &mut Vec<u8>, ids: &[u64], codec: CodecMode) {
    varint::put(out, ids.len() as u64);
    if codec == CodecMode::EliasFano && ids.len() >= EF_MIN_LIST_LEN {
        let bytes = ef::encode(ids, &EfParams::default()).expect("payload lists are strictly ascending").to_bytes();
        varint::put(out, bytes.len() as u64);
        out.extend_from_slice(&bytes);
    } else {
        for id in ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
}

pub fn encode_payload(p: &AdjacencyPayload, codec: CodecMode) -> Vec<u8> {
    debug_assert!(p.validate().is_ok(), "{p:?}");
    let mut out = vec![header(p, codec)];
    if p.is_empty() {
        return out;
    }
    encode_list(&mut out, &p.out.adds, codec);
    encode_list(&mut out, &p.out.removes, codec);
    if p.mode == DirectionMode::Directed {
        encode_list(&mut out, &p.inc.adds, codec);
        encode_list(&mut out, &p.inc.removes, codec);
    }
    out
}

fn decode_list(buf: &mut &[u8], codec: CodecMode) -> Result<Vec<u64>> {
    let count = varint::get(buf)? as usize;
    if codec == CodecMode::EliasFano && count >= EF_MIN_LIST_LEN {
        let len = varint::get(buf)? as usize;
        if len > buf.len() {
            return Err(Error::decode("elias-fano list truncated"));
        }
        let (bytes, rest) = buf.split_at(len);
        *buf = rest;
        let ids = ef::decode(&EfBitstream::from_bytes(bytes))?;
        if ids.len() != count {
            return Err(Error::decode("elias-fano list length mismatch"));
        }
        Ok(ids)
    } else {
        let len =
            count.checked_mul(8).filter(|&l| l <= buf.len()).ok_or_else(|| Error::decode("raw list truncated"))?;
        let (bytes, rest) = buf.split_at(len);
        *buf = rest;
        Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_payload(bytes: &[u8]) -> Result<AdjacencyPayload> {
    let (&h, mut rest) = bytes.split_first().ok_or_else(|| Error::decode("empty payload"))?;
    if h & RESERVED_MASK != 0 {
        return Err(Error::decode(format!("reserved header bits set: {h:#04x}")));
    }
    let kind = match h & KIND_MASK {
        0 => PayloadKind::Pivot,
        1 => PayloadKind::Delta,
        k => return Err(Error::decode(format!("unknown payload kind {k}"))),
    };
    let mode = if h & DIRECTED_BIT != 0 { DirectionMode::Directed } else { DirectionMode::Undirected };
    let codec = match (h >> CODEC_SHIFT) & 0b11 {
        0 => CodecMode::Raw,
        1 => CodecMode::EliasFano,
        c => return Err(Error::decode(format!("unknown codec {c}"))),
    };
    let creates = h & CREATES_BIT != 0;
    let mut p = AdjacencyPayload { kind, mode, out: EdgeList::default(), inc: EdgeList::default(), creates };
    if !rest.is_empty() {
        p.out.adds = decode_list(&mut rest, codec)?;
        p.out.removes = decode_list(&mut rest, codec)?;
        if mode == DirectionMode::Directed {
            p.inc.adds = decode_list(&mut rest, codec)?;
            p.inc.removes = decode_list(&mut rest, codec)?;
        }
        if !rest.is_empty() {
            return Err(Error::decode("trailing bytes after payload"));
        }
    }
    p.validate()?;
    Ok(p)
}
