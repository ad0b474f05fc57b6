//! Immutable sorted table files.
//!
//! ```text
//! data blocks   count:u32 | records | crc32:u32 (over count and records)
//!   record      key_len:u32 | key | seq:u64 | kind:u8 | value_len:u32 | value
//! bloom         k:u8 | num_bits:u32 | bit bytes
//! index         entry_count:u64 | min_key_len:u32 | min_key | max_key_len:u32
//!               | max_key | block_count:u32 | per block: first_key_len:u32
//!               | first_key | offset:u64 | len:u32
//! footer (32B)  bloom_offset:u64 | index_offset:u64 | crc32(bloom+index):u32
//!               | 0:u32 | "PLSM0001"
//! ```
//!
//! All integers are little-endian. A block holds at most `block_bytes`
//! bytes unless its single record is larger, in which case that record gets
//! a block of its own.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use super::bloom::{key_hash, BloomFilter};
use super::{EntryKind, IoStats};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PLSM0001";
pub const FOOTER_LEN: usize = 32;
const BLOCK_OVERHEAD: usize = 8;
const RECORD_OVERHEAD: usize = 4 + 8 + 1 + 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: Vec<u8>,
    pub seq: u64,
    pub kind: EntryKind,
    pub value: Vec<u8>,
}

impl Entry {
    pub fn encoded_len(&self) -> usize {
        RECORD_OVERHEAD + self.key.len() + self.value.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHandle {
    pub first_key: Vec<u8>,
    pub offset: u64,
    pub len: u32,
}

/// What a reader needs to know about a table without touching its data.
#[derive(Debug, Clone)]
pub struct TableMeta {
    pub file_id: u64,
    pub min_key: Vec<u8>,
    pub max_key: Vec<u8>,
    pub entry_count: u64,
    pub byte_size: u64,
    pub bloom: BloomFilter,
    pub block_index: Vec<BlockHandle>,
}

pub fn table_path(dir: &Path, file_id: u64) -> PathBuf {
    dir.join(format!("{file_id:06}.sst"))
}

pub fn blocks_for(bytes: u64, block_bytes: usize) -> u64 {
    bytes.div_ceil(block_bytes as u64)
}

fn encode_record(buf: &mut Vec<u8>, e: &Entry) {
    buf.extend_from_slice(&(e.key.len() as u32).to_le_bytes());
    buf.extend_from_slice(&e.key);
    buf.extend_from_slice(&e.seq.to_le_bytes());
    buf.push(e.kind.to_byte());
    buf.extend_from_slice(&(e.value.len() as u32).to_le_bytes());
    buf.extend_from_slice(&e.value);
}

pub struct TableBuilder {
    path: PathBuf,
    file_id: u64,
    out: BufWriter<File>,
    block_bytes: usize,
    bits_per_key: u32,
    block: Vec<u8>,
    block_records: u32,
    block_first_key: Vec<u8>,
    index: Vec<BlockHandle>,
    hashes: Vec<u64>,
    offset: u64,
    min_key: Option<Vec<u8>>,
    max_key: Vec<u8>,
}

impl TableBuilder {
    pub fn create(dir: &Path, file_id: u64, block_bytes: usize, bits_per_key: u32) -> Result<Self> {
        let path = table_path(dir, file_id);
        let out = BufWriter::with_capacity(1 << 16, File::create(&path)?);
        Ok(Self {
            path,
            file_id,
            out,
            block_bytes,
            bits_per_key,
            block: Vec::with_capacity(block_bytes),
            block_records: 0,
            block_first_key: Vec::new(),
            index: Vec::new(),
            hashes: Vec::new(),
            offset: 0,
            min_key: None,
            max_key: Vec::new(),
        })
    }

    /// Bytes written so far, including the open block.
    pub fn estimated_size(&self) -> u64 {
        self.offset + self.block.len() as u64
    }

    /// Entries must arrive in strictly ascending key order.
    pub fn add(&mut self, e: &Entry) -> Result<()> {
        debug_assert!(self.min_key.is_none() || e.key > self.max_key);
        let rec = e.encoded_len();
        if self.block_records > 0 && BLOCK_OVERHEAD + self.block.len() - 4 + rec > self.block_bytes {
            self.finish_block()?;
        }
        if self.block_records == 0 {
            self.block.clear();
            self.block.extend_from_slice(&0u32.to_le_bytes());
            self.block_first_key = e.key.clone();
        }
        encode_record(&mut self.block, e);
        self.block_records += 1;
        self.hashes.push(key_hash(&e.key));
        if self.min_key.is_none() {
            self.min_key = Some(e.key.clone());
        }
        self.max_key.clone_from(&e.key);
        if self.block.len() + 4 >= self.block_bytes {
            self.finish_block()?;
        }
        Ok(())
    }

    fn finish_block(&mut self) -> Result<()> {
        if self.block_records == 0 {
            return Ok(());
        }
        self.block[..4].copy_from_slice(&self.block_records.to_le_bytes());
        let crc = crc32fast::hash(&self.block);
        self.block.extend_from_slice(&crc.to_le_bytes());
        self.out.write_all(&self.block)?;
        self.index.push(BlockHandle {
            first_key: std::mem::take(&mut self.block_first_key),
            offset: self.offset,
            len: self.block.len() as u32,
        });
        self.offset += self.block.len() as u64;
        self.block.clear();
        self.block_records = 0;
        Ok(())
    }

    /// Writes the tail sections and returns the table's metadata. Counts
    /// `ceil(file_bytes / B)` block writes.
    pub fn finish(mut self, io: &IoStats) -> Result<TableMeta> {
        self.finish_block()?;
        let min_key = self.min_key.take().ok_or_else(|| Error::InvalidArgument("empty table".into()))?;
        let bloom = BloomFilter::from_hashes(&self.hashes, self.bits_per_key);
        let entry_count = self.hashes.len() as u64;

        let mut tail = Vec::new();
        let bloom_offset = self.offset;
        bloom.encode_into(&mut tail);
        let index_offset = bloom_offset + tail.len() as u64;
        encode_index(&mut tail, entry_count, &min_key, &self.max_key, &self.index);
        let crc = crc32fast::hash(&tail);
        tail.extend_from_slice(&bloom_offset.to_le_bytes());
        tail.extend_from_slice(&index_offset.to_le_bytes());
        tail.extend_from_slice(&crc.to_le_bytes());
        tail.extend_from_slice(&0u32.to_le_bytes());
        tail.extend_from_slice(MAGIC);
        self.out.write_all(&tail)?;
        self.out.flush()?;
        let byte_size = self.offset + tail.len() as u64;
        io.add_writes(blocks_for(byte_size, self.block_bytes));
        Ok(TableMeta {
            file_id: self.file_id,
            min_key,
            max_key: self.max_key,
            entry_count,
            byte_size,
            bloom,
            block_index: self.index,
        })
    }

    pub fn abandon(self) {
        let path = self.path.clone();
        drop(self);
        let _ = fs::remove_file(path);
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn encode_index(out: &mut Vec<u8>, entries: u64, min: &[u8], max: &[u8], index: &[BlockHandle]) {
    out.extend_from_slice(&entries.to_le_bytes());
    put_bytes(out, min);
    put_bytes(out, max);
    out.extend_from_slice(&(index.len() as u32).to_le_bytes());
    for h in index {
        put_bytes(out, &h.first_key);
        out.extend_from_slice(&h.offset.to_le_bytes());
        out.extend_from_slice(&h.len.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() {
            return Err(Error::Corruption(format!("{} truncated", self.what)));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub struct Table {
    pub meta: TableMeta,
    file: File,
    path: PathBuf,
    block_bytes: usize,
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table")
            .field("file_id", &self.meta.file_id)
            .field("entries", &self.meta.entry_count)
            .field("bytes", &self.meta.byte_size)
            .finish()
    }
}

impl Table {
    /// Wraps a table that was just built; its metadata is already in memory.
    pub fn from_built(dir: &Path, meta: TableMeta, block_bytes: usize) -> Result<Self> {
        let path = table_path(dir, meta.file_id);
        Ok(Self { file: File::open(&path)?, path, meta, block_bytes })
    }

    /// Opens an existing file, reading its bloom and index sections.
    pub fn open(dir: &Path, file_id: u64, block_bytes: usize, io: &IoStats) -> Result<Self> {
        let path = table_path(dir, file_id);
        let file = File::open(&path)?;
        let len = file.metadata()?.len();
        let corrupt = |msg: &str| Error::Corruption(format!("{}: {msg}", path.display()));
        if len < FOOTER_LEN as u64 {
            return Err(corrupt("shorter than the footer"));
        }
        let mut footer = [0u8; FOOTER_LEN];
        file.read_exact_at(&mut footer, len - FOOTER_LEN as u64)?;
        if &footer[24..32] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let bloom_offset = u64::from_le_bytes(footer[0..8].try_into().unwrap());
        let index_offset = u64::from_le_bytes(footer[8..16].try_into().unwrap());
        let crc = u32::from_le_bytes(footer[16..20].try_into().unwrap());
        let tail_end = len - FOOTER_LEN as u64;
        if !(bloom_offset <= index_offset && index_offset <= tail_end) {
            return Err(corrupt("bad section offsets"));
        }
        let mut tail = vec![0u8; (tail_end - bloom_offset) as usize];
        file.read_exact_at(&mut tail, bloom_offset)?;
        io.add_reads(blocks_for(len - bloom_offset, block_bytes), false);
        if crc32fast::hash(&tail) != crc {
            return Err(Error::Checksum { file: path.display().to_string(), offset: bloom_offset });
        }
        let split = (index_offset - bloom_offset) as usize;
        let bloom = BloomFilter::decode(&tail[..split])?;
        let mut c = Cursor { buf: &tail[split..], what: "table index" };
        let entry_count = c.u64()?;
        let min_key = c.bytes()?.to_vec();
        let max_key = c.bytes()?.to_vec();
        let blocks = c.u32()? as usize;
        let mut block_index = Vec::with_capacity(blocks.min(1 << 20));
        for _ in 0..blocks {
            let first_key = c.bytes()?.to_vec();
            let offset = c.u64()?;
            let len = c.u32()?;
            block_index.push(BlockHandle { first_key, offset, len });
        }
        let meta = TableMeta { file_id, min_key, max_key, entry_count, byte_size: len, bloom, block_index };
        Ok(Self { file, path, meta, block_bytes })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn covers(&self, key: &[u8]) -> bool {
        self.meta.min_key.as_slice() <= key && key <= self.meta.max_key.as_slice()
    }

    fn read_block(&self, idx: usize, io: &IoStats, compaction: bool) -> Result<Vec<u8>> {
        let h = &self.meta.block_index[idx];
        let mut buf = vec![0u8; h.len as usize];
        self.file.read_exact_at(&mut buf, h.offset)?;
        io.add_reads(blocks_for(h.len as u64, self.block_bytes), compaction);
        if buf.len() < BLOCK_OVERHEAD {
            return Err(Error::Corruption(format!("{}: block {idx} too short", self.path.display())));
        }
        let (body, crc) = buf.split_at(buf.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(Error::Checksum { file: self.path.display().to_string(), offset: h.offset });
        }
        buf.truncate(buf.len() - 4);
        Ok(buf)
    }

    /// Point lookup: key range, bloom filter, then the one block that may
    /// hold the key.
    pub fn get(&self, key: &[u8], io: &IoStats) -> Result<Option<Entry>> {
        if !self.covers(key) || !self.meta.bloom.may_contain(key) {
            return Ok(None);
        }
        let idx = self.meta.block_index.partition_point(|h| h.first_key.as_slice() <= key);
        if idx == 0 {
            return Ok(None);
        }
        let block = self.read_block(idx - 1, io, false)?;
        for e in parse_block(&block)? {
            let e = e?;
            match e.key.as_slice().cmp(key) {
                std::cmp::Ordering::Less => continue,
                std::cmp::Ordering::Equal => return Ok(Some(e)),
                std::cmp::Ordering::Greater => break,
            }
        }
        Ok(None)
    }

    /// Sequential scan starting at the block that may contain `from`.
    pub fn iter_from<'a>(&'a self, from: &[u8], io: &'a IoStats, compaction: bool) -> TableIter<'a> {
        let start = self.meta.block_index.partition_point(|h| h.first_key.as_slice() <= from).saturating_sub(1);
        TableIter { table: self, io, compaction, next_block: start, pending: Vec::new().into_iter() }
    }

    pub fn iter<'a>(&'a self, io: &'a IoStats, compaction: bool) -> TableIter<'a> {
        TableIter { table: self, io, compaction, next_block: 0, pending: Vec::new().into_iter() }
    }
}

fn parse_block(block: &[u8]) -> Result<impl Iterator<Item = Result<Entry>> + '_> {
    let mut c = Cursor { buf: block, what: "data block" };
    let count = c.u32()?;
    let mut remaining = count;
    Ok(std::iter::from_fn(move || {
        if remaining == 0 {
            return None;
        }
        remaining -= 1;
        let rec = (|| {
            let key = c.bytes()?.to_vec();
            let seq = c.u64()?;
            let kind = EntryKind::from_byte(c.u8()?)?;
            let value = c.bytes()?.to_vec();
            Ok(Entry { key, seq, kind, value })
        })();
        if rec.is_err() {
            remaining = 0;
        }
        Some(rec)
    }))
}

pub struct TableIter<'a> {
    table: &'a Table,
    io: &'a IoStats,
    compaction: bool,
    next_block: usize,
    pending: std::vec::IntoIter<Entry>,
}

impl Iterator for TableIter<'_> {
    type Item = Result<Entry>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(e) = self.pending.next() {
                return Some(Ok(e));
            }
            if self.next_block >= self.table.meta.block_index.len() {
                return None;
            }
            let idx = self.next_block;
            self.next_block += 1;
            let parsed = self
                .table
                .read_block(idx, self.io, self.compaction)
                .and_then(|b| parse_block(&b)?.collect::<Result<Vec<_>>>());
            match parsed {
                Ok(entries) => self.pending = entries.into_iter(),
                Err(e) => {
                    self.next_block = usize::MAX;
                    return Some(Err(e));
                }
            }
        }
    }
}
