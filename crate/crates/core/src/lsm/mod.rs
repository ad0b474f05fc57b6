//! Leveled LSM tree over byte keys with a pluggable merge operator.

mod bloom;
mod manifest;
mod memtable;
mod sstable;

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

pub use bloom::{key_hash, BloomFilter};
pub use sstable::{BlockHandle, Entry, TableMeta, MAGIC as TABLE_MAGIC};

use crate::error::{Error, Result};
use manifest::Manifest;
use memtable::Memtable;
use sstable::{Table, TableBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelingMode {
    /// One sorted run per level.
    Leveling,
    /// Flushes stack up as overlapping runs at level 1; deeper levels are
    /// leveled.
    OneLeveling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub size_ratio: u32,
    pub block_bytes: u32,
    pub memtable_capacity: u64,
    pub bloom_bits_per_key: u32,
    pub leveling_mode: LevelingMode,
    pub max_key_len: u32,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            size_ratio: 10,
            block_bytes: 4096,
            memtable_capacity: 4 << 20,
            bloom_bits_per_key: 10,
            leveling_mode: LevelingMode::OneLeveling,
            max_key_len: 1024,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size_ratio < 2 {
            return Err(Error::Config(format!("size ratio {} is below 2", self.size_ratio)));
        }
        if !self.block_bytes.is_power_of_two() || self.block_bytes < 64 {
            return Err(Error::Config(format!("block size {} is not a power of two >= 64", self.block_bytes)));
        }
        if self.bloom_bits_per_key == 0 {
            return Err(Error::Config("bloom filter needs at least one bit per key".into()));
        }
        if self.memtable_capacity == 0 {
            return Err(Error::Config("memtable capacity is zero".into()));
        }
        Ok(())
    }

    /// Byte capacity of level `level` (1-based): `memtable_capacity * T^level`.
    pub fn level_capacity(&self, level: usize) -> u64 {
        let mut cap = self.memtable_capacity;
        for _ in 0..level {
            cap = cap.saturating_mul(self.size_ratio as u64);
        }
        cap
    }

    fn table_target_bytes(&self) -> u64 {
        self.memtable_capacity.max(1 << 20)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryKind {
    Pivot,
    Delta,
    Tombstone,
}

impl EntryKind {
    pub fn to_byte(self) -> u8 {
        match self {
            EntryKind::Pivot => 0,
            EntryKind::Delta => 1,
            EntryKind::Tombstone => 2,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(EntryKind::Pivot),
            1 => Ok(EntryKind::Delta),
            2 => Ok(EntryKind::Tombstone),
            _ => Err(Error::Corruption(format!("unknown entry kind {b}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCounters {
    pub block_reads: u64,
    pub block_writes: u64,
    pub lookups: u64,
    pub updates: u64,
    /// Share of `block_reads` spent reading compaction and flush inputs.
    pub compaction_reads: u64,
}

impl IoCounters {
    pub fn total_io(&self) -> u64 {
        self.block_reads + self.block_writes
    }

    pub fn since(&self, earlier: &IoCounters) -> IoCounters {
        IoCounters {
            block_reads: self.block_reads - earlier.block_reads,
            block_writes: self.block_writes - earlier.block_writes,
            lookups: self.lookups - earlier.lookups,
            updates: self.updates - earlier.updates,
            compaction_reads: self.compaction_reads - earlier.compaction_reads,
        }
    }
}

#[derive(Debug, Default)]
pub struct IoStats {
    reads: AtomicU64,
    writes: AtomicU64,
    lookups: AtomicU64,
    updates: AtomicU64,
    compaction_reads: AtomicU64,
}

impl IoStats {
    pub fn add_reads(&self, n: u64, compaction: bool) {
        self.reads.fetch_add(n, Ordering::Relaxed);
        if compaction {
            self.compaction_reads.fetch_add(n, Ordering::Relaxed);
        }
    }

    pub fn add_writes(&self, n: u64) {
        self.writes.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> IoCounters {
        IoCounters {
            block_reads: self.reads.load(Ordering::Relaxed),
            block_writes: self.writes.load(Ordering::Relaxed),
            lookups: self.lookups.load(Ordering::Relaxed),
            updates: self.updates.load(Ordering::Relaxed),
            compaction_reads: self.compaction_reads.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        for c in [&self.reads, &self.writes, &self.lookups, &self.updates, &self.compaction_reads] {
            c.store(0, Ordering::Relaxed);
        }
    }
}

/// Combines a key's delta operands with whatever lies beneath them.
pub trait MergeOperator: Send + Sync {
    /// Rejects values `merge` could never fold.
    fn check_operand(&self, value: &[u8]) -> Result<()>;

    /// `base` is the newest pivot or tombstone under the operands, if one
    /// was reached; `operands` are oldest first. `bottom` means nothing older
    /// exists anywhere in the tree. `None` drops the key.
    fn merge(
        &self,
        key: &[u8],
        base: Option<(EntryKind, &[u8])>,
        operands: &[&[u8]],
        bottom: bool,
    ) -> Result<Option<(EntryKind, Vec<u8>)>>;
}

/// Folds a same-key group ordered newest first.
fn resolve(op: &dyn MergeOperator, key: &[u8], group: &[Entry], bottom: bool) -> Result<Option<Entry>> {
    let base_at = group.iter().position(|e| e.kind != EntryKind::Delta);
    let deltas = &group[..base_at.unwrap_or(group.len())];
    let base = base_at.map(|i| &group[i]);
    let seq = group[0].seq;
    let out = if deltas.is_empty() {
        base.cloned()
    } else if deltas.len() == 1 && base.is_none() && !bottom {
        Some(deltas[0].clone())
    } else {
        let operands: Vec<&[u8]> = deltas.iter().rev().map(|e| e.value.as_slice()).collect();
        op.merge(key, base.map(|b| (b.kind, b.value.as_slice())), &operands, bottom)?.map(|(kind, value)| Entry {
            key: key.to_vec(),
            seq,
            kind,
            value,
        })
    };
    Ok(out.filter(|e| !(bottom && e.kind == EntryKind::Tombstone)))
}

type Source<'a> = Box<dyn Iterator<Item = Result<Entry>> + 'a>;

struct HeapItem {
    entry: Entry,
    src: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    // max-heap: smallest key first, then newest seq
    fn cmp(&self, other: &Self) -> CmpOrdering {
        other.entry.key.cmp(&self.entry.key).then(self.entry.seq.cmp(&other.entry.seq))
    }
}

/// K-way merge handing each key's entries, newest first, to `emit`.
fn merge_sources(mut sources: Vec<Source<'_>>, mut emit: impl FnMut(Vec<Entry>) -> Result<bool>) -> Result<()> {
    let mut heap = BinaryHeap::with_capacity(sources.len());
    for (src, it) in sources.iter_mut().enumerate() {
        if let Some(e) = it.next() {
            heap.push(HeapItem { entry: e?, src });
        }
    }
    while let Some(top) = heap.pop() {
        let key = top.entry.key.clone();
        let mut group = Vec::new();
        let mut cur = Some(top);
        while let Some(h) = cur {
            if let Some(e) = sources[h.src].next() {
                heap.push(HeapItem { entry: e?, src: h.src });
            }
            group.push(h.entry);
            cur = if heap.peek().is_some_and(|p| p.entry.key == key) { heap.pop() } else { None };
        }
        group.sort_by_key(|e| std::cmp::Reverse(e.seq));
        if !emit(group)? {
            break;
        }
    }
    Ok(())
}

type Run = Vec<Arc<Table>>;

#[derive(Debug, Default, Clone)]
struct Level {
    /// Newest first. Only level 1 under one-leveling holds more than one.
    runs: Vec<Run>,
}

impl Level {
    fn bytes(&self) -> u64 {
        self.runs.iter().flatten().map(|t| t.meta.byte_size).sum()
    }

    fn is_empty(&self) -> bool {
        self.runs.iter().all(|r| r.is_empty())
    }

    fn key_range(&self) -> Option<(Vec<u8>, Vec<u8>)> {
        let tables = self.runs.iter().flatten();
        let min = tables.clone().map(|t| &t.meta.min_key).min()?.clone();
        let max = tables.map(|t| &t.meta.max_key).max()?.clone();
        Some((min, max))
    }
}

fn find_in_run<'a>(run: &'a Run, key: &[u8]) -> Option<&'a Arc<Table>> {
    let i = run.partition_point(|t| t.meta.max_key.as_slice() < key);
    run.get(i).filter(|t| t.covers(key))
}

fn split_overlapping(run: &Run, min: &[u8], max: &[u8]) -> (Run, Run) {
    run.iter().cloned().partition(|t| t.meta.min_key.as_slice() <= max && t.meta.max_key.as_slice() >= min)
}

fn run_source<'a>(run: &'a Run, io: &'a IoStats, compaction: bool) -> Source<'a> {
    Box::new(run.iter().flat_map(move |t| t.iter(io, compaction)))
}

/// Per-table summary returned by flushes and exposed for inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableInfo {
    pub file_id: u64,
    pub level: usize,
    pub min_key: Vec<u8>,
    pub max_key: Vec<u8>,
    pub entry_count: u64,
    pub byte_size: u64,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelInfo {
    pub level: usize,
    pub runs: usize,
    pub tables: usize,
    pub bytes: u64,
    pub entries: u64,
    pub capacity: u64,
}

/// A key's folded value as seen by a read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub kind: EntryKind,
    pub value: Vec<u8>,
}

struct State {
    config: TreeConfig,
    mem: Memtable,
    levels: Vec<Level>,
    next_seq: u64,
    next_file_id: u64,
    meta: BTreeMap<String, String>,
    closed: bool,
    read_only: bool,
}

impl State {
    fn check_open(&self) -> Result<()> {
        if self.closed {
            Err(Error::Closed)
        } else {
            Ok(())
        }
    }

    fn check_writable(&self) -> Result<()> {
        self.check_open()?;
        if self.read_only {
            Err(Error::ReadOnly)
        } else {
            Ok(())
        }
    }

    fn level_mut(&mut self, idx: usize) -> &mut Level {
        while self.levels.len() <= idx {
            self.levels.push(Level::default());
        }
        &mut self.levels[idx]
    }

    fn deeper_empty(&self, idx: usize) -> bool {
        self.levels.iter().skip(idx + 1).all(Level::is_empty)
    }

    fn manifest(&self) -> Manifest {
        Manifest {
            version: manifest::VERSION,
            config: self.config,
            next_file_id: self.next_file_id,
            next_seq: self.next_seq,
            levels: self
                .levels
                .iter()
                .map(|l| l.runs.iter().map(|r| r.iter().map(|t| t.meta.file_id).collect()).collect())
                .collect(),
            meta: self.meta.clone(),
        }
    }
}

pub struct Engine {
    dir: PathBuf,
    op: Arc<dyn MergeOperator>,
    io: IoStats,
    state: RwLock<State>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Engine {
    /// Opens or creates a tree in `dir`. An existing tree keeps the config
    /// recorded in its manifest; asking for a different leveling mode or
    /// block size is an error.
    pub fn open(dir: impl AsRef<Path>, config: TreeConfig, op: Arc<dyn MergeOperator>) -> Result<Self> {
        config.validate()?;
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let io = IoStats::default();
        let state = match Manifest::load(&dir)? {
            Some(m) => {
                if m.config.leveling_mode != config.leveling_mode || m.config.block_bytes != config.block_bytes {
                    return Err(Error::Config(format!(
                        "tree was created with {:?} and {}-byte blocks",
                        m.config.leveling_mode, m.config.block_bytes
                    )));
                }
                let block_bytes = m.config.block_bytes as usize;
                let mut live = HashSet::new();
                let mut levels = Vec::with_capacity(m.levels.len());
                for runs in &m.levels {
                    let mut level = Level::default();
                    for ids in runs {
                        let mut run = Vec::with_capacity(ids.len());
                        for &id in ids {
                            live.insert(id);
                            run.push(Arc::new(Table::open(&dir, id, block_bytes, &io)?));
                        }
                        level.runs.push(run);
                    }
                    levels.push(level);
                }
                remove_orphans(&dir, &live)?;
                State {
                    config: m.config,
                    mem: Memtable::default(),
                    levels,
                    next_seq: m.next_seq,
                    next_file_id: m.next_file_id,
                    meta: m.meta,
                    closed: false,
                    read_only: false,
                }
            }
            None => {
                remove_orphans(&dir, &HashSet::new())?;
                let s = State {
                    config,
                    mem: Memtable::default(),
                    levels: vec![Level::default()],
                    next_seq: 1,
                    next_file_id: 1,
                    meta: BTreeMap::new(),
                    closed: false,
                    read_only: false,
                };
                s.manifest().save(&dir)?;
                s
            }
        };
        io.reset();
        Ok(Self { dir, op, io, state: RwLock::new(state) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> TreeConfig {
        self.state.read().config
    }

    pub fn is_read_only(&self) -> bool {
        self.state.read().read_only
    }

    /// Reads a metadata value from the manifest in `dir` without opening the
    /// tree. `None` when there is no store or no such key.
    pub fn read_meta(dir: &Path, key: &str) -> Result<Option<String>> {
        Ok(manifest::Manifest::load(dir)?.and_then(|m| m.meta.get(key).cloned()))
    }

    pub fn meta(&self, key: &str) -> Option<String> {
        self.state.read().meta.get(key).cloned()
    }

    pub fn set_meta(&self, key: &str, value: &str) -> Result<()> {
        let mut s = self.state.write();
        s.check_writable()?;
        s.meta.insert(key.to_string(), value.to_string());
        s.manifest().save(&self.dir)
    }

    /// Buffers a pivot or tombstone that hides every older entry of `key`.
    pub fn put(&self, key: &[u8], kind: EntryKind, value: &[u8]) -> Result<u64> {
        match kind {
            EntryKind::Delta => return Err(Error::InvalidArgument("deltas go through merge".into())),
            EntryKind::Tombstone if !value.is_empty() => {
                return Err(Error::InvalidArgument("tombstones carry no value".into()))
            }
            _ => {}
        }
        self.write(key, kind, value)
    }

    /// Buffers a delta that accumulates with older entries of `key`.
    pub fn merge(&self, key: &[u8], value: &[u8]) -> Result<u64> {
        self.op.check_operand(value)?;
        self.write(key, EntryKind::Delta, value)
    }

    fn write(&self, key: &[u8], kind: EntryKind, value: &[u8]) -> Result<u64> {
        let mut s = self.state.write();
        s.check_writable()?;
        if key.len() > s.config.max_key_len as usize {
            return Err(Error::KeyTooLong { len: key.len(), max: s.config.max_key_len as usize });
        }
        let seq = s.next_seq;
        s.next_seq += 1;
        s.mem.insert(key, seq, kind, value);
        self.io.updates.fetch_add(1, Ordering::Relaxed);
        if s.mem.bytes() as u64 >= s.config.memtable_capacity {
            self.guard(&mut s, |e, s| {
                e.flush_locked(s)?;
                e.compact_over_capacity(s)
            })?;
        }
        Ok(seq)
    }

    /// Runs a mutation of the file layout; an I/O failure leaves the tree
    /// read-only.
    fn guard<T>(&self, s: &mut State, f: impl FnOnce(&Self, &mut State) -> Result<T>) -> Result<T> {
        let r = f(self, s);
        if let Err(Error::Io(_)) = &r {
            s.read_only = true;
        }
        r
    }

    /// Walks `key`'s entries newest first, stopping after a pivot or
    /// tombstone or when `f` returns false.
    pub fn visit(&self, key: &[u8], mut f: impl FnMut(EntryKind, &[u8]) -> Result<bool>) -> Result<()> {
        self.visit_entries(key, |e| f(e.kind, &e.value))
    }

    fn visit_entries(&self, key: &[u8], mut f: impl FnMut(Entry) -> Result<bool>) -> Result<()> {
        let s = self.state.read();
        s.check_open()?;
        self.io.lookups.fetch_add(1, Ordering::Relaxed);
        for e in s.mem.chain(key) {
            let last = e.kind != EntryKind::Delta;
            if !f(e)? || last {
                return Ok(());
            }
        }
        for level in &s.levels {
            for run in &level.runs {
                let Some(table) = find_in_run(run, key) else {
                    continue;
                };
                if let Some(e) = table.get(key, &self.io)? {
                    let last = e.kind != EntryKind::Delta;
                    if !f(e)? || last {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// Folded value of `key`; `None` when absent or deleted.
    pub fn get(&self, key: &[u8]) -> Result<Option<Resolved>> {
        let mut chain = Vec::new();
        self.visit_entries(key, |e| {
            chain.push(e);
            Ok(true)
        })?;
        if chain.is_empty() {
            return Ok(None);
        }
        Ok(resolve(self.op.as_ref(), key, &chain, false)?
            .filter(|e| e.kind != EntryKind::Tombstone)
            .map(|e| Resolved { kind: e.kind, value: e.value }))
    }

    /// Live keys starting with `prefix`, ascending, with folded values.
    pub fn scan_prefix(&self, prefix: &[u8], mut f: impl FnMut(&[u8], Resolved) -> Result<bool>) -> Result<()> {
        let s = self.state.read();
        s.check_open()?;
        let runs: Vec<&Run> = s.levels.iter().flat_map(|l| l.runs.iter()).collect();
        let mut sources: Vec<Source<'_>> = vec![Box::new(s.mem.iter_from(prefix).map(Ok))];
        for run in runs {
            let start = run.partition_point(|t| t.meta.max_key.as_slice() < prefix);
            let io = &self.io;
            let from = prefix.to_vec();
            sources.push(Box::new(
                run[start..]
                    .iter()
                    .flat_map(move |t| t.iter_from(prefix, io, false))
                    .filter(move |e| e.as_ref().map_or(true, |e| e.key >= from)),
            ));
        }
        merge_sources(sources, |group| {
            if !group[0].key.starts_with(prefix) {
                return Ok(false);
            }
            match resolve(self.op.as_ref(), &group[0].key, &group, false)? {
                Some(e) if e.kind != EntryKind::Tombstone => f(&e.key, Resolved { kind: e.kind, value: e.value }),
                _ => Ok(true),
            }
        })
    }

    /// Writes the memtable to level 1. Empty when there was nothing buffered.
    pub fn flush_memtable(&self) -> Result<Vec<TableInfo>> {
        let mut s = self.state.write();
        s.check_writable()?;
        self.guard(&mut s, |e, s| e.flush_locked(s))
    }

    /// Merges level `level` (1-based) into the next one, whatever its size.
    pub fn compact(&self, level: usize) -> Result<()> {
        if level == 0 {
            return Err(Error::InvalidArgument("levels are numbered from 1".into()));
        }
        let mut s = self.state.write();
        s.check_writable()?;
        self.guard(&mut s, |e, s| e.compact_locked(s, level - 1))
    }

    /// Compacts levels that exceed their capacity until none does.
    pub fn maybe_compact(&self) -> Result<()> {
        let mut s = self.state.write();
        s.check_writable()?;
        self.guard(&mut s, |e, s| e.compact_over_capacity(s))
    }

    fn flush_locked(&self, s: &mut State) -> Result<Vec<TableInfo>> {
        if s.mem.is_empty() {
            return Ok(Vec::new());
        }
        let deeper_empty = s.deeper_empty(0);
        let mem_source = || -> Source<'_> { Box::new(s.mem.iter_from(&[]).map(Ok)) };
        let mut obsolete = Vec::new();
        let new_runs = match s.config.leveling_mode {
            LevelingMode::Leveling => {
                let (min, max) = s.mem.key_range().expect("memtable is not empty");
                let current = s.levels.first().and_then(|l| l.runs.first()).cloned().unwrap_or_default();
                let (overlap, keep) = split_overlapping(&current, min, max);
                let sources = vec![mem_source(), run_source(&overlap, &self.io, true)];
                let (out, next_id) = self.write_merged(s, sources, deeper_empty)?;
                s.next_file_id = next_id;
                obsolete.extend(overlap.iter().cloned());
                let mut run: Run = keep.into_iter().chain(out).collect();
                run.sort_by(|a, b| a.meta.min_key.cmp(&b.meta.min_key));
                vec![run]
            }
            LevelingMode::OneLeveling => {
                let bottom = deeper_empty && s.levels.first().is_none_or(Level::is_empty);
                let (out, next_id) = self.write_merged(s, vec![mem_source()], bottom)?;
                s.next_file_id = next_id;
                let mut runs = vec![out];
                runs.extend(s.levels.first().map(|l| l.runs.clone()).unwrap_or_default());
                runs
            }
        };
        let new_ids: HashSet<u64> = new_runs.first().into_iter().flatten().map(|t| t.meta.file_id).collect();
        let infos = new_runs
            .first()
            .into_iter()
            .flatten()
            .filter(|t| new_ids.contains(&t.meta.file_id) && !obsolete.iter().any(|o| o.meta.file_id == t.meta.file_id))
            .map(|t| table_info(t, 1))
            .collect::<Vec<_>>();
        s.level_mut(0).runs = new_runs.into_iter().filter(|r| !r.is_empty()).collect();
        s.mem.clear();
        self.install(s, obsolete)?;
        Ok(infos)
    }

    fn compact_locked(&self, s: &mut State, idx: usize) -> Result<()> {
        let Some((min, max)) = s.levels.get(idx).and_then(Level::key_range) else {
            return Ok(());
        };
        s.level_mut(idx + 1);
        let inputs = s.levels[idx].runs.clone();
        let next = s.levels[idx + 1].runs.first().cloned().unwrap_or_default();
        let (overlap, keep) = split_overlapping(&next, &min, &max);
        let bottom = s.deeper_empty(idx + 1);
        let mut sources: Vec<Source<'_>> = inputs.iter().map(|r| run_source(r, &self.io, true)).collect();
        sources.push(run_source(&overlap, &self.io, true));
        let (out, next_id) = self.write_merged(s, sources, bottom)?;
        s.next_file_id = next_id;
        let mut run: Run = keep.into_iter().chain(out).collect();
        run.sort_by(|a, b| a.meta.min_key.cmp(&b.meta.min_key));
        s.levels[idx].runs.clear();
        s.levels[idx + 1].runs = if run.is_empty() { Vec::new() } else { vec![run] };
        let obsolete = inputs.into_iter().flatten().chain(overlap).collect();
        self.install(s, obsolete)
    }

    fn compact_over_capacity(&self, s: &mut State) -> Result<()> {
        loop {
            let cfg = s.config;
            let Some(idx) = (0..s.levels.len()).find(|&i| s.levels[i].bytes() > cfg.level_capacity(i + 1)) else {
                return Ok(());
            };
            self.compact_locked(s, idx)?;
        }
    }

    /// Saves the manifest for the new layout, then unlinks replaced files.
    fn install(&self, s: &mut State, obsolete: Vec<Arc<Table>>) -> Result<()> {
        while s.levels.len() > 1 && s.levels.last().is_some_and(Level::is_empty) {
            s.levels.pop();
        }
        s.manifest().save(&self.dir)?;
        for t in obsolete {
            let _ = fs::remove_file(t.path());
        }
        Ok(())
    }

    /// Writes the resolved merge of `sources` as new tables. Returns them
    /// with the next unused file id.
    fn write_merged(&self, s: &State, sources: Vec<Source<'_>>, bottom: bool) -> Result<(Run, u64)> {
        let cfg = s.config;
        let mut next_id = s.next_file_id;
        let mut done: Vec<TableMeta> = Vec::new();
        let mut current: Option<TableBuilder> = None;
        let target = cfg.table_target_bytes();
        let result = merge_sources(sources, |group| {
            if let Some(e) = resolve(self.op.as_ref(), &group[0].key, &group, bottom)? {
                if current.is_none() {
                    current = Some(TableBuilder::create(
                        &self.dir,
                        next_id,
                        cfg.block_bytes as usize,
                        cfg.bloom_bits_per_key,
                    )?);
                    next_id += 1;
                }
                let b = current.as_mut().unwrap();
                b.add(&e)?;
                if b.estimated_size() >= target {
                    done.push(current.take().unwrap().finish(&self.io)?);
                }
            }
            Ok(true)
        })
        .and_then(|()| {
            if let Some(b) = current.take() {
                done.push(b.finish(&self.io)?);
            }
            Ok(())
        });
        if let Err(e) = result {
            if let Some(b) = current.take() {
                b.abandon();
            }
            for m in &done {
                let _ = fs::remove_file(sstable::table_path(&self.dir, m.file_id));
            }
            return Err(e);
        }
        let tables = done
            .into_iter()
            .map(|m| Ok(Arc::new(Table::from_built(&self.dir, m, cfg.block_bytes as usize)?)))
            .collect::<Result<_>>()?;
        Ok((tables, next_id))
    }

    pub fn io_stats(&self) -> IoCounters {
        self.io.snapshot()
    }

    pub fn reset_stats(&self) {
        self.io.reset();
    }

    /// Index of the deepest non-empty level, at least 1.
    pub fn level_count(&self) -> usize {
        let s = self.state.read();
        s.levels.iter().rposition(|l| !l.is_empty()).map_or(1, |i| i + 1)
    }

    pub fn levels(&self) -> Vec<LevelInfo> {
        let s = self.state.read();
        s.levels
            .iter()
            .enumerate()
            .map(|(i, l)| LevelInfo {
                level: i + 1,
                runs: l.runs.iter().filter(|r| !r.is_empty()).count(),
                tables: l.runs.iter().map(Vec::len).sum(),
                bytes: l.bytes(),
                entries: l.runs.iter().flatten().map(|t| t.meta.entry_count).sum(),
                capacity: s.config.level_capacity(i + 1),
            })
            .collect()
    }

    pub fn tables(&self) -> Vec<TableInfo> {
        let s = self.state.read();
        s.levels
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.runs.iter().flatten().map(move |t| table_info(t, i + 1)))
            .collect()
    }

    pub fn memtable_bytes(&self) -> usize {
        self.state.read().mem.bytes()
    }

    /// Flushes the memtable and saves the manifest. Further calls fail with
    /// [`Error::Closed`].
    pub fn close(&self) -> Result<()> {
        let mut s = self.state.write();
        if s.closed {
            return Ok(());
        }
        let r = if s.read_only {
            Ok(())
        } else {
            self.guard(&mut s, |e, s| {
                e.flush_locked(s)?;
                e.compact_over_capacity(s)?;
                s.manifest().save(&e.dir)
            })
        };
        s.closed = true;
        r
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

fn table_info(t: &Table, level: usize) -> TableInfo {
    TableInfo {
        file_id: t.meta.file_id,
        level,
        min_key: t.meta.min_key.clone(),
        max_key: t.meta.max_key.clone(),
        entry_count: t.meta.entry_count,
        byte_size: t.meta.byte_size,
        blocks: t.meta.block_index.len(),
    }
}

fn remove_orphans(dir: &Path, live: &HashSet<u64>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix(".sst").and_then(|s| s.parse::<u64>().ok()) {
            if !live.contains(&id) {
                fs::remove_file(&path)?;
            }
        }
    }
    Ok(())
}
