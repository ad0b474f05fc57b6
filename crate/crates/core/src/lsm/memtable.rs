use std::collections::BTreeMap;
use std::ops::Bound;

use super::sstable::Entry;
use super::EntryKind;

const ENTRY_OVERHEAD: usize = 4 + 8 + 1 + 4;

#[derive(Debug, Clone)]
struct MemEntry {
    seq: u64,
    kind: EntryKind,
    value: Vec<u8>,
}

/// Sorted write buffer. Each key keeps its chain oldest first; a pivot or
/// tombstone discards the older part of the chain since nothing reads past it.
#[derive(Debug, Default)]
pub struct Memtable {
    map: BTreeMap<Vec<u8>, Vec<MemEntry>>,
    bytes: usize,
}

impl Memtable {
    pub fn insert(&mut self, key: &[u8], seq: u64, kind: EntryKind, value: &[u8]) {
        let size = ENTRY_OVERHEAD + key.len() + value.len();
        let chain = match self.map.get_mut(key) {
            Some(c) => c,
            None => self.map.entry(key.to_vec()).or_default(),
        };
        if kind != EntryKind::Delta {
            for old in chain.drain(..) {
                self.bytes -= ENTRY_OVERHEAD + key.len() + old.value.len();
            }
        }
        chain.push(MemEntry { seq, kind, value: value.to_vec() });
        self.bytes += size;
    }

    /// Approximate encoded size of everything buffered.
    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn clear(&mut self) {
        self.map.clear();
        self.bytes = 0;
    }

    pub fn key_range(&self) -> Option<(&[u8], &[u8])> {
        let first = self.map.keys().next()?;
        let last = self.map.keys().next_back()?;
        Some((first, last))
    }

    /// Entries of `key`, newest first.
    pub fn chain(&self, key: &[u8]) -> impl Iterator<Item = Entry> + '_ {
        let key_vec = key.to_vec();
        self.map.get(key).into_iter().flat_map(move |c| {
            let key = key_vec.clone();
            c.iter().rev().map(move |e| Entry { key: key.clone(), seq: e.seq, kind: e.kind, value: e.value.clone() })
        })
    }

    /// All entries with key `>= from`, ascending by key and newest first
    /// within a key.
    pub fn iter_from<'a>(&'a self, from: &[u8]) -> impl Iterator<Item = Entry> + 'a {
        self.map.range::<[u8], _>((Bound::Included(from), Bound::Unbounded)).flat_map(|(k, c)| {
            c.iter().rev().map(move |e| Entry { key: k.clone(), seq: e.seq, kind: e.kind, value: e.value.clone() })
        })
    }
}
