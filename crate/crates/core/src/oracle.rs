//! Plain in-memory model of the graph API, used as ground truth in tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{Element, ElementKind};
use crate::payload::DirectionMode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    AddVertex(u64),
    DeleteVertex(u64),
    AddEdge(u64, u64),
    DeleteEdge(u64, u64),
    SetProperty(Element, Vec<u8>, Vec<u8>),
    DeleteProperty(Element, Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct ReplayOracle {
    mode: DirectionMode,
    strict: bool,
    vertices: BTreeSet<u64>,
    out: BTreeMap<u64, BTreeSet<u64>>,
    inc: BTreeMap<u64, BTreeSet<u64>>,
    props: BTreeMap<(Element, Vec<u8>), Vec<u8>>,
}

impl ReplayOracle {
    pub fn new(mode: DirectionMode) -> Self {
        Self {
            mode,
            strict: false,
            vertices: BTreeSet::new(),
            out: BTreeMap::new(),
            inc: BTreeMap::new(),
            props: BTreeMap::new(),
        }
    }

    /// Hide neighbors that no longer exist, like the store's strict mode.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn replay<'a>(mode: DirectionMode, ops: impl IntoIterator<Item = &'a Op>) -> Self {
        let mut o = Self::new(mode);
        for op in ops {
            o.apply(op);
        }
        o
    }

    fn touch(&mut self, u: u64) {
        self.vertices.insert(u);
    }

    pub fn apply(&mut self, op: &Op) {
        let directed = self.mode == DirectionMode::Directed;
        match op {
            Op::AddVertex(u) => self.touch(*u),
            Op::DeleteVertex(u) => {
                self.vertices.remove(u);
                self.out.remove(u);
                self.inc.remove(u);
            }
            &Op::AddEdge(u, v) => {
                self.touch(u);
                self.touch(v);
                self.out.entry(u).or_default().insert(v);
                if directed {
                    self.inc.entry(v).or_default().insert(u);
                } else {
                    self.out.entry(v).or_default().insert(u);
                }
            }
            &Op::DeleteEdge(u, v) => {
                if let Some(s) = self.out.get_mut(&u) {
                    s.remove(&v);
                }
                let other = if directed { self.inc.get_mut(&v) } else { self.out.get_mut(&v) };
                if let Some(s) = other {
                    s.remove(&u);
                }
            }
            Op::SetProperty(e, name, value) => {
                self.props.insert((*e, name.clone()), value.clone());
            }
            Op::DeleteProperty(e, name) => {
                self.props.remove(&(*e, name.clone()));
            }
        }
    }

    pub fn exists(&self, u: u64) -> bool {
        self.vertices.contains(&u)
    }

    fn list(&self, map: &BTreeMap<u64, BTreeSet<u64>>, u: u64) -> Option<Vec<u64>> {
        if !self.exists(u) {
            return None;
        }
        let ids = map.get(&u).into_iter().flatten().copied();
        Some(ids.filter(|&v| !self.strict || self.exists(v)).collect())
    }

    pub fn out_neighbors(&self, u: u64) -> Option<Vec<u64>> {
        self.list(&self.out, u)
    }

    /// In-neighbors for directed graphs, the neighbor list otherwise.
    pub fn in_neighbors(&self, u: u64) -> Option<Vec<u64>> {
        match self.mode {
            DirectionMode::Directed => self.list(&self.inc, u),
            DirectionMode::Undirected => self.list(&self.out, u),
        }
    }

    pub fn has_edge(&self, u: u64, v: u64) -> bool {
        self.exists(u) && self.out.get(&u).is_some_and(|s| s.contains(&v)) && (!self.strict || self.exists(v))
    }

    pub fn property(&self, e: Element, name: &[u8]) -> Option<&[u8]> {
        self.props.get(&(e, name.to_vec())).map(Vec::as_slice)
    }

    pub fn find_by_property(&self, kind: ElementKind, name: &[u8], value: &[u8]) -> Vec<Element> {
        self.props
            .iter()
            .filter(|((e, n), v)| e.kind() == kind && n == name && v.as_slice() == value)
            .map(|((e, _), _)| *e)
            .collect()
    }

    pub fn vertex_count(&self) -> u64 {
        self.vertices.len() as u64
    }

    /// Edges, counting an undirected edge once.
    pub fn edge_count(&self) -> u64 {
        let sum: usize = self.out.values().map(BTreeSet::len).sum();
        match self.mode {
            DirectionMode::Directed => sum as u64,
            DirectionMode::Undirected => {
                let loops = self.out.iter().filter(|(u, s)| s.contains(u)).count();
                ((sum + loops) / 2) as u64
            }
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = u64> + '_ {
        self.vertices.iter().copied()
    }
}
