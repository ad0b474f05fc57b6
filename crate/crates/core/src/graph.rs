//! Graph API over the engine: adjacency under vertex keys, properties under
//! a separate key namespace, and per-update routing between delta and pivot
//! writes.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsm::{Engine, EntryKind, IoCounters, LevelingMode, MergeOperator, TreeConfig};
use crate::payload::{
    decode_payload, encode_payload, fold_chain, merge_values, AdjacencyPayload, CodecMode, Direction, DirectionMode,
    EdgeOp, PayloadKind,
};
use crate::policy::{choose_update, ModelShape, OpKind, UpdateMethod, UpdatePolicy, WorkloadStats};
use crate::sketch::DegreeSketch;

pub const SKETCH_FILE: &str = "degrees.sketch";
const META_KEY: &str = "graph";
/// Vertex IDs at or above this bound get no sketch cell; their updates are
/// routed as if saturated.
pub const SKETCH_ID_LIMIT: u64 = 1 << 32;

pub mod keys {
    //! ```text
    //! vertex     id:u64 BE                                  (8 bytes)
    //! property   'P' | kind | id:u64 BE [| id2:u64 BE] | name
    //!            kind 'v' for vertices (one id), 'e' for edges (two ids)
    //! ```

    use super::Element;

    pub const PROPERTY_NS: u8 = b'P';
    pub const VERTEX_TAG: u8 = b'v';
    pub const EDGE_TAG: u8 = b'e';

    pub fn vertex(u: u64) -> [u8; 8] {
        u.to_be_bytes()
    }

    pub fn parse_vertex(key: &[u8]) -> Option<u64> {
        Some(u64::from_be_bytes(key.try_into().ok()?))
    }

    pub fn element_prefix(e: Element) -> Vec<u8> {
        let mut k = Vec::with_capacity(18);
        k.push(PROPERTY_NS);
        match e {
            Element::Vertex(u) => {
                k.push(VERTEX_TAG);
                k.extend_from_slice(&u.to_be_bytes());
            }
            Element::Edge(u, v) => {
                k.push(EDGE_TAG);
                k.extend_from_slice(&u.to_be_bytes());
                k.extend_from_slice(&v.to_be_bytes());
            }
        }
        k
    }

    pub fn property(e: Element, name: &[u8]) -> Vec<u8> {
        let mut k = element_prefix(e);
        k.extend_from_slice(name);
        k
    }

    /// Splits a property key into its element and name.
    pub fn parse_property(key: &[u8]) -> Option<(Element, &[u8])> {
        let id = |b: &[u8]| u64::from_be_bytes(b.try_into().unwrap());
        match key {
            [PROPERTY_NS, VERTEX_TAG, rest @ ..] if rest.len() >= 8 => {
                Some((Element::Vertex(id(&rest[..8])), &rest[8..]))
            }
            [PROPERTY_NS, EDGE_TAG, rest @ ..] if rest.len() >= 16 => {
                Some((Element::Edge(id(&rest[..8]), id(&rest[8..16])), &rest[16..]))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    Vertex(u64),
    Edge(u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Vertex,
    Edge,
}

impl Element {
    pub fn kind(&self) -> ElementKind {
        match self {
            Element::Vertex(_) => ElementKind::Vertex,
            Element::Edge(..) => ElementKind::Edge,
        }
    }
}

/// Folds adjacency deltas onto pivots and tombstones.
#[derive(Debug, Clone, Copy)]
pub struct GraphMergeOperator {
    pub codec: CodecMode,
}

impl MergeOperator for GraphMergeOperator {
    fn check_operand(&self, value: &[u8]) -> Result<()> {
        match decode_payload(value)?.kind {
            PayloadKind::Delta => Ok(()),
            PayloadKind::Pivot => Err(Error::InvalidArgument("merge operand is a pivot payload".into())),
        }
    }

    fn merge(
        &self,
        _key: &[u8],
        base: Option<(EntryKind, &[u8])>,
        operands: &[&[u8]],
        bottom: bool,
    ) -> Result<Option<(EntryKind, Vec<u8>)>> {
        let deltas = operands.iter().map(|v| decode_payload(v)).collect::<Result<Vec<_>>>()?;
        let Some(delta) = fold_chain(&deltas)? else {
            return Ok(base.map(|(k, v)| (k, v.to_vec())));
        };
        let out = match base {
            Some((EntryKind::Pivot, v)) => {
                let merged = merge_values(&decode_payload(v)?, &delta)?;
                Some((EntryKind::Pivot, merged))
            }
            Some((EntryKind::Tombstone, _)) if delta.creates => Some((EntryKind::Pivot, delta.into_resolved())),
            Some((EntryKind::Tombstone, _)) => return Ok(Some((EntryKind::Tombstone, Vec::new()))),
            Some((EntryKind::Delta, _)) => return Err(Error::Corruption("delta passed as merge base".into())),
            None if bottom && !delta.creates => None,
            None if bottom => {
                let mut d = delta;
                d.out.removes.clear();
                d.inc.removes.clear();
                Some((EntryKind::Delta, d))
            }
            None => Some((EntryKind::Delta, delta)),
        };
        Ok(out.map(|(k, p)| (k, encode_payload(&p, self.codec))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub direction: DirectionMode,
    pub policy: UpdatePolicy,
    pub codec: CodecMode,
    pub tree: TreeConfig,
    /// Hide neighbors whose vertex no longer exists.
    pub strict: bool,
    pub self_loops: bool,
    pub sketch_seed: u64,
    pub window: usize,
    pub prior_lookup: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            direction: DirectionMode::Undirected,
            policy: UpdatePolicy::Adaptive,
            codec: CodecMode::EliasFano,
            tree: TreeConfig::default(),
            strict: false,
            self_loops: true,
            sketch_seed: 0x5eed,
            window: crate::policy::DEFAULT_WINDOW,
            prior_lookup: 0.5,
        }
    }
}

/// How the halves of one edge update were written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Routing {
    pub source: UpdateMethod,
    /// `None` for an undirected self-loop, which is a single half-update.
    pub target: Option<UpdateMethod>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UpdateCounters {
    pub delta_updates: u64,
    pub pivot_updates: u64,
    /// Sums of the estimated degree at routing time.
    pub delta_degree_sum: u64,
    pub pivot_degree_sum: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub n: u64,
    pub m: u64,
    pub avg_degree: f64,
    pub updates: UpdateCounters,
    pub io: IoCounters,
    pub levels: usize,
}

/// Dense bitmap for small ids, ordered set beyond.
#[derive(Debug, Default)]
struct VertexSet {
    bits: Vec<u64>,
    sparse: BTreeSet<u64>,
}

impl VertexSet {
    /// Returns whether the vertex was absent.
    fn insert(&mut self, u: u64) -> bool {
        if u >= SKETCH_ID_LIMIT {
            return self.sparse.insert(u);
        }
        let (w, b) = ((u / 64) as usize, u % 64);
        if w >= self.bits.len() {
            self.bits.resize((w + 1).next_power_of_two(), 0);
        }
        let was = self.bits[w] >> b & 1 == 1;
        self.bits[w] |= 1 << b;
        !was
    }

    /// Returns whether the vertex was present.
    fn remove(&mut self, u: u64) -> bool {
        if u >= SKETCH_ID_LIMIT {
            return self.sparse.remove(&u);
        }
        let (w, b) = ((u / 64) as usize, u % 64);
        match self.bits.get_mut(w) {
            Some(word) => {
                let was = *word >> b & 1 == 1;
                *word &= !(1 << b);
                was
            }
            None => false,
        }
    }

    fn clear(&mut self) {
        self.bits.clear();
        self.sparse.clear();
    }

    fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        let dense = self
            .bits
            .iter()
            .enumerate()
            .flat_map(|(w, &word)| (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| w as u64 * 64 + b));
        dense.chain(self.sparse.iter().copied())
    }
}

struct Writer {
    sketch: DegreeSketch,
    stats: WorkloadStats,
    counters: UpdateCounters,
    live: VertexSet,
}

pub struct GraphStore {
    engine: Engine,
    config: GraphConfig,
    shape: ModelShape,
    writer: Mutex<Writer>,
}

impl std::fmt::Debug for GraphStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphStore").field("engine", &self.engine).field("config", &self.config).finish()
    }
}

impl GraphStore {
    /// Opens or creates a store. Reopening with a different direction mode
    /// or codec is an error; the other settings may change between sessions.
    pub fn open(dir: impl AsRef<Path>, config: GraphConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let op = Arc::new(GraphMergeOperator { codec: config.codec });
        let engine = Engine::open(dir, config.tree, op)?;
        let existing = engine.meta(META_KEY);
        if let Some(stored) = &existing {
            let stored: GraphConfig =
                serde_json::from_str(stored).map_err(|e| Error::Corruption(format!("graph config: {e}")))?;
            if stored.direction != config.direction || stored.codec != config.codec {
                return Err(Error::Config(format!(
                    "store was created as {:?} with the {:?} codec",
                    stored.direction, stored.codec
                )));
            }
        }
        let tree = engine.config();
        engine.set_meta(META_KEY, &serde_json::to_string(&GraphConfig { tree, ..config }).unwrap())?;
        let sketch_path = dir.join(SKETCH_FILE);
        let sketch_loaded = sketch_path.exists();
        let sketch = if sketch_loaded {
            DegreeSketch::load(&sketch_path, config.sketch_seed)?
        } else {
            DegreeSketch::new(config.sketch_seed)
        };
        let shape = ModelShape {
            id_bytes: 8.0,
            block_bytes: tree.block_bytes as f64,
            size_ratio: tree.size_ratio as f64,
            mode: tree.leveling_mode,
        };
        let store = Self {
            engine,
            config: GraphConfig { tree, ..config },
            shape,
            writer: Mutex::new(Writer {
                sketch,
                stats: WorkloadStats::new(config.window, config.prior_lookup),
                counters: UpdateCounters::default(),
                live: VertexSet::default(),
            }),
        };
        if existing.is_some() {
            store.recount_inner(!sketch_loaded)?;
        }
        store.engine.reset_stats();
        Ok(store)
    }

    /// Settings a store in `dir` was last opened with, if there is one.
    pub fn stored_config(dir: impl AsRef<Path>) -> Result<Option<GraphConfig>> {
        let Some(json) = Engine::read_meta(dir.as_ref(), META_KEY)? else {
            return Ok(None);
        };
        let config = serde_json::from_str(&json).map_err(|e| Error::Corruption(format!("graph config: {e}")))?;
        Ok(Some(config))
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn directed(&self) -> bool {
        self.config.direction == DirectionMode::Directed
    }

    fn encode(&self, p: &AdjacencyPayload) -> Vec<u8> {
        encode_payload(p, self.config.codec)
    }

    /// Current adjacency of `u` as a pivot, or `None` when `u` does not exist.
    fn load(&self, u: u64) -> Result<Option<AdjacencyPayload>> {
        let Some(r) = self.engine.get(&keys::vertex(u))? else {
            return Ok(None);
        };
        let p = decode_payload(&r.value)?;
        Ok(match r.kind {
            EntryKind::Pivot => Some(p),
            EntryKind::Delta if p.creates => Some(p.into_resolved()),
            _ => None,
        })
    }

    fn observe(&self, op: OpKind) {
        self.writer.lock().stats.observe(op);
    }

    pub fn add_vertex(&self, u: u64) -> Result<()> {
        let mut w = self.writer.lock();
        w.stats.observe(OpKind::Update);
        if self.load(u)?.is_none() {
            self.engine.put(
                &keys::vertex(u),
                EntryKind::Pivot,
                &self.encode(&AdjacencyPayload::empty_pivot(self.config.direction)),
            )?;
        }
        if w.live.insert(u) {
            w.stats.n += 1;
        }
        Ok(())
    }

    /// Writes a tombstone. Edges pointing at `u` from other vertices stay.
    pub fn delete_vertex(&self, u: u64) -> Result<()> {
        let mut w = self.writer.lock();
        w.stats.observe(OpKind::Update);
        self.engine.put(&keys::vertex(u), EntryKind::Tombstone, &[])?;
        if w.live.remove(u) {
            w.stats.n -= 1;
        }
        Ok(())
    }

    pub fn add_edge(&self, u: u64, v: u64) -> Result<Routing> {
        self.edge_update(u, v, EdgeOp::Add)
    }

    pub fn delete_edge(&self, u: u64, v: u64) -> Result<Routing> {
        self.edge_update(u, v, EdgeOp::Remove)
    }

    fn edge_update(&self, u: u64, v: u64, op: EdgeOp) -> Result<Routing> {
        if u == v && !self.config.self_loops {
            return Err(Error::InvalidArgument(format!("self-loop on {u} while self-loops are disabled")));
        }
        let mut w = self.writer.lock();
        w.stats.observe(OpKind::Update);
        let (target_vertex, target_dir) = if self.directed() { (v, Direction::In) } else { (v, Direction::Out) };
        let (source, changed) = self.half_update(&mut w, u, Direction::Out, op, v)?;
        let target = if !self.directed() && u == v {
            None
        } else {
            Some(self.half_update(&mut w, target_vertex, target_dir, op, u)?.0)
        };
        match op {
            EdgeOp::Add => {
                for x in [u, v] {
                    if w.live.insert(x) {
                        w.stats.n += 1;
                    }
                }
                if changed {
                    w.stats.m += 1;
                }
            }
            EdgeOp::Remove if changed => w.stats.m = w.stats.m.saturating_sub(1),
            EdgeOp::Remove => {}
        }
        Ok(Routing { source, target })
    }

    /// One half of an edge update on vertex `x`. Returns the route taken and
    /// whether the list changed (assumed for deltas).
    fn half_update(
        &self,
        w: &mut Writer,
        x: u64,
        dir: Direction,
        op: EdgeOp,
        neighbor: u64,
    ) -> Result<(UpdateMethod, bool)> {
        let in_sketch = x < SKETCH_ID_LIMIT;
        let d_hat = if in_sketch { w.sketch.estimate(x) } else { 0 };
        let method = match self.config.policy {
            UpdatePolicy::AlwaysDelta => UpdateMethod::Delta,
            UpdatePolicy::AlwaysPivot => UpdateMethod::Pivot,
            UpdatePolicy::Adaptive => {
                let p = self.shape.params(&w.stats, self.engine.level_count() as u32);
                choose_update(d_hat, &p, !in_sketch || w.sketch.is_saturated(x))
            }
        };
        if op == EdgeOp::Add && in_sketch {
            w.sketch.increment(x);
        }
        let key = keys::vertex(x);
        let changed = match method {
            UpdateMethod::Delta => {
                w.counters.delta_updates += 1;
                w.counters.delta_degree_sum += d_hat;
                let delta = AdjacencyPayload::single_edge(self.config.direction, dir, op, neighbor);
                self.engine.merge(&key, &self.encode(&delta))?;
                true
            }
            UpdateMethod::Pivot => {
                w.counters.pivot_updates += 1;
                w.counters.pivot_degree_sum += d_hat;
                let current = self.load(x)?;
                let exists = current.is_some();
                let mut p = current.unwrap_or_else(|| AdjacencyPayload::empty_pivot(self.config.direction));
                let list = &mut p.list_mut(dir).adds;
                let pos = list.binary_search(&neighbor);
                let changed = match (op, pos) {
                    (EdgeOp::Add, Err(i)) => {
                        list.insert(i, neighbor);
                        true
                    }
                    (EdgeOp::Remove, Ok(i)) => {
                        list.remove(i);
                        true
                    }
                    _ => false,
                };
                if changed || (op == EdgeOp::Add && !exists) {
                    self.engine.put(&key, EntryKind::Pivot, &self.encode(&p))?;
                }
                changed
            }
        };
        Ok((method, changed))
    }

    /// Resolved adjacency of `u`; `None` for unknown or deleted vertices.
    pub fn get_neighbors(&self, u: u64) -> Result<Option<AdjacencyPayload>> {
        self.observe(OpKind::Lookup);
        self.peek_neighbors(u)
    }

    /// [`get_neighbors`](Self::get_neighbors) without counting toward the
    /// lookup/update mix the adaptive policy sees.
    pub fn peek_neighbors(&self, u: u64) -> Result<Option<AdjacencyPayload>> {
        let Some(mut p) = self.load(u)? else {
            return Ok(None);
        };
        if self.config.strict {
            for dir in [Direction::Out, Direction::In] {
                let ids = std::mem::take(&mut p.list_mut(dir).adds);
                let mut kept = Vec::with_capacity(ids.len());
                for id in ids {
                    if self.exists_quiet(id)? {
                        kept.push(id);
                    }
                }
                p.list_mut(dir).adds = kept;
            }
        }
        Ok(Some(p))
    }

    pub fn get_out_neighbors(&self, u: u64) -> Result<Option<Vec<u64>>> {
        Ok(self.get_neighbors(u)?.map(|p| p.out.adds))
    }

    pub fn get_in_neighbors(&self, u: u64) -> Result<Option<Vec<u64>>> {
        Ok(self.get_neighbors(u)?.map(|p| if self.directed() { p.inc.adds } else { p.out.adds }))
    }

    pub fn exists(&self, u: u64) -> Result<bool> {
        self.observe(OpKind::Lookup);
        self.exists_quiet(u)
    }

    fn exists_quiet(&self, u: u64) -> Result<bool> {
        Ok(self.load(u)?.is_some())
    }

    /// Whether `u -> v` (or `{u, v}`) is present. Stops at the newest entry
    /// that decides it.
    pub fn has_edge(&self, u: u64, v: u64) -> Result<bool> {
        self.observe(OpKind::Lookup);
        let mut found = None;
        self.engine.visit(&keys::vertex(u), |kind, value| {
            if kind == EntryKind::Tombstone {
                found = Some(false);
                return Ok(false);
            }
            let p = decode_payload(value)?;
            found = match kind {
                EntryKind::Pivot => Some(p.out.adds.binary_search(&v).is_ok()),
                _ => p.out.label(v).map(|op| op == EdgeOp::Add),
            };
            Ok(found.is_none())
        })?;
        let present = found.unwrap_or(false);
        if present && self.config.strict {
            return self.exists_quiet(v);
        }
        Ok(present)
    }

    pub fn set_property(&self, e: Element, name: &[u8], value: &[u8]) -> Result<()> {
        self.observe(OpKind::Update);
        self.engine.put(&keys::property(e, name), EntryKind::Pivot, value).map(drop)
    }

    pub fn get_property(&self, e: Element, name: &[u8]) -> Result<Option<Vec<u8>>> {
        self.observe(OpKind::Lookup);
        Ok(self.engine.get(&keys::property(e, name))?.map(|r| r.value))
    }

    pub fn delete_property(&self, e: Element, name: &[u8]) -> Result<()> {
        self.observe(OpKind::Update);
        self.engine.put(&keys::property(e, name), EntryKind::Tombstone, &[]).map(drop)
    }

    /// All `(name, value)` pairs of one element, by name.
    pub fn properties(&self, e: Element) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        self.observe(OpKind::Lookup);
        let mut out = Vec::new();
        self.engine.scan_prefix(&keys::element_prefix(e), |key, r| {
            if let Some((_, name)) = keys::parse_property(key) {
                out.push((name.to_vec(), r.value));
            }
            Ok(true)
        })?;
        Ok(out)
    }

    /// Elements of `kind` whose property `name` equals `value`; a full scan
    /// of that kind's properties.
    pub fn find_by_property(&self, kind: ElementKind, name: &[u8], value: &[u8]) -> Result<Vec<Element>> {
        self.observe(OpKind::Lookup);
        let tag = match kind {
            ElementKind::Vertex => keys::VERTEX_TAG,
            ElementKind::Edge => keys::EDGE_TAG,
        };
        let mut out = Vec::new();
        self.engine.scan_prefix(&[keys::PROPERTY_NS, tag], |key, r| {
            if key.len() == 8 {
                return Ok(true);
            }
            if let Some((e, n)) = keys::parse_property(key) {
                if n == name && r.value == value {
                    out.push(e);
                }
            }
            Ok(true)
        })?;
        Ok(out)
    }

    pub fn stats(&self) -> GraphStats {
        let w = self.writer.lock();
        GraphStats {
            n: w.stats.n,
            m: w.stats.m,
            avg_degree: w.stats.avg_degree(),
            updates: w.counters,
            io: self.engine.io_stats(),
            levels: self.engine.level_count(),
        }
    }

    /// Ids of all live vertices, ascending.
    pub fn vertex_ids(&self) -> Vec<u64> {
        self.writer.lock().live.iter().collect()
    }

    /// Current `(theta_lookup, theta_update)` estimate.
    pub fn theta(&self) -> (f64, f64) {
        self.writer.lock().stats.theta()
    }

    pub fn estimated_degree(&self, u: u64) -> u64 {
        self.writer.lock().sketch.estimate(u)
    }

    /// Cost-model parameters as the next adaptive decision would see them.
    pub fn current_params(&self) -> crate::cost::CostParams {
        let w = self.writer.lock();
        self.shape.params(&w.stats, self.engine.level_count() as u32)
    }

    pub fn leveling_mode(&self) -> LevelingMode {
        self.shape.mode
    }

    /// Rescans every vertex to make `n` and `m` exact. Delta-routed updates
    /// cannot tell duplicates apart, so the live edge count drifts upward
    /// until this runs.
    pub fn recount(&self) -> Result<GraphStats> {
        self.recount_inner(false)?;
        Ok(self.stats())
    }

    fn recount_inner(&self, rebuild_sketch: bool) -> Result<()> {
        let mut w = self.writer.lock();
        let directed = self.directed();
        let (mut n, mut list_sum, mut loops) = (0u64, 0u64, 0u64);
        w.live.clear();
        if rebuild_sketch {
            w.sketch.clear();
        }
        let w = &mut *w;
        self.engine.scan_prefix(&[], |key, r| {
            let Some(u) = keys::parse_vertex(key) else {
                return Ok(true);
            };
            let p = decode_payload(&r.value)?;
            if r.kind == EntryKind::Delta && !p.creates {
                return Ok(true);
            }
            n += 1;
            w.live.insert(u);
            list_sum += p.out.adds.len() as u64;
            if !directed && p.out.adds.binary_search(&u).is_ok() {
                loops += 1;
            }
            if rebuild_sketch && u < SKETCH_ID_LIMIT {
                for _ in 0..p.degree() {
                    w.sketch.increment(u);
                }
            }
            Ok(true)
        })?;
        w.stats.n = n;
        w.stats.m = if directed { list_sum } else { (list_sum + loops) / 2 };
        Ok(())
    }

    pub fn flush(&self) -> Result<()> {
        let _w = self.writer.lock();
        self.engine.flush_memtable()?;
        self.engine.maybe_compact()
    }

    /// Flushes, then pushes level 1 down into level 2.
    pub fn force_compaction(&self) -> Result<()> {
        let _w = self.writer.lock();
        self.engine.flush_memtable()?;
        self.engine.compact(1)?;
        self.engine.maybe_compact()
    }

    /// Flushes the engine and saves the degree sketch.
    pub fn close(&self) -> Result<()> {
        let w = self.writer.lock();
        self.engine.close()?;
        w.sketch.save(&self.engine.dir().join(SKETCH_FILE))?;
        Ok(())
    }
}
