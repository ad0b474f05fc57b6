//! Synthetic graphs, edge-list files and the mixed lookup/update workload
//! driver behind the command-line harness.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use serde::Serialize;

use crate::cost::{self, CostParams};
use crate::error::{Error, Result};
use crate::graph::{GraphStats, GraphStore};
use crate::lsm::LevelingMode;
use crate::payload::AdjacencyPayload;
use crate::policy::{effective_threshold, UpdateMethod, UpdatePolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphModel {
    Uniform,
    /// Expected degrees follow a power law with this exponent.
    PowerLaw(f64),
}

/// `m` distinct edges `u < v` over vertices `0..n`, reproducible from `seed`.
pub fn generate(n: u64, m: u64, model: GraphModel, seed: u64) -> Result<Vec<(u64, u64)>> {
    if n < 2 && m > 0 {
        return Err(Error::InvalidArgument(format!("{m} edges need at least two vertices, got {n}")));
    }
    let max_edges = n as u128 * n.saturating_sub(1) as u128 / 2;
    if m as u128 > max_edges {
        return Err(Error::InvalidArgument(format!("{m} edges exceed the {max_edges} possible on {n} vertices")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weighted = match model {
        GraphModel::Uniform => None,
        GraphModel::PowerLaw(exp) => {
            if exp.is_nan() || exp <= 1.0 {
                return Err(Error::InvalidArgument(format!("power-law exponent {exp} must exceed 1")));
            }
            let alpha = 1.0 / (exp - 1.0);
            let weights: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).powf(-alpha)).collect();
            let index = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut ids: Vec<u64> = (0..n).collect();
            ids.shuffle(&mut rng);
            Some((index, ids))
        }
    };
    let mut seen = HashSet::with_capacity(m as usize);
    let mut edges = Vec::with_capacity(m as usize);
    while (edges.len() as u64) < m {
        let (u, v) = match &weighted {
            None => (rng.random_range(0..n), rng.random_range(0..n)),
            Some((index, ids)) => (ids[index.sample(&mut rng)], ids[index.sample(&mut rng)]),
        };
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if seen.insert(e) {
            edges.push(e);
        }
    }
    Ok(edges)
}

pub fn write_edge_list(mut out: impl Write, edges: &[(u64, u64)]) -> Result<()> {
    for (u, v) in edges {
        writeln!(out, "{u} {v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses whitespace-separated `u v` lines. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_edge_list(input: impl BufRead) -> Result<Vec<(u64, u64)>> {
    let mut edges = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parsed = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(v), None) => u.parse::<u64>().ok().zip(v.parse::<u64>().ok()),
            _ => None,
        };
        match parsed {
            Some(e) => edges.push(e),
            None => {
                return Err(Error::InvalidArgument(format!("line {}: expected two vertex ids, got {line:?}", i + 1)))
            }
        }
    }
    Ok(edges)
}

/// Inserts edges in order, then recounts so `m` is exact.
pub fn load_edges(store: &GraphStore, edges: &[(u64, u64)]) -> Result<GraphStats> {
    for &(u, v) in edges {
        store.add_edge(u, v)?;
    }
    store.recount()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDist {
    Uniform,
    Zipf(f64),
}

impl FromStr for KeyDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(KeyDist::Uniform);
        }
        let bad = || Error::InvalidArgument(format!("unknown distribution {s:?}, expected uniform or zipf:EXP"));
        let exp: f64 = s.strip_prefix("zipf:").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if exp.is_nan() || exp <= 0.0 {
            return Err(bad());
        }
        Ok(KeyDist::Zipf(exp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub theta_lookup: f64,
    pub ops: u64,
    pub dist: KeyDist,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta_lookup) {
            return Err(Error::InvalidArgument(format!("lookup fraction {} outside [0, 1]", self.theta_lookup)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkloadOp {
    GetNeighbors(u64),
    AddEdge(u64, u64),
}

/// Index sampler over the existing vertices.
enum Picker {
    Uniform(usize),
    Zipf(Zipf<f64>),
}

impl Picker {
    fn new(len: usize, dist: KeyDist) -> Result<Self> {
        Ok(match dist {
            KeyDist::Uniform => Picker::Uniform(len),
            KeyDist::Zipf(s) => {
                Picker::Zipf(Zipf::new(len as f64, s).map_err(|e| Error::InvalidArgument(e.to_string()))?)
            }
        })
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Picker::Uniform(len) => rng.random_range(0..*len),
            Picker::Zipf(z) => z.sample(rng) as usize - 1,
        }
    }
}

/// The op sequence a workload spec produces over `vertices`. Update endpoints are
/// two distinct keys drawn from the same distribution.
pub fn workload_ops(spec: &WorkloadSpec, vertices: &[u64]) -> Result<Vec<WorkloadOp>> {
    spec.validate()?;
    if vertices.is_empty() {
        return Err(Error::InvalidArgument("workload needs a non-empty store".into()));
    }
    let picker = Picker::new(vertices.len(), spec.dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ops = Vec::with_capacity(spec.ops as usize);
    for _ in 0..spec.ops {
        let u = vertices[picker.pick(&mut rng)];
        if rng.random_bool(spec.theta_lookup) || vertices.len() < 2 {
            ops.push(WorkloadOp::GetNeighbors(u));
            continue;
        }
        let v = loop {
            let v = vertices[picker.pick(&mut rng)];
            if v != u {
                break v;
            }
        };
        ops.push(WorkloadOp::AddEdge(u, v));
    }
    Ok(ops)
}

pub fn policy_name(p: UpdatePolicy) -> &'static str {
    match p {
        UpdatePolicy::Adaptive => "adaptive",
        UpdatePolicy::AlwaysDelta => "delta",
        UpdatePolicy::AlwaysPivot => "pivot",
    }
}

pub fn leveling_name(m: LevelingMode) -> &'static str {
    match m {
        LevelingMode::Leveling => "leveling",
        LevelingMode::OneLeveling => "one-leveling",
    }
}

/// One result row of a workload run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub policy: &'static str,
    pub leveling: &'static str,
    pub theta_lookup: f64,
    pub ops: u64,
    pub ops_per_sec: f64,
    pub block_reads: u64,
    pub block_writes: u64,
    pub total_io: u64,
    /// Model cost summed over the operations actually executed.
    pub predicted_io: f64,
    pub predicted_delta_cost: Option<f64>,
    pub predicted_pivot_cost_mean: f64,
    pub threshold: u64,
    pub delta_updates: u64,
    pub pivot_updates: u64,
    pub mean_delta_degree: f64,
    pub mean_pivot_degree: f64,
}

impl MetricsRow {
    pub const HEADER: &'static str = "dataset,policy,leveling,theta_lookup,ops,ops_per_sec,block_reads,block_writes,total_io,predicted_io,predicted_delta_cost,predicted_pivot_cost_mean,threshold,delta_updates,pivot_updates,mean_delta_degree,mean_pivot_degree";

    pub fn csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|x| format!("{x:.4}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.1},{},{},{},{:.1},{},{:.4},{},{},{},{:.2},{:.2}",
            self.dataset.replace(',', "_"),
            self.policy,
            self.leveling,
            self.theta_lookup,
            self.ops,
            self.ops_per_sec,
            self.block_reads,
            self.block_writes,
            self.total_io,
            self.predicted_io,
            opt(self.predicted_delta_cost),
            self.predicted_pivot_cost_mean,
            self.threshold,
            self.delta_updates,
            self.pivot_updates,
            self.mean_delta_degree,
            self.mean_pivot_degree,
        )
    }
}

/// Blocks spanned by a pivot of `degree` neighbors. Records never straddle
/// block boundaries, so this is a ceiling.
pub fn pivot_blocks(p: &CostParams, degree: u64) -> f64 {
    ((degree as f64 + 1.0) * p.id_bytes / p.block_bytes).ceil().max(1.0)
}

/// Model I/O for a finished run. Every read of a vertex pays the expected
/// delta retrievals plus its pivot blocks; the per-level delta hit rate is
/// scaled by the share of half-updates that took the delta route.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prediction {
    pub reads_of_vertices: u64,
    pub pivot_block_sum: f64,
    pub delta_write_sum: f64,
    pub pivot_rewrite_sum: f64,
    pub delta_halves: u64,
    pub pivot_halves: u64,
}

impl Prediction {
    pub fn delta_share(&self) -> f64 {
        let halves = self.delta_halves + self.pivot_halves;
        if halves == 0 {
            0.0
        } else {
            self.delta_halves as f64 / halves as f64
        }
    }

    pub fn delta_retrievals(&self, p: &CostParams) -> f64 {
        cost::expected_retrieval_cost(p.levels, p.size_ratio, self.delta_share() * p.avg_degree)
    }

    pub fn total(&self, p: &CostParams) -> f64 {
        self.reads_of_vertices as f64 * self.delta_retrievals(p)
            + self.pivot_block_sum
            + self.delta_write_sum
            + self.pivot_rewrite_sum
    }
}

/// Runs the workload spec against `store` and flushes at the end so every write is
/// charged. I/O from earlier loading is excluded.
pub fn run_workload(store: &GraphStore, spec: &WorkloadSpec, dataset: &str) -> Result<MetricsRow> {
    let ops = workload_ops(spec, &store.vertex_ids())?;
    let before = store.stats();
    let p = store.current_params().with_theta_lookup(spec.theta_lookup);
    let delta_cost = cost::delta_cost(&p).ok();
    let threshold = effective_threshold(&p);
    let mut pred = Prediction::default();
    let mut pivot_cost_sum = 0.0;
    let started = Instant::now();
    for op in ops {
        match op {
            WorkloadOp::GetNeighbors(u) => {
                pred.reads_of_vertices += 1;
                pred.pivot_block_sum += pivot_blocks(&p, store.estimated_degree(u));
                store.get_neighbors(u)?;
            }
            WorkloadOp::AddEdge(u, v) => {
                let (du, dv) = (store.estimated_degree(u), store.estimated_degree(v));
                let routing = store.add_edge(u, v)?;
                let halves = [(routing.source, du)].into_iter().chain(routing.target.map(|t| (t, dv)));
                for (method, d) in halves {
                    match method {
                        UpdateMethod::Delta => {
                            pred.delta_halves += 1;
                            pred.delta_write_sum += cost::delta_write_cost(&p);
                        }
                        UpdateMethod::Pivot => {
                            pred.pivot_halves += 1;
                            pred.reads_of_vertices += 1;
                            pred.pivot_block_sum += pivot_blocks(&p, d);
                            pred.pivot_rewrite_sum += cost::pivot_rewrite_cost(&p, d);
                            pivot_cost_sum += cost::pivot_cost(&p, d);
                        }
                    }
                }
            }
        }
    }
    store.flush()?;
    let elapsed = started.elapsed().as_secs_f64();
    let after = store.stats();
    let io = after.io.since(&before.io);
    let delta_updates = after.updates.delta_updates - before.updates.delta_updates;
    let pivot_updates = after.updates.pivot_updates - before.updates.pivot_updates;
    let mean = |sum: f64, n: u64| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(MetricsRow {
        dataset: dataset.to_string(),
        policy: policy_name(store.config().policy),
        leveling: leveling_name(store.leveling_mode()),
        theta_lookup: spec.theta_lookup,
        ops: spec.ops,
        ops_per_sec: if elapsed > 0.0 { spec.ops as f64 / elapsed } else { 0.0 },
        block_reads: io.block_reads,
        block_writes: io.block_writes,
        total_io: io.total_io(),
        predicted_io: pred.total(&p),
        predicted_delta_cost: delta_cost,
        predicted_pivot_cost_mean: mean(pivot_cost_sum, pred.pivot_halves),
        threshold,
        delta_updates,
        pivot_updates,
        mean_delta_degree: mean(
            (after.updates.delta_degree_sum - before.updates.delta_degree_sum) as f64,
            delta_updates,
        ),
        mean_pivot_degree: mean(
            (after.updates.pivot_degree_sum - before.updates.pivot_degree_sum) as f64,
            pivot_updates,
        ),
    })
}

/// What the reader threads of [`run_workload_with_readers`] saw.
#[derive(Debug, Clone, Default)]
pub struct ReaderReport {
    pub lookups: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

const READER_SAMPLE: usize = 256;
const READER_KEEP: usize = 4096;

type Observed = (u64, [Vec<u64>; 2]);

fn lists(p: Option<AdjacencyPayload>) -> [Vec<u64>; 2] {
    p.map_or([Vec::new(), Vec::new()], |p| [p.out.adds, p.inc.adds])
}

fn is_subset(small: &[u64], big: &[u64]) -> bool {
    let big: HashSet<u64> = big.iter().copied().collect();
    small.iter().all(|x| big.contains(x))
}

/// Runs the workload while `threads` readers look up a fixed sample of
/// vertices. The workload only adds edges, so every list a reader sees must
/// be ascending, contain the list from before the run and be contained in
/// the one after it. Reader I/O is included in the row's counters.
pub fn run_workload_with_readers(
    store: &GraphStore,
    spec: &WorkloadSpec,
    dataset: &str,
    threads: usize,
) -> Result<(MetricsRow, ReaderReport)> {
    if threads == 0 {
        return Ok((run_workload(store, spec, dataset)?, ReaderReport::default()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7ead);
    let sample: Vec<u64> = store.vertex_ids().choose_multiple(&mut rng, READER_SAMPLE).copied().collect();
    let mut initial = HashMap::with_capacity(sample.len());
    for &u in &sample {
        initial.insert(u, lists(store.peek_neighbors(u)?));
    }
    let stop = AtomicBool::new(false);
    let (row, seen) = std::thread::scope(|scope| {
        let readers: Vec<_> = (0..threads)
            .map(|t| {
                let (sample, initial, stop) = (&sample, &initial, &stop);
                scope.spawn(move || -> Result<(ReaderReport, Vec<Observed>)> {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(t as u64 + 1));
                    let mut report = ReaderReport::default();
                    let mut kept = Vec::new();
                    while !stop.load(Ordering::Relaxed) {
                        let Some(&u) = sample.get(rng.random_range(0..sample.len().max(1))) else { break };
                        let got = lists(store.peek_neighbors(u)?);
                        report.lookups += 1;
                        let ascending = got.iter().all(|l| l.windows(2).all(|w| w[0] < w[1]));
                        if !ascending || !initial[&u].iter().zip(&got).all(|(a, b)| is_subset(a, b)) {
                            report.violations += 1;
                            report.first_violation.get_or_insert_with(|| format!("vertex {u}: {got:?} lost neighbors"));
                        }
                        if kept.len() < READER_KEEP {
                            kept.push((u, got));
                        }
                    }
                    Ok((report, kept))
                })
            })
            .collect();
        let row = run_workload(store, spec, dataset);
        stop.store(true, Ordering::Relaxed);
        let seen: Vec<_> = readers.into_iter().map(|h| h.join().expect("reader thread panicked")).collect();
        (row, seen)
    });
    let row = row?;
    let mut report = ReaderReport::default();
    let mut finals = HashMap::new();
    for result in seen {
        let (r, kept) = result?;
        report.lookups += r.lookups;
        report.violations += r.violations;
        if report.first_violation.is_none() {
            report.first_violation = r.first_violation;
        }
        for (u, got) in kept {
            if let std::collections::hash_map::Entry::Vacant(slot) = finals.entry(u) {
                slot.insert(lists(store.peek_neighbors(u)?));
            }
            if !finals[&u].iter().zip(&got).all(|(f, g)| is_subset(g, f)) {
                report.violations += 1;
                report
                    .first_violation
                    .get_or_insert_with(|| format!("vertex {u}: {got:?} has neighbors missing later"));
            }
        }
    }
    Ok((row, report))
}

/// Human-readable cost table for both leveling modes.
pub fn prediction_report(p: &CostParams, degrees: &[u64]) -> Result<String> {
    p.validate()?;
    let mut out = String::new();
    writeln!(
        out,
        "I={} B={} T={} L={} d={} theta_lookup={} theta_update={}",
        p.id_bytes, p.block_bytes, p.size_ratio, p.levels, p.avg_degree, p.theta_lookup, p.theta_update
    )
    .unwrap();
    for mode in [LevelingMode::Leveling, LevelingMode::OneLeveling] {
        let q = p.with_mode(mode);
        writeln!(out, "[{}]", leveling_name(mode)).unwrap();
        if q.theta_update > 0.0 {
            let (closed, scan) = (cost::threshold(&q)?, cost::threshold_by_scan(&q)?);
            writeln!(out, "delta_cost {:.6}", cost::delta_cost(&q)?).unwrap();
            writeln!(out, "threshold {closed} scan {scan} {}", if closed == scan { "agree" } else { "DISAGREE" })
                .unwrap();
        } else {
            writeln!(out, "delta_cost inf").unwrap();
            writeln!(out, "threshold {} (no updates)", effective_threshold(&q)).unwrap();
        }
        for &d in degrees {
            writeln!(out, "pivot_cost d={d} {:.6}", cost::pivot_cost(&q, d)).unwrap();
        }
    }
    for i in 1..p.levels.max(2) {
        writeln!(out, "level_hit_probability i={i} {:.6}", cost::level_hit_probability(i, p.size_ratio, p.avg_degree))
            .unwrap();
    }
    Ok(out)
}
