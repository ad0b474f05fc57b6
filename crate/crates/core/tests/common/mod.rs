#![allow(dead_code)]

use polylsm::graph::{Element, ElementKind, GraphConfig, GraphStore};
use polylsm::lsm::{LevelingMode, TreeConfig};
use polylsm::oracle::{Op, ReplayOracle};
use polylsm::payload::{CodecMode, DirectionMode};
use polylsm::policy::UpdatePolicy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub enum Step {
    Mutate(Op),
    Neighbors(u64),
    HasEdge(u64, u64),
    Property(Element, Vec<u8>),
    Find(ElementKind, Vec<u8>, Vec<u8>),
    Compact,
}

const NAMES: [&[u8]; 3] = [b"name", b"color", b"w"];

fn element(rng: &mut ChaCha8Rng, vertices: u64) -> Element {
    if rng.random_bool(0.7) {
        Element::Vertex(rng.random_range(0..vertices))
    } else {
        Element::Edge(rng.random_range(0..vertices), rng.random_range(0..vertices))
    }
}

/// A reproducible mix of mutations and queries over `vertices` ids, with a
/// forced compaction every `compact_every` steps.
pub fn random_steps(seed: u64, count: usize, vertices: u64, compact_every: usize) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::with_capacity(count);
    for i in 0..count {
        if compact_every > 0 && i > 0 && i % compact_every == 0 {
            steps.push(Step::Compact);
            continue;
        }
        let u = rng.random_range(0..vertices);
        let v = rng.random_range(0..vertices);
        let r: f64 = rng.random();
        let step = if r < 0.40 {
            Step::Mutate(Op::AddEdge(u, v))
        } else if r < 0.50 {
            Step::Mutate(Op::DeleteEdge(u, v))
        } else if r < 0.53 {
            Step::Mutate(Op::AddVertex(u))
        } else if r < 0.55 {
            Step::Mutate(Op::DeleteVertex(u))
        } else if r < 0.59 {
            let value = vec![rng.random_range(0..4u8)];
            Step::Mutate(Op::SetProperty(element(&mut rng, vertices), NAMES[rng.random_range(0..3)].to_vec(), value))
        } else if r < 0.60 {
            Step::Mutate(Op::DeleteProperty(element(&mut rng, vertices), NAMES[rng.random_range(0..3)].to_vec()))
        } else if r < 0.80 {
            Step::Neighbors(u)
        } else if r < 0.95 {
            Step::HasEdge(u, v)
        } else if r < 0.999 {
            Step::Property(element(&mut rng, vertices), NAMES[rng.random_range(0..3)].to_vec())
        } else {
            let kind = if rng.random_bool(0.5) { ElementKind::Vertex } else { ElementKind::Edge };
            Step::Find(kind, NAMES[rng.random_range(0..3)].to_vec(), vec![rng.random_range(0..4u8)])
        };
        steps.push(step);
    }
    steps
}

pub fn config(
    direction: DirectionMode,
    policy: UpdatePolicy,
    mode: LevelingMode,
    codec: CodecMode,
    memtable: u64,
) -> GraphConfig {
    GraphConfig {
        direction,
        policy,
        codec,
        tree: TreeConfig { leveling_mode: mode, memtable_capacity: memtable, size_ratio: 4, ..TreeConfig::default() },
        ..GraphConfig::default()
    }
}

pub fn apply(store: &GraphStore, op: &Op) {
    match op {
        Op::AddVertex(u) => store.add_vertex(*u).unwrap(),
        Op::DeleteVertex(u) => store.delete_vertex(*u).unwrap(),
        Op::AddEdge(u, v) => drop(store.add_edge(*u, *v).unwrap()),
        Op::DeleteEdge(u, v) => drop(store.delete_edge(*u, *v).unwrap()),
        Op::SetProperty(e, n, v) => store.set_property(*e, n, v).unwrap(),
        Op::DeleteProperty(e, n) => store.delete_property(*e, n).unwrap(),
    }
}

/// Runs `steps` against a fresh store and the oracle. Returns the first
/// disagreement, if any.
pub fn differential(steps: &[Step], cfg: GraphConfig, vertices: u64) -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    let store = GraphStore::open(dir.path(), cfg).unwrap();
    let mut oracle = ReplayOracle::new(cfg.direction).strict(cfg.strict);
    let directed = cfg.direction == DirectionMode::Directed;
    let check_vertex = |store: &GraphStore, oracle: &ReplayOracle, u: u64, at: usize| -> Result<(), String> {
        let got = store.get_neighbors(u).unwrap();
        let want_out = oracle.out_neighbors(u);
        let got_out = got.as_ref().map(|p| p.out.adds.clone());
        if got_out != want_out {
            return Err(format!("step {at}: neighbors({u}) = {got_out:?}, oracle {want_out:?}"));
        }
        if directed {
            let got_in = got.map(|p| p.inc.adds);
            let want_in = oracle.in_neighbors(u);
            if got_in != want_in {
                return Err(format!("step {at}: in_neighbors({u}) = {got_in:?}, oracle {want_in:?}"));
            }
        }
        Ok(())
    };
    for (at, step) in steps.iter().enumerate() {
        match step {
            Step::Mutate(op) => {
                apply(&store, op);
                oracle.apply(op);
            }
            Step::Compact => store.force_compaction().unwrap(),
            &Step::Neighbors(u) => check_vertex(&store, &oracle, u, at)?,
            &Step::HasEdge(u, v) => {
                let (got, want) = (store.has_edge(u, v).unwrap(), oracle.has_edge(u, v));
                if got != want {
                    return Err(format!("step {at}: has_edge({u}, {v}) = {got}, oracle {want}"));
                }
            }
            Step::Property(e, name) => {
                let got = store.get_property(*e, name).unwrap();
                let want = oracle.property(*e, name).map(<[u8]>::to_vec);
                if got != want {
                    return Err(format!("step {at}: property({e:?}) = {got:?}, oracle {want:?}"));
                }
            }
            Step::Find(kind, name, value) => {
                let got = store.find_by_property(*kind, name, value).unwrap();
                let want = oracle.find_by_property(*kind, name, value);
                if got != want {
                    return Err(format!("step {at}: find_by_property = {got:?}, oracle {want:?}"));
                }
            }
        }
    }
    for u in 0..vertices {
        check_vertex(&store, &oracle, u, steps.len())?;
    }
    Ok(())
}
