mod common;

use common::{config, differential, random_steps};
use polylsm::graph::{Element, ElementKind, GraphConfig, GraphStore};
use polylsm::lsm::{LevelingMode, TreeConfig};
use polylsm::oracle::Op;
use polylsm::payload::{CodecMode, DirectionMode};
use polylsm::policy::{UpdateMethod, UpdatePolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POLICIES: [UpdatePolicy; 3] = [UpdatePolicy::Adaptive, UpdatePolicy::AlwaysDelta, UpdatePolicy::AlwaysPivot];

fn store(dir: &std::path::Path, direction: DirectionMode, policy: UpdatePolicy) -> GraphStore {
    GraphStore::open(dir, config(direction, policy, LevelingMode::Leveling, CodecMode::EliasFano, 1 << 20)).unwrap()
}

#[test]
fn figure_four_pivot_update() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GraphConfig {
        direction: DirectionMode::Directed,
        policy: UpdatePolicy::AlwaysDelta,
        tree: TreeConfig { leveling_mode: LevelingMode::Leveling, ..TreeConfig::default() },
        ..GraphConfig::default()
    };
    {
        let s = GraphStore::open(dir.path(), cfg).unwrap();
        s.add_edge(4, 5).unwrap();
        s.add_edge(4, 6).unwrap();
        s.force_compaction().unwrap();
        s.force_compaction().unwrap();
        s.add_edge(4, 7).unwrap();
        s.force_compaction().unwrap();
        s.add_edge(4, 8).unwrap();
        s.flush().unwrap();
        assert_eq!(s.get_out_neighbors(4).unwrap(), Some(vec![5, 6, 7, 8]));
        s.close().unwrap();
    }
    let s = GraphStore::open(dir.path(), GraphConfig { policy: UpdatePolicy::AlwaysPivot, ..cfg }).unwrap();
    let r = s.add_edge(4, 9).unwrap();
    assert_eq!(r.source, UpdateMethod::Pivot);
    assert_eq!(s.get_out_neighbors(4).unwrap(), Some(vec![5, 6, 7, 8, 9]));
    let mut kinds = Vec::new();
    s.engine()
        .visit(&4u64.to_be_bytes(), |k, _| {
            kinds.push(k);
            Ok(true)
        })
        .unwrap();
    assert_eq!(kinds, vec![polylsm::EntryKind::Pivot]);
    assert_eq!(s.get_in_neighbors(9).unwrap(), Some(vec![4]));
}

#[test]
fn vertex_lifecycle() {
    for policy in POLICIES {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), DirectionMode::Undirected, policy);
        s.add_vertex(9).unwrap();
        assert_eq!(s.get_out_neighbors(9).unwrap(), Some(vec![]));
        assert!(s.exists(9).unwrap());
        s.add_edge(9, 1).unwrap();
        assert_eq!(s.get_out_neighbors(9).unwrap(), Some(vec![1]));
        s.add_vertex(9).unwrap();
        assert_eq!(s.get_out_neighbors(9).unwrap(), Some(vec![1]), "{policy:?}");
        s.delete_vertex(9).unwrap();
        assert!(!s.exists(9).unwrap());
        assert_eq!(s.get_out_neighbors(9).unwrap(), None);
        // dangling edge on the other side
        assert_eq!(s.get_out_neighbors(1).unwrap(), Some(vec![9]));
        s.add_vertex(9).unwrap();
        assert_eq!(s.get_out_neighbors(9).unwrap(), Some(vec![]));
        assert_eq!(s.get_out_neighbors(12345).unwrap(), None);
    }
}

#[test]
fn strict_mode_hides_dangling_edges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GraphConfig {
        strict: true,
        ..config(DirectionMode::Directed, UpdatePolicy::AlwaysDelta, LevelingMode::OneLeveling, CodecMode::Raw, 1 << 20)
    };
    let s = GraphStore::open(dir.path(), cfg).unwrap();
    s.add_edge(1, 2).unwrap();
    s.add_edge(1, 3).unwrap();
    s.delete_vertex(2).unwrap();
    assert_eq!(s.get_out_neighbors(1).unwrap(), Some(vec![3]));
    assert!(!s.has_edge(1, 2).unwrap());
    assert!(s.has_edge(1, 3).unwrap());
}

#[test]
fn edge_deletes() {
    for policy in POLICIES {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), DirectionMode::Undirected, policy);
        s.add_edge(1, 2).unwrap();
        s.delete_edge(1, 2).unwrap();
        assert_eq!(s.get_out_neighbors(1).unwrap(), Some(vec![]));
        assert_eq!(s.get_out_neighbors(2).unwrap(), Some(vec![]));
        s.delete_edge(5, 6).unwrap();
        assert_eq!(s.get_out_neighbors(5).unwrap(), None, "{policy:?}");
        assert!(!s.has_edge(5, 6).unwrap());
    }
}

#[test]
fn has_edge_follows_the_newest_entry() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), DirectionMode::Undirected, UpdatePolicy::AlwaysPivot);
    s.add_edge(1, 2).unwrap();
    s.add_edge(1, 3).unwrap();
    s.flush().unwrap();
    assert!(s.has_edge(1, 2).unwrap());
    let dir2 = tempfile::tempdir().unwrap();
    let d = store(dir2.path(), DirectionMode::Undirected, UpdatePolicy::AlwaysDelta);
    d.add_edge(1, 2).unwrap();
    d.flush().unwrap();
    d.delete_edge(1, 2).unwrap();
    assert!(!d.has_edge(1, 2).unwrap());
    assert!(!d.has_edge(2, 1).unwrap());
}

#[test]
fn delta_updates_read_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), DirectionMode::Directed, UpdatePolicy::AlwaysDelta);
    for u in 0..100 {
        s.add_edge(u, u + 1).unwrap();
    }
    s.flush().unwrap();
    s.engine().reset_stats();
    for u in 0..100 {
        s.add_edge(u + 1, u).unwrap();
    }
    assert_eq!(s.stats().io.block_reads, 0);
}

#[test]
fn has_edge_reads_no_more_than_get_neighbors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        let cfg =
            config(DirectionMode::Undirected, POLICIES[trial % 3], LevelingMode::Leveling, CodecMode::Raw, 8 << 10);
        let s = GraphStore::open(dir.path(), cfg).unwrap();
        for _ in 0..3000 {
            s.add_edge(rng.random_range(0..300), rng.random_range(0..300)).unwrap();
        }
        for _ in 0..300 {
            let (u, v) = (rng.random_range(0..300), rng.random_range(0..300));
            let a = s.stats().io.block_reads;
            s.has_edge(u, v).unwrap();
            let b = s.stats().io.block_reads;
            s.get_neighbors(u).unwrap();
            let c = s.stats().io.block_reads;
            assert!(b - a <= c - b, "has_edge {} > get_neighbors {}", b - a, c - b);
        }
    }
}

#[test]
fn properties_roundtrip_and_scan() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), DirectionMode::Directed, UpdatePolicy::Adaptive);
    s.set_property(Element::Vertex(1), b"name", b"alice").unwrap();
    s.set_property(Element::Vertex(1), b"age", &[30]).unwrap();
    s.set_property(Element::Vertex(2), b"name", b"bob").unwrap();
    s.set_property(Element::Edge(1, 2), b"since", b"2020").unwrap();
    s.set_property(Element::Vertex(u64::MAX), b"name", b"alice").unwrap();
    assert_eq!(s.get_property(Element::Vertex(1), b"name").unwrap().as_deref(), Some(&b"alice"[..]));
    assert_eq!(
        s.properties(Element::Vertex(1)).unwrap(),
        vec![(b"age".to_vec(), vec![30]), (b"name".to_vec(), b"alice".to_vec())]
    );
    s.flush().unwrap();
    assert_eq!(
        s.find_by_property(ElementKind::Vertex, b"name", b"alice").unwrap(),
        vec![Element::Vertex(1), Element::Vertex(u64::MAX)]
    );
    assert_eq!(s.find_by_property(ElementKind::Edge, b"since", b"2020").unwrap(), vec![Element::Edge(1, 2)]);
    s.delete_property(Element::Vertex(1), b"name").unwrap();
    assert_eq!(s.get_property(Element::Vertex(1), b"name").unwrap(), None);
    assert_eq!(s.find_by_property(ElementKind::Vertex, b"name", b"alice").unwrap(), vec![Element::Vertex(u64::MAX)]);
}

#[test]
fn stats_and_recount() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), DirectionMode::Undirected, UpdatePolicy::AlwaysDelta);
    let st = s.stats();
    assert_eq!((st.n, st.m), (0, 0));
    for (u, v) in [(1, 2), (2, 3), (1, 3), (1, 2), (3, 3)] {
        s.add_edge(u, v).unwrap();
    }
    let st = s.stats();
    assert_eq!(st.n, 3);
    assert_eq!(st.updates.delta_updates + st.updates.pivot_updates, 9);
    let st = s.recount().unwrap();
    assert_eq!((st.n, st.m), (3, 4));
}

#[test]
fn reopen_restores_counts_and_sketch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        DirectionMode::Directed,
        UpdatePolicy::Adaptive,
        LevelingMode::OneLeveling,
        CodecMode::EliasFano,
        16 << 10,
    );
    let degree;
    {
        let s = GraphStore::open(dir.path(), cfg).unwrap();
        for v in 1..=200 {
            s.add_edge(0, v).unwrap();
        }
        s.add_vertex(999).unwrap();
        degree = s.estimated_degree(0);
        s.close().unwrap();
    }
    let s = GraphStore::open(dir.path(), cfg).unwrap();
    assert_eq!(s.estimated_degree(0), degree);
    let st = s.stats();
    assert_eq!((st.n, st.m), (202, 200));
    assert_eq!(s.get_out_neighbors(0).unwrap().unwrap().len(), 200);
    drop(s);
    std::fs::remove_file(dir.path().join(polylsm::graph::SKETCH_FILE)).unwrap();
    let s = GraphStore::open(dir.path(), cfg).unwrap();
    assert!(s.estimated_degree(0) > 50);
    let err = GraphStore::open(tempfile::tempdir().unwrap().path(), cfg).map(drop);
    assert!(err.is_ok());
    drop(s);
    let other = GraphConfig { direction: DirectionMode::Undirected, ..cfg };
    assert!(GraphStore::open(dir.path(), other).is_err());
}

#[test]
fn undirected_symmetry_without_vertex_deletes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for policy in POLICIES {
        let dir = tempfile::tempdir().unwrap();
        let s = GraphStore::open(
            dir.path(),
            config(DirectionMode::Undirected, policy, LevelingMode::OneLeveling, CodecMode::EliasFano, 8 << 10),
        )
        .unwrap();
        for _ in 0..4000 {
            let (u, v) = (rng.random_range(0..200), rng.random_range(0..200));
            if rng.random_bool(0.8) {
                s.add_edge(u, v).unwrap();
            } else {
                s.delete_edge(u, v).unwrap();
            }
        }
        for u in 0..200 {
            for v in s.get_out_neighbors(u).unwrap().unwrap_or_default() {
                assert!(s.get_out_neighbors(v).unwrap().unwrap().contains(&u), "{policy:?} {u} {v}");
            }
        }
    }
}

#[test]
fn directed_bookkeeping() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), DirectionMode::Directed, UpdatePolicy::Adaptive);
    s.add_edge(1, 2).unwrap();
    assert_eq!(s.get_out_neighbors(1).unwrap(), Some(vec![2]));
    assert_eq!(s.get_in_neighbors(1).unwrap(), Some(vec![]));
    assert_eq!(s.get_out_neighbors(2).unwrap(), Some(vec![]));
    assert_eq!(s.get_in_neighbors(2).unwrap(), Some(vec![1]));
}

#[test]
fn interleaved_add_delete_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for trial in 0..100 {
        let mut ops = Vec::new();
        for _ in 0..rng.random_range(1..12) {
            ops.push(if rng.random_bool(0.5) { Op::AddEdge(1, 2) } else { Op::DeleteEdge(1, 2) });
        }
        let steps: Vec<_> = ops.into_iter().map(common::Step::Mutate).collect();
        let cfg =
            config(DirectionMode::Undirected, POLICIES[trial % 3], LevelingMode::Leveling, CodecMode::Raw, 1 << 20);
        differential(&steps, cfg, 3).unwrap();
    }
}

#[test]
fn random_sequences_match_oracle() {
    for seed in 0..6u64 {
        for policy in POLICIES {
            let direction = if seed % 2 == 0 { DirectionMode::Directed } else { DirectionMode::Undirected };
            let mode = if seed % 3 == 0 { LevelingMode::Leveling } else { LevelingMode::OneLeveling };
            let steps = random_steps(seed, 3000, 100, 700);
            let cfg = config(direction, policy, mode, CodecMode::EliasFano, 8 << 10);
            if let Err(e) = differential(&steps, cfg, 100) {
                panic!("seed {seed} {policy:?} {direction:?} {mode:?}: {e}");
            }
        }
    }
}

#[test]
fn strict_random_sequences_match_oracle() {
    for seed in 0..3u64 {
        let steps = random_steps(seed + 50, 2000, 60, 500);
        let cfg = GraphConfig {
            strict: true,
            ..config(
                DirectionMode::Directed,
                POLICIES[seed as usize],
                LevelingMode::OneLeveling,
                CodecMode::Raw,
                8 << 10,
            )
        };
        differential(&steps, cfg, 60).unwrap();
    }
}
