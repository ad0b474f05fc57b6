use polylsm::graph::{GraphConfig, GraphStore};
use polylsm::lsm::TreeConfig;
use polylsm::payload::DirectionMode;
use polylsm::policy::UpdatePolicy;
use polylsm::workload::{
    generate, load_edges, parse_edge_list, run_workload, run_workload_with_readers, GraphModel, KeyDist, WorkloadSpec,
};

fn small_tree(policy: UpdatePolicy) -> GraphConfig {
    GraphConfig {
        policy,
        tree: TreeConfig { memtable_capacity: 32 << 10, ..TreeConfig::default() },
        ..GraphConfig::default()
    }
}

fn loaded(policy: UpdatePolicy, edges: &[(u64, u64)]) -> (tempfile::TempDir, GraphStore) {
    let dir = tempfile::tempdir().unwrap();
    let store = GraphStore::open(dir.path(), small_tree(policy)).unwrap();
    load_edges(&store, edges).unwrap();
    store.force_compaction().unwrap();
    (dir, store)
}

#[test]
fn triangle_and_duplicate_loads() {
    let edges = parse_edge_list("1 2\n2 3\n1 3\n".as_bytes()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = GraphStore::open(dir.path(), small_tree(UpdatePolicy::Adaptive)).unwrap();
    let st = load_edges(&store, &edges).unwrap();
    assert_eq!((st.n, st.m), (3, 3));
    assert_eq!(st.avg_degree, 1.0);
    let st = load_edges(&store, &edges).unwrap();
    assert_eq!((st.n, st.m), (3, 3));
}

#[test]
fn power_law_has_hubs() {
    let edges = generate(10_000, 40_000, GraphModel::PowerLaw(2.0), 5).unwrap();
    let mut degree = vec![0u64; 10_000];
    for (u, v) in edges {
        degree[u as usize] += 1;
        degree[v as usize] += 1;
    }
    let mean = degree.iter().sum::<u64>() as f64 / 10_000.0;
    let max = *degree.iter().max().unwrap() as f64;
    assert!(max / mean > 20.0, "max {max} mean {mean}");
}

#[test]
fn read_only_workload_writes_nothing() {
    let edges = generate(500, 4000, GraphModel::Uniform, 1).unwrap();
    let (_d, store) = loaded(UpdatePolicy::Adaptive, &edges);
    let spec = WorkloadSpec { theta_lookup: 1.0, ops: 2000, dist: KeyDist::Uniform, seed: 1 };
    let row = run_workload(&store, &spec, "t").unwrap();
    assert_eq!(row.block_writes, 0);
    assert!(row.block_reads > 0);
    assert_eq!(row.delta_updates + row.pivot_updates, 0);
}

#[test]
fn write_only_deltas_read_only_for_compaction() {
    let edges = generate(500, 4000, GraphModel::Uniform, 1).unwrap();
    let (_d, store) = loaded(UpdatePolicy::AlwaysDelta, &edges);
    let before = store.stats().io;
    let spec = WorkloadSpec { theta_lookup: 0.0, ops: 5000, dist: KeyDist::Uniform, seed: 2 };
    let row = run_workload(&store, &spec, "t").unwrap();
    let io = store.stats().io.since(&before);
    assert_eq!(io.block_reads, io.compaction_reads);
    assert_eq!(row.block_reads, io.block_reads);
    assert_eq!(row.pivot_updates, 0);
}

#[test]
fn identical_specs_are_reproducible() {
    let edges = generate(800, 6000, GraphModel::PowerLaw(2.2), 3).unwrap();
    let spec = WorkloadSpec { theta_lookup: 0.4, ops: 5000, dist: KeyDist::Zipf(1.1), seed: 9 };
    let run = || {
        let (_d, store) = loaded(UpdatePolicy::Adaptive, &edges);
        let row = run_workload(&store, &spec, "t").unwrap();
        let lists: Vec<_> = (0..800).map(|u| store.get_out_neighbors(u).unwrap()).collect();
        (row.block_reads, row.block_writes, row.delta_updates, row.pivot_updates, lists)
    };
    assert_eq!(run(), run());
}

#[test]
fn adaptive_routes_hubs_to_deltas() {
    let edges = generate(5000, 60_000, GraphModel::PowerLaw(2.0), 4).unwrap();
    let (_d, store) = loaded(UpdatePolicy::Adaptive, &edges);
    let spec = WorkloadSpec { theta_lookup: 0.8, ops: 20_000, dist: KeyDist::Zipf(0.8), seed: 6 };
    let row = run_workload(&store, &spec, "t").unwrap();
    assert!(row.delta_updates > 0 && row.pivot_updates > 0, "{row:?}");
    assert!(row.mean_delta_degree > row.mean_pivot_degree, "{row:?}");
}

#[test]
fn empty_store_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = GraphStore::open(dir.path(), small_tree(UpdatePolicy::Adaptive)).unwrap();
    let spec = WorkloadSpec { theta_lookup: 0.5, ops: 10, dist: KeyDist::Uniform, seed: 0 };
    assert!(run_workload(&store, &spec, "t").is_err());
}

#[test]
fn readers_see_consistent_lists_and_leave_routing_alone() {
    let edges = generate(600, 5000, GraphModel::PowerLaw(2.1), 8).unwrap();
    let spec = WorkloadSpec { theta_lookup: 0.3, ops: 8000, dist: KeyDist::Zipf(0.9), seed: 2 };
    let run = |threads| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GraphConfig { direction: DirectionMode::Directed, ..small_tree(UpdatePolicy::Adaptive) };
        let store = GraphStore::open(dir.path(), cfg).unwrap();
        load_edges(&store, &edges).unwrap();
        let (row, readers) = run_workload_with_readers(&store, &spec, "t", threads).unwrap();
        let lists: Vec<_> = (0..600).map(|u| store.get_neighbors(u).unwrap()).collect();
        (row.delta_updates, row.pivot_updates, lists, readers)
    };
    let (d0, p0, lists0, none) = run(0);
    assert_eq!(none.lookups, 0);
    let (d4, p4, lists4, readers) = run(4);
    assert!(readers.lookups > 0);
    assert_eq!(readers.violations, 0, "{:?}", readers.first_violation);
    assert_eq!((d0, p0), (d4, p4));
    assert_eq!(lists0, lists4);
}
