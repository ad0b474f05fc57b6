use std::path::Path;
use std::process::{Command, Output};

fn plsm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plsm")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn without_column(csv: &str, col: usize) -> Vec<String> {
    csv.lines()
        .map(|l| l.split(',').enumerate().filter(|&(i, _)| i != col).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out| ["gen", "--n", "300", "--m", "2000", "--model", "powerlaw:2.1", "--seed", "9", "--out", out];
    stdout(&plsm(&args("a.txt"), dir.path()));
    stdout(&plsm(&args("b.txt"), dir.path()));
    let a = std::fs::read(dir.path().join("a.txt")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.txt")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 2000);
    stdout(&plsm(&["gen", "--n", "300", "--m", "2000", "--seed", "10", "--out", "c.txt"], dir.path()));
    assert_ne!(a, std::fs::read(dir.path().join("c.txt")).unwrap());
}

#[test]
fn gen_rejects_impossible_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = plsm(&["gen", "--n", "4", "--m", "7", "--out", "x.txt"], dir.path());
    assert!(!out.status.success());
    let out = plsm(&["gen", "--n", "4", "--m", "2", "--model", "zipf", "--out", "x.txt"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn load_triangle_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tri.txt"), "# triangle\n0 1\n1 2\n\n0 2\n").unwrap();
    let text = stdout(&plsm(&["load", "tri.txt", "--data-dir", "s"], dir.path()));
    assert_eq!(field(&text, "n"), "3");
    assert_eq!(field(&text, "m"), "3");
    let text = stdout(&plsm(&["stats", "--data-dir", "s", "--recount"], dir.path()));
    assert_eq!(field(&text, "n"), "3");
    assert_eq!(field(&text, "m"), "3");
    assert_eq!(field(&text, "avg_degree"), "1.0000");
    assert!(text.contains("level 1 "), "{text}");
}

#[test]
fn directed_mode_is_remembered() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.txt"), "0 1\n0 2\n").unwrap();
    stdout(&plsm(&["load", "e.txt", "--data-dir", "s", "--mode", "directed", "--codec", "raw"], dir.path()));
    let text = stdout(&plsm(&["stats", "--data-dir", "s", "--recount"], dir.path()));
    assert_eq!(field(&text, "m"), "2");
}

#[test]
fn malformed_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "0 1\n1 2\n3 x\n").unwrap();
    let out = plsm(&["load", "bad.txt", "--data-dir", "s"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_store_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = plsm(&["stats", "--data-dir", "nothing"], dir.path());
    assert!(!out.status.success());
    let out = plsm(&["workload", "--data-dir", "nothing", "--ops", "10"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn workload_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&plsm(
        &["gen", "--n", "400", "--m", "3000", "--model", "powerlaw:2.2", "--seed", "1", "--out", "g.txt"],
        dir.path(),
    ));
    stdout(&plsm(&["load", "g.txt", "--data-dir", "g", "--policy", "delta"], dir.path()));
    let args = [
        "workload",
        "--data-dir",
        "g",
        "--theta-lookup",
        "0.1,0.9",
        "--policies",
        "adaptive,delta,pivot",
        "--ops",
        "1500",
        "--dist",
        "zipf:0.9",
        "--seed",
        "3",
        "--out",
        "m.csv",
    ];
    stdout(&plsm(&args, dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(&header[..4], ["dataset", "policy", "leveling", "theta_lookup"]);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in &lines[1..] {
        let row: Vec<&str> = line.split(',').collect();
        assert_eq!(row.len(), header.len());
        assert_eq!(row[col("ops")], "1500");
        let reads: u64 = row[col("block_reads")].parse().unwrap();
        let writes: u64 = row[col("block_writes")].parse().unwrap();
        assert_eq!(row[col("total_io")].parse::<u64>().unwrap(), reads + writes);
    }
    let policies: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(policies, ["adaptive", "delta", "pivot", "adaptive", "delta", "pivot"]);
    // the sweep ran on copies
    let text = stdout(&plsm(&["stats", "--data-dir", "g", "--recount"], dir.path()));
    assert_eq!(field(&text, "m"), "3000");

    let again = stdout(&plsm(&args[..args.len() - 2], dir.path()));
    let speed = col("ops_per_sec");
    assert_eq!(without_column(&again, speed), without_column(&csv, speed));
}

#[test]
fn predict_running_example() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&plsm(&["predict"], dir.path()));
    assert!(text.contains("[leveling]\ndelta_cost 3.711806\nthreshold 20 scan 20 agree"), "{text}");
    assert!(text.contains("threshold 25 scan 25 agree"), "{text}");
    assert!(!text.contains("DISAGREE"));

    let text = stdout(&plsm(&["predict", "--avg-degree", "37.11"], dir.path()));
    for (i, want) in [(1, 0.964), (2, 0.284), (3, 0.033)] {
        let got: f64 = field(&text, &format!("level_hit_probability i={i}")).parse().unwrap();
        assert!((got - want).abs() <= 0.001, "P_{i} = {got}");
    }

    let text = stdout(&plsm(&["predict", "--theta-lookup", "0"], dir.path()));
    assert!(text.contains("threshold 0 scan 0"), "{text}");
    let text = stdout(&plsm(&["predict", "--theta-lookup", "1"], dir.path()));
    assert!(text.contains("delta_cost inf"), "{text}");

    assert!(!plsm(&["predict", "--theta-lookup", "1.5"], dir.path()).status.success());
}

#[test]
fn workload_with_reader_threads() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&plsm(&["gen", "--n", "300", "--m", "2000", "--seed", "2", "--out", "g.txt"], dir.path()));
    stdout(&plsm(&["load", "g.txt", "--data-dir", "g", "--mode", "directed"], dir.path()));
    let out = plsm(&["workload", "--data-dir", "g", "--ops", "3000", "--threads", "3"], dir.path());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains(" 0 violations"), "{err}");
}
