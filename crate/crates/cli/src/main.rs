use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use polylsm::cost::CostParams;
use polylsm::workload::{self, GraphModel, KeyDist, MetricsRow, WorkloadSpec};
use polylsm::{CodecMode, DirectionMode, GraphConfig, GraphStats, GraphStore, LevelingMode, UpdatePolicy};

#[derive(Parser)]
#[command(name = "plsm", version, about = "Graph LSM-tree storage harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Insert the edges of a whitespace-separated edge-list file.
    Load {
        file: PathBuf,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Write a synthetic edge list.
    Gen {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        /// `uniform` or `powerlaw:EXP`.
        #[arg(long, default_value = "uniform")]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a mixed get-neighbors / add-edge workload and emit CSV metrics.
    Workload {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the cost model for both leveling modes.
    Predict {
        #[arg(long, default_value_t = 0.5)]
        theta_lookup: f64,
        #[arg(long, default_value_t = 10)]
        size_ratio: u32,
        #[arg(long, default_value_t = 4096)]
        block_bytes: u32,
        #[arg(long, default_value_t = 4)]
        levels: u32,
        #[arg(long, default_value_t = 32.0)]
        avg_degree: f64,
        #[arg(long, default_value_t = 8.0)]
        id_bytes: f64,
        /// Degrees to print pivot costs for.
        #[arg(long, default_value = "1,8,32,128,1024", value_delimiter = ',')]
        degrees: Vec<u64>,
    },
    /// Print counts and the tree shape of a store.
    Stats {
        #[command(flatten)]
        store: StoreArgs,
        /// Rescan the store to make the edge count exact.
        #[arg(long)]
        recount: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated lookup fractions.
    #[arg(long, default_value = "0.5", value_delimiter = ',')]
    theta_lookup: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform` or `zipf:EXP`.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Comma-separated policies; more than one cell runs each on a copy.
    #[arg(long = "policies", value_delimiter = ',')]
    policies: Vec<PolicyArg>,
    /// Reader threads that check neighbor lists while the workload runs.
    /// Their I/O counts toward the metrics.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Directed,
    Undirected,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Adaptive,
    Delta,
    Pivot,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelingArg {
    Leveling,
    OneLeveling,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Raw,
    Ef,
}

impl From<PolicyArg> for UpdatePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Adaptive => UpdatePolicy::Adaptive,
            PolicyArg::Delta => UpdatePolicy::AlwaysDelta,
            PolicyArg::Pivot => UpdatePolicy::AlwaysPivot,
        }
    }
}

/// Store settings. Flags left out fall back to what the store was created
/// with, or to the defaults for a new store. Tree sizing (size ratio,
/// memtable, bloom bits) is fixed once the store exists.
#[derive(Args)]
struct StoreArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    leveling: Option<LevelingArg>,
    #[arg(long, value_enum)]
    codec: Option<CodecArg>,
    #[arg(long)]
    size_ratio: Option<u32>,
    #[arg(long)]
    block_bytes: Option<u32>,
    #[arg(long)]
    memtable_bytes: Option<u64>,
    #[arg(long)]
    bloom_bits: Option<u32>,
    /// Hide neighbors whose vertex was deleted.
    #[arg(long)]
    strict: bool,
}

impl StoreArgs {
    fn config(&self) -> Result<GraphConfig> {
        let mut c = GraphStore::stored_config(&self.data_dir)?.unwrap_or_default();
        if let Some(mode) = self.mode {
            c.direction = match mode {
                ModeArg::Directed => DirectionMode::Directed,
                ModeArg::Undirected => DirectionMode::Undirected,
            };
        }
        if let Some(policy) = self.policy {
            c.policy = policy.into();
        }
        if let Some(codec) = self.codec {
            c.codec = match codec {
                CodecArg::Raw => CodecMode::Raw,
                CodecArg::Ef => CodecMode::EliasFano,
            };
        }
        if let Some(leveling) = self.leveling {
            c.tree.leveling_mode = match leveling {
                LevelingArg::Leveling => LevelingMode::Leveling,
                LevelingArg::OneLeveling => LevelingMode::OneLeveling,
            };
        }
        c.tree.size_ratio = self.size_ratio.unwrap_or(c.tree.size_ratio);
        c.tree.block_bytes = self.block_bytes.unwrap_or(c.tree.block_bytes);
        c.tree.memtable_capacity = self.memtable_bytes.unwrap_or(c.tree.memtable_capacity);
        c.tree.bloom_bits_per_key = self.bloom_bits.unwrap_or(c.tree.bloom_bits_per_key);
        c.strict |= self.strict;
        Ok(c)
    }

    fn policy(&self) -> Result<UpdatePolicy> {
        Ok(self.config()?.policy)
    }

    fn open(&self, config: GraphConfig) -> Result<GraphStore> {
        GraphStore::open(&self.data_dir, config).with_context(|| format!("opening {}", self.data_dir.display()))
    }

    fn require_store(&self) -> Result<()> {
        if GraphStore::stored_config(&self.data_dir)?.is_none() {
            bail!("no store at {}", self.data_dir.display());
        }
        Ok(())
    }
}

fn print_stats(st: &GraphStats) {
    println!("n {}", st.n);
    println!("m {}", st.m);
    println!("avg_degree {:.4}", st.avg_degree);
    println!("levels {}", st.levels);
    println!("block_reads {}", st.io.block_reads);
    println!("block_writes {}", st.io.block_writes);
}

fn load(file: &Path, args: &StoreArgs) -> Result<()> {
    let reader = File::open(file).with_context(|| format!("reading {}", file.display()))?;
    let edges = workload::parse_edge_list(BufReader::new(reader)).with_context(|| file.display().to_string())?;
    let store = args.open(args.config()?)?;
    let started = Instant::now();
    let stats = workload::load_edges(&store, &edges)?;
    let elapsed = started.elapsed();
    store.close()?;
    print_stats(&stats);
    println!("elapsed_secs {:.3}", elapsed.as_secs_f64());
    Ok(())
}

fn parse_model(s: &str) -> Result<GraphModel> {
    if s == "uniform" {
        return Ok(GraphModel::Uniform);
    }
    match s.strip_prefix("powerlaw:").map(str::parse::<f64>) {
        Some(Ok(exp)) => Ok(GraphModel::PowerLaw(exp)),
        _ => bail!("unknown graph model {s:?}, expected uniform or powerlaw:EXP"),
    }
}

fn gen(n: u64, m: u64, model: &str, seed: u64, out: &Path) -> Result<()> {
    if n < 1 {
        bail!("--n must be at least 1");
    }
    let edges = workload::generate(n, m, parse_model(model)?, seed)?;
    let file = File::create(out).with_context(|| format!("writing {}", out.display()))?;
    workload::write_edge_list(BufWriter::new(file), &edges).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn copy_store(from: &Path, to: &Path) -> Result<()> {
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        std::fs::copy(entry.path(), to.join(entry.file_name()))?;
    }
    Ok(())
}

fn run_cell(store: &GraphStore, spec: &WorkloadSpec, dataset: &str, threads: usize) -> Result<MetricsRow> {
    let (row, readers) = workload::run_workload_with_readers(store, spec, dataset, threads)?;
    if threads > 0 {
        eprintln!("readers {} lookups {} violations", readers.lookups, readers.violations);
    }
    if let Some(v) = readers.first_violation {
        bail!("reader check failed ({} violations): {v}", readers.violations);
    }
    Ok(row)
}

fn run_workload(args: &StoreArgs, run: &RunArgs) -> Result<()> {
    let dist: KeyDist = run.dist.parse()?;
    args.require_store()?;
    let policies: Vec<UpdatePolicy> =
        if run.policies.is_empty() { vec![args.policy()?] } else { run.policies.iter().map(|&p| p.into()).collect() };
    let dataset = args.data_dir.file_name().map_or("store".into(), |s| s.to_string_lossy().into_owned());
    let sweep = run.theta_lookup.len() * policies.len() > 1;
    let mut rows = Vec::new();
    for &theta in &run.theta_lookup {
        for &policy in &policies {
            let spec = WorkloadSpec { theta_lookup: theta, ops: run.ops, dist, seed: run.seed };
            spec.validate()?;
            let config = GraphConfig { policy, ..args.config()? };
            let row = if sweep {
                let scratch = tempfile::tempdir()?;
                args.open(config)?.close()?;
                copy_store(&args.data_dir, scratch.path())?;
                let store = GraphStore::open(scratch.path(), config)?;
                run_cell(&store, &spec, &dataset, run.threads)?
            } else {
                let store = args.open(config)?;
                let row = run_cell(&store, &spec, &dataset, run.threads)?;
                store.close()?;
                row
            };
            rows.push(row);
        }
    }
    let mut text = format!("{}\n", MetricsRow::HEADER);
    for row in &rows {
        text.push_str(&row.csv());
        text.push('\n');
    }
    match &run.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Load { file, store } => load(&file, &store),
        Command::Gen { n, m, model, seed, out } => gen(n, m, &model, seed, &out),
        Command::Workload { store, run } => run_workload(&store, &run),
        Command::Predict { theta_lookup, size_ratio, block_bytes, levels, avg_degree, id_bytes, degrees } => {
            let p = CostParams {
                id_bytes,
                block_bytes: block_bytes as f64,
                size_ratio: size_ratio as f64,
                levels,
                avg_degree,
                ..CostParams::running_example()
            }
            .with_theta_lookup(theta_lookup);
            print!("{}", workload::prediction_report(&p, &degrees)?);
            Ok(())
        }
        Command::Stats { store, recount } => {
            store.require_store()?;
            let s = store.open(store.config()?)?;
            let st = if recount { s.recount()? } else { s.stats() };
            print_stats(&st);
            for level in s.engine().levels() {
                println!(
                    "level {} runs {} tables {} bytes {} entries {}",
                    level.level, level.runs, level.tables, level.bytes, level.entries
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plsm: {e:#}");
            ExitCode::FAILURE
        }
    }
}
