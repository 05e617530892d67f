//! The `dxq` command line: microbenchmarks, query runs, model evaluation and
//! projection.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bench::{run_bench, write_bench_csv, BenchOp, BenchSpec};
use crate::data::{generate, load_dataset_dir, partition_dataset, write_csv_to, Dataset, PartitionScheme};
use crate::engine::{canonical_sort, percentile, run_query, std_dev, QueryId, RunOptions, RunReport, Variant};
use crate::error::{Error, Result};
use crate::exchange::BroadcastImpl;
use crate::perfmodel::{write_model_csv, ModelRow, Shape, Topology, WorkloadProfile, DEFAULT_EFFICIENCY};
use crate::transport::{Cluster, Mode};

#[derive(Debug, Parser)]
#[command(
    name = "dxq",
    version,
    about = "Distributed exchange query engine with a network performance model"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Cluster shape as GPUs-per-machine x machines [default: 8x2].
    #[arg(long, global = true)]
    pub topology: Option<String>,
    /// Topology config file (key=value); flags given explicitly override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Nominal per-machine network bandwidth, GB/s.
    #[arg(long, global = true)]
    pub bn_gbps: Option<f64>,
    /// Nominal per-GPU intra-machine bandwidth, GB/s.
    #[arg(long, global = true)]
    pub bg_gbps: Option<f64>,
    /// Fraction of nominal bandwidth achieved, applied to both link classes.
    #[arg(long, global = true)]
    pub efficiency: Option<f64>,
    #[arg(long, global = true, default_value = "sim")]
    pub mode: String,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Directory for output files; without it results go to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exchange microbenchmark sweep, compared with the model.
    Bench(BenchArgs),
    /// Run a query (or all six) on a generated or loaded dataset.
    Query(QueryArgs),
    /// Project a single-machine profile over a grid of machines and bandwidths.
    Project(ProjectArgs),
    /// Evaluate the throughput models over a grid.
    Model(GridArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "shuffle")]
    pub op: String,
    /// Per-worker message sizes in bytes, strictly increasing.
    #[arg(long, value_delimiter = ',', default_value = "1048576,16777216,268435456")]
    pub sizes: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    /// Per-worker buffer limit in bytes.
    #[arg(long)]
    pub memory_cap: Option<u64>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Q1, Q3, Q6, Q12, Q14, Q19 or `all`.
    #[arg(long, default_value = "all")]
    pub query: String,
    #[arg(long, default_value = "default")]
    pub variant: String,
    #[arg(long, default_value_t = 0.01)]
    pub sf: f64,
    #[arg(long, default_value_t = 0.0)]
    pub skew: f64,
    /// Load `<table>.csv` files from this directory instead of generating.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// collective or p2p.
    #[arg(long, default_value = "collective")]
    pub broadcast: String,
    /// Local processing rate charged to the virtual clock, GB/s.
    #[arg(long, default_value_t = crate::engine::DEFAULT_COMPUTE_GBPS)]
    pub compute_gbps: f64,
    /// Per-worker limit on live table bytes.
    #[arg(long)]
    pub memory_cap: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Machine counts to evaluate.
    #[arg(long = "machines", value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub machines: Vec<usize>,
    /// Nominal network bandwidths to evaluate, GB/s; defaults to --bn-gbps.
    #[arg(long = "bn-grid", value_delimiter = ',')]
    pub bn_grid: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Profile JSON written by `query --query all` on a single machine.
    #[arg(long)]
    pub profile: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

const DEFAULT_BG: f64 = 450.0;
const DEFAULT_BN: f64 = 50.0;

impl Common {
    pub fn topology(&self) -> Result<Topology> {
        let mut topo = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                Topology::from_config_str(&text, &path.display().to_string())?
            }
            None => Topology::new(8, 2, DEFAULT_BG, DEFAULT_BN)?.with_efficiency(DEFAULT_EFFICIENCY)?,
        };
        if let Some(s) = &self.topology {
            let shape: Shape = s.parse()?;
            topo = topo.with_gpus_per_machine(shape.k)?.with_machines(shape.v)?;
        }
        if let Some(bg) = self.bg_gbps {
            topo = topo.with_bg_gbps(bg)?;
        }
        if let Some(bn) = self.bn_gbps {
            topo = topo.with_bn_gbps(bn)?;
        }
        if let Some(e) = self.efficiency {
            topo = topo.with_efficiency(e)?;
        }
        Ok(topo)
    }

    fn mode(&self) -> Result<Mode> {
        self.mode.parse()
    }
}

/// Where a command's outputs go: files under `--out`, or stdout.
struct Sink<'a> {
    dir: Option<&'a Path>,
    stdout: &'a mut dyn Write,
}

impl Sink<'_> {
    fn emit(&mut self, file: &str, contents: &[u8]) -> Result<()> {
        match self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
                let path = dir.join(file);
                fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                writeln!(self.stdout, "{}", path.display())?;
            }
            None => self.stdout.write_all(contents)?,
        }
        Ok(())
    }
}

/// Parses `args` (program name first) and runs the command, writing results
/// to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    execute(&cli, stdout)
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let c = &cli.common;
    let mut sink = Sink {
        dir: c.out.as_deref(),
        stdout,
    };
    match &cli.command {
        Command::Bench(a) => cmd_bench(c, a, &mut sink),
        Command::Query(a) => cmd_query(c, a, &mut sink),
        Command::Project(a) => cmd_project(c, a, &mut sink),
        Command::Model(a) => cmd_model(c, a, &mut sink),
    }
}

/// Machine-readable form of an error, printed on failure.
pub fn error_json(e: &Error) -> String {
    json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}

fn cmd_bench(c: &Common, a: &BenchArgs, sink: &mut Sink<'_>) -> Result<()> {
    let op: BenchOp = a.op.parse()?;
    let spec = BenchSpec {
        op,
        message_bytes: a.sizes.clone(),
        topology: c.topology()?,
        repetitions: a.repetitions,
        memory_cap: a.memory_cap,
    };
    let rows = run_bench(&spec, c.mode()?)?;
    let mut csv = Vec::new();
    write_bench_csv(&mut csv, &rows)?;
    sink.emit(&format!("bench_{op}.csv"), &csv)
}

/// Message-size and memory statistics emitted next to a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryStats {
    pub total_s: f64,
    pub shuffle_msgs_p80: u64,
    pub shuffle_msgs_max: u64,
    pub broadcast_msgs_p80: u64,
    pub broadcast_msgs_max: u64,
    pub peak_bytes_max: u64,
    pub peak_bytes_std: f64,
}

impl QueryStats {
    pub fn of(r: &RunReport) -> Self {
        QueryStats {
            total_s: r.total_s(),
            shuffle_msgs_p80: percentile(&r.shuffle_msgs, 80.0),
            shuffle_msgs_max: r.shuffle_msgs.iter().copied().max().unwrap_or(0),
            broadcast_msgs_p80: percentile(&r.broadcast_msgs, 80.0),
            broadcast_msgs_max: r.broadcast_msgs.iter().copied().max().unwrap_or(0),
            peak_bytes_max: r.peak_bytes.iter().copied().max().unwrap_or(0),
            peak_bytes_std: std_dev(&r.peak_bytes),
        }
    }
}

fn load_data(a: &QueryArgs, seed: u64) -> Result<Dataset> {
    match &a.data {
        Some(dir) => load_dataset_dir(dir),
        None => generate(a.sf, a.skew, seed),
    }
}

fn cmd_query(c: &Common, a: &QueryArgs, sink: &mut Sink<'_>) -> Result<()> {
    let topo = c.topology()?;
    let mode = c.mode()?;
    let variant: Variant = a.variant.parse()?;
    let queries: Vec<QueryId> = if a.query.eq_ignore_ascii_case("all") {
        QueryId::ALL.to_vec()
    } else {
        vec![a.query.parse()?]
    };
    let opts = RunOptions {
        compute_gbps: a.compute_gbps,
        broadcast_impl: match a.broadcast.as_str() {
            "collective" => BroadcastImpl::Collective,
            "p2p" => BroadcastImpl::P2p,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown broadcast {other:?} (collective|p2p)"
                )))
            }
        },
        memory_cap: a.memory_cap,
    };
    let ds = load_data(a, c.seed)?;
    let scheme = match variant {
        Variant::Default => PartitionScheme::DefaultKeys,
        Variant::Pa | Variant::Pb => PartitionScheme::Unpartitioned,
    };
    let parts = partition_dataset(&ds, topo.n(), scheme)?;
    let mut cluster = Cluster::new(&topo, mode, c.seed)?;

    let mut summary = Vec::new();
    let (mut total, mut shuffled, mut broadcast) = (0.0, 0u64, 0u64);
    for q in queries.iter().copied() {
        let (result, report) = run_query(q, variant, &mut cluster, &parts, &opts)?;
        total += report.total_s();
        shuffled += report.shuffle_bytes();
        broadcast += report.broadcast_bytes();
        let stats = QueryStats::of(&report);
        let mut csv = Vec::new();
        write_csv_to(&canonical_sort(&result), &mut csv)?;
        if c.out.is_some() {
            sink.emit(&format!("{q}_result.csv"), &csv)?;
            sink.emit(
                &format!("{q}_report.json"),
                serde_json::to_string_pretty(&report)?.as_bytes(),
            )?;
            sink.emit(
                &format!("{q}_stats.json"),
                serde_json::to_string_pretty(&stats)?.as_bytes(),
            )?;
        } else {
            summary.push(json!({
                "query": q,
                "variant": variant,
                "report": report,
                "stats": stats,
                "result_csv": String::from_utf8_lossy(&csv),
            }));
        }
    }

    let profile = if queries.len() == QueryId::ALL.len() && topo.v() == 1 {
        Some(WorkloadProfile::calibrate(
            &topo,
            total,
            shuffled as f64,
            broadcast as f64,
        )?)
    } else {
        None
    };
    match (&c.out, profile) {
        (Some(_), Some(p)) => sink.emit("profile.json", serde_json::to_string_pretty(&p)?.as_bytes())?,
        (Some(_), None) => {}
        (None, p) => {
            let doc = json!({ "topology": topo, "runs": summary, "profile": p });
            writeln!(sink.stdout, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(())
}

fn grid(c: &Common, g: &GridArgs) -> Result<Vec<Topology>> {
    let base = c.topology()?;
    let bns = if g.bn_grid.is_empty() {
        vec![base.bn_gbps()]
    } else {
        g.bn_grid.clone()
    };
    let mut out = Vec::new();
    for &bn in &bns {
        for &v in &g.machines {
            out.push(base.with_machines(v)?.with_bn_gbps(bn)?);
        }
    }
    Ok(out)
}

fn cmd_model(c: &Common, g: &GridArgs, sink: &mut Sink<'_>) -> Result<()> {
    let rows = grid(c, g)?
        .iter()
        .map(|t| ModelRow::evaluate(t, None))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = Vec::new();
    write_model_csv(&mut csv, &rows)?;
    sink.emit("model.csv", &csv)
}

fn cmd_project(c: &Common, a: &ProjectArgs, sink: &mut Sink<'_>) -> Result<()> {
    let text = fs::read_to_string(&a.profile).map_err(|e| Error::Io(format!("{}: {e}", a.profile.display())))?;
    let p: WorkloadProfile = serde_json::from_str(&text)?;
    let profile = WorkloadProfile::new(p.compute_time_v1, p.shuffle_bytes, p.broadcast_bytes)?;
    let rows = grid(c, &a.grid)?
        .iter()
        .map(|t| ModelRow::evaluate(t, Some(&profile)))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = Vec::new();
    write_model_csv(&mut csv, &rows)?;
    sink.emit("projection.csv", &csv)
}
