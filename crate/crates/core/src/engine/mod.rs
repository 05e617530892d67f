//! SPMD query execution over a partitioned dataset.
//!
//! Every worker runs the same built-in plan on its partition. Plans move data
//! only through the exchange operators (shuffle, broadcast) and finish with
//! either an all-reduce of fixed-width aggregates or a gather of partial
//! results on rank 0. A single-context [`reference_run`] executes the same
//! logic over full tables and serves as the oracle.

mod ctx;
mod ops;
mod queries;
mod reference;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use self::ctx::{ExecCtx, WorkerStats};
pub use self::ops::*;
pub use self::reference::reference_run;
use crate::data::schema::{registry, CUSTOMER, LINEITEM, ORDERS, PART};
use crate::data::{PartitionScheme, PartitionedDataset};
use crate::error::{Error, Result};
use crate::exchange::BroadcastImpl;
use crate::table::ColumnTable;
use crate::transport::Cluster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryId {
    Q1,
    Q3,
    Q6,
    Q12,
    Q14,
    Q19,
}

impl QueryId {
    pub const ALL: [QueryId; 6] = [
        QueryId::Q1,
        QueryId::Q3,
        QueryId::Q6,
        QueryId::Q12,
        QueryId::Q14,
        QueryId::Q19,
    ];
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for QueryId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "Q1" | "1" => Ok(QueryId::Q1),
            "Q3" | "3" => Ok(QueryId::Q3),
            "Q6" | "6" => Ok(QueryId::Q6),
            "Q12" | "12" => Ok(QueryId::Q12),
            "Q14" | "14" => Ok(QueryId::Q14),
            "Q19" | "19" => Ok(QueryId::Q19),
            _ => Err(Error::Unsupported(format!(
                "query {s:?} is not implemented (supported: Q1, Q3, Q6, Q12, Q14, Q19)"
            ))),
        }
    }
}

/// Plan variant. `Pa` and `Pb` exist for Q12 only: shuffle both join inputs
/// on the join key, or broadcast the filtered lineitem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Default,
    Pa,
    Pb,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Default => "default",
            Variant::Pa => "pa",
            Variant::Pb => "pb",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(Variant::Default),
            "pa" => Ok(Variant::Pa),
            "pb" => Ok(Variant::Pb),
            _ => Err(Error::InvalidArgument(format!(
                "unknown plan variant {s:?} (default|pa|pb)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Rate at which local operators process input bytes, charged to the
    /// virtual clock. Ignored in-process.
    pub compute_gbps: f64,
    pub broadcast_impl: BroadcastImpl,
    /// Per-worker limit on live table bytes.
    pub memory_cap: Option<u64>,
}

/// Default local processing rate. Operators here charge about 0.7x the
/// per-worker dataset bytes per query; 22 queries over 125 GB per GPU in
/// about a second on one 8-GPU machine works out near 1.8 TB/s.
pub const DEFAULT_COMPUTE_GBPS: f64 = 1800.0;

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            compute_gbps: DEFAULT_COMPUTE_GBPS,
            broadcast_impl: BroadcastImpl::Collective,
            memory_cap: None,
        }
    }
}

/// Instrumentation of one query run. Times come from rank 0; after the
/// closing barrier every simulated rank agrees on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub compute_s: f64,
    pub shuffle_s: f64,
    pub broadcast_s: f64,
    /// Bytes of every shuffle message, all ranks, rank order.
    pub shuffle_msgs: Vec<u64>,
    /// Bytes each rank contributed to each broadcast.
    pub broadcast_msgs: Vec<u64>,
    /// Per-worker maximum of live table bytes.
    pub peak_bytes: Vec<u64>,
    pub result_digest: String,
    /// (shuffles, broadcasts), final gather excluded.
    pub exchange_counts: (u32, u32),
}

impl RunReport {
    pub fn total_s(&self) -> f64 {
        self.compute_s + self.shuffle_s + self.broadcast_s
    }

    pub fn shuffle_bytes(&self) -> u64 {
        self.shuffle_msgs.iter().sum()
    }

    pub fn broadcast_bytes(&self) -> u64 {
        self.broadcast_msgs.iter().sum()
    }
}

/// Nearest-rank percentile (`p` in 0..=100); zero for an empty sample.
pub fn percentile(values: &[u64], p: f64) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Population standard deviation.
pub fn std_dev(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&x| x as f64).sum::<f64>() / n;
    (values.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum Step {
    Scan {
        table: String,
    },
    Filter {
        table: String,
    },
    Shuffle {
        table: String,
        key: String,
    },
    Broadcast {
        table: String,
    },
    LocalHashJoin {
        left: String,
        right: String,
        left_key: String,
        right_key: String,
    },
    GroupAggregate,
    /// Collect the result: an all-reduce of aggregate vectors, or a gather of
    /// partial tables on rank 0.
    FinalGather {
        all_reduce: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangePlan {
    pub query: QueryId,
    pub variant: Variant,
    pub steps: Vec<Step>,
}

fn scan(t: &str) -> Step {
    Step::Scan { table: t.into() }
}

fn filt(t: &str) -> Step {
    Step::Filter { table: t.into() }
}

fn join(left: &str, right: &str, left_key: &str, right_key: &str) -> Step {
    Step::LocalHashJoin {
        left: left.into(),
        right: right.into(),
        left_key: left_key.into(),
        right_key: right_key.into(),
    }
}

/// The operator sequence `run_query` executes.
pub fn plan(query: QueryId, variant: Variant) -> Result<ExchangePlan> {
    use Step::*;
    if variant != Variant::Default && query != QueryId::Q12 {
        return Err(Error::Unsupported(format!("{query} has no plan variant {variant}")));
    }
    let steps = match (query, variant) {
        (QueryId::Q1, _) | (QueryId::Q6, _) => vec![
            scan(LINEITEM),
            filt(LINEITEM),
            GroupAggregate,
            FinalGather { all_reduce: true },
        ],
        (QueryId::Q3, _) => vec![
            scan(CUSTOMER),
            filt(CUSTOMER),
            Broadcast { table: CUSTOMER.into() },
            scan(ORDERS),
            filt(ORDERS),
            join(ORDERS, CUSTOMER, "o_custkey", "c_custkey"),
            scan(LINEITEM),
            filt(LINEITEM),
            join(LINEITEM, ORDERS, "l_orderkey", "o_orderkey"),
            GroupAggregate,
            FinalGather { all_reduce: false },
        ],
        (QueryId::Q12, v) => {
            let mut s = vec![scan(LINEITEM), filt(LINEITEM), scan(ORDERS)];
            match v {
                Variant::Default => {}
                Variant::Pa => {
                    s.push(Shuffle {
                        table: LINEITEM.into(),
                        key: "l_orderkey".into(),
                    });
                    s.push(Shuffle {
                        table: ORDERS.into(),
                        key: "o_orderkey".into(),
                    });
                }
                Variant::Pb => s.push(Broadcast { table: LINEITEM.into() }),
            }
            s.extend([
                join(LINEITEM, ORDERS, "l_orderkey", "o_orderkey"),
                GroupAggregate,
                FinalGather { all_reduce: false },
            ]);
            s
        }
        (QueryId::Q14, _) => vec![
            scan(LINEITEM),
            filt(LINEITEM),
            Shuffle {
                table: LINEITEM.into(),
                key: "l_partkey".into(),
            },
            scan(PART),
            join(LINEITEM, PART, "l_partkey", "p_partkey"),
            GroupAggregate,
            FinalGather { all_reduce: false },
        ],
        (QueryId::Q19, _) => vec![
            scan(PART),
            filt(PART),
            Broadcast { table: PART.into() },
            scan(LINEITEM),
            filt(LINEITEM),
            join(LINEITEM, PART, "l_partkey", "p_partkey"),
            filt(LINEITEM),
            GroupAggregate,
            FinalGather { all_reduce: false },
        ],
    };
    Ok(ExchangePlan { query, variant, steps })
}

impl ExchangePlan {
    /// (shuffles, broadcasts).
    pub fn exchange_counts(&self) -> (u32, u32) {
        let mut c = (0, 0);
        for s in &self.steps {
            match s {
                Step::Shuffle { .. } => c.0 += 1,
                Step::Broadcast { .. } => c.1 += 1,
                _ => {}
            }
        }
        c
    }

    /// Checks that the plan can run on data split with `scheme`: every join
    /// input is either replicated by a broadcast, or placed by its key through
    /// a shuffle or the scheme itself; the plan ends in exactly one final
    /// gather.
    pub fn validate(&self, scheme: PartitionScheme) -> Result<()> {
        let gathers = self
            .steps
            .iter()
            .filter(|s| matches!(s, Step::FinalGather { .. }))
            .count();
        if gathers != 1 || !matches!(self.steps.last(), Some(Step::FinalGather { .. })) {
            return Err(Error::Plan(format!(
                "{} {} must end in exactly one final gather",
                self.query, self.variant
            )));
        }
        for (i, s) in self.steps.iter().enumerate() {
            let Step::LocalHashJoin {
                left,
                right,
                left_key,
                right_key,
            } = s
            else {
                continue;
            };
            let before = &self.steps[..i];
            let broadcast = |t: &str| {
                before
                    .iter()
                    .any(|s| matches!(s, Step::Broadcast { table } if table == t))
            };
            let placed = |t: &str, key: &str| {
                before
                    .iter()
                    .any(|s| matches!(s, Step::Shuffle { table, key: k } if table == t && k == key))
                    || (scheme == PartitionScheme::DefaultKeys
                        && registry()
                            .table(t)
                            .map(|spec| spec.partition_key == key)
                            .unwrap_or(false))
            };
            if !(broadcast(left) || broadcast(right) || (placed(left, left_key) && placed(right, right_key))) {
                return Err(Error::Plan(format!(
                    "{} {} joins {left}.{left_key} with {right}.{right_key} locally, \
                     but {scheme:?} data is not partitioned on those keys",
                    self.query, self.variant
                )));
            }
        }
        Ok(())
    }
}

/// Runs one query on every worker of `cluster`. The result is assembled on
/// rank 0.
pub fn run_query(
    query: QueryId,
    variant: Variant,
    cluster: &mut Cluster,
    data: &PartitionedDataset,
    opts: &RunOptions,
) -> Result<(ColumnTable, RunReport)> {
    if data.workers() != cluster.size() {
        return Err(Error::ClusterConfig(format!(
            "dataset is split over {} workers but the cluster has {}",
            data.workers(),
            cluster.size()
        )));
    }
    if opts.compute_gbps.is_nan() || opts.compute_gbps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "compute rate must be positive, got {} GB/s",
            opts.compute_gbps
        )));
    }
    let the_plan = plan(query, variant)?;
    the_plan.validate(data.scheme)?;

    let outs: Vec<(Option<ColumnTable>, WorkerStats)> = cluster.run(|ep| {
        let part = data.worker(ep.rank())?;
        let mut ctx = ExecCtx::new(ep, opts)?;
        let result = queries::execute(&mut ctx, part, query, variant)?;
        Ok((result, ctx.finish()?))
    })?;

    let mut result = None;
    let mut report = RunReport {
        compute_s: 0.0,
        shuffle_s: 0.0,
        broadcast_s: 0.0,
        shuffle_msgs: Vec::new(),
        broadcast_msgs: Vec::new(),
        peak_bytes: Vec::with_capacity(outs.len()),
        result_digest: String::new(),
        exchange_counts: (0, 0),
    };
    for (rank, (r, stats)) in outs.into_iter().enumerate() {
        if rank == 0 {
            result = r;
            report.shuffle_s = stats.shuffle_s;
            report.broadcast_s = stats.broadcast_s;
            report.compute_s = stats.total_s - stats.shuffle_s - stats.broadcast_s;
            report.exchange_counts = (stats.shuffles, stats.broadcasts);
        }
        report.shuffle_msgs.extend(stats.trace.shuffle_msgs);
        report.broadcast_msgs.extend(stats.trace.broadcast_msgs);
        report.peak_bytes.push(stats.peak_bytes);
    }
    let result = result.ok_or_else(|| Error::Protocol("rank 0 produced no result".into()))?;
    report.result_digest = format!("{:016x}", result.digest());
    Ok((result, report))
}

/// Reports for the three Q12 plans: default on `partitioned` data (no
/// exchange), then Pa and Pb on `unpartitioned` data. The three results are
/// checked to agree.
pub fn q12_variants(
    cluster: &mut Cluster,
    partitioned: &PartitionedDataset,
    unpartitioned: &PartitionedDataset,
    opts: &RunOptions,
) -> Result<[RunReport; 3]> {
    let (base, default) = run_query(QueryId::Q12, Variant::Default, cluster, partitioned, opts)?;
    let (ra, pa) = run_query(QueryId::Q12, Variant::Pa, cluster, unpartitioned, opts)?;
    let (rb, pb) = run_query(QueryId::Q12, Variant::Pb, cluster, unpartitioned, opts)?;
    for (name, r) in [("Pa", &ra), ("Pb", &rb)] {
        results_match(&base, r, 0.0).map_err(|m| Error::Protocol(format!("Q12 {name} disagrees with default: {m}")))?;
    }
    Ok([default, pa, pb])
}
