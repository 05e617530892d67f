//! Exchange microbenchmarks: move synthetic buffers through the cluster and
//! compare the measured throughput with the analytical model.

use std::io::Write;
use std::time::Instant;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::collectives::{self, BcastBuffer, GroupOp};
use crate::error::{Error, Result};
use crate::perfmodel::{broadcast_throughput, shuffle_throughput, Topology, GB};
use crate::transport::{Cluster, Endpoint, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOp {
    Shuffle,
    Broadcast,
    BroadcastP2p,
}

impl std::fmt::Display for BenchOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchOp::Shuffle => "shuffle",
            BenchOp::Broadcast => "broadcast",
            BenchOp::BroadcastP2p => "broadcast_p2p",
        })
    }
}

impl std::str::FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shuffle" => Ok(BenchOp::Shuffle),
            "broadcast" => Ok(BenchOp::Broadcast),
            "broadcast_p2p" | "p2p" => Ok(BenchOp::BroadcastP2p),
            other => Err(Error::InvalidArgument(format!(
                "unknown benchmark {other:?} (shuffle|broadcast|broadcast_p2p)"
            ))),
        }
    }
}

/// A sweep over per-worker message sizes. `message_bytes` is what each
/// worker contributes: its whole partition for a shuffle (split evenly over
/// destinations), its broadcast payload otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub op: BenchOp,
    pub message_bytes: Vec<u64>,
    pub topology: Topology,
    pub repetitions: usize,
    /// Per-worker limit on buffered bytes.
    pub memory_cap: Option<u64>,
}

impl BenchSpec {
    pub fn new(op: BenchOp, message_bytes: Vec<u64>, topology: Topology) -> Self {
        BenchSpec {
            op,
            message_bytes,
            topology,
            repetitions: 1,
            memory_cap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.message_bytes.is_empty() {
            return Err(Error::InvalidArgument("empty message size sweep".into()));
        }
        if self.message_bytes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "message sizes must be strictly increasing: {:?}",
                self.message_bytes
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        if let Some(cap) = self.memory_cap {
            let m = *self.message_bytes.last().unwrap();
            let needed = self.buffered_bytes(m);
            if needed > cap {
                return Err(Error::MemoryCap { rank: 0, needed, cap });
            }
        }
        Ok(())
    }

    /// Bytes a worker holds at once: its input plus everything it receives.
    pub fn buffered_bytes(&self, m: u64) -> u64 {
        match self.op {
            BenchOp::Shuffle => 2 * m,
            BenchOp::Broadcast | BenchOp::BroadcastP2p => m * (self.topology.n() as u64 + 1),
        }
    }
}

/// One row of benchmark output. Throughputs are in GB/s; `model_thpt` and
/// `relative_error` are absent for wall-clock runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub op: BenchOp,
    pub k: usize,
    pub v: usize,
    pub msg_bytes: u64,
    /// Bytes of the exchanged table: the sum of all workers' inputs.
    pub total_bytes: u64,
    pub elapsed_s: f64,
    pub measured_thpt: f64,
    pub model_thpt: Option<f64>,
    /// |model - measured| / measured.
    pub relative_error: Option<f64>,
    pub inter_node_bytes: u64,
}

/// Model throughput for an op, in GB/s. Point-to-point broadcast has no
/// model of its own and is compared against the collective broadcast.
pub fn model_throughput(op: BenchOp, topo: &Topology) -> f64 {
    match op {
        BenchOp::Shuffle => shuffle_throughput(topo),
        BenchOp::Broadcast | BenchOp::BroadcastP2p => broadcast_throughput(topo),
    }
}

// `zeros` is one shared buffer of at least `m` bytes; payload contents do not
// matter, so workers slice it instead of allocating their own.
fn exchange_once(ep: &mut Endpoint, op: BenchOp, m: u64, zeros: &Bytes) -> Result<()> {
    let n = ep.size();
    let me = ep.rank();
    match op {
        BenchOp::Shuffle => {
            let chunk = zeros.slice(..(m / n as u64) as usize);
            let mut ops = Vec::with_capacity(2 * n);
            for peer in 0..n {
                ops.push(GroupOp::Send {
                    peer,
                    tag: 0,
                    payload: chunk.clone(),
                });
                ops.push(GroupOp::Recv {
                    peer,
                    tag: 0,
                    len: chunk.len(),
                });
            }
            collectives::group_execute(ep, ops)?;
        }
        BenchOp::Broadcast | BenchOp::BroadcastP2p => {
            let mine = zeros.slice(..m as usize);
            let entries: Vec<(usize, BcastBuffer)> = (0..n)
                .map(|root| {
                    let b = if root == me {
                        BcastBuffer::Data(mine.clone())
                    } else {
                        BcastBuffer::Reserve(m as usize)
                    };
                    (root, b)
                })
                .collect();
            if op == BenchOp::Broadcast {
                let ops = entries
                    .into_iter()
                    .map(|(root, buffer)| GroupOp::Bcast { root, buffer })
                    .collect();
                collectives::group_execute(ep, ops)?;
            } else {
                collectives::broadcast_p2p_many(ep, entries)?;
            }
        }
    }
    Ok(())
}

/// Runs the sweep on a fresh cluster. Simulated runs are timed on the
/// virtual clock and compared with the model; in-process runs report wall
/// time only.
pub fn run_bench(spec: &BenchSpec, mode: Mode) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let topo = spec.topology;
    let mut cluster = Cluster::new(&topo, mode, 0)?;
    let n = topo.n() as u64;
    let mut rows = Vec::with_capacity(spec.message_bytes.len());
    for &m in &spec.message_bytes {
        let before: u64 = cluster.endpoints().iter().map(|e| e.counters().inter_node_sent).sum();
        let reps = spec.repetitions;
        let op = spec.op;
        let zeros = Bytes::from(vec![0u8; m as usize]);
        let elapsed = cluster.run(|ep| {
            let mut total = 0.0;
            for _ in 0..reps {
                ep.barrier()?;
                let (t0, wall) = (ep.clock(), Instant::now());
                exchange_once(ep, op, m, &zeros)?;
                ep.barrier()?;
                total += match ep.mode() {
                    Mode::Simulated => ep.clock() - t0,
                    Mode::InProcess => wall.elapsed().as_secs_f64(),
                };
            }
            Ok(total / reps as f64)
        })?;
        let after: u64 = cluster.endpoints().iter().map(|e| e.counters().inter_node_sent).sum();
        let elapsed = elapsed.into_iter().fold(0.0, f64::max);
        let total_bytes = match op {
            BenchOp::Shuffle => (m / n) * n * n,
            _ => m * n,
        };
        let measured = if elapsed > 0.0 {
            total_bytes as f64 / elapsed / GB
        } else {
            f64::INFINITY
        };
        let (model, err) = match mode {
            Mode::Simulated => {
                let model = model_throughput(op, &topo);
                (Some(model), Some((model - measured).abs() / measured))
            }
            Mode::InProcess => (None, None),
        };
        rows.push(BenchRow {
            op,
            k: topo.k(),
            v: topo.v(),
            msg_bytes: m,
            total_bytes,
            elapsed_s: elapsed,
            measured_thpt: measured,
            model_thpt: model,
            relative_error: err,
            inter_node_bytes: (after - before) / spec.repetitions as u64,
        });
    }
    Ok(rows)
}

pub const BENCH_CSV_HEADER: &str =
    "op,k,V,msg_bytes,total_bytes,elapsed_s,measured_thpt,model_thpt,relative_error,inter_node_bytes";

pub fn write_bench_csv<W: Write>(mut out: W, rows: &[BenchRow]) -> Result<()> {
    writeln!(out, "{BENCH_CSV_HEADER}")?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.6e},{:.6},{},{},{}",
            r.op,
            r.k,
            r.v,
            r.msg_bytes,
            r.total_bytes,
            r.elapsed_s,
            r.measured_thpt,
            opt(r.model_thpt),
            opt(r.relative_error),
            r.inter_node_bytes
        )?;
    }
    Ok(())
}
