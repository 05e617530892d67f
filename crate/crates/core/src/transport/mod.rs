//! Message passing between the `N = k * V` workers of a cluster.
//!
//! Two fabrics sit behind the same [`Endpoint`] API:
//!
//! * [`Mode::InProcess`]: real message passing between threads. Group phases
//!   post every send before blocking on receives, so posting order inside a
//!   group never deadlocks.
//! * [`Mode::Simulated`]: same semantics, plus a virtual clock per endpoint.
//!   Every data phase is a cluster-wide bulk-synchronous step charged with
//!   [`charge_group`]; metadata phases and barriers only synchronise clocks.
//!
//! Cost accounting assumes symmetric per-GPU limits: a GPU can push and pull
//! `B_g` over intra-node links and `B_n / k` over the network, and the two
//! link classes run concurrently.

mod board;

use std::collections::BTreeMap;
use std::sync::Arc;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use self::board::{Board, Deposit, Envelope, RendezvousKind};
use crate::error::{Error, Result};
use crate::perfmodel::{Topology, GB};

pub type Rank = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InProcess,
    Simulated,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" | "in_process" | "in-process" => Ok(Mode::InProcess),
            "sim" | "simulated" => Ok(Mode::Simulated),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?} (sim|inproc)"))),
        }
    }
}

/// Whether a phase moves table data or only exchange metadata. Metadata
/// phases are never charged virtual time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficClass {
    Data,
    Metadata,
}

#[derive(Debug, Clone)]
pub struct Message {
    pub src: Rank,
    pub dst: Rank,
    pub tag: u32,
    pub payload: Bytes,
}

/// Byte counters split by link class. Self-transfers are tracked apart and
/// never count as network traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub intra_node_sent: u64,
    pub inter_node_sent: u64,
    pub intra_node_recv: u64,
    pub inter_node_recv: u64,
    pub self_bytes: u64,
    pub metadata_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub rank: Rank,
    pub node: usize,
    pub local_index: usize,
    pub clock: f64,
    pub counters: Counters,
}

pub(crate) trait Fabric: Send + Sync + std::fmt::Debug {
    fn mode(&self) -> Mode;
    fn board(&self) -> &Board;
}

#[derive(Debug)]
struct InProcessFabric {
    board: Board,
}

impl Fabric for InProcessFabric {
    fn mode(&self) -> Mode {
        Mode::InProcess
    }

    fn board(&self) -> &Board {
        &self.board
    }
}

#[derive(Debug)]
struct SimulatedFabric {
    board: Board,
}

impl Fabric for SimulatedFabric {
    fn mode(&self) -> Mode {
        Mode::Simulated
    }

    fn board(&self) -> &Board {
        &self.board
    }
}

/// A worker's handle into the cluster.
#[derive(Debug)]
pub struct Endpoint {
    rank: Rank,
    topo: Topology,
    seed: u64,
    clock: f64,
    counters: Counters,
    fabric: Arc<dyn Fabric>,
}

/// Builds the `k * V` mutually connected endpoints of a cluster.
pub fn create_cluster(topo: &Topology, mode: Mode, seed: u64) -> Result<Vec<Endpoint>> {
    let n = topo.n();
    if n == 0 {
        return Err(Error::ClusterConfig("cluster has no workers".into()));
    }
    let fabric: Arc<dyn Fabric> = match mode {
        Mode::InProcess => Arc::new(InProcessFabric {
            board: Board::new(n, None),
        }),
        Mode::Simulated => Arc::new(SimulatedFabric {
            board: Board::new(n, Some(*topo)),
        }),
    };
    Ok((0..n)
        .map(|rank| Endpoint {
            rank,
            topo: *topo,
            seed,
            clock: 0.0,
            counters: Counters::default(),
            fabric: fabric.clone(),
        })
        .collect())
}

/// Runs `work` once per endpoint, each on its own thread, and hands the
/// endpoints back with the per-rank results.
///
/// A worker that returns (or panics) is marked as gone so that peers blocked
/// on it fail with a deadlock diagnostic instead of hanging.
pub fn run_workers<T, F>(endpoints: Vec<Endpoint>, work: F) -> (Vec<Endpoint>, Vec<Result<T>>)
where
    T: Send,
    F: Fn(&mut Endpoint) -> Result<T> + Sync,
{
    let fabric = endpoints.first().map(|e| e.fabric.clone());
    let work = &work;
    let mut outputs: Vec<(Endpoint, Result<T>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|mut ep| {
                scope.spawn(move || {
                    struct Leave<'a>(&'a Board, Rank);
                    impl Drop for Leave<'_> {
                        fn drop(&mut self) {
                            self.0.leave(self.1);
                        }
                    }
                    let fabric = ep.fabric.clone();
                    let _leave = Leave(fabric.board(), ep.rank);
                    let out = work(&mut ep);
                    (ep, out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });
    if let Some(f) = fabric {
        f.board().rejoin_all();
    }
    outputs.sort_by_key(|(ep, _)| ep.rank);
    outputs.into_iter().unzip()
}

/// Picks the error that explains a failed run: a worker's own failure wins
/// over the deadlock reports it causes in its peers.
pub fn first_root_cause<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut secondary = None;
    let mut primary = None;
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if e.is_secondary() => {
                secondary.get_or_insert(e);
            }
            Err(e) => {
                primary.get_or_insert(e);
            }
        }
    }
    match (primary, secondary) {
        (Some(e), _) | (None, Some(e)) => Err(e),
        (None, None) => Ok(ok),
    }
}

/// Per-endpoint clock advance for one bulk-synchronous group of transfers.
///
/// Each endpoint is busy for `max(intra, inter)` where `intra` is its larger
/// intra-node byte count (in or out) over `B_g` and `inter` its larger
/// inter-node byte count over `B_n / k`. Every endpoint that takes part in the
/// group advances by the slowest participant's busy time; the rest stay put.
pub fn charge_group(topo: &Topology, transfers: &[(Rank, Rank, u64)]) -> Vec<f64> {
    let busy = link_busy_times(topo, transfers);
    let step = busy.iter().copied().fold(0.0, f64::max);
    let mut involved = vec![false; topo.n()];
    for &(s, d, _) in transfers {
        involved[s] = true;
        involved[d] = true;
    }
    involved.into_iter().map(|p| if p { step } else { 0.0 }).collect()
}

/// Each endpoint's own busy time for a group of transfers.
pub fn link_busy_times(topo: &Topology, transfers: &[(Rank, Rank, u64)]) -> Vec<f64> {
    let n = topo.n();
    let k = topo.k();
    let mut intra_out = vec![0u64; n];
    let mut intra_in = vec![0u64; n];
    let mut inter_out = vec![0u64; n];
    let mut inter_in = vec![0u64; n];
    for &(s, d, bytes) in transfers {
        if s == d {
            continue;
        }
        if s / k == d / k {
            intra_out[s] += bytes;
            intra_in[d] += bytes;
        } else {
            inter_out[s] += bytes;
            inter_in[d] += bytes;
        }
    }
    let bg = topo.effective_bg() * GB;
    let nic_share = topo.effective_bn() * GB / k as f64;
    (0..n)
        .map(|r| {
            let intra = intra_out[r].max(intra_in[r]) as f64 / bg;
            let inter = inter_out[r].max(inter_in[r]) as f64 / nic_share;
            intra.max(inter)
        })
        .collect()
}

/// One outgoing message of a group phase.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub dst: Rank,
    pub tag: u32,
    pub payload: Bytes,
}

/// One receive reservation of a group phase; `len` must equal the payload size.
#[derive(Debug, Clone, Copy)]
pub struct Incoming {
    pub src: Rank,
    pub tag: u32,
    pub len: usize,
}

impl Endpoint {
    pub fn rank(&self) -> Rank {
        self.rank
    }

    /// Machine id, `rank / k`.
    pub fn node(&self) -> usize {
        self.rank / self.topo.k()
    }

    /// Position inside the machine, `rank mod k`.
    pub fn local_index(&self) -> usize {
        self.rank % self.topo.k()
    }

    pub fn size(&self) -> usize {
        self.topo.n()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn mode(&self) -> Mode {
        self.fabric.mode()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Virtual seconds; always zero for the in-process fabric.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn report(&self) -> EndpointReport {
        EndpointReport {
            rank: self.rank,
            node: self.node(),
            local_index: self.local_index(),
            clock: self.clock,
            counters: self.counters,
        }
    }

    /// Rank of the `local_index`-th GPU on `node`.
    pub fn rank_of(&self, node: usize, local_index: usize) -> Rank {
        node * self.topo.k() + local_index
    }

    /// Charges local work to the virtual clock. No-op in-process.
    pub fn advance(&mut self, seconds: f64) {
        if self.mode() == Mode::Simulated && seconds > 0.0 {
            self.clock += seconds;
        }
    }

    fn check_rank(&self, peer: Rank) -> Result<()> {
        if peer >= self.size() {
            return Err(Error::ClusterConfig(format!(
                "rank {peer} is outside the cluster of {} workers",
                self.size()
            )));
        }
        Ok(())
    }

    fn account_sent(&mut self, dst: Rank, bytes: u64, class: TrafficClass) {
        let node = self.node();
        let c = &mut self.counters;
        if class == TrafficClass::Metadata {
            c.metadata_bytes += bytes;
        } else if dst == self.rank {
            c.self_bytes += bytes;
        } else if dst / self.topo.k() == node {
            c.intra_node_sent += bytes;
        } else {
            c.inter_node_sent += bytes;
        }
    }

    fn account_recv(&mut self, src: Rank, bytes: u64, class: TrafficClass) {
        let node = self.node();
        let c = &mut self.counters;
        if class == TrafficClass::Metadata || src == self.rank {
            // counted on the send side
        } else if src / self.topo.k() == node {
            c.intra_node_recv += bytes;
        } else {
            c.inter_node_recv += bytes;
        }
    }

    /// Point-to-point send. In the simulated fabric the sender is busy for the
    /// transfer and the message arrives when the transfer completes.
    pub fn send(&mut self, dst: Rank, payload: Bytes, tag: u32) -> Result<()> {
        self.check_rank(dst)?;
        let len = payload.len() as u64;
        let mut arrival = 0.0;
        if self.mode() == Mode::Simulated {
            let cost = link_busy_times(&self.topo, &[(self.rank, dst, len)])[self.rank];
            self.clock += cost;
            arrival = self.clock;
        }
        self.account_sent(dst, len, TrafficClass::Data);
        self.fabric
            .board()
            .post(self.rank, dst, tag, Envelope { payload, arrival })
    }

    /// Blocking point-to-point receive of the next message from `src` on `tag`.
    pub fn recv(&mut self, src: Rank, tag: u32) -> Result<Bytes> {
        self.check_rank(src)?;
        let env = self.fabric.board().take(self.rank, src, tag)?;
        self.clock = self.clock.max(env.arrival);
        self.account_recv(src, env.payload.len() as u64, TrafficClass::Data);
        Ok(env.payload)
    }

    /// Executes one group phase: all sends and receives complete together,
    /// whatever order they were listed in. Returns received payloads in the
    /// order of `recvs`.
    ///
    /// In the simulated fabric every rank of the cluster must enter the phase
    /// (with empty lists if it has nothing to move).
    pub fn group_phase(&mut self, sends: Vec<Outgoing>, recvs: &[Incoming], class: TrafficClass) -> Result<Vec<Bytes>> {
        for s in &sends {
            self.check_rank(s.dst)?;
        }
        for r in recvs {
            self.check_rank(r.src)?;
        }
        for s in &sends {
            self.account_sent(s.dst, s.payload.len() as u64, class);
        }
        let received = match self.mode() {
            Mode::InProcess => {
                let board = self.fabric.board();
                for s in sends {
                    board.post(
                        self.rank,
                        s.dst,
                        s.tag,
                        Envelope {
                            payload: s.payload,
                            arrival: 0.0,
                        },
                    )?;
                }
                let mut out = Vec::with_capacity(recvs.len());
                for r in recvs {
                    let env = board.take(self.rank, r.src, r.tag)?;
                    if env.payload.len() != r.len {
                        return Err(Error::Protocol(format!(
                            "rank {} reserved {} bytes for a message from {} (tag {}) that carries {} bytes",
                            self.rank,
                            r.len,
                            r.src,
                            r.tag,
                            env.payload.len()
                        )));
                    }
                    out.push(env.payload);
                }
                out
            }
            Mode::Simulated => {
                let outcome = self.fabric.board().rendezvous(
                    self.rank,
                    Deposit {
                        kind: RendezvousKind::Phase(class),
                        clock: self.clock,
                        sends: sends.into_iter().map(|s| (s.dst, s.tag, s.payload)).collect(),
                        recvs: recvs.iter().map(|r| (r.src, r.tag, r.len)).collect(),
                    },
                )?;
                self.clock = self.clock.max(outcome.clock);
                outcome.received
            }
        };
        for (r, p) in recvs.iter().zip(&received) {
            self.account_recv(r.src, p.len() as u64, class);
        }
        Ok(received)
    }

    /// Blocks until every rank has arrived; simulated clocks jump to the latest.
    pub fn barrier(&mut self) -> Result<()> {
        let outcome = self.fabric.board().rendezvous(
            self.rank,
            Deposit {
                kind: RendezvousKind::Barrier,
                clock: self.clock,
                sends: Vec::new(),
                recvs: Vec::new(),
            },
        )?;
        self.clock = self.clock.max(outcome.clock);
        Ok(())
    }
}

/// A reusable set of endpoints. A failed run leaves the fabric poisoned, so
/// the cluster rebuilds itself afterwards.
#[derive(Debug)]
pub struct Cluster {
    topo: Topology,
    mode: Mode,
    seed: u64,
    endpoints: Vec<Endpoint>,
}

impl Cluster {
    pub fn new(topo: &Topology, mode: Mode, seed: u64) -> Result<Self> {
        Ok(Cluster {
            topo: *topo,
            mode,
            seed,
            endpoints: create_cluster(topo, mode, seed)?,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn size(&self) -> usize {
        self.endpoints.len()
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    /// Runs `work` on every endpoint and returns the per-rank results, or the
    /// error that explains the failure.
    pub fn run<T, F>(&mut self, work: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut Endpoint) -> Result<T> + Sync,
    {
        let (endpoints, results) = run_workers(std::mem::take(&mut self.endpoints), work);
        match first_root_cause(results) {
            Ok(v) => {
                self.endpoints = endpoints;
                Ok(v)
            }
            Err(e) => {
                self.endpoints = create_cluster(&self.topo, self.mode, self.seed)?;
                Err(e)
            }
        }
    }

    pub fn report(&self) -> BTreeMap<String, EndpointReport> {
        cluster_report(&self.endpoints)
    }
}

/// Endpoint reports keyed by rank, ready for JSON export.
pub fn cluster_report(endpoints: &[Endpoint]) -> BTreeMap<String, EndpointReport> {
    endpoints.iter().map(|e| (e.rank().to_string(), e.report())).collect()
}
