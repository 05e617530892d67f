//! Shared rendezvous/mailbox state behind both fabrics.
//!
//! All ranks of a cluster share one `Board`. Point-to-point messages sit in
//! FIFO mailboxes keyed by `(src, dst, tag)`. Barriers and simulated group
//! phases go through a generation-counted rendezvous that the last arriving
//! rank resolves for everyone.
//!
//! Every blocking wait registers what the rank is waiting for. When no rank is
//! running and no waiter can make progress the board is poisoned with a
//! deadlock error naming the stuck ranks.

use std::collections::{HashMap, VecDeque};
use std::sync::{Condvar, Mutex, MutexGuard};

use bytes::Bytes;

use super::{charge_group, Rank, TrafficClass};
use crate::error::{Error, Result};
use crate::perfmodel::Topology;

#[derive(Debug, Clone)]
pub(crate) struct Envelope {
    pub payload: Bytes,
    /// Virtual arrival time; zero in the in-process fabric.
    pub arrival: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Running,
    WaitRecv { src: Rank, tag: u32 },
    WaitRendezvous { gen: u64 },
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RendezvousKind {
    Barrier,
    Phase(TrafficClass),
}

#[derive(Debug)]
pub(crate) struct Deposit {
    pub kind: RendezvousKind,
    pub clock: f64,
    pub sends: Vec<(Rank, u32, Bytes)>,
    pub recvs: Vec<(Rank, u32, usize)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub clock: f64,
    pub received: Vec<Bytes>,
}

#[derive(Debug)]
struct State {
    mailboxes: HashMap<(Rank, Rank, u32), VecDeque<Envelope>>,
    status: Vec<Status>,
    failure: Option<Error>,
    gen: u64,
    deposits: Vec<Option<Deposit>>,
    outcomes: Vec<Option<(u64, Outcome)>>,
}

#[derive(Debug)]
pub(crate) struct Board {
    n: usize,
    /// Present when rendezvous phases charge virtual time.
    cost: Option<Topology>,
    state: Mutex<State>,
    cv: Condvar,
}

impl Board {
    pub fn new(n: usize, cost: Option<Topology>) -> Self {
        Board {
            n,
            cost,
            state: Mutex::new(State {
                mailboxes: HashMap::new(),
                status: vec![Status::Running; n],
                failure: None,
                gen: 0,
                deposits: (0..n).map(|_| None).collect(),
                outcomes: vec![None; n],
            }),
            cv: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn post(&self, src: Rank, dst: Rank, tag: u32, env: Envelope) -> Result<()> {
        let mut st = self.lock();
        if let Some(f) = &st.failure {
            return Err(f.clone());
        }
        st.mailboxes.entry((src, dst, tag)).or_default().push_back(env);
        self.cv.notify_all();
        Ok(())
    }

    pub fn take(&self, me: Rank, src: Rank, tag: u32) -> Result<Envelope> {
        let mut st = self.lock();
        loop {
            if let Some(f) = st.failure.clone() {
                st.status[me] = Status::Running;
                return Err(f);
            }
            if let Some(env) = st.mailboxes.get_mut(&(src, me, tag)).and_then(|q| q.pop_front()) {
                st.status[me] = Status::Running;
                return Ok(env);
            }
            if st.status[me] != (Status::WaitRecv { src, tag }) {
                st.status[me] = Status::WaitRecv { src, tag };
                self.detect_deadlock(&mut st);
                continue;
            }
            st = self.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    /// Joins a cluster-wide rendezvous. The last rank to arrive resolves it.
    pub fn rendezvous(&self, me: Rank, deposit: Deposit) -> Result<Outcome> {
        let mut st = self.lock();
        if let Some(f) = &st.failure {
            return Err(f.clone());
        }
        let gen = st.gen;
        st.deposits[me] = Some(deposit);
        let arrived = st.deposits.iter().filter(|d| d.is_some()).count();
        if arrived == self.n {
            let deposits: Vec<Deposit> = st.deposits.iter_mut().map(|d| d.take().unwrap()).collect();
            match self.resolve(deposits) {
                Ok(outcomes) => {
                    for (slot, out) in st.outcomes.iter_mut().zip(outcomes) {
                        *slot = Some((gen, out));
                    }
                }
                Err(e) => st.failure = Some(e),
            }
            st.gen += 1;
            self.cv.notify_all();
        } else {
            st.status[me] = Status::WaitRendezvous { gen };
            self.detect_deadlock(&mut st);
        }
        loop {
            if let Some(f) = st.failure.clone() {
                st.status[me] = Status::Running;
                return Err(f);
            }
            if let Some((g, _)) = &st.outcomes[me] {
                if *g == gen {
                    let (_, out) = st.outcomes[me].take().unwrap();
                    st.status[me] = Status::Running;
                    return Ok(out);
                }
            }
            st = self.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    pub fn leave(&self, me: Rank) {
        let mut st = self.lock();
        st.status[me] = Status::Left;
        self.detect_deadlock(&mut st);
        self.cv.notify_all();
    }

    /// Makes every rank runnable again after all workers of a run have joined.
    pub fn rejoin_all(&self) {
        let mut st = self.lock();
        if st.failure.is_none() {
            st.status.iter_mut().for_each(|s| *s = Status::Running);
        }
    }

    fn detect_deadlock(&self, st: &mut State) {
        if st.failure.is_some() {
            return;
        }
        let mut stuck = Vec::new();
        for (rank, status) in st.status.iter().enumerate() {
            match *status {
                Status::Running => return,
                Status::Left => {}
                Status::WaitRecv { src, tag } => {
                    if st.mailboxes.get(&(src, rank, tag)).is_some_and(|q| !q.is_empty()) {
                        return;
                    }
                    stuck.push(rank);
                }
                Status::WaitRendezvous { gen } => {
                    if st.outcomes[rank].as_ref().is_some_and(|(g, _)| *g == gen) {
                        return;
                    }
                    stuck.push(rank);
                }
            }
        }
        if stuck.is_empty() {
            return;
        }
        let detail = stuck
            .iter()
            .map(|&r| match st.status[r] {
                Status::WaitRecv { src, tag } => format!("rank {r} waits on recv from {src} tag {tag}"),
                Status::WaitRendezvous { .. } => {
                    let missing: Vec<Rank> = (0..self.n).filter(|&x| st.deposits[x].is_none()).collect();
                    format!("rank {r} waits in a collective that ranks {missing:?} never joined")
                }
                _ => unreachable!(),
            })
            .collect::<Vec<_>>()
            .join("; ");
        st.failure = Some(Error::Deadlock { stuck, detail });
        self.cv.notify_all();
    }

    fn resolve(&self, deposits: Vec<Deposit>) -> Result<Vec<Outcome>> {
        let kind = deposits[0].kind;
        if let Some((r, d)) = deposits.iter().enumerate().find(|(_, d)| d.kind != kind) {
            return Err(Error::Protocol(format!(
                "rank 0 entered {kind:?} while rank {r} entered {:?}",
                d.kind
            )));
        }
        let start = deposits.iter().map(|d| d.clock).fold(0.0, f64::max);
        if kind == RendezvousKind::Barrier {
            return Ok(deposits
                .iter()
                .map(|_| Outcome {
                    clock: start,
                    received: Vec::new(),
                })
                .collect());
        }

        let mut queues: HashMap<(Rank, Rank, u32), VecDeque<Bytes>> = HashMap::new();
        let mut transfers = Vec::new();
        for (src, d) in deposits.iter().enumerate() {
            for (dst, tag, payload) in &d.sends {
                if *dst >= self.n {
                    return Err(Error::ClusterConfig(format!(
                        "rank {src} sends to rank {dst} in a cluster of {}",
                        self.n
                    )));
                }
                transfers.push((src, *dst, payload.len() as u64));
                queues.entry((src, *dst, *tag)).or_default().push_back(payload.clone());
            }
        }
        let mut outcomes = Vec::with_capacity(self.n);
        let mut unmatched_recv = Vec::new();
        for (dst, d) in deposits.iter().enumerate() {
            let mut received = Vec::with_capacity(d.recvs.len());
            for &(src, tag, len) in &d.recvs {
                match queues.get_mut(&(src, dst, tag)).and_then(|q| q.pop_front()) {
                    Some(p) if p.len() == len => received.push(p),
                    Some(p) => {
                        return Err(Error::Protocol(format!(
                            "rank {dst} reserved {len} bytes for a message from {src} (tag {tag}) \
                             that carries {} bytes",
                            p.len()
                        )))
                    }
                    None => unmatched_recv.push((src, dst, tag)),
                }
            }
            outcomes.push(Outcome { clock: start, received });
        }
        let unmatched_send: Vec<(Rank, Rank, u32)> = queues
            .iter()
            .flat_map(|(&(s, d, t), q)| std::iter::repeat_n((s, d, t), q.len()))
            .collect();
        if !unmatched_recv.is_empty() || !unmatched_send.is_empty() {
            let mut stuck: Vec<Rank> = unmatched_recv
                .iter()
                .chain(unmatched_send.iter())
                .flat_map(|&(s, d, _)| [s, d])
                .collect();
            stuck.sort_unstable();
            stuck.dedup();
            let mut detail = Vec::new();
            if !unmatched_send.is_empty() {
                let mut v = unmatched_send.clone();
                v.sort_unstable();
                detail.push(format!("sends without a matching recv (src, dst, tag): {v:?}"));
            }
            if !unmatched_recv.is_empty() {
                detail.push(format!(
                    "recvs without a matching send (src, dst, tag): {unmatched_recv:?}"
                ));
            }
            return Err(Error::Deadlock {
                stuck,
                detail: detail.join("; "),
            });
        }

        if let (Some(topo), RendezvousKind::Phase(TrafficClass::Data)) = (&self.cost, kind) {
            let step = charge_group(topo, &transfers).into_iter().fold(0.0, f64::max);
            for o in &mut outcomes {
                o.clock = start + step;
            }
        }
        Ok(outcomes)
    }
}
