//! Group communication over any fabric: grouped point-to-point exchange,
//! collective and point-to-point broadcast, all-reduce and barrier.
//!
//! A collective broadcast from root `G(i, j)` runs in two steps. Step one
//! sends the payload to the root's local peers and to the GPU with the same
//! local index on every remote machine. Step two has each of those remote
//! receivers forward it to its own local peers. Only `V - 1` copies of the
//! payload cross the network.

use bytes::Bytes;

use crate::error::{Error, Result};
use crate::transport::{Endpoint, Incoming, Outgoing, Rank, TrafficClass};

/// Tags at or above this value are reserved for the collectives themselves.
const RESERVED_TAG: u32 = 0xF000_0000;
const TAG_AGREE: u32 = RESERVED_TAG;
const TAG_REDUCE: u32 = RESERVED_TAG + 1;
const TAG_BCAST_BASE: u32 = RESERVED_TAG + 0x100;

/// Contents of a broadcast entry: the root supplies data, everyone else the
/// exact length it expects.
#[derive(Debug, Clone)]
pub enum BcastBuffer {
    Data(Bytes),
    Reserve(usize),
}

impl BcastBuffer {
    fn len(&self) -> usize {
        match self {
            BcastBuffer::Data(b) => b.len(),
            BcastBuffer::Reserve(n) => *n,
        }
    }
}

/// One operation inside a group.
#[derive(Debug, Clone)]
pub enum GroupOp {
    Send { peer: Rank, tag: u32, payload: Bytes },
    Recv { peer: Rank, tag: u32, len: usize },
    Bcast { root: Rank, buffer: BcastBuffer },
}

/// Result slot for each op of a group, in op order.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupResult {
    Sent,
    Received(Bytes),
    Broadcast(Bytes),
}

impl GroupResult {
    pub fn into_bytes(self) -> Option<Bytes> {
        match self {
            GroupResult::Sent => None,
            GroupResult::Received(b) | GroupResult::Broadcast(b) => Some(b),
        }
    }
}

fn bcast_tag(root: Rank) -> u32 {
    TAG_BCAST_BASE + root as u32
}

/// Runs a group of operations so that they complete jointly.
///
/// Point-to-point ops and the first step of every broadcast share one phase;
/// the intra-node forwarding step of the broadcasts is a second phase. Ranks
/// without broadcasts still join the second phase (it is a no-op for them in
/// the in-process fabric).
pub fn group_execute(ep: &mut Endpoint, ops: Vec<GroupOp>) -> Result<Vec<GroupResult>> {
    group_execute_class(ep, ops, TrafficClass::Data)
}

pub(crate) fn group_execute_class(
    ep: &mut Endpoint,
    ops: Vec<GroupOp>,
    class: TrafficClass,
) -> Result<Vec<GroupResult>> {
    let me = ep.rank();
    let k = ep.topology().k();
    let v = ep.topology().v();
    let my_node = ep.node();
    let my_local = ep.local_index();

    for op in &ops {
        if let GroupOp::Send { tag, .. } | GroupOp::Recv { tag, .. } = op {
            if *tag >= RESERVED_TAG {
                return Err(Error::InvalidArgument(format!("tag {tag:#x} is reserved")));
            }
        }
        if let GroupOp::Bcast { root, buffer } = op {
            if *root >= ep.size() {
                return Err(Error::ClusterConfig(format!("broadcast root {root} out of range")));
            }
            let root_holds_data = matches!(buffer, BcastBuffer::Data(_));
            if (*root == me) != root_holds_data {
                return Err(Error::Protocol(format!(
                    "rank {me}: broadcast from {root} must {} data",
                    if *root == me {
                        "carry"
                    } else {
                        "reserve space, not carry"
                    }
                )));
            }
        }
    }

    // Phase 1: p2p ops plus broadcast step one.
    let mut sends = Vec::new();
    let mut recvs = Vec::new();
    // For each op, where its phase-1 receive landed (index into recvs).
    let mut recv_slot = vec![None; ops.len()];
    for (i, op) in ops.iter().enumerate() {
        match op {
            GroupOp::Send { peer, tag, payload } => sends.push(Outgoing {
                dst: *peer,
                tag: *tag,
                payload: payload.clone(),
            }),
            GroupOp::Recv { peer, tag, len } => {
                recv_slot[i] = Some(recvs.len());
                recvs.push(Incoming {
                    src: *peer,
                    tag: *tag,
                    len: *len,
                });
            }
            GroupOp::Bcast { root, buffer } => {
                let tag = bcast_tag(*root);
                let root_node = root / k;
                let root_local = root % k;
                if *root == me {
                    let BcastBuffer::Data(payload) = buffer else {
                        unreachable!()
                    };
                    for peer_local in (0..k).filter(|&l| l != my_local) {
                        sends.push(Outgoing {
                            dst: ep.rank_of(my_node, peer_local),
                            tag,
                            payload: payload.clone(),
                        });
                    }
                    for node in (0..v).filter(|&n| n != my_node) {
                        sends.push(Outgoing {
                            dst: ep.rank_of(node, my_local),
                            tag,
                            payload: payload.clone(),
                        });
                    }
                } else if my_node == root_node || my_local == root_local {
                    recv_slot[i] = Some(recvs.len());
                    recvs.push(Incoming {
                        src: *root,
                        tag,
                        len: buffer.len(),
                    });
                }
            }
        }
    }
    let first = ep.group_phase(sends, &recvs, class)?;

    // Phase 2: forwarding inside remote machines.
    let mut sends = Vec::new();
    let mut recvs = Vec::new();
    let mut forward_slot = vec![None; ops.len()];
    for (i, op) in ops.iter().enumerate() {
        let GroupOp::Bcast { root, buffer } = op else { continue };
        let root_node = root / k;
        let root_local = root % k;
        if my_node == root_node {
            continue;
        }
        let tag = bcast_tag(*root);
        if my_local == root_local {
            let payload = first[recv_slot[i].expect("relay receives in step one")].clone();
            for peer_local in (0..k).filter(|&l| l != my_local) {
                sends.push(Outgoing {
                    dst: ep.rank_of(my_node, peer_local),
                    tag,
                    payload: payload.clone(),
                });
            }
        } else {
            forward_slot[i] = Some(recvs.len());
            recvs.push(Incoming {
                src: ep.rank_of(my_node, root_local),
                tag,
                len: buffer.len(),
            });
        }
    }
    let second = if k > 1 && v > 1 {
        ep.group_phase(sends, &recvs, class)?
    } else {
        Vec::new()
    };

    Ok(ops
        .into_iter()
        .enumerate()
        .map(|(i, op)| match op {
            GroupOp::Send { .. } => GroupResult::Sent,
            GroupOp::Recv { .. } => GroupResult::Received(first[recv_slot[i].unwrap()].clone()),
            GroupOp::Bcast { root, buffer } => {
                if root == me {
                    let BcastBuffer::Data(payload) = buffer else {
                        unreachable!()
                    };
                    GroupResult::Broadcast(payload)
                } else if let Some(s) = forward_slot[i] {
                    GroupResult::Broadcast(second[s].clone())
                } else {
                    GroupResult::Broadcast(first[recv_slot[i].unwrap()].clone())
                }
            }
        })
        .collect())
}

/// Checks that every rank passed the same value; used to catch mismatched
/// collective calls before any data moves.
pub fn agree(ep: &mut Endpoint, what: &str, value: u64) -> Result<()> {
    let values = all_gather_u64(ep, value)?;
    if let Some((r, v)) = values.iter().enumerate().find(|(_, v)| **v != value) {
        return Err(Error::Protocol(format!(
            "{what} mismatch: rank {} passed {value}, rank {r} passed {v}",
            ep.rank()
        )));
    }
    Ok(())
}

/// Every rank learns every rank's value. Metadata traffic, never charged.
pub(crate) fn all_gather_u64(ep: &mut Endpoint, value: u64) -> Result<Vec<u64>> {
    let rows = all_to_all_u64(ep, &vec![value; ep.size()])?;
    Ok(rows)
}

/// Metadata all-to-all of one `u64` per destination: returns what each rank
/// sent to this one.
pub(crate) fn all_to_all_u64(ep: &mut Endpoint, row: &[u64]) -> Result<Vec<u64>> {
    let n = ep.size();
    if row.len() != n {
        return Err(Error::Protocol(format!(
            "rank {} supplied {} entries for a cluster of {n}",
            ep.rank(),
            row.len()
        )));
    }
    let sends = row
        .iter()
        .enumerate()
        .map(|(dst, v)| Outgoing {
            dst,
            tag: TAG_AGREE,
            payload: Bytes::copy_from_slice(&v.to_le_bytes()),
        })
        .collect();
    let recvs: Vec<Incoming> = (0..n)
        .map(|src| Incoming {
            src,
            tag: TAG_AGREE,
            len: 8,
        })
        .collect();
    let got = ep.group_phase(sends, &recvs, TrafficClass::Metadata)?;
    Ok(got
        .iter()
        .map(|b| u64::from_le_bytes(b[..8].try_into().unwrap()))
        .collect())
}

/// One-to-all broadcast. Non-roots pass [`BcastBuffer::Reserve`] with the
/// announced length.
pub fn broadcast_collective(ep: &mut Endpoint, root: Rank, buffer: BcastBuffer) -> Result<Bytes> {
    agree(ep, "broadcast root", root as u64)?;
    let mut out = group_execute(ep, vec![GroupOp::Bcast { root, buffer }])?;
    Ok(out.pop().and_then(GroupResult::into_bytes).unwrap_or_default())
}

/// Broadcast built from `N - 1` grouped sends out of the root. Every remote
/// GPU gets its own copy over the network.
pub fn broadcast_p2p(ep: &mut Endpoint, root: Rank, buffer: BcastBuffer) -> Result<Bytes> {
    agree(ep, "broadcast root", root as u64)?;
    let out = broadcast_p2p_many(ep, vec![(root, buffer)])?;
    Ok(out.into_iter().next().unwrap_or_default())
}

/// Several point-to-point broadcasts in one group (one per listed root).
pub(crate) fn broadcast_p2p_many(ep: &mut Endpoint, entries: Vec<(Rank, BcastBuffer)>) -> Result<Vec<Bytes>> {
    let me = ep.rank();
    let n = ep.size();
    let mut sends = Vec::new();
    let mut recvs = Vec::new();
    for (root, buffer) in &entries {
        let tag = bcast_tag(*root);
        match buffer {
            BcastBuffer::Data(payload) if *root == me => {
                for dst in (0..n).filter(|&d| d != me) {
                    sends.push(Outgoing {
                        dst,
                        tag,
                        payload: payload.clone(),
                    });
                }
            }
            BcastBuffer::Reserve(len) if *root != me => recvs.push(Incoming {
                src: *root,
                tag,
                len: *len,
            }),
            _ => {
                return Err(Error::Protocol(format!(
                    "rank {me}: broadcast from {root} must carry data only at the root"
                )))
            }
        }
    }
    let got = ep.group_phase(sends, &recvs, TrafficClass::Data)?;
    let mut got = got.into_iter();
    Ok(entries
        .into_iter()
        .map(|(root, buffer)| match buffer {
            BcastBuffer::Data(p) if root == me => p,
            _ => got.next().unwrap(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Min,
    Max,
    Product,
    Average,
}

/// Element types supported by [`all_reduce`].
pub trait Reducible: Copy + Send + 'static {
    const WIDTH: usize;
    fn to_le(self, out: &mut Vec<u8>);
    fn from_le(bytes: &[u8]) -> Self;
    fn combine(op: ReduceOp, a: Self, b: Self) -> Self;
    /// `sum / n`; integer division for integers.
    fn average(sum: Self, n: usize) -> Self;
}

impl Reducible for f64 {
    const WIDTH: usize = 8;

    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn from_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }

    fn combine(op: ReduceOp, a: Self, b: Self) -> Self {
        match op {
            ReduceOp::Sum | ReduceOp::Average => a + b,
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
            ReduceOp::Product => a * b,
        }
    }

    fn average(sum: Self, n: usize) -> Self {
        sum / n as f64
    }
}

impl Reducible for i64 {
    const WIDTH: usize = 8;

    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn from_le(bytes: &[u8]) -> Self {
        i64::from_le_bytes(bytes.try_into().unwrap())
    }

    fn combine(op: ReduceOp, a: Self, b: Self) -> Self {
        match op {
            ReduceOp::Sum | ReduceOp::Average => a.wrapping_add(b),
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
            ReduceOp::Product => a.wrapping_mul(b),
        }
    }

    fn average(sum: Self, n: usize) -> Self {
        sum / n as i64
    }
}

fn encode<T: Reducible>(values: &[T]) -> Bytes {
    let mut out = Vec::with_capacity(values.len() * T::WIDTH);
    values.iter().for_each(|v| v.to_le(&mut out));
    Bytes::from(out)
}

fn decode<T: Reducible>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(T::WIDTH).map(T::from_le).collect()
}

/// Elementwise reduction across all ranks; every rank gets the same vector.
///
/// Reduce-to-rank-0 then broadcast, folding in rank order so the result is
/// bit-identical everywhere. Its traffic is not charged virtual time.
pub fn all_reduce<T: Reducible>(ep: &mut Endpoint, values: &[T], op: ReduceOp) -> Result<Vec<T>> {
    let n = ep.size();
    let me = ep.rank();
    agree(ep, "all_reduce length", values.len() as u64)?;
    let len = values.len() * T::WIDTH;

    let mut sends = vec![Outgoing {
        dst: 0,
        tag: TAG_REDUCE,
        payload: encode(values),
    }];
    let recvs: Vec<Incoming> = if me == 0 {
        (0..n)
            .map(|src| Incoming {
                src,
                tag: TAG_REDUCE,
                len,
            })
            .collect()
    } else {
        Vec::new()
    };
    let parts = ep.group_phase(std::mem::take(&mut sends), &recvs, TrafficClass::Metadata)?;

    let buffer = if me == 0 {
        let mut acc: Vec<T> = decode(&parts[0]);
        for p in &parts[1..] {
            for (a, b) in acc.iter_mut().zip(decode::<T>(p)) {
                *a = T::combine(op, *a, b);
            }
        }
        if op == ReduceOp::Average {
            acc.iter_mut().for_each(|a| *a = T::average(*a, n));
        }
        BcastBuffer::Data(encode(&acc))
    } else {
        BcastBuffer::Reserve(len)
    };
    let out = group_execute_class(ep, vec![GroupOp::Bcast { root: 0, buffer }], TrafficClass::Metadata)?;
    let bytes = out
        .into_iter()
        .next()
        .and_then(GroupResult::into_bytes)
        .unwrap_or_default();
    Ok(decode(&bytes))
}

/// Gathers one payload per rank at `root` in rank order (`None` elsewhere).
/// Meant for small results; not charged virtual time.
pub fn gather(ep: &mut Endpoint, root: Rank, payload: Bytes) -> Result<Option<Vec<Bytes>>> {
    let n = ep.size();
    let lens = all_gather_u64(ep, payload.len() as u64)?;
    const TAG_GATHER: u32 = RESERVED_TAG + 2;
    let sends = vec![Outgoing {
        dst: root,
        tag: TAG_GATHER,
        payload,
    }];
    let recvs: Vec<Incoming> = if ep.rank() == root {
        (0..n)
            .map(|src| Incoming {
                src,
                tag: TAG_GATHER,
                len: lens[src] as usize,
            })
            .collect()
    } else {
        Vec::new()
    };
    let got = ep.group_phase(sends, &recvs, TrafficClass::Metadata)?;
    Ok((ep.rank() == root).then_some(got))
}

pub fn barrier(ep: &mut Endpoint) -> Result<()> {
    ep.barrier()
}
