//! Table-level shuffle and broadcast.
//!
//! Both operators start with metadata rounds (schema check, dictionary
//! agreement, row counts) and then move one column at a time. Every column
//! travels in a single group: a shuffle posts all `N` sends and `N` receives
//! (self and empty transfers included), a broadcast posts one broadcast per
//! root. Receivers know every incoming length up front and assemble each
//! column contiguously in sender rank order.

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::collectives::{self, BcastBuffer, GroupOp};
use crate::error::{Error, Result};
use crate::table::{dictionary_fingerprint, fnv1a, merge_dictionaries, Column, ColumnData, ColumnTable, Dictionary};
use crate::transport::{Endpoint, TrafficClass};

/// Multiplier of the 64-bit Fibonacci hash (2^64 divided by the golden ratio).
pub const FIBONACCI: u64 = 0x9E37_79B9_7F4A_7C15;

const TAG_DICT: u32 = 0x0800_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyHash {
    #[default]
    Fibonacci,
    /// Raw key value (multi-key tuples are combined as `acc * 31 + key`).
    /// Only useful for tests and hand-checked examples.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastImpl {
    #[default]
    Collective,
    P2p,
}

fn key_words(table: &ColumnTable, keys: &[&str]) -> Result<Vec<Vec<u64>>> {
    if keys.is_empty() {
        return Err(Error::InvalidArgument(
            "partitioning needs at least one key column".into(),
        ));
    }
    keys.iter()
        .map(|name| match &table.column(name)?.data {
            ColumnData::Int64(v) => Ok(v.iter().map(|&x| x as u64).collect()),
            ColumnData::Date(v) => Ok(v.iter().map(|&x| x as i64 as u64).collect()),
            // Hash the string, not the code, so that tables with different
            // dictionaries still agree.
            ColumnData::Dict { codes, dict } => {
                let per_code: Vec<u64> = dict.iter().map(|s| fnv1a(s.as_bytes())).collect();
                Ok(codes.iter().map(|&c| per_code[c as usize]).collect())
            }
            ColumnData::Float64(_) => Err(Error::Schema(format!("column {name} is float64 and cannot be hashed"))),
        })
        .collect()
}

/// Hash of each row's key tuple.
pub fn key_hashes(table: &ColumnTable, keys: &[&str], hash: KeyHash) -> Result<Vec<u64>> {
    let words = key_words(table, keys)?;
    let mut out = Vec::with_capacity(table.num_rows());
    for r in 0..table.num_rows() {
        let h = match hash {
            KeyHash::Fibonacci => {
                let mut acc = 0u64;
                for w in &words {
                    acc = (acc.rotate_left(26) ^ w[r]).wrapping_mul(FIBONACCI);
                }
                acc ^ (acc >> 32)
            }
            KeyHash::Identity => words
                .iter()
                .fold(0u64, |acc, w| acc.wrapping_mul(31).wrapping_add(w[r])),
        };
        out.push(h);
    }
    Ok(out)
}

/// Target part of each row, `h(key) mod n_parts`.
pub fn partition_ids(table: &ColumnTable, keys: &[&str], n_parts: usize, hash: KeyHash) -> Result<Vec<usize>> {
    if n_parts == 0 {
        return Err(Error::InvalidArgument("cannot partition into zero parts".into()));
    }
    Ok(key_hashes(table, keys, hash)?
        .into_iter()
        .map(|h| (h % n_parts as u64) as usize)
        .collect())
}

fn rows_per_part(ids: &[usize], n_parts: usize) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); n_parts];
    for (r, &p) in ids.iter().enumerate() {
        rows[p].push(r);
    }
    rows
}

pub fn hash_partition(table: &ColumnTable, keys: &[&str], n_parts: usize) -> Result<Vec<ColumnTable>> {
    hash_partition_with(table, keys, n_parts, KeyHash::Fibonacci)
}

pub fn hash_partition_with(
    table: &ColumnTable,
    keys: &[&str],
    n_parts: usize,
    hash: KeyHash,
) -> Result<Vec<ColumnTable>> {
    let ids = partition_ids(table, keys, n_parts, hash)?;
    Ok(rows_per_part(&ids, n_parts)
        .iter()
        .map(|rows| table.take(rows))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeExchange {
    /// `incoming[i]`: what rank `i` sends to this rank.
    pub incoming: Vec<u64>,
    /// Exclusive prefix sums of `incoming`.
    pub offsets: Vec<u64>,
}

impl SizeExchange {
    pub fn total(&self) -> u64 {
        self.incoming.iter().sum()
    }
}

/// Every rank announces what it sends to each peer; each learns what it will
/// receive and where each sender's slice starts. Never charged virtual time.
pub fn size_exchange(ep: &mut Endpoint, my_row: &[u64]) -> Result<SizeExchange> {
    let incoming = collectives::all_to_all_u64(ep, my_row)?;
    let offsets = incoming
        .iter()
        .scan(0u64, |acc, &x| {
            let o = *acc;
            *acc += x;
            Some(o)
        })
        .collect();
    Ok(SizeExchange { incoming, offsets })
}

/// Per-message byte sizes this rank sent during exchanges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExchangeTrace {
    pub shuffle_msgs: Vec<u64>,
    pub broadcast_msgs: Vec<u64>,
}

fn check_schema(ep: &mut Endpoint, table: &ColumnTable) -> Result<()> {
    let mine = table.schema_fingerprint();
    let all = collectives::all_gather_u64(ep, mine)?;
    if let Some(r) = all.iter().position(|&f| f != mine) {
        return Err(Error::Schema(format!(
            "rank {} has columns {:?}, rank {r} has a different schema",
            ep.rank(),
            table.schema()
        )));
    }
    Ok(())
}

fn encode_dictionary(dict: &Dictionary) -> Bytes {
    let mut out = Vec::new();
    for s in dict.iter() {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    Bytes::from(out)
}

fn decode_dictionary(bytes: &[u8]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        if rest.len() < 4 {
            return Err(Error::Protocol("truncated dictionary".into()));
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let s = rest
            .get(4..4 + len)
            .ok_or_else(|| Error::Protocol("truncated dictionary entry".into()))?;
        out.push(String::from_utf8(s.to_vec()).map_err(|e| Error::Protocol(e.to_string()))?);
        rest = &rest[4 + len..];
    }
    Ok(out)
}

/// Makes every dictionary column use the same dictionary on all ranks.
/// Dictionaries only travel when some rank's differs.
fn unify_dictionaries(ep: &mut Endpoint, table: ColumnTable) -> Result<ColumnTable> {
    let mut columns = table.into_columns();
    for col in columns.iter_mut() {
        let ColumnData::Dict { codes, dict } = &mut col.data else {
            continue;
        };
        let fp = dictionary_fingerprint(dict);
        let fps = collectives::all_gather_u64(ep, fp)?;
        if fps.iter().all(|&f| f == fp) {
            continue;
        }
        let encoded = encode_dictionary(dict);
        let lens = collectives::all_gather_u64(ep, encoded.len() as u64)?;
        let me = ep.rank();
        let ops = (0..ep.size())
            .map(|root| GroupOp::Bcast {
                root,
                buffer: if root == me {
                    BcastBuffer::Data(encoded.clone())
                } else {
                    BcastBuffer::Reserve(lens[root] as usize)
                },
            })
            .collect();
        let got = collectives::group_execute_class(ep, ops, TrafficClass::Metadata)?;
        let mut merged: Option<Dictionary> = None;
        let mut my_remap = Vec::new();
        for (root, res) in got.into_iter().enumerate() {
            let bytes = res.into_bytes().unwrap_or_default();
            let d: Dictionary = std::sync::Arc::new(decode_dictionary(&bytes)?);
            let (m, remap) = match &merged {
                None => (d.clone(), (0..d.len() as i32).collect()),
                Some(m) => merge_dictionaries(m, &d),
            };
            if root == me {
                my_remap = remap;
            }
            merged = Some(m);
        }
        codes.iter_mut().for_each(|c| *c = my_remap[*c as usize]);
        *dict = merged.expect("at least one rank");
    }
    ColumnTable::new(columns)
}

fn check_tag_space(table: &ColumnTable) -> Result<()> {
    if table.num_columns() >= TAG_DICT as usize {
        return Err(Error::Unsupported(format!("{} columns", table.num_columns())));
    }
    Ok(())
}

/// Redistributes rows so that rank `j` ends up with exactly the rows whose key
/// hashes to `j`.
pub fn shuffle_table(ep: &mut Endpoint, table: &ColumnTable, keys: &[&str]) -> Result<ColumnTable> {
    shuffle_table_traced(ep, table, keys, &mut ExchangeTrace::default())
}

pub fn shuffle_table_traced(
    ep: &mut Endpoint,
    table: &ColumnTable,
    keys: &[&str],
    trace: &mut ExchangeTrace,
) -> Result<ColumnTable> {
    check_tag_space(table)?;
    check_schema(ep, table)?;
    let n = ep.size();
    // Schemas match, so a bad key fails on every rank alike.
    let ids = partition_ids(table, keys, n, KeyHash::Fibonacci)?;
    let table = unify_dictionaries(ep, table.clone())?;
    let rows = rows_per_part(&ids, n);
    let my_row: Vec<u64> = rows.iter().map(|r| r.len() as u64).collect();
    let sizes = size_exchange(ep, &my_row)?;

    let width = table.row_width() as u64;
    trace.shuffle_msgs.extend(my_row.iter().map(|&r| r * width));

    let mut columns = Vec::with_capacity(table.num_columns());
    for (tag, col) in table.columns().iter().enumerate() {
        let w = col.data_type().width();
        let mut ops = Vec::with_capacity(2 * n);
        for (dst, r) in rows.iter().enumerate() {
            ops.push(GroupOp::Send {
                peer: dst,
                tag: tag as u32,
                payload: col.data.encode(Some(r)),
            });
        }
        for (src, &count) in sizes.incoming.iter().enumerate() {
            ops.push(GroupOp::Recv {
                peer: src,
                tag: tag as u32,
                len: count as usize * w,
            });
        }
        let results = collectives::group_execute(ep, ops)?;
        let mut data = col.data.empty_like();
        for (src, res) in results.into_iter().skip(n).enumerate() {
            let payload = res.into_bytes().unwrap_or_default();
            debug_assert_eq!(data.len() as u64, sizes.offsets[src]);
            data.extend_from_le(&payload)?;
        }
        if data.len() as u64 != sizes.total() {
            return Err(Error::Protocol(format!(
                "column {} assembled {} rows, announced {}",
                col.name,
                data.len(),
                sizes.total()
            )));
        }
        columns.push(Column::new(col.name.clone(), data));
    }
    if columns.is_empty() {
        return Ok(table.empty_like());
    }
    ColumnTable::new(columns)
}

/// Replicates the table: every rank returns the concatenation of all ranks'
/// inputs in rank order.
pub fn broadcast_table(ep: &mut Endpoint, table: &ColumnTable) -> Result<ColumnTable> {
    broadcast_table_traced(ep, table, BroadcastImpl::Collective, &mut ExchangeTrace::default())
}

pub fn broadcast_table_traced(
    ep: &mut Endpoint,
    table: &ColumnTable,
    how: BroadcastImpl,
    trace: &mut ExchangeTrace,
) -> Result<ColumnTable> {
    check_tag_space(table)?;
    check_schema(ep, table)?;
    let table = unify_dictionaries(ep, table.clone())?;
    let n = ep.size();
    let me = ep.rank();
    let counts = collectives::all_gather_u64(ep, table.num_rows() as u64)?;
    trace.broadcast_msgs.push(table.byte_size());

    let mut columns = Vec::with_capacity(table.num_columns());
    for col in table.columns() {
        let w = col.data_type().width();
        let entries: Vec<(usize, BcastBuffer)> = (0..n)
            .map(|root| {
                let buf = if root == me {
                    BcastBuffer::Data(col.data.encode(None))
                } else {
                    BcastBuffer::Reserve(counts[root] as usize * w)
                };
                (root, buf)
            })
            .collect();
        let payloads: Vec<Bytes> = match how {
            BroadcastImpl::Collective => {
                let ops = entries
                    .into_iter()
                    .map(|(root, buffer)| GroupOp::Bcast { root, buffer })
                    .collect();
                collectives::group_execute(ep, ops)?
                    .into_iter()
                    .map(|r| r.into_bytes().unwrap_or_default())
                    .collect()
            }
            BroadcastImpl::P2p => collectives::broadcast_p2p_many(ep, entries)?,
        };
        let mut data = col.data.empty_like();
        for p in &payloads {
            data.extend_from_le(p)?;
        }
        columns.push(Column::new(col.name.clone(), data));
    }
    if columns.is_empty() {
        return Ok(table.empty_like());
    }
    ColumnTable::new(columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perfmodel::Topology;
    use crate::transport::{create_cluster, first_root_cause, run_workers, Mode};

    fn cluster(k: usize, v: usize, mode: Mode) -> Vec<Endpoint> {
        let t = Topology::new(k, v, 450.0, 50.0).unwrap();
        create_cluster(&t, mode, 3).unwrap()
    }

    #[test]
    fn identity_partition_example() {
        let t = ColumnTable::new(vec![Column::int64("k", (0..8).collect())]).unwrap();
        let parts = hash_partition_with(&t, &["k"], 4, KeyHash::Identity).unwrap();
        for (i, p) in parts.iter().enumerate() {
            assert_eq!(p.i64s("k").unwrap(), &[i as i64, i as i64 + 4]);
        }
    }

    #[test]
    fn empty_table_partitions() {
        let t = ColumnTable::new(vec![Column::int64("k", vec![])]).unwrap();
        let parts = hash_partition(&t, &["k"], 3).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|p| p.is_empty()));
    }

    #[test]
    fn partition_errors() {
        let t = ColumnTable::new(vec![Column::float64("f", vec![1.0])]).unwrap();
        assert!(matches!(hash_partition(&t, &["f"], 2), Err(Error::Schema(_))));
        assert!(matches!(hash_partition(&t, &["nope"], 2), Err(Error::Schema(_))));
        assert!(hash_partition(&t, &[], 2).is_err());
    }

    #[test]
    fn dict_keys_hash_by_string() {
        let a = ColumnTable::new(vec![Column::strings("s", &["x", "y"])]).unwrap();
        let b = ColumnTable::new(vec![Column::strings("s", &["y", "x"])]).unwrap();
        let ha = key_hashes(&a, &["s"], KeyHash::Fibonacci).unwrap();
        let hb = key_hashes(&b, &["s"], KeyHash::Fibonacci).unwrap();
        assert_eq!(ha[0], hb[1]);
    }

    #[test]
    fn size_exchange_example() {
        let matrix = [[1u64, 2], [3, 4]];
        let (_, out) = run_workers(cluster(2, 1, Mode::InProcess), |ep| {
            size_exchange(ep, &matrix[ep.rank()])
        });
        let out = first_root_cause(out).unwrap();
        assert_eq!(out[0].incoming, vec![1, 3]);
        assert_eq!(out[0].offsets, vec![0, 1]);
        assert_eq!(out[1].incoming, vec![2, 4]);
        assert_eq!(out[1].offsets, vec![0, 2]);
    }

    #[test]
    fn size_exchange_wrong_width() {
        let (_, out) = run_workers(cluster(2, 1, Mode::InProcess), |ep| size_exchange(ep, &[0, 0, 0]));
        assert!(matches!(first_root_cause(out).unwrap_err(), Error::Protocol(_)));
    }

    #[test]
    fn uniform_shuffle_identity_like() {
        for mode in [Mode::InProcess, Mode::Simulated] {
            let (_, out) = run_workers(cluster(2, 2, mode), |ep| {
                let t = ColumnTable::new(vec![
                    Column::int64("k", (0..8).collect()),
                    Column::float64("v", (0..8).map(|x| x as f64 + ep.rank() as f64 / 10.0).collect()),
                ])
                .unwrap();
                shuffle_table(ep, &t, &["k"])
            });
            let out = first_root_cause(out).unwrap();
            assert_eq!(out.iter().map(|t| t.num_rows()).sum::<usize>(), 32);
            for (rank, t) in out.iter().enumerate() {
                let ids = partition_ids(t, &["k"], 4, KeyHash::Fibonacci).unwrap();
                assert!(ids.iter().all(|&p| p == rank));
            }
        }
    }

    #[test]
    fn all_rows_one_key() {
        let (_, out) = run_workers(cluster(4, 1, Mode::Simulated), |ep| {
            let t = ColumnTable::new(vec![Column::int64("k", vec![42; 5])]).unwrap();
            shuffle_table(ep, &t, &["k"])
        });
        let counts: Vec<usize> = first_root_cause(out).unwrap().iter().map(|t| t.num_rows()).collect();
        assert_eq!(counts.iter().sum::<usize>(), 20);
        assert_eq!(counts.iter().filter(|&&c| c == 20).count(), 1);
    }

    #[test]
    fn broadcast_example() {
        let sizes = [2usize, 3, 0, 5];
        for mode in [Mode::InProcess, Mode::Simulated] {
            for how in [BroadcastImpl::Collective, BroadcastImpl::P2p] {
                let (_, out) = run_workers(cluster(2, 2, mode), |ep| {
                    let r = ep.rank() as i64;
                    let t = ColumnTable::new(vec![Column::int64(
                        "x",
                        (0..sizes[ep.rank()] as i64).map(|i| r * 100 + i).collect(),
                    )])
                    .unwrap();
                    broadcast_table_traced(ep, &t, how, &mut ExchangeTrace::default())
                });
                let out = first_root_cause(out).unwrap();
                let expected: Vec<i64> = (0..4)
                    .flat_map(|r: i64| (0..sizes[r as usize] as i64).map(move |i| r * 100 + i))
                    .collect();
                for t in &out {
                    assert_eq!(t.i64s("x").unwrap(), expected.as_slice());
                }
            }
        }
    }

    #[test]
    fn broadcast_single_worker_is_identity() {
        let (_, out) = run_workers(cluster(1, 1, Mode::Simulated), |ep| {
            let t = ColumnTable::new(vec![Column::strings("s", &["a", "b"])]).unwrap();
            Ok((broadcast_table(ep, &t)?, t))
        });
        let (got, input) = first_root_cause(out).unwrap().pop().unwrap();
        assert_eq!(got, input);
    }

    #[test]
    fn broadcast_with_differing_dictionaries() {
        let (eps, out) = run_workers(cluster(3, 1, Mode::InProcess), |ep| {
            let words: Vec<String> = vec![format!("w{}", ep.rank()), "shared".into()];
            let t = ColumnTable::new(vec![Column::strings("s", &words)]).unwrap();
            broadcast_table(ep, &t)
        });
        let out = first_root_cause(out).unwrap();
        let want = ["w0", "shared", "w1", "shared", "w2", "shared"];
        for t in &out {
            let got: Vec<_> = (0..t.num_rows()).map(|r| t.value(r, 0)).collect();
            assert_eq!(
                got,
                want.iter().map(|s| crate::table::Value::Str(s)).collect::<Vec<_>>()
            );
        }
        assert!(eps.iter().all(|e| e.counters().metadata_bytes > 0));
    }

    #[test]
    fn shared_dictionary_is_not_sent() {
        let dict: Dictionary = std::sync::Arc::new(vec!["a".into(), "b".into()]);
        let (eps, out) = run_workers(cluster(2, 1, Mode::InProcess), |ep| {
            let t = ColumnTable::new(vec![Column::dict("s", vec![1, 0], dict.clone())]).unwrap();
            broadcast_table(ep, &t)
        });
        first_root_cause(out).unwrap();
        // schema, dictionary fingerprint and row count rounds only: 3 x 8 bytes x 2 peers
        assert!(eps.iter().all(|e| e.counters().metadata_bytes == 48));
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let (_, out) = run_workers(cluster(2, 1, Mode::Simulated), |ep| {
            let name = if ep.rank() == 0 { "a" } else { "b" };
            let t = ColumnTable::new(vec![Column::int64(name, vec![1])]).unwrap();
            shuffle_table(ep, &t, &[name])
        });
        assert!(matches!(first_root_cause(out).unwrap_err(), Error::Schema(_)));
    }

    #[test]
    fn reshuffle_moves_only_self_transfers() {
        let (eps, out) = run_workers(cluster(2, 2, Mode::Simulated), |ep| {
            let t = ColumnTable::new(vec![Column::int64(
                "k",
                (0..50).map(|x| x * 7 + ep.rank() as i64).collect(),
            )])
            .unwrap();
            let once = shuffle_table(ep, &t, &["k"])?;
            let before = ep.counters();
            let twice = shuffle_table(ep, &once, &["k"])?;
            let after = ep.counters();
            Ok((
                once == twice,
                after.inter_node_sent - before.inter_node_sent + after.intra_node_sent - before.intra_node_sent,
            ))
        });
        for (same, moved) in first_root_cause(out).unwrap() {
            assert!(same);
            assert_eq!(moved, 0);
        }
        drop(eps);
    }

    #[test]
    fn trace_records_n_messages_per_rank() {
        let (_, out) = run_workers(cluster(2, 2, Mode::InProcess), |ep| {
            let t = ColumnTable::new(vec![
                Column::int64("k", (0..10).collect()),
                Column::date("d", vec![0; 10]),
            ])
            .unwrap();
            let mut trace = ExchangeTrace::default();
            shuffle_table_traced(ep, &t, &["k"], &mut trace)?;
            Ok(trace)
        });
        for tr in first_root_cause(out).unwrap() {
            assert_eq!(tr.shuffle_msgs.len(), 4);
            assert_eq!(tr.shuffle_msgs.iter().sum::<u64>(), 10 * 12);
        }
    }
}
