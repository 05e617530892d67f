//! TPC-H-like datasets: generation, partitioning across workers, CSV I/O.

mod csv;
mod gen;
pub mod schema;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use self::csv::{load_csv, load_dataset_dir, read_manifest, write_csv, write_csv_to, write_dataset};
pub use self::gen::generate;
use crate::error::{Error, Result};
use crate::exchange::hash_partition;
use crate::table::ColumnTable;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sf: f64,
    pub skew: f64,
    pub seed: u64,
    tables: BTreeMap<String, ColumnTable>,
}

/// Summary written next to a dataset's CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sf: f64,
    pub skew: f64,
    pub seed: u64,
    pub row_counts: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn new(sf: f64, skew: f64, seed: u64, tables: BTreeMap<String, ColumnTable>) -> Self {
        Dataset { sf, skew, seed, tables }
    }

    pub fn table(&self, name: &str) -> Result<&ColumnTable> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Schema(format!("dataset has no table {name}")))
    }

    pub fn tables(&self) -> &BTreeMap<String, ColumnTable> {
        &self.tables
    }

    pub fn insert(&mut self, name: impl Into<String>, table: ColumnTable) {
        self.tables.insert(name.into(), table);
    }

    pub fn row_counts(&self) -> BTreeMap<String, usize> {
        self.tables.iter().map(|(k, t)| (k.clone(), t.num_rows())).collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            sf: self.sf,
            skew: self.skew,
            seed: self.seed,
            row_counts: self.row_counts(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Hash on each table's key: `l_orderkey` for lineitem, `ps_partkey`
    /// for partsupp, the primary key elsewhere.
    DefaultKeys,
    /// Contiguous row ranges.
    Unpartitioned,
    RoundRobin,
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default_keys" | "default" => Ok(PartitionScheme::DefaultKeys),
            "unpartitioned" => Ok(PartitionScheme::Unpartitioned),
            "round_robin" => Ok(PartitionScheme::RoundRobin),
            other => Err(Error::InvalidArgument(format!(
                "unknown partitioning scheme {other:?} (default_keys|unpartitioned|round_robin)"
            ))),
        }
    }
}

/// One worker's share of every table.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerTables {
    tables: BTreeMap<String, ColumnTable>,
}

impl WorkerTables {
    pub fn table(&self, name: &str) -> Result<&ColumnTable> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Schema(format!("partition has no table {name}")))
    }

    pub fn tables(&self) -> &BTreeMap<String, ColumnTable> {
        &self.tables
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    pub scheme: PartitionScheme,
    pub sf: f64,
    pub skew: f64,
    pub seed: u64,
    parts: Vec<WorkerTables>,
}

impl PartitionedDataset {
    pub fn workers(&self) -> usize {
        self.parts.len()
    }

    pub fn worker(&self, rank: usize) -> Result<&WorkerTables> {
        self.parts.get(rank).ok_or_else(|| {
            Error::ClusterConfig(format!(
                "dataset is split {} ways, no partition for rank {rank}",
                self.parts.len()
            ))
        })
    }

    pub fn parts(&self) -> &[WorkerTables] {
        &self.parts
    }
}

fn split_contiguous(t: &ColumnTable, n: usize) -> Vec<ColumnTable> {
    let rows = t.num_rows();
    (0..n)
        .map(|i| {
            let lo = rows * i / n;
            let hi = rows * (i + 1) / n;
            t.take(&(lo..hi).collect::<Vec<_>>())
        })
        .collect()
}

fn split_round_robin(t: &ColumnTable, n: usize) -> Vec<ColumnTable> {
    (0..n)
        .map(|i| t.take(&(i..t.num_rows()).step_by(n).collect::<Vec<_>>()))
        .collect()
}

/// Splits every table of the dataset over `n` workers.
pub fn partition_dataset(ds: &Dataset, n: usize, scheme: PartitionScheme) -> Result<PartitionedDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot partition over zero workers".into()));
    }
    let mut parts: Vec<BTreeMap<String, ColumnTable>> = vec![BTreeMap::new(); n];
    for (name, table) in &ds.tables {
        let pieces = match scheme {
            PartitionScheme::DefaultKeys => {
                let key = schema::registry().table(name)?.partition_key;
                hash_partition(table, &[key], n)?
            }
            PartitionScheme::Unpartitioned => split_contiguous(table, n),
            PartitionScheme::RoundRobin => split_round_robin(table, n),
        };
        for (p, piece) in parts.iter_mut().zip(pieces) {
            p.insert(name.clone(), piece);
        }
    }
    Ok(PartitionedDataset {
        scheme,
        sf: ds.sf,
        skew: ds.skew,
        seed: ds.seed,
        parts: parts.into_iter().map(|tables| WorkerTables { tables }).collect(),
    })
}
