//! Per-worker execution state: time breakdown, exchange trace, live bytes.

use std::time::Instant;

use super::RunOptions;
use crate::collectives;
use crate::data::WorkerTables;
use crate::error::{Error, Result};
use crate::exchange::{self, ExchangeTrace};
use crate::perfmodel::GB;
use crate::table::ColumnTable;
use crate::transport::{Endpoint, Mode};

/// What one worker measured during a query.
#[derive(Debug, Clone)]
pub(crate) struct WorkerStats {
    pub total_s: f64,
    pub shuffle_s: f64,
    pub broadcast_s: f64,
    pub trace: ExchangeTrace,
    pub peak_bytes: u64,
    pub shuffles: u32,
    pub broadcasts: u32,
}

pub(crate) struct ExecCtx<'a> {
    pub ep: &'a mut Endpoint,
    opts: RunOptions,
    trace: ExchangeTrace,
    shuffle_s: f64,
    broadcast_s: f64,
    shuffles: u32,
    broadcasts: u32,
    live: u64,
    peak: u64,
    wall: Instant,
    start: f64,
}

impl<'a> ExecCtx<'a> {
    pub fn new(ep: &'a mut Endpoint, opts: &RunOptions) -> Result<Self> {
        ep.barrier()?;
        let mut ctx = ExecCtx {
            ep,
            opts: opts.clone(),
            trace: ExchangeTrace::default(),
            shuffle_s: 0.0,
            broadcast_s: 0.0,
            shuffles: 0,
            broadcasts: 0,
            live: 0,
            peak: 0,
            wall: Instant::now(),
            start: 0.0,
        };
        ctx.start = ctx.now();
        Ok(ctx)
    }

    /// Virtual seconds when simulated, wall seconds otherwise.
    pub fn now(&self) -> f64 {
        match self.ep.mode() {
            Mode::Simulated => self.ep.clock(),
            Mode::InProcess => self.wall.elapsed().as_secs_f64(),
        }
    }

    pub fn rank(&self) -> usize {
        self.ep.rank()
    }

    /// Charges local processing of `bytes` at the configured compute rate.
    pub fn charge(&mut self, bytes: u64) {
        self.ep.advance(bytes as f64 / (self.opts.compute_gbps * GB));
    }

    pub fn hold(&mut self, t: &ColumnTable) -> Result<()> {
        self.live += t.byte_size();
        self.peak = self.peak.max(self.live);
        match self.opts.memory_cap {
            Some(cap) if self.live > cap => Err(Error::MemoryCap {
                rank: self.rank(),
                needed: self.live,
                cap,
            }),
            _ => Ok(()),
        }
    }

    pub fn release(&mut self, t: ColumnTable) {
        self.live = self.live.saturating_sub(t.byte_size());
    }

    /// Reads the listed columns of a local partition.
    pub fn scan(&mut self, w: &WorkerTables, table: &str, columns: &[&str]) -> Result<ColumnTable> {
        let t = w.table(table)?.project(columns)?;
        self.charge(t.byte_size());
        self.hold(&t)?;
        Ok(t)
    }

    /// Runs a one-input local operator, consuming its input.
    pub fn local<F>(&mut self, input: ColumnTable, f: F) -> Result<ColumnTable>
    where
        F: FnOnce(&ColumnTable) -> Result<ColumnTable>,
    {
        self.charge(input.byte_size());
        let out = f(&input)?;
        self.hold(&out)?;
        self.release(input);
        Ok(out)
    }

    pub fn join(
        &mut self,
        left: ColumnTable,
        right: ColumnTable,
        left_keys: &[&str],
        right_keys: &[&str],
        how: super::JoinType,
    ) -> Result<ColumnTable> {
        self.charge(left.byte_size() + right.byte_size());
        let out = super::local_hash_join(&left, &right, left_keys, right_keys, how)?;
        self.hold(&out)?;
        self.release(left);
        self.release(right);
        Ok(out)
    }

    pub fn shuffle(&mut self, t: ColumnTable, key: &str) -> Result<ColumnTable> {
        self.ep.barrier()?;
        let t0 = self.now();
        let out = exchange::shuffle_table_traced(self.ep, &t, &[key], &mut self.trace)?;
        self.ep.barrier()?;
        self.shuffle_s += self.now() - t0;
        self.shuffles += 1;
        self.hold(&out)?;
        self.release(t);
        Ok(out)
    }

    pub fn broadcast(&mut self, t: ColumnTable) -> Result<ColumnTable> {
        self.ep.barrier()?;
        let t0 = self.now();
        let how = self.opts.broadcast_impl;
        let out = exchange::broadcast_table_traced(self.ep, &t, how, &mut self.trace)?;
        self.ep.barrier()?;
        self.broadcast_s += self.now() - t0;
        self.broadcasts += 1;
        self.hold(&out)?;
        self.release(t);
        Ok(out)
    }

    /// Collects every rank's partial result on rank 0, concatenated in rank
    /// order.
    pub fn gather(&mut self, partial: &ColumnTable) -> Result<Option<ColumnTable>> {
        match collectives::gather(self.ep, 0, partial.to_bytes())? {
            Some(parts) => {
                let tables = parts
                    .iter()
                    .map(|b| ColumnTable::from_bytes(b))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(ColumnTable::concat(&tables)?))
            }
            None => Ok(None),
        }
    }

    pub fn finish(self) -> Result<WorkerStats> {
        self.ep.barrier()?;
        Ok(WorkerStats {
            total_s: self.now() - self.start,
            shuffle_s: self.shuffle_s,
            broadcast_s: self.broadcast_s,
            trace: self.trace,
            peak_bytes: self.peak,
            shuffles: self.shuffles,
            broadcasts: self.broadcasts,
        })
    }
}
