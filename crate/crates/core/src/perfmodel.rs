//! Closed-form throughput and time models for the shuffle and broadcast
//! exchanges, the broadcast-vs-shuffle join decision, and workload projection.
//!
//! Bandwidths are in GB/s (10^9 bytes per second) and byte counts are plain
//! `f64` bytes. Raw bandwidths are scaled by the topology's efficiency factor
//! before any model is evaluated.
//!
//! The models are defined for `V >= 2`. For a single machine the same
//! single-GPU latency analysis restricted to intra-node links is used: every
//! GPU moves `(k-1)/k` of its partition at rate `B_g`, which gives
//! `k^2 B_g / (k-1)` for shuffle and `k B_g / (k-1)` for broadcast.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GB: f64 = 1e9;
pub const DEFAULT_EFFICIENCY: f64 = 0.8;

/// Cluster shape and link bandwidths.
///
/// `n = k * v` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    k: usize,
    v: usize,
    bg_gbps: f64,
    bn_gbps: f64,
    efficiency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bg_efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bn_efficiency: Option<f64>,
}

impl Topology {
    /// Builds a topology with the default efficiency factor of 0.8.
    pub fn new(k: usize, v: usize, bg_gbps: f64, bn_gbps: f64) -> Result<Self> {
        let topo = Topology {
            k,
            v,
            bg_gbps,
            bn_gbps,
            efficiency: DEFAULT_EFFICIENCY,
            bg_efficiency: None,
            bn_efficiency: None,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        self.efficiency = efficiency;
        self.validate()?;
        Ok(self)
    }

    /// Overrides the efficiency applied to `B_g` only.
    pub fn with_bg_efficiency(mut self, efficiency: f64) -> Result<Self> {
        self.bg_efficiency = Some(efficiency);
        self.validate()?;
        Ok(self)
    }

    /// Overrides the efficiency applied to `B_n` only.
    pub fn with_bn_efficiency(mut self, efficiency: f64) -> Result<Self> {
        self.bn_efficiency = Some(efficiency);
        self.validate()?;
        Ok(self)
    }

    /// Same link parameters, different machine count.
    pub fn with_machines(mut self, v: usize) -> Result<Self> {
        self.v = v;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gpus_per_machine(mut self, k: usize) -> Result<Self> {
        self.k = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bn_gbps(mut self, bn_gbps: f64) -> Result<Self> {
        self.bn_gbps = bn_gbps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bg_gbps(mut self, bg_gbps: f64) -> Result<Self> {
        self.bg_gbps = bg_gbps;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidTopology("k must be at least 1".into()));
        }
        if self.v < 1 {
            return Err(Error::InvalidTopology("V must be at least 1".into()));
        }
        if !(self.bg_gbps > 0.0 && self.bg_gbps.is_finite()) {
            return Err(Error::InvalidTopology(format!(
                "B_g must be positive, got {}",
                self.bg_gbps
            )));
        }
        if !(self.bn_gbps > 0.0 && self.bn_gbps.is_finite()) {
            return Err(Error::InvalidTopology(format!(
                "B_n must be positive, got {}",
                self.bn_gbps
            )));
        }
        for (name, e) in [
            ("efficiency", Some(self.efficiency)),
            ("bg_efficiency", self.bg_efficiency),
            ("bn_efficiency", self.bn_efficiency),
        ] {
            if let Some(e) = e {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(Error::InvalidTopology(format!("{name} must be in (0, 1], got {e}")));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn n(&self) -> usize {
        self.k * self.v
    }

    pub fn bg_gbps(&self) -> f64 {
        self.bg_gbps
    }

    pub fn bn_gbps(&self) -> f64 {
        self.bn_gbps
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Effective intra-machine per-GPU bandwidth in GB/s.
    pub fn effective_bg(&self) -> f64 {
        self.bg_gbps * self.bg_efficiency.unwrap_or(self.efficiency)
    }

    /// Effective per-machine network bandwidth in GB/s.
    pub fn effective_bn(&self) -> f64 {
        self.bn_gbps * self.bn_efficiency.unwrap_or(self.efficiency)
    }

    /// Parses the plain-text `key=value` topology config.
    ///
    /// Recognised keys: `k`, `V`, `bg_gbps`, `bn_gbps`, `efficiency`,
    /// `bg_efficiency`, `bn_efficiency`. Blank lines and `#` comments are skipped.
    pub fn from_config_str(text: &str, path: &str) -> Result<Self> {
        let mut k = None;
        let mut v = None;
        let mut bg = None;
        let mut bn = None;
        let mut eff = None;
        let mut bg_eff = None;
        let mut bn_eff = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_string(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |value: &str| -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("bad number {value:?} for {key}: {e}")))
            };
            let int = |value: &str| -> Result<usize> {
                value
                    .parse::<usize>()
                    .map_err(|e| parse_err(format!("bad count {value:?} for {key}: {e}")))
            };
            match key {
                "k" => k = Some(int(value)?),
                "V" | "v" => v = Some(int(value)?),
                "bg_gbps" => bg = Some(num(value)?),
                "bn_gbps" => bn = Some(num(value)?),
                "efficiency" => eff = Some(num(value)?),
                "bg_efficiency" => bg_eff = Some(num(value)?),
                "bn_efficiency" => bn_eff = Some(num(value)?),
                other => return Err(parse_err(format!("unknown key {other:?}"))),
            }
        }
        let missing = |name: &str| Error::Parse {
            path: path.to_string(),
            line: 0,
            message: format!("missing required key {name}"),
        };
        let mut topo = Topology::new(
            k.ok_or_else(|| missing("k"))?,
            v.ok_or_else(|| missing("V"))?,
            bg.ok_or_else(|| missing("bg_gbps"))?,
            bn.ok_or_else(|| missing("bn_gbps"))?,
        )?;
        if let Some(e) = eff {
            topo = topo.with_efficiency(e)?;
        }
        if let Some(e) = bg_eff {
            topo = topo.with_bg_efficiency(e)?;
        }
        if let Some(e) = bn_eff {
            topo = topo.with_bn_efficiency(e)?;
        }
        Ok(topo)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = format!(
            "k={}\nV={}\nbg_gbps={}\nbn_gbps={}\nefficiency={}\n",
            self.k, self.v, self.bg_gbps, self.bn_gbps, self.efficiency
        );
        if let Some(e) = self.bg_efficiency {
            out.push_str(&format!("bg_efficiency={e}\n"));
        }
        if let Some(e) = self.bn_efficiency {
            out.push_str(&format!("bn_efficiency={e}\n"));
        }
        out
    }
}

/// `k x V` shape such as `8x5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub k: usize,
    pub v: usize,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidArgument(format!("topology {s:?} is not of the form KxV")))?;
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("topology {s:?} is not of the form KxV")))
        };
        Ok(Shape {
            k: parse(k)?,
            v: parse(v)?,
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.k, self.v)
    }
}

/// Inputs for projecting a workload measured on a single machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub compute_time_v1: f64,
    pub shuffle_bytes: f64,
    pub broadcast_bytes: f64,
}

impl WorkloadProfile {
    pub fn new(compute_time_v1: f64, shuffle_bytes: f64, broadcast_bytes: f64) -> Result<Self> {
        for (name, x) in [
            ("compute_time_v1", compute_time_v1),
            ("shuffle_bytes", shuffle_bytes),
            ("broadcast_bytes", broadcast_bytes),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a finite non-negative number, got {x}"
                )));
            }
        }
        Ok(WorkloadProfile {
            compute_time_v1,
            shuffle_bytes,
            broadcast_bytes,
        })
    }

    /// Builds a profile from a measured single-machine run so that projecting
    /// back onto `topo_v1` reproduces `measured_total_s` exactly: the compute
    /// share is what remains after the modelled exchange time.
    pub fn calibrate(
        topo_v1: &Topology,
        measured_total_s: f64,
        shuffle_bytes: f64,
        broadcast_bytes: f64,
    ) -> Result<Self> {
        if topo_v1.v() != 1 {
            return Err(Error::InvalidArgument(format!(
                "calibration needs a V=1 topology, got V={}",
                topo_v1.v()
            )));
        }
        let exchange = exchange_time(topo_v1, shuffle_bytes, broadcast_bytes)?;
        let mut compute = (measured_total_s - exchange).max(0.0);
        // the subtraction can round; step by an ulp until adding back is exact
        for _ in 0..4 {
            let back = compute + exchange;
            if back == measured_total_s || compute == 0.0 {
                break;
            }
            compute = if back > measured_total_s {
                compute.next_down()
            } else {
                compute.next_up()
            };
        }
        WorkloadProfile::new(compute.max(0.0), shuffle_bytes, broadcast_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeKind {
    Broadcast,
    Shuffle,
}

impl fmt::Display for ExchangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExchangeKind::Broadcast => "broadcast",
            ExchangeKind::Shuffle => "shuffle",
        })
    }
}

/// Outcome of [`choose_exchange`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeChoice {
    pub kind: ExchangeKind,
    /// Time to broadcast the smaller table.
    pub predicted_time_broadcast: f64,
    /// Time to shuffle both tables.
    pub predicted_time_shuffle: f64,
    /// Set when the caller passed the larger table first; the broadcast side
    /// is then the second argument.
    pub swapped: bool,
}

fn check_bytes(bytes: f64) -> Result<()> {
    if bytes >= 0.0 && bytes.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "byte count must be finite and non-negative, got {bytes}"
        )))
    }
}

/// `Thpt_broadcast` in GB/s.
pub fn broadcast_throughput(topo: &Topology) -> f64 {
    let (k, v) = (topo.k() as f64, topo.v() as f64);
    let (bg, bn) = (topo.effective_bg(), topo.effective_bn());
    if topo.v() == 1 {
        return if topo.k() == 1 {
            f64::INFINITY
        } else {
            k * bg / (k - 1.0)
        };
    }
    (1.0 + 1.0 / (v - 1.0)) * k * bn * bg / (k * bg + (k - 1.0) * bn)
}

/// `Thpt_shuffle` in GB/s.
pub fn shuffle_throughput(topo: &Topology) -> f64 {
    let (k, v) = (topo.k() as f64, topo.v() as f64);
    if topo.v() == 1 {
        return if topo.k() == 1 {
            f64::INFINITY
        } else {
            k * k * topo.effective_bg() / (k - 1.0)
        };
    }
    (1.0 + 1.0 / (v - 1.0)) * v * topo.effective_bn()
}

/// Limit of the broadcast throughput as `V` grows without bound.
pub fn broadcast_throughput_limit(topo: &Topology) -> f64 {
    let k = topo.k() as f64;
    let (bg, bn) = (topo.effective_bg(), topo.effective_bn());
    k * bn * bg / (k * bg + (k - 1.0) * bn)
}

/// Seconds to broadcast a table of `table_bytes` spread over all GPUs.
pub fn broadcast_time(topo: &Topology, table_bytes: f64) -> Result<f64> {
    check_bytes(table_bytes)?;
    let (k, v) = (topo.k() as f64, topo.v() as f64);
    let (bg, bn) = (topo.effective_bg() * GB, topo.effective_bn() * GB);
    if topo.v() == 1 {
        return Ok((k - 1.0) / (k * bg) * table_bytes);
    }
    Ok(((v - 1.0) / (v * bn) + (v - 1.0) * (k - 1.0) / (v * k * bg)) * table_bytes)
}

/// Seconds to shuffle `total_bytes` spread over all GPUs.
pub fn shuffle_time(topo: &Topology, total_bytes: f64) -> Result<f64> {
    check_bytes(total_bytes)?;
    let (k, v) = (topo.k() as f64, topo.v() as f64);
    if topo.v() == 1 {
        let bg = topo.effective_bg() * GB;
        return Ok((k - 1.0) / (k * k * bg) * total_bytes);
    }
    let bn = topo.effective_bn() * GB;
    Ok((v - 1.0) / (v * v * bn) * total_bytes)
}

/// Whether intra-machine sends finish no later than the remote ones during
/// the first broadcast step.
pub fn local_faster_holds(topo: &Topology) -> Result<bool> {
    if topo.v() < 2 {
        return Err(Error::InvalidArgument(
            "the local-faster condition is only defined for V >= 2".into(),
        ));
    }
    let (k, v) = (topo.k() as f64, topo.v() as f64);
    Ok(topo.effective_bg() / topo.effective_bn() >= (k - 1.0) / (k * (v - 1.0)))
}

/// Size ratio `|S|/|R|` above which broadcasting `R` beats shuffling both.
pub fn broadcast_threshold(topo: &Topology) -> Result<f64> {
    if topo.v() < 2 {
        return Err(Error::InvalidArgument(
            "the broadcast/shuffle decision is only defined for V >= 2".into(),
        ));
    }
    let (k, v) = (topo.k() as f64, topo.v() as f64);
    let (bg, bn) = (topo.effective_bg(), topo.effective_bn());
    Ok(v * (1.0 + (k - 1.0) * bn / (k * bg)) - 1.0)
}

/// Broadcast the smaller side or shuffle both sides of a join.
///
/// The kind is decided by the closed-form size-ratio rule; exact ties go to
/// shuffle and an empty smaller side always broadcasts.
pub fn choose_exchange(topo: &Topology, small_bytes: f64, large_bytes: f64) -> Result<ExchangeChoice> {
    check_bytes(small_bytes)?;
    check_bytes(large_bytes)?;
    let threshold = broadcast_threshold(topo)?;
    let swapped = small_bytes > large_bytes;
    let (r, s) = if swapped {
        (large_bytes, small_bytes)
    } else {
        (small_bytes, large_bytes)
    };
    let kind = if r == 0.0 || s / r > threshold {
        ExchangeKind::Broadcast
    } else {
        ExchangeKind::Shuffle
    };
    Ok(ExchangeChoice {
        kind,
        predicted_time_broadcast: broadcast_time(topo, r)?,
        predicted_time_shuffle: shuffle_time(topo, r + s)?,
        swapped,
    })
}

/// Projected end-to-end seconds on `topo` for a profile measured at `V = 1`,
/// with compute scaling as `1/V`.
pub fn project_workload(profile: &WorkloadProfile, topo: &Topology) -> Result<f64> {
    let compute = profile.compute_time_v1 / topo.v() as f64;
    Ok(compute + exchange_time(topo, profile.shuffle_bytes, profile.broadcast_bytes)?)
}

fn exchange_time(topo: &Topology, shuffle_bytes: f64, broadcast_bytes: f64) -> Result<f64> {
    Ok(shuffle_time(topo, shuffle_bytes)? + broadcast_time(topo, broadcast_bytes)?)
}

/// One CSV row of model output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelRow {
    pub v: usize,
    pub bn_gbps: f64,
    pub thpt_broadcast: f64,
    pub thpt_shuffle: f64,
    pub projected_time: Option<f64>,
}

impl ModelRow {
    pub fn evaluate(topo: &Topology, profile: Option<&WorkloadProfile>) -> Result<Self> {
        Ok(ModelRow {
            v: topo.v(),
            bn_gbps: topo.bn_gbps(),
            thpt_broadcast: broadcast_throughput(topo),
            thpt_shuffle: shuffle_throughput(topo),
            projected_time: profile.map(|p| project_workload(p, topo)).transpose()?,
        })
    }
}

pub const MODEL_CSV_HEADER: &str = "V,B_n,thpt_broadcast,thpt_shuffle,projected_time";

pub fn write_model_csv<W: Write>(mut out: W, rows: &[ModelRow]) -> Result<()> {
    writeln!(out, "{MODEL_CSV_HEADER}")?;
    for row in rows {
        let projected = row.projected_time.map(|t| format!("{t:.6e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.6},{:.6},{}",
            row.v, row.bn_gbps, row.thpt_broadcast, row.thpt_shuffle, projected
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn h100(v: usize) -> Topology {
        Topology::new(8, v, 450.0, 50.0).unwrap().with_efficiency(1.0).unwrap()
    }

    #[test]
    fn broadcast_throughput_examples() {
        assert_relative_eq!(
            broadcast_throughput(&h100(2)),
            2.0 * 180_000.0 / 3950.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(broadcast_throughput(&h100(2)), 91.139, max_relative = 1e-5);
        assert_relative_eq!(broadcast_throughput(&h100(5)), 56.962, max_relative = 1e-5);
        let single = Topology::new(1, 2, 3.0, 50.0).unwrap().with_efficiency(1.0).unwrap();
        assert_relative_eq!(broadcast_throughput(&single), 100.0, max_relative = 1e-12);
    }

    #[test]
    fn shuffle_throughput_examples() {
        assert_relative_eq!(shuffle_throughput(&h100(2)), 200.0, max_relative = 1e-12);
        assert_relative_eq!(shuffle_throughput(&h100(4)), 800.0 / 3.0, max_relative = 1e-12);
        let derated = h100(2).with_efficiency(0.8).unwrap();
        assert_relative_eq!(shuffle_throughput(&derated), 160.0, max_relative = 1e-12);
    }

    #[test]
    fn time_examples() {
        assert_relative_eq!(
            broadcast_time(&h100(2), 1e9).unwrap(),
            0.01 + 7.0 / 7200.0,
            max_relative = 1e-12
        );
        assert_eq!(broadcast_time(&h100(3), 0.0).unwrap(), 0.0);
        let single = Topology::new(1, 2, 450.0, 50.0).unwrap().with_efficiency(1.0).unwrap();
        assert_relative_eq!(broadcast_time(&single, 1e9).unwrap(), 0.01, max_relative = 1e-12);

        assert_relative_eq!(shuffle_time(&h100(2), 10e9).unwrap(), 0.05, max_relative = 1e-12);
        assert_relative_eq!(shuffle_time(&h100(4), 10e9).unwrap(), 0.0375, max_relative = 1e-12);
        assert_eq!(shuffle_time(&h100(4), 0.0).unwrap(), 0.0);
        assert!(shuffle_time(&h100(4), -1.0).is_err());
        assert!(broadcast_time(&h100(4), -1.0).is_err());
    }

    #[test]
    fn time_is_bytes_over_throughput() {
        for v in 1..=12 {
            let t = h100(v);
            assert_relative_eq!(
                broadcast_time(&t, 3e9).unwrap(),
                3.0 / broadcast_throughput(&t),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                shuffle_time(&t, 3e9).unwrap(),
                3.0 / shuffle_throughput(&t),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn local_faster_examples() {
        assert!(local_faster_holds(&h100(2)).unwrap());
        let slow_nvlink = Topology::new(8, 2, 1.0, 50.0).unwrap().with_efficiency(1.0).unwrap();
        assert!(!local_faster_holds(&slow_nvlink).unwrap());
        let single = Topology::new(1, 7, 0.001, 50.0).unwrap();
        assert!(local_faster_holds(&single).unwrap());
        assert!(local_faster_holds(&h100(1)).is_err());
    }

    #[test]
    fn choose_exchange_examples() {
        let t = h100(2);
        assert_relative_eq!(broadcast_threshold(&t).unwrap(), 1.194_444, max_relative = 1e-6);
        let c = choose_exchange(&t, 1e9, 2e9).unwrap();
        assert_eq!(c.kind, ExchangeKind::Broadcast);
        assert!(!c.swapped);
        let c = choose_exchange(&t, 1e9, 1e9).unwrap();
        assert_eq!(c.kind, ExchangeKind::Shuffle);

        let thr = broadcast_threshold(&t).unwrap();
        let c = choose_exchange(&t, 1e9, thr * 1e9).unwrap();
        assert_eq!(c.kind, ExchangeKind::Shuffle);
        let rel = (c.predicted_time_broadcast - c.predicted_time_shuffle).abs() / c.predicted_time_shuffle;
        assert!(rel <= 1e-12, "relative gap {rel}");
        assert_relative_eq!(c.predicted_time_broadcast, 0.010_972, max_relative = 1e-4);

        let c = choose_exchange(&t, 2e9, 1e9).unwrap();
        assert!(c.swapped);
        assert_eq!(c.kind, ExchangeKind::Broadcast);
        assert_eq!(choose_exchange(&t, 0.0, 5.0).unwrap().kind, ExchangeKind::Broadcast);
        assert_eq!(choose_exchange(&t, 0.0, 0.0).unwrap().kind, ExchangeKind::Broadcast);
    }

    #[test]
    fn projection_examples() {
        let t = h100(4).with_efficiency(0.8).unwrap();
        let p = WorkloadProfile::new(1.0, 100e9, 20e9).unwrap();
        // 0.25 + 100/213.333 + 20/48.6076
        let expected = 0.25
            + 100.0 / (4.0 / 3.0 * 4.0 * 40.0)
            + 20.0 / (4.0 / 3.0 * 8.0 * 40.0 * 360.0 / (8.0 * 360.0 + 7.0 * 40.0));
        assert_relative_eq!(project_workload(&p, &t).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(project_workload(&p, &t).unwrap(), 1.130_208, max_relative = 1e-6);

        let pure = WorkloadProfile::new(1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(project_workload(&pure, &t).unwrap(), 0.25, max_relative = 1e-15);
        assert_eq!(project_workload(&pure, &h100(1)).unwrap(), 1.0);
    }

    #[test]
    fn single_machine_extension() {
        let t = h100(1);
        assert_relative_eq!(shuffle_throughput(&t), 64.0 * 450.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(broadcast_throughput(&t), 8.0 * 450.0 / 7.0, max_relative = 1e-12);
        let lone = Topology::new(1, 1, 1.0, 1.0).unwrap();
        assert!(shuffle_throughput(&lone).is_infinite());
        assert_eq!(shuffle_time(&lone, 1e9).unwrap(), 0.0);
        assert_eq!(broadcast_time(&lone, 1e9).unwrap(), 0.0);
    }

    #[test]
    fn calibration_is_exact_at_v1() {
        let t = h100(1).with_efficiency(0.8).unwrap();
        let p = WorkloadProfile::calibrate(&t, 0.75, 3e9, 1e9).unwrap();
        assert_relative_eq!(project_workload(&p, &t).unwrap(), 0.75, max_relative = 1e-15);
        assert!(WorkloadProfile::calibrate(&h100(2), 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_topologies() {
        assert!(Topology::new(0, 1, 1.0, 1.0).is_err());
        assert!(Topology::new(1, 0, 1.0, 1.0).is_err());
        assert!(Topology::new(1, 1, 0.0, 1.0).is_err());
        assert!(Topology::new(1, 1, 1.0, -3.0).is_err());
        assert!(Topology::new(1, 1, 1.0, 1.0).unwrap().with_efficiency(0.0).is_err());
        assert!(Topology::new(1, 1, 1.0, 1.0).unwrap().with_efficiency(1.5).is_err());
    }

    #[test]
    fn efficiency_overrides() {
        let t = Topology::new(8, 2, 450.0, 50.0)
            .unwrap()
            .with_bg_efficiency(1.0)
            .unwrap();
        assert_relative_eq!(t.effective_bg(), 450.0);
        assert_relative_eq!(t.effective_bn(), 40.0);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let text = "# cluster\nk=8\nV=5\nbg_gbps=450\nbn_gbps=50 # IB\nefficiency=0.9\n";
        let t = Topology::from_config_str(text, "c.txt").unwrap();
        assert_eq!((t.k(), t.v(), t.n()), (8, 5, 40));
        assert_eq!(Topology::from_config_str(&t.to_config_string(), "x").unwrap(), t);

        let err = Topology::from_config_str("k=8\nV\n", "bad.txt").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = Topology::from_config_str("k=8\n", "short.txt").unwrap_err();
        assert!(err.to_string().contains("missing required key V"));
    }

    #[test]
    fn shape_parsing() {
        assert_eq!("8x5".parse::<Shape>().unwrap(), Shape { k: 8, v: 5 });
        assert!("8by5".parse::<Shape>().is_err());
    }

    #[test]
    fn model_csv_schema() {
        let rows = [ModelRow::evaluate(&h100(2), None).unwrap()];
        let mut buf = Vec::new();
        write_model_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), MODEL_CSV_HEADER);
        assert_eq!(text.lines().nth(1).unwrap(), "2,50,91.139241,200.000000,");
    }
}
