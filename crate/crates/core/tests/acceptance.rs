//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! straight to stdout so the verdicts show up even when output is captured.

use std::io::Write;
use std::time::Instant;

use dxq::bench::{run_bench, BenchOp, BenchSpec};
use dxq::data::{generate, partition_dataset, PartitionScheme};
use dxq::engine::*;
use dxq::exchange::BroadcastImpl;
use dxq::perfmodel::*;
use dxq::transport::{Cluster, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, name: &str, failures: &[String]) {
    let line = if failures.is_empty() {
        format!("PASS criterion {id:>2}: {name}\n")
    } else {
        format!("FAIL criterion {id:>2}: {name}: {}\n", failures.join("; "))
    };
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    assert!(failures.is_empty(), "{line}");
}

fn check(failures: &mut Vec<String>, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        failures.push(what());
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Topology with the given bandwidths taken as already effective.
fn exact(k: usize, v: usize, bg: f64, bn: f64) -> Topology {
    Topology::new(k, v, bg, bn).unwrap().with_efficiency(1.0).unwrap()
}

#[test]
fn c01_model_values() {
    let mut f = Vec::new();
    let cases = [
        // 2 * 8*50*450 / (8*450 + 7*50)
        (
            broadcast_throughput(&exact(8, 2, 450.0, 50.0)),
            2.0 * 180_000.0 / 3950.0,
        ),
        // 1.25 * 180000 / 3950
        (
            broadcast_throughput(&exact(8, 5, 450.0, 50.0)),
            1.25 * 180_000.0 / 3950.0,
        ),
        (shuffle_throughput(&exact(8, 2, 450.0, 50.0)), 200.0),
        (shuffle_throughput(&exact(8, 4, 450.0, 50.0)), 800.0 / 3.0),
    ];
    for (got, want) in cases {
        check(&mut f, rel(got, want) <= 1e-9, || format!("{got} != {want}"));
    }
    for (got, printed) in cases.iter().map(|c| c.0).zip([91.139, 56.962, 200.0, 266.667]) {
        check(&mut f, (got - printed).abs() < 5e-4, || {
            format!("{got} does not round to {printed}")
        });
    }
    verdict(1, "model values", &f);
}

#[test]
fn c02_model_trends() {
    let mut f = Vec::new();
    for &(k, bg, bn) in &[(8, 450.0, 50.0), (8, 450.0, 12.5), (4, 300.0, 25.0), (2, 900.0, 100.0)] {
        let at = |v| Topology::new(k, v, bg, bn).unwrap();
        let b: Vec<f64> = (2..=16).map(|v| broadcast_throughput(&at(v))).collect();
        let s: Vec<f64> = (2..=16).map(|v| shuffle_throughput(&at(v))).collect();
        check(&mut f, b.windows(2).all(|w| w[1] < w[0]), || {
            format!("broadcast not decreasing for k={k}")
        });
        check(&mut f, s.windows(2).all(|w| w[1] > w[0]), || {
            format!("shuffle not increasing for k={k}")
        });
        let limit = broadcast_throughput_limit(&at(16));
        check(&mut f, rel(b[14], limit) <= 0.05, || {
            format!("V=16 broadcast {} vs limit {limit}", b[14])
        });
        for v in 2..=16 {
            let t = at(v);
            let t2 = t.with_bn_gbps(2.0 * bn).unwrap();
            let rs = shuffle_throughput(&t2) / shuffle_throughput(&t);
            let rb = broadcast_throughput(&t2) / broadcast_throughput(&t);
            check(&mut f, (rs - 2.0).abs() <= 1e-12, || {
                format!("shuffle doubling gave {rs} at V={v}")
            });
            check(&mut f, rb < 2.0, || format!("broadcast doubling gave {rb} at V={v}"));
        }
    }
    verdict(2, "model trends", &f);
}

#[test]
fn c03_simulator_matches_model() {
    let start = Instant::now();
    let mut f = Vec::new();
    let m = 256u64 << 20;
    for v in [2, 3, 4] {
        for bn in [12.5, 40.0] {
            let topo = exact(8, v, 450.0, bn);
            for op in [BenchOp::Shuffle, BenchOp::Broadcast] {
                let rows = run_bench(&BenchSpec::new(op, vec![m], topo), Mode::Simulated).unwrap();
                let err = rows[0].relative_error.unwrap();
                check(&mut f, err <= 0.05, || format!("{op} V={v} B_n={bn}: error {err:.4}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(&mut f, secs < 10.0, || format!("took {secs:.1}s"));
    verdict(3, "simulator matches model", &f);
}

#[test]
fn c04_oracle_equivalence() {
    let start = Instant::now();
    let mut f = Vec::new();
    for skew in [0.0, 1.5] {
        let ds = generate(0.01, skew, 42).unwrap();
        let refs: Vec<_> = QueryId::ALL.iter().map(|&q| reference_run(q, &ds).unwrap()).collect();
        for (k, v) in [(1, 1), (2, 1), (4, 1), (4, 2), (8, 2)] {
            let topo = Topology::new(k, v, 450.0, 12.5).unwrap();
            let parts = partition_dataset(&ds, topo.n(), PartitionScheme::DefaultKeys).unwrap();
            for mode in [Mode::Simulated, Mode::InProcess] {
                let mut c = Cluster::new(&topo, mode, 42).unwrap();
                for (q, want) in QueryId::ALL.iter().zip(&refs) {
                    match run_query(*q, Variant::Default, &mut c, &parts, &RunOptions::default()) {
                        Ok((got, _)) => {
                            if let Err(m) = results_match(&got, want, 1e-9) {
                                f.push(format!("{q} N={} skew={skew} {mode:?}: {m}", topo.n()));
                            }
                        }
                        Err(e) => f.push(format!("{q} N={} skew={skew} {mode:?}: {e}", topo.n())),
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(&mut f, secs < 60.0, || format!("took {secs:.1}s"));
    verdict(4, "oracle equivalence", &f);
}

#[test]
fn c05_exchange_counts() {
    let mut f = Vec::new();
    let ds = generate(0.005, 0.0, 42).unwrap();
    let topo = Topology::new(2, 2, 450.0, 12.5).unwrap();
    let parts = partition_dataset(&ds, 4, PartitionScheme::DefaultKeys).unwrap();
    let mut c = Cluster::new(&topo, Mode::Simulated, 42).unwrap();
    let want = [
        (QueryId::Q1, (0, 0)),
        (QueryId::Q3, (0, 1)),
        (QueryId::Q6, (0, 0)),
        (QueryId::Q12, (0, 0)),
        (QueryId::Q14, (1, 0)),
        (QueryId::Q19, (0, 1)),
    ];
    for (q, counts) in want {
        let (_, r) = run_query(q, Variant::Default, &mut c, &parts, &RunOptions::default()).unwrap();
        check(&mut f, r.exchange_counts == counts, || {
            format!("{q}: {:?} != {counts:?}", r.exchange_counts)
        });
        // every exchange leaves a trace
        let shuffles = r.shuffle_msgs.len() / 16;
        let broadcasts = r.broadcast_msgs.len() / 4;
        check(&mut f, (shuffles as u32, broadcasts as u32) == counts, || {
            format!("{q}: traces show {shuffles} shuffles, {broadcasts} broadcasts")
        });
    }
    verdict(5, "default-plan exchange counts", &f);
}

#[test]
fn c06_p2p_broadcast() {
    let mut f = Vec::new();
    for (k, v) in [(2, 2), (4, 2), (8, 2), (4, 3), (8, 4)] {
        let topo = Topology::new(k, v, 450.0, 12.5).unwrap();
        let sizes = vec![1 << 12, 1 << 16];
        let coll = run_bench(
            &BenchSpec::new(BenchOp::Broadcast, sizes.clone(), topo),
            Mode::Simulated,
        )
        .unwrap();
        let p2p = run_bench(&BenchSpec::new(BenchOp::BroadcastP2p, sizes, topo), Mode::Simulated).unwrap();
        for (c, p) in coll.iter().zip(&p2p) {
            check(
                &mut f,
                c.inter_node_bytes > 0 && p.inter_node_bytes == k as u64 * c.inter_node_bytes,
                || {
                    format!(
                        "{k}x{v}: p2p {} vs collective {}",
                        p.inter_node_bytes, c.inter_node_bytes
                    )
                },
            );
        }
    }
    let ds = generate(0.01, 0.0, 42).unwrap();
    for v in [2, 4] {
        let topo = exact(8, v, 450.0, 12.5);
        let parts = partition_dataset(&ds, topo.n(), PartitionScheme::DefaultKeys).unwrap();
        let mut c = Cluster::new(&topo, Mode::Simulated, 42).unwrap();
        let (_, coll) = run_query(QueryId::Q19, Variant::Default, &mut c, &parts, &RunOptions::default()).unwrap();
        let opts = RunOptions {
            broadcast_impl: BroadcastImpl::P2p,
            ..RunOptions::default()
        };
        let (_, p2p) = run_query(QueryId::Q19, Variant::Default, &mut c, &parts, &opts).unwrap();
        check(&mut f, p2p.total_s() > coll.total_s(), || {
            format!("Q19 V={v}: p2p {} <= collective {}", p2p.total_s(), coll.total_s())
        });
    }
    verdict(6, "p2p vs collective broadcast", &f);
}

#[test]
fn c07_q12_variant_ordering() {
    let mut f = Vec::new();
    let ds = generate(0.05, 0.0, 42).unwrap();
    let mut ratios = Vec::new();
    for v in [2, 4, 8] {
        // nominal link speed, derated by the default efficiency
        let topo = Topology::new(8, v, 450.0, 12.5).unwrap();
        let part = partition_dataset(&ds, topo.n(), PartitionScheme::DefaultKeys).unwrap();
        let un = partition_dataset(&ds, topo.n(), PartitionScheme::Unpartitioned).unwrap();
        let mut c = Cluster::new(&topo, Mode::Simulated, 42).unwrap();
        let [d, a, b] = q12_variants(&mut c, &part, &un, &RunOptions::default()).unwrap();
        let (d, a, b) = (d.total_s(), a.total_s(), b.total_s());
        if v <= 4 {
            check(&mut f, d < b && b < a, || {
                format!("V={v}: default {d:e}, Pb {b:e}, Pa {a:e}")
            });
        }
        ratios.push(a / b);
    }
    check(&mut f, ratios.windows(2).all(|w| w[1] < w[0]), || {
        format!("Pa/Pb ratios {ratios:?}")
    });
    verdict(7, "Q12 variant ordering", &f);
}

#[test]
fn c08_decision_consistency() {
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let topo = Topology::new(
            rng.random_range(1..=16),
            rng.random_range(2..=64),
            rng.random_range(10.0..1000.0),
            rng.random_range(1.0..400.0),
        )
        .unwrap();
        let r: f64 = rng.random_range(1.0..1e12);
        let s: f64 = rng.random_range(1.0..1e12);
        let c = choose_exchange(&topo, r, s).unwrap();
        let (small, large) = (r.min(s), r.max(s));
        let tb = broadcast_time(&topo, small).unwrap();
        let ts = shuffle_time(&topo, small + large).unwrap();
        let want = if tb < ts {
            ExchangeKind::Broadcast
        } else {
            ExchangeKind::Shuffle
        };
        if c.kind != want && rel(tb, ts) > 1e-12 {
            f.push(format!("{topo:?} |R|={small} |S|={large}: chose {:?}", c.kind));
        }

        let ratio = broadcast_threshold(&topo).unwrap();
        let tb = broadcast_time(&topo, small).unwrap();
        let ts = shuffle_time(&topo, small * (1.0 + ratio)).unwrap();
        if rel(tb, ts) > 1e-12 {
            f.push(format!("{topo:?}: at threshold T_b={tb} T_s={ts}"));
        }
    }
    f.truncate(5);
    verdict(8, "exchange decision consistency", &f);
}

#[test]
fn c09_projection() {
    let mut f = Vec::new();
    // calibration identity on arbitrary measurements
    let t1 = exact(8, 1, 450.0, 12.5);
    for (total, sb, bb) in [(1.0, 0.0, 0.0), (0.75, 3e9, 1e9), (2.5e-3, 1.2e6, 7.7e5)] {
        let p = WorkloadProfile::calibrate(&t1, total, sb, bb).unwrap();
        let back = project_workload(&p, &t1).unwrap();
        check(&mut f, back == total, || {
            format!("calibration {total} came back as {back}")
        });
    }

    // per-link imbalance, which the projection ignores, fades as partitions grow
    let ds = generate(0.2, 0.0, 42).unwrap();
    let suite = |topo: &Topology| {
        let parts = partition_dataset(&ds, topo.n(), PartitionScheme::DefaultKeys).unwrap();
        let mut c = Cluster::new(topo, Mode::Simulated, 42).unwrap();
        let (mut total, mut sb, mut bb) = (0.0, 0u64, 0u64);
        for q in QueryId::ALL {
            let (_, r) = run_query(q, Variant::Default, &mut c, &parts, &RunOptions::default()).unwrap();
            total += r.total_s();
            sb += r.shuffle_bytes();
            bb += r.broadcast_bytes();
        }
        (total, sb as f64, bb as f64)
    };
    let (total1, sb, bb) = suite(&t1);
    let profile = WorkloadProfile::calibrate(&t1, total1, sb, bb).unwrap();
    let back = project_workload(&profile, &t1).unwrap();
    check(&mut f, back == total1, || {
        format!("suite calibration {total1} came back as {back}")
    });
    let t4 = t1.with_machines(4).unwrap();
    let predicted = project_workload(&profile, &t4).unwrap();
    let (measured, _, _) = suite(&t4);
    let err = rel(predicted, measured);
    check(&mut f, err <= 0.10, || {
        format!("V=4 predicted {predicted:e} vs simulated {measured:e} ({err:.3})")
    });
    verdict(9, "projection sanity", &f);
}

#[test]
fn c10_skew_trend() {
    let mut f = Vec::new();
    let topo = Topology::new(4, 2, 450.0, 12.5).unwrap();
    let stats = |skew: f64| {
        let ds = generate(0.01, skew, 42).unwrap();
        let parts = partition_dataset(&ds, topo.n(), PartitionScheme::DefaultKeys).unwrap();
        let mut c = Cluster::new(&topo, Mode::Simulated, 42).unwrap();
        let (_, r) = run_query(QueryId::Q14, Variant::Default, &mut c, &parts, &RunOptions::default()).unwrap();
        (std_dev(&r.peak_bytes), r.shuffle_msgs.iter().copied().max().unwrap())
    };
    let (std0, max0) = stats(0.0);
    let (std1, max1) = stats(1.5);
    check(&mut f, std1 > std0, || format!("peak_bytes std {std1} <= {std0}"));
    check(&mut f, max1 > max0, || format!("max shuffle message {max1} <= {max0}"));
    verdict(10, "skew raises imbalance", &f);
}
