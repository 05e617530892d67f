use dxq::data::{generate, partition_dataset, Dataset, PartitionScheme};
use dxq::engine::*;
use dxq::exchange::BroadcastImpl;
use dxq::transport::{Cluster, Mode};
use dxq::{Error, Topology};

fn topo(k: usize, v: usize) -> Topology {
    Topology::new(k, v, 450.0, 12.5).unwrap()
}

fn run(
    q: QueryId,
    variant: Variant,
    ds: &Dataset,
    t: &Topology,
    mode: Mode,
    scheme: PartitionScheme,
) -> (dxq::ColumnTable, RunReport) {
    let mut c = Cluster::new(t, mode, 1).unwrap();
    let p = partition_dataset(ds, t.n(), scheme).unwrap();
    run_query(q, variant, &mut c, &p, &RunOptions::default()).unwrap()
}

#[test]
fn all_queries_match_reference() {
    let ds = generate(0.005, 0.0, 7).unwrap();
    for q in QueryId::ALL {
        let want = reference_run(q, &ds).unwrap();
        assert!(want.num_rows() > 0, "{q} reference is empty");
        for (k, v) in [(1, 1), (2, 2), (3, 1)] {
            for mode in [Mode::Simulated, Mode::InProcess] {
                let (got, rep) = run(
                    q,
                    Variant::Default,
                    &ds,
                    &topo(k, v),
                    mode,
                    PartitionScheme::DefaultKeys,
                );
                results_match(&got, &want, 1e-9).unwrap_or_else(|m| panic!("{q} {k}x{v} {mode:?}: {m}"));
                assert_eq!(
                    rep.exchange_counts,
                    plan(q, Variant::Default).unwrap().exchange_counts()
                );
                assert_eq!(rep.peak_bytes.len(), k * v);
            }
        }
    }
}

#[test]
fn q12_variants_agree() {
    let ds = generate(0.005, 0.0, 3).unwrap();
    let t = topo(4, 2);
    let mut c = Cluster::new(&t, Mode::Simulated, 1).unwrap();
    let part = partition_dataset(&ds, 8, PartitionScheme::DefaultKeys).unwrap();
    let un = partition_dataset(&ds, 8, PartitionScheme::Unpartitioned).unwrap();
    let [d, a, b] = q12_variants(&mut c, &part, &un, &RunOptions::default()).unwrap();
    assert_eq!(d.result_digest, a.result_digest);
    assert_eq!(d.result_digest, b.result_digest);
    assert_eq!(d.exchange_counts, (0, 0));
    assert_eq!(a.exchange_counts, (2, 0));
    assert_eq!(b.exchange_counts, (0, 1));
}

#[test]
fn breakdown_adds_up_in_virtual_time() {
    let ds = generate(0.005, 0.0, 3).unwrap();
    let (_, r) = run(
        QueryId::Q14,
        Variant::Default,
        &ds,
        &topo(2, 2),
        Mode::Simulated,
        PartitionScheme::DefaultKeys,
    );
    assert!(r.shuffle_s > 0.0 && r.compute_s > 0.0);
    assert_eq!(r.broadcast_s, 0.0);
    // every rank sends one message to every rank, itself included
    assert_eq!(r.shuffle_msgs.len(), 16);
    let t = topo(2, 2);
    let mut c = Cluster::new(&t, Mode::Simulated, 1).unwrap();
    let p = partition_dataset(&ds, 4, PartitionScheme::DefaultKeys).unwrap();
    let (_, r) = run_query(QueryId::Q3, Variant::Default, &mut c, &p, &RunOptions::default()).unwrap();
    let clock = c.endpoints()[0].clock();
    assert_eq!(r.compute_s + r.shuffle_s + r.broadcast_s, clock);
    let (_, r) = run(
        QueryId::Q19,
        Variant::Default,
        &ds,
        &topo(2, 2),
        Mode::Simulated,
        PartitionScheme::DefaultKeys,
    );
    assert!(r.broadcast_s > 0.0);
    assert_eq!(r.broadcast_msgs.len(), 4);
}

#[test]
fn default_q12_needs_partitioned_data() {
    let ds = generate(0.002, 0.0, 3).unwrap();
    let t = topo(2, 1);
    let mut c = Cluster::new(&t, Mode::Simulated, 1).unwrap();
    let un = partition_dataset(&ds, 2, PartitionScheme::Unpartitioned).unwrap();
    let e = run_query(QueryId::Q12, Variant::Default, &mut c, &un, &RunOptions::default()).unwrap_err();
    assert!(matches!(e, Error::Plan(_)), "{e:?}");
    let e = run_query(QueryId::Q6, Variant::Pa, &mut c, &un, &RunOptions::default()).unwrap_err();
    assert!(matches!(e, Error::Unsupported(_)), "{e:?}");
    let three = partition_dataset(&ds, 3, PartitionScheme::DefaultKeys).unwrap();
    let e = run_query(QueryId::Q6, Variant::Default, &mut c, &three, &RunOptions::default()).unwrap_err();
    assert!(matches!(e, Error::ClusterConfig(_)), "{e:?}");
}

#[test]
fn default_q12_moves_no_data_between_nodes() {
    let ds = generate(0.002, 0.0, 3).unwrap();
    let t = topo(2, 2);
    let mut c = Cluster::new(&t, Mode::Simulated, 1).unwrap();
    let p = partition_dataset(&ds, 4, PartitionScheme::DefaultKeys).unwrap();
    run_query(QueryId::Q12, Variant::Default, &mut c, &p, &RunOptions::default()).unwrap();
    for r in c.report().values() {
        assert_eq!(r.counters.inter_node_sent, 0);
        assert_eq!(r.counters.intra_node_sent, 0);
    }
}

#[test]
fn memory_cap_fails_the_query() {
    let ds = generate(0.002, 0.0, 3).unwrap();
    let t = topo(2, 1);
    let mut c = Cluster::new(&t, Mode::Simulated, 1).unwrap();
    let p = partition_dataset(&ds, 2, PartitionScheme::DefaultKeys).unwrap();
    let opts = RunOptions {
        memory_cap: Some(1000),
        ..RunOptions::default()
    };
    let e = run_query(QueryId::Q6, Variant::Default, &mut c, &p, &opts).unwrap_err();
    assert!(matches!(e, Error::MemoryCap { .. }), "{e:?}");
    // the cluster is usable again afterwards
    let (_, r) = run_query(QueryId::Q6, Variant::Default, &mut c, &p, &RunOptions::default()).unwrap();
    assert!(r.peak_bytes.iter().all(|&b| b > 1000));
}

#[test]
fn empty_dataset_gives_empty_results() {
    let ds = generate(0.002, 0.0, 3).unwrap();
    let mut empty = Dataset::new(0.0, 0.0, 0, Default::default());
    for (name, t) in ds.tables() {
        empty.insert(name.clone(), t.empty_like());
    }
    for q in QueryId::ALL {
        let want = reference_run(q, &empty).unwrap();
        assert_eq!(want.num_rows(), 0, "{q}");
        let (got, _) = run(
            q,
            Variant::Default,
            &empty,
            &topo(2, 1),
            Mode::Simulated,
            PartitionScheme::DefaultKeys,
        );
        assert_eq!(got.num_rows(), 0, "{q}");
        assert_eq!(got.schema(), want.schema(), "{q}");
    }
}

#[test]
fn p2p_broadcast_gives_same_answer() {
    let ds = generate(0.003, 0.0, 4).unwrap();
    let t = topo(2, 2);
    let p = partition_dataset(&ds, 4, PartitionScheme::DefaultKeys).unwrap();
    let mut c = Cluster::new(&t, Mode::Simulated, 1).unwrap();
    let (a, ra) = run_query(QueryId::Q19, Variant::Default, &mut c, &p, &RunOptions::default()).unwrap();
    let opts = RunOptions {
        broadcast_impl: BroadcastImpl::P2p,
        ..RunOptions::default()
    };
    let (b, rb) = run_query(QueryId::Q19, Variant::Default, &mut c, &p, &opts).unwrap();
    results_match(&a, &b, 1e-12).unwrap();
    assert!(rb.broadcast_s > ra.broadcast_s);
}
