use std::process::Command;

use dxq::engine::RunReport;
use dxq::perfmodel::WorkloadProfile;

fn dxq(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dxq")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = dxq(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn model_csv() {
    let text = stdout(&["model", "--topology", "8x1", "--bn-gbps", "50", "--machines", "2,4"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "V,B_n,thpt_broadcast,thpt_shuffle,projected_time");
    // (1 + 1/(V-1)) V B_n with B_n = 0.8 * 50
    assert_eq!(lines[1].split(',').nth(3), Some("160.000000"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn query_files_and_projection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&[
        "query",
        "--query",
        "all",
        "--topology",
        "4x1",
        "--sf",
        "0.003",
        "--out",
        out,
    ]);
    for q in ["Q1", "Q3", "Q6", "Q12", "Q14", "Q19"] {
        let report: RunReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{q}_report.json"))).unwrap())
                .unwrap();
        assert_eq!(report.peak_bytes.len(), 4);
        let text = std::fs::read_to_string(dir.path().join(format!("{q}_report.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "broadcast_msgs",
                "broadcast_s",
                "compute_s",
                "exchange_counts",
                "peak_bytes",
                "result_digest",
                "shuffle_msgs",
                "shuffle_s"
            ]
        );
        assert!(dir.path().join(format!("{q}_result.csv")).exists());
        assert!(dir.path().join(format!("{q}_stats.json")).exists());
    }
    let profile_path = dir.path().join("profile.json");
    let profile: WorkloadProfile = serde_json::from_str(&std::fs::read_to_string(&profile_path).unwrap()).unwrap();
    assert!(profile.compute_time_v1 > 0.0);

    let text = stdout(&[
        "project",
        "--topology",
        "4x1",
        "--profile",
        profile_path.to_str().unwrap(),
        "--machines",
        "1,2,4,8",
    ]);
    let times: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(times.len(), 4);
    assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
}

#[test]
fn q14_p80_message_size_shrinks_with_more_machines() {
    let p80 = |topo: &str| {
        let text = stdout(&["query", "--query", "Q14", "--topology", topo, "--sf", "0.01"]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["runs"][0]["stats"]["shuffle_msgs_p80"].as_u64().unwrap()
    };
    assert!(p80("4x4") < p80("4x2"));
}

#[test]
fn bench_csv_and_memory_cap() {
    let text = stdout(&[
        "bench",
        "--op",
        "broadcast",
        "--topology",
        "8x2",
        "--sizes",
        "65536,131072",
    ]);
    assert_eq!(text.lines().count(), 3);
    let out = dxq(&["bench", "--op", "shuffle", "--sizes", "1000000", "--memory-cap", "1000"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "memory_cap");
}

#[test]
fn errors_are_json() {
    for args in [
        &["query", "--query", "Q2"][..],
        &["query", "--query", "Q12", "--variant", "px"],
        &["bench", "--op", "gather"],
        &["model", "--topology", "8by2"],
        &["frobnicate"],
        &["query", "--mode", "rdma"],
    ] {
        let out = dxq(args);
        assert!(!out.status.success(), "{args:?}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr)
            .unwrap_or_else(|e| panic!("{args:?}: {e}: {}", String::from_utf8_lossy(&out.stderr)));
        assert!(err["error"]["kind"].is_string());
        assert!(err["error"]["message"].is_string());
    }
}

#[test]
fn csv_input_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dxq::data::generate(0.002, 0.0, 5).unwrap();
    dxq::data::write_dataset(&ds, dir.path()).unwrap();
    let text = stdout(&[
        "query",
        "--query",
        "Q6",
        "--topology",
        "2x1",
        "--data",
        dir.path().to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let want = dxq::engine::reference_run(dxq::engine::QueryId::Q6, &ds).unwrap();
    let got: f64 = v["runs"][0]["result_csv"]
        .as_str()
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let expect = want.f64s("revenue").unwrap()[0];
    assert!((got - expect).abs() <= 1e-9 * expect.abs());
}
