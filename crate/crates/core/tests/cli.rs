use std::path::Path;
use std::process::{Command, Output};

fn tcb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcb")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = tcb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args =
        vec!["simulate", "--out", s(dir), "--frames", "20", "--num_agents", "3", "--embedding_dim", "16"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_track_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    simulate(&seq, &["--seed", "3"]);
    for f in ["det.txt", "emb.bin", "gt.txt", "seqinfo.txt", "prov.txt", "config.txt"] {
        assert!(seq.join(f).exists(), "{f} missing");
    }
    let cfg = std::fs::read_to_string(seq.join("config.txt")).unwrap();
    assert!(cfg.contains("frames=20") && cfg.contains("num_agents=3") && cfg.contains("seed=3"));

    let res = tmp.path().join("res.txt");
    let summary = ok(&[
        "track",
        "--dets",
        s(&seq.join("det.txt")),
        "--embs",
        s(&seq.join("emb.bin")),
        "--out",
        s(&res),
        "--fusion",
        "linear",
        "--delta",
        "0.3",
    ]);
    assert!(summary.contains("fusion=linear(0.3)"), "{summary}");
    let lines = std::fs::read_to_string(&res).unwrap();
    assert!(lines.lines().all(|l| l.split(',').count() == 10));

    let report = ok(&["eval", "--gt", s(&seq.join("gt.txt")), "--results", s(&res)]);
    for key in ["HOTA", "MOTA", "IDF1"] {
        assert!(report.contains(key), "{report}");
    }
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.txt");
    std::fs::write(&cfg, "# small run\nframes=12\nnum_agents=2\nembedding_dim=8\n").unwrap();
    let seq = tmp.path().join("seq");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&seq), "--frames", "9"]);
    let written = std::fs::read_to_string(seq.join("config.txt")).unwrap();
    assert!(written.contains("frames=9") && written.contains("num_agents=2"));
    let info = std::fs::read_to_string(seq.join("seqinfo.txt")).unwrap();
    assert!(info.contains("9"), "{info}");
}

#[test]
fn subsample_keeps_every_third_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    simulate(&seq, &[]);
    let out = tmp.path().join("sub");
    ok(&["subsample", "--in", s(&seq), "--ratio", "0.33", "--out", s(&out)]);
    let frames: std::collections::BTreeSet<String> = std::fs::read_to_string(out.join("gt.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(frames.len(), 7);
}

#[test]
fn ablate_losscheck_and_bench_report() {
    let table = ok(&[
        "ablate",
        "--seeds",
        "2",
        "--modes",
        "product,iou",
        "--ratios",
        "1,0.5",
        "--kalman",
        "both",
        "--frames",
        "15",
        "--num_agents",
        "3",
        "--embedding_dim",
        "8",
    ]);
    assert_eq!(table.lines().count(), 1 + 2 * 2 * 2);

    let loss = ok(&["losscheck", "--size", "8x8", "--templates", "2"]);
    let err: f64 = loss.lines().find_map(|l| l.strip_prefix("max_rel_grad_error=")).unwrap().parse().unwrap();
    assert!(err < 1e-4);

    let bench = ok(&["bench", "--tracks", "20", "--dets", "20", "--frames", "5"]);
    for key in ["p50_ms=", "p95_ms=", "p99_ms="] {
        assert!(bench.contains(key), "{bench}");
    }
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.txt");
    let out = tcb(&["eval", "--gt", s(&missing), "--results", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));

    let out = tcb(&["simulate", "--out", s(tmp.path()), "--tau_low", "0.9"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tcb(&["simulate", "--out", s(tmp.path()), "--frames", "many"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "1,1,0,0,10,10,1\n2,1,0,0,ten,10,1\n").unwrap();
    let out = tcb(&["eval", "--gt", s(&bad), "--results", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"), "{}", String::from_utf8_lossy(&out.stderr));
}
