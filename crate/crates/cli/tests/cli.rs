//! Command behaviour through the library entry point and the built binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn asset(rel: &str) -> String {
    assets().join(rel).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["valsched"];
    full.extend_from_slice(args);
    let code = valsched_cli::run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(run(&["validate", &asset("toys/blur.pipe")]).0, 0);
    let (code, out, _) = run(&["validate", &asset("invalid/out_of_bounds.pipe")]);
    assert_eq!(code, 1);
    assert!(out.contains("a -> b"), "{out}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pipe");
    std::fs::write(&bad, "pipeline p\nstage a dims x:4 flops\n").unwrap();
    assert_eq!(run(&["validate", &path(&bad)]).0, 2);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_valsched");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["validate", &asset("toys/one_stage.pipe")]), Some(0));
    assert_eq!(status(&["validate", &asset("invalid/out_of_bounds.pipe")]), Some(1));
    assert_eq!(status(&["no-such-command"]), Some(2));
}

#[test]
fn bench_shipped_schedules() {
    let (code, out, _) = run(&["bench", &asset("toys/one_stage.pipe"), &asset("schedules/one_stage_default.sched")]);
    assert_eq!(code, 0);
    assert!(out.starts_with("total 2432.000\n"), "{out}");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let (code, out, _) = run(&[
        "bench",
        &asset("toys/one_stage.pipe"),
        &asset("schedules/one_stage_vec8.sched"),
        "--csv",
        &path(&csv),
    ]);
    assert_eq!(code, 0);
    assert!(out.starts_with("total 2320.000\n"), "{out}");
    assert_eq!(
        std::fs::read_to_string(&csv).unwrap(),
        "stage,compute,memory,overhead,total\na,16.000,2304.000,0.000,2320.000\n"
    );
}

#[test]
fn bench_machine_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let machine = dir.path().join("m.txt");
    std::fs::write(&machine, "# slower memory\nmem_byte_cost=16\n").unwrap();
    let sched = asset("schedules/one_stage_default.sched");
    let one = asset("toys/one_stage.pipe");
    let (_, out, _) = run(&["bench", &one, &sched, "--machine", &path(&machine)]);
    assert!(out.starts_with("total 4480.000\n"), "{out}");
    let (_, out, _) = run(&["bench", &one, &sched, "--machine", &path(&machine), "--flop-cost", "2"]);
    assert!(out.starts_with("total 4608.000\n"), "{out}");
    assert_eq!(run(&["bench", &one, &sched, "--cores", "0"]).0, 2);
}

#[test]
fn bench_rejects_foreign_and_illegal_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let sched = asset("schedules/one_stage_default.sched");
    assert_eq!(run(&["bench", &asset("toys/blur.pipe"), &sched]).0, 1);
    let illegal = dir.path().join("i.sched");
    std::fs::write(&illegal, "schedule one_stage\na split=- order=x vec=16 par=0 compute=root store=root\n").unwrap();
    let (code, _, err) = run(&["bench", &asset("toys/one_stage.pipe"), &path(&illegal), "--vec-widths", "1,8"]);
    assert_eq!(code, 1, "{err}");
    let garbled = dir.path().join("g.sched");
    std::fs::write(&garbled, "schedule one_stage\na split=\n").unwrap();
    assert_eq!(run(&["bench", &asset("toys/one_stage.pipe"), &path(&garbled)]).0, 2);
}

fn train_small(out: &Path, rounds: &str, jobs: &str) -> (i32, String, String) {
    run(&[
        "--jobs",
        jobs,
        "train",
        &asset("train"),
        "--out",
        &path(out),
        "--rounds",
        rounds,
        "--bootstrap",
        "20",
        "--rollouts",
        "3",
        "--epochs",
        "10",
        "--hidden",
        "8",
        "--seed",
        "7",
    ])
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn train_zero_rounds_writes_bootstrap_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = train_small(dir.path(), "0", "2");
    assert_eq!(code, 0, "{err}");
    assert_eq!(
        listing(dir.path()),
        ["manifest.json", "round0.csv", "targets0.tsv", "v0.ckpt"]
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn train_schedule_bench_report() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = train_small(dir.path(), "1", "0");
    assert_eq!(code, 0, "{err}");

    let model = path(&dir.path().join("v1.ckpt"));
    let pipe = asset("toys/conv_relu_pool.pipe");
    let g = dir.path().join("g.sched");
    let b = dir.path().join("b.sched");
    let (code, out, err) = run(&["schedule", &pipe, "--model", &model, "--greedy", "--out", &path(&g)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("visited "));
    let (code, _, _) = run(&["schedule", &pipe, "--model", &model, "--beam", "1", "--out", &path(&b)]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(&g).unwrap(), std::fs::read(&b).unwrap());

    let printed = out.lines().find_map(|l| l.strip_prefix("cost ")).unwrap().to_string();
    let (_, bench, _) = run(&["bench", &pipe, &path(&g)]);
    assert_eq!(bench.lines().next().unwrap(), format!("total {printed}"));

    let (code, report, _) = run(&["report", &path(dir.path())]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "round,mean_greedy,mean_beam,mean_exhaustive_ratio");
    assert_eq!(lines.len(), 3);
    let r1 = valsched::learner::RoundReport::parse_csv(
        &std::fs::read_to_string(dir.path().join("round1.csv")).unwrap(),
    )
    .unwrap();
    assert_eq!(lines[2], format!("1,{:.3},{:.3},{:.6}", r1.mean_greedy(), r1.mean_beam(), r1.mean_exhaustive_ratio().unwrap()));
}

#[test]
fn schedule_rejects_bad_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("bad.ckpt");
    std::fs::write(&ck, b"VSCK\x01\x00\x00\x00\x07\x00\x00\x00").unwrap();
    let (code, _, err) = run(&["schedule", &asset("toys/blur.pipe"), "--model", &path(&ck)]);
    assert_eq!(code, 1);
    assert!(err.contains("corrupt"), "{err}");
}

#[test]
fn report_and_train_input_errors() {
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(run(&["report", &path(empty.path())]).0, 1);
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run(&["train", &path(empty.path()), "--out", &path(out.path())]).0, 1);
}
