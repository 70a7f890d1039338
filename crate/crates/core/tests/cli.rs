use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_st-simdiff"));
    cmd.env_remove("ST_SIMDIFF_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["gen", "--output", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "gen failed: {}", stderr(&out));
    path
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "command failed: {}", stderr(out));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn version_reports_schema() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
    assert!(text.contains("(schema 1)"));
}

#[test]
fn help_lists_exit_codes() {
    let out = run(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Exit codes"));
    for cmd in ["compress", "stats", "sweep", "gen", "bench"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["--frames", "6", "--height", "4", "--width", "5", "--dim", "8", "--seed", "7", "--cut", "3", "--noise", "0.1", "--patch", "2:0:0:0:1:3.0"];
    let a = gen(dir.path(), "a.stsd", &args);
    let b = gen(dir.path(), "b.stsd", &args);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn gen_rejects_cut_at_zero() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("x.stsd");
    let out = run(&["gen", "--output", path.to_str().unwrap(), "--cut", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!path.exists());
}

#[test]
fn compress_defaults_hit_budget() {
    let dir = TempDir::new().unwrap();
    let input = gen(dir.path(), "v.stsd", &["--frames", "8", "--height", "4", "--width", "4", "--dim", "16", "--cut", "4"]);
    let v = json(&run(&["compress", input.to_str().unwrap()]));
    assert_eq!(v["n"], 128);
    assert_eq!(v["n_target"], 39);
    assert_eq!(v["indices"].as_array().unwrap().len(), 39);
    assert_eq!(v["config"]["tau_sim"], 0.8);
    assert_eq!(v["config"]["diff_mode"]["tau_diff"], 0.2);
    assert_eq!(v["config"]["ratio"], 0.3);
    assert_eq!(v["config"]["fill"], true);
    assert_eq!(v["config"]["community_cap"], "auto");
    assert_eq!(v["config"]["importance"], "proxy");

    let half = json(&run(&["compress", input.to_str().unwrap(), "--ratio", "0.5"]));
    assert_eq!(half["indices"].as_array().unwrap().len(), 64);
}

#[test]
fn compress_writes_output_file() {
    let dir = TempDir::new().unwrap();
    let input = gen(dir.path(), "v.stsd", &["--frames", "4"]);
    let target = dir.path().join("out.json");
    let out = run(&["compress", input.to_str().unwrap(), "-o", target.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("n_target="));
    let v: Value = serde_json::from_slice(&std::fs::read(target).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn external_importance_length_mismatch_is_validation_error() {
    let dir = TempDir::new().unwrap();
    let input = gen(dir.path(), "v.stsd", &["--frames", "2", "--height", "2", "--width", "2", "--dim", "4"]);
    let scores = dir.path().join("imp.bin");
    std::fs::write(&scores, st_simdiff::budget::encode_importance(&[1.0; 5])).unwrap();
    let spec = format!("external:{}", scores.display());
    let out = run(&["compress", input.to_str().unwrap(), "--importance", &spec]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("importance"));

    std::fs::write(&scores, st_simdiff::budget::encode_importance(&[1.0; 8])).unwrap();
    let ok = run(&["compress", input.to_str().unwrap(), "--importance", &spec]);
    assert!(ok.status.success(), "{}", stderr(&ok));
}

#[test]
fn bad_inputs_map_to_exit_classes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.stsd");
    assert_eq!(run(&["compress", missing.to_str().unwrap()]).status.code(), Some(5));

    let junk = dir.path().join("junk.stsd");
    std::fs::write(&junk, b"not a tensor at all, definitely not").unwrap();
    let out = run(&["compress", junk.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("load"));

    let input = gen(dir.path(), "v.stsd", &["--frames", "2"]);
    assert_eq!(run(&["compress", input.to_str().unwrap(), "--ratio", "0"]).status.code(), Some(2));
    assert_eq!(run(&["compress", input.to_str().unwrap(), "--bogus"]).status.code(), Some(2));
}

#[test]
fn stats_on_uniform_grid() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ones.stsd");
    let grid = st_simdiff::TokenGrid::new(st_simdiff::GridShape::new(2, 2, 2, 3).unwrap(), vec![1.0; 24]).unwrap();
    st_simdiff::stsd::save_grid(&grid, &path).unwrap();
    let v = json(&run(&["stats", path.to_str().unwrap()]));
    assert_eq!(v["components"]["count"], 1);
    assert_eq!(v["components"]["max_size"], 8);
    assert_eq!(v["edges"]["all"]["count"], 12);
    assert_eq!(v["event_count"], 0);
}

#[test]
fn single_frame_percentile_fails_in_dets() {
    let dir = TempDir::new().unwrap();
    let input = gen(dir.path(), "one.stsd", &["--frames", "1"]);
    let out = run(&["stats", input.to_str().unwrap(), "--diff-mode", "percentile"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("dets"), "{}", stderr(&out));
}

#[test]
fn sweep_emits_monotone_csv() {
    let dir = TempDir::new().unwrap();
    let input = gen(dir.path(), "v.stsd", &["--frames", "8", "--noise", "0.3", "--cut", "5", "--patch", "3:1:1:1:0:2.0"]);
    let out = run(&[
        "sweep", input.to_str().unwrap(), "--tau-sims", "0.6,0.8,0.95", "--tau-diffs", "0.1,0.3", "--ratio", "1.0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(st_simdiff::pipeline::SWEEP_CSV_HEADER));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 6);
    for pair in rows.windows(2) {
        if pair[0][1] == pair[1][1] {
            assert!(pair[0][2] <= pair[1][2]);
        }
    }
    for pair in rows.chunks(2) {
        assert!(pair[0][3] <= pair[1][3]);
    }
}

#[test]
fn sweep_requires_nonempty_grids() {
    let dir = TempDir::new().unwrap();
    let input = gen(dir.path(), "v.stsd", &["--frames", "2"]);
    let out = run(&["sweep", input.to_str().unwrap(), "--tau-sims", "", "--tau-diffs", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["sweep", input.to_str().unwrap(), "--tau-diffs", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let input = gen(dir.path(), "v.stsd", &["--frames", "12", "--height", "6", "--width", "6", "--noise", "0.2", "--cut", "5"]);
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    let one = strip(json(&run(&["compress", input.to_str().unwrap(), "--threads", "1"])));
    let four = strip(json(&run(&["compress", input.to_str().unwrap(), "--threads", "4"])));
    let env = strip(json(&bin().args(["compress", input.to_str().unwrap()]).env("ST_SIMDIFF_THREADS", "3").output().unwrap()));
    assert_eq!(one, four);
    assert_eq!(one, env);
}

#[test]
fn bench_single_size_omits_ratios() {
    let out = run(&["bench", "--sizes", "256", "--dim", "8", "--reps", "3", "--baseline-sizes", "256"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.starts_with("n,d,threads,stage,median_ms,reps\n"));
    assert!(text.contains(",total,"));
    assert!(text.contains(",all_pairs_baseline,"));
    assert!(!stderr(&out).contains("ratio"));
}
