//! End-to-end runs of the `graphtime` binary.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use graphtime::io;
use graphtime::kernels;
use graphtime::kkf;
use graphtime::graph::TimeVaryingGraph;
use graphtime::sampling::{ObservationSet, SamplingPlan};
use graphtime::spectral::SpectralMap;
use nalgebra::{DMatrix, DVector};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphtime"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_json(path: &Path, v: serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn fixture_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("run.json")).unwrap()).unwrap();
    for key in ["graph", "truth"] {
        cfg[key] = fixtures().join(cfg[key].as_str().unwrap()).display().to_string().into();
    }
    cfg["output"] = dir.join("out").display().to_string().into();
    edit(&mut cfg);
    let p = dir.join("run.json");
    write_json(&p, cfg);
    p
}

/// Two vertices joined by a unit edge, three slots, regularized-Laplacian
/// kernel with unit bridges.
fn tiny_stream_config(dir: &Path, extra: serde_json::Value) -> PathBuf {
    let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    io::write_matrix_list_json(&dir.join("graph.json"), &[w]).unwrap();
    let mut cfg = serde_json::json!({
        "graph": "graph.json",
        "horizon": 3,
        "kernel": {
            "type": "timevarying",
            "spatial": {"family": "regularized-laplacian", "sigma2": 1.0},
            "bridge": {"type": "scaled-identity", "s": 1.0}
        },
        "estimator": "kkf",
        "mu": 0.1,
        "sampling": {"type": "full"},
        "noise_std": 0.0,
        "seed": 0
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let p = dir.join("run.json");
    write_json(&p, cfg);
    p
}

fn stream(config: &Path, extra: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(["stream", "--config", config.to_str().unwrap()])
        .args(extra)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn lines(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn reconstruct_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), |_| {});
    let out = run(&["reconstruct", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["estimate.csv", "observations.ndjson", "nmse.csv", "manifest.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
    let est = io::read_matrix_csv(&dir.path().join("out/estimate.csv")).unwrap();
    assert_eq!((est.nrows(), est.ncols()), (8, 12));
    let nmse = std::fs::read_to_string(dir.path().join("out/nmse.csv")).unwrap();
    assert_eq!(nmse.lines().next(), Some("t,nmse"));
    assert_eq!(nmse.lines().count(), 13);
}

#[test]
fn estimators_agree_on_the_last_slot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), |_| {});
    let mut last = Vec::new();
    for e in ["kkf", "batch", "online-closedform"] {
        let o = dir.path().join(e);
        let out = run(&["reconstruct", "--config", cfg.to_str().unwrap(), "--estimator", e, "--output", o.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        let est = io::read_matrix_csv(&o.join("estimate.csv")).unwrap();
        last.push(est.column(11).into_owned());
    }
    assert!((&last[0] - &last[1]).amax() < 1e-9);
    assert!((&last[0] - &last[2]).amax() < 1e-9);
}

#[test]
fn asymmetric_adjacency_is_rejected_with_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    std::fs::write(&p, "0,1,0\n0,0,1\n0,1,0\n").unwrap();
    let out = run(&["validate", "--graph", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("row 0, col 1"), "{msg}");
}

#[test]
fn unparsable_matrix_names_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    std::fs::write(&p, "0,1\n1,x\n").unwrap();
    let out = run(&["validate", "--graph", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("row 1, col 1"), "{}", stderr(&out));
}

#[test]
fn bad_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), |c| c["mu"] = (-1.0).into());
    let out = run(&["reconstruct", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mu"), "{}", stderr(&out));

    let cfg = fixture_config(dir.path(), |c| c["estimator"] = "nope".into());
    let out = run(&["reconstruct", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("estimator"), "{}", stderr(&out));
}

#[test]
fn ill_conditioned_kernel_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), |c| c["kernel"]["spatial"]["sigma2"] = 40.0.into());
    let out = run(&["reconstruct", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("slot"), "{}", stderr(&out));
}

#[test]
fn changed_input_invalidates_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.csv");
    std::fs::copy(fixtures().join("truth.csv"), &truth).unwrap();
    let cfg = fixture_config(dir.path(), |c| c["truth"] = truth.display().to_string().into());
    assert!(run(&["reconstruct", "--config", cfg.to_str().unwrap()]).status.success());
    let mut t = io::read_matrix_csv(&truth).unwrap();
    t[(0, 0)] += 1.0;
    io::write_matrix_csv(&truth, &t).unwrap();
    let man = dir.path().join("out/manifest.json");
    let out = run(&["reconstruct", "--manifest", man.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("inputs.truth"), "{}", stderr(&out));
}

#[test]
fn empty_stream_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_stream_config(dir.path(), serde_json::json!({}));
    let out = stream(&cfg, &[], "");
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn stream_matches_the_batch_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_stream_config(dir.path(), serde_json::json!({}));
    let input = "{\"t\":0,\"indices\":[0],\"values\":[1.0]}\n\
                 {\"t\":1,\"indices\":[0,1],\"values\":[0.5,-0.25]}\n\
                 {\"t\":2,\"indices\":[1],\"values\":[2.0]}\n";
    let out = stream(&cfg, &[], input);
    assert!(out.status.success(), "{}", stderr(&out));
    let recs = lines(&out);
    assert_eq!(recs.len(), 3);

    let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let g = TimeVaryingGraph::from_adjacencies(vec![w; 3]).unwrap();
    let k = kernels::timevarying_kernel_inverse_uniform(&g, &SpectralMap::regularized_laplacian(1.0), 1.0).unwrap();
    let plan = SamplingPlan::new(2, vec![vec![0], vec![0, 1], vec![1]]).unwrap();
    let obs = ObservationSet::new(
        &plan,
        vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.5, -0.25]), DVector::from_vec(vec![2.0])],
    )
    .unwrap();
    let expected = kkf::run_kkf(&k, &obs, &plan, 0.1).unwrap().estimate;
    for (t, rec) in recs.iter().enumerate() {
        assert_eq!(rec["t"], t);
        let got: Vec<f64> = serde_json::from_value(rec["estimate"].clone()).unwrap();
        assert!((DVector::from_vec(got) - expected.slot(t)).amax() < 1e-12);
    }
}

#[test]
fn stream_reports_bad_records_and_carries_on() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_stream_config(dir.path(), serde_json::json!({}));
    let input = "{\"t\":1,\"indices\":[0],\"values\":[1.0]}\n\
                 {\"t\":0,\"indices\":[0],\"values\":[1.0]}\n\
                 not json\n\
                 {\"t\":2,\"indices\":[],\"values\":[]}\n";
    let out = stream(&cfg, &[], input);
    assert!(out.status.success());
    let recs = lines(&out);
    // slot 0 is filled in as unobserved before slot 1
    assert_eq!(recs[0]["t"], 0);
    assert_eq!(recs[1]["t"], 1);
    assert_eq!(recs[2]["error"], "non-monotone slot");
    assert!(recs[3]["error"].as_str().unwrap().starts_with("malformed record"));
    assert_eq!(recs[4]["t"], 2);
    assert_eq!(recs.len(), 5);
}

fn rss_kib(pid: u32) -> u64 {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).unwrap();
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap()
}

#[test]
fn steady_state_stream_memory_is_flat() {
    if !Path::new("/proc/self/status").exists() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let n = 20;
    let g = graphtime::eval::random_geometric_graph(n, 4, 2).unwrap();
    io::write_matrix_list_json(&dir.path().join("graph.json"), &[g.adjacency().clone()]).unwrap();
    let cfg = dir.path().join("run.json");
    write_json(
        &cfg,
        serde_json::json!({
            "graph": "graph.json",
            "kernel": {
                "type": "timevarying",
                "spatial": {"family": "diffusion", "sigma2": 1.0},
                "bridge": {"type": "scaled-identity", "s": 1.0}
            },
            "estimator": "kkf",
            "mu": 0.01,
            "sampling": {"type": "full"},
            "noise_std": 0.0,
            "seed": 0
        }),
    );
    let mut child = bin()
        .args(["stream", "--config", cfg.to_str().unwrap(), "--steady-state"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let pid = child.id();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let record = |t: usize| format!("{{\"t\":{t},\"indices\":[0,3,7,11],\"values\":[0.1,-0.2,0.3,0.05]}}\n");
    let mut line = String::new();
    for t in 0..100 {
        stdin.write_all(record(t).as_bytes()).unwrap();
        line.clear();
        stdout.read_line(&mut line).unwrap();
    }
    let early = rss_kib(pid);
    let writer = std::thread::spawn(move || {
        for t in 100..10_000 {
            stdin.write_all(record(t).as_bytes()).unwrap();
        }
        stdin
    });
    for _ in 100..10_000 {
        line.clear();
        stdout.read_line(&mut line).unwrap();
    }
    assert!(line.contains("\"t\":9999"), "{line}");
    let late = rss_kib(pid);
    drop(writer.join().unwrap());
    child.wait().unwrap();
    assert!(late <= 2 * early, "RSS grew from {early} KiB to {late} KiB");
}

fn sweep_spec(dir: &Path, grid: serde_json::Value, seeds: &[u64]) -> PathBuf {
    let p = dir.join("sweep.json");
    write_json(
        &p,
        serde_json::json!({
            "data": {"type": "synthetic", "n": 10, "t": 8, "neighbors": 3,
                     "spatial": {"family": "diffusion", "sigma2": 1.0}, "s": 1.0},
            "base": {
                "estimator": "kkf",
                "kernel": {
                    "type": "timevarying",
                    "spatial": {"family": "diffusion", "sigma2": 1.0},
                    "bridge": {"type": "scaled-identity", "s": 1.0}
                },
                "mu": 0.01,
                "sampling": {"type": "random-fixed", "m": 4},
                "noise_std": 0.1,
                "seed": 0
            },
            "grid": grid,
            "seeds": seeds
        }),
    );
    p
}

#[test]
fn single_cell_sweep_writes_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = sweep_spec(dir.path(), serde_json::json!({}), &[7]);
    let out_dir = dir.path().join("sweep");
    let out = run(&["sweep", "--spec", spec.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(out_dir.join("results.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["config_id", "seed", "t", "nmse", "wall_ms"]);
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| &r[1] == "7" && &r[0] == &rows[0][0]));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.is_object());
}

#[test]
fn interrupted_sweep_leaves_complete_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mus: Vec<f64> = (0..40).map(|k| 10f64.powf(-4.0 + k as f64 / 10.0)).collect();
    let seeds: Vec<u64> = (0..20).collect();
    let spec = sweep_spec(dir.path(), serde_json::json!({"mu": mus}), &seeds);
    let out_dir = dir.path().join("sweep");
    let mut child = bin()
        .args(["sweep", "--spec", spec.to_str().unwrap(), "--output", out_dir.to_str().unwrap(), "--threads", "2"])
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(300));
    let _ = child.kill();
    child.wait().unwrap();
    let text = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(text.is_empty() || text.ends_with('\n'));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for r in rdr.records() {
        assert_eq!(r.unwrap().len(), 5);
    }
}

#[test]
fn validate_reports_kernel_properties() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), |_| {});
    let out = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["vertices"], 8);
    assert_eq!(report["slots"], 12);
    assert_eq!(report["kernel_tridiagonal_inverse"], true);
    assert_eq!(report["kernel_positive_definite"], true);
}
