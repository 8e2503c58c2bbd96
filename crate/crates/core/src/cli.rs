//! The `graphtime` command line: `reconstruct`, `stream`, `sweep` and
//! `validate`.
//!
//! Exit codes: 0 on success, 2 for configuration, parse and validation
//! errors, 3 for numerical failures.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::experiment::{self, EstimatorKind, KernelSpec, RunConfig, RunManifest, SweepSpec, SWEEP_CSV_HEADER};
use crate::graph::TimeVaryingGraph;
use crate::io::{self, SlotRecord};
use crate::kernels;
use crate::kkf::{KkfSchedule, StreamingFilter};
use crate::linalg;

#[derive(Debug, Parser)]
#[command(name = "graphtime", version, about = "Reconstruct time-varying graph signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one estimator on a dataset and write estimates, NMSE and a manifest.
    Reconstruct {
        /// Run config (JSON).
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        config: Option<PathBuf>,
        /// Re-run the config recorded in a manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_std: Option<f64>,
        /// Output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Kalman-filter an observation stream read from stdin, one JSON record
    /// per line, writing one estimate record per slot to stdout.
    Stream {
        /// Run config providing graph, kernel and mu.
        #[arg(long)]
        config: PathBuf,
        /// Number of slots the schedule covers.
        #[arg(long, conflicts_with = "steady_state")]
        horizon: Option<usize>,
        /// Use the converged schedule of a time-invariant kernel for an
        /// unbounded stream (experimental).
        #[arg(long)]
        steady_state: bool,
        /// Fixed per-sample noise variance instead of mu times the sample count.
        #[arg(long)]
        noise_variance: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Run a parameter sweep and write per-slot NMSE rows.
    Sweep {
        /// Sweep spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Worker threads (default: GRAPHTIME_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a graph, and optionally the kernel a config builds on it.
    Validate {
        #[arg(long, required_unless_present = "config")]
        graph: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

/// Parses arguments, runs the command, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    match run(cli.command, stdin.lock(), stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: Command, input: impl BufRead, output: impl Write) -> Result<()> {
    match cmd {
        Command::Reconstruct {
            config,
            manifest,
            estimator,
            mu,
            seed,
            noise_std,
            output: out_dir,
        } => {
            let (mut cfg, expected) = match (config, manifest) {
                (Some(p), _) => (RunConfig::load(&p)?, None),
                (None, Some(m)) => {
                    let man = read_manifest(&m)?;
                    (man.config.clone(), Some(man.inputs))
                }
                (None, None) => return Err(Error::config("config", "either --config or --manifest is required")),
            };
            if let Some(e) = estimator {
                cfg.experiment.estimator = e.parse::<EstimatorKind>()?;
            }
            if let Some(m) = mu {
                cfg.experiment.mu = m;
            }
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            if let Some(s) = noise_std {
                cfg.experiment.noise_std = s;
            }
            if let Some(o) = out_dir {
                cfg.output = o;
            }
            cmd_reconstruct(&cfg, expected.as_ref()).map(|_| ())
        }
        Command::Stream {
            config,
            horizon,
            steady_state,
            noise_variance,
            mu,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(m) = mu {
                cfg.experiment.mu = m;
            }
            if noise_variance.is_some() {
                cfg.experiment.noise_variance = noise_variance;
            }
            let (n, filter, horizon) = stream_filter(&cfg, horizon, steady_state)?;
            run_stream(filter, n, horizon, input, output)
        }
        Command::Sweep { spec, output, threads } => cmd_sweep(&spec, &output, threads).map(|_| ()),
        Command::Validate { graph, config, horizon } => cmd_validate(graph, config, horizon, output),
    }
}

fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::config("manifest", e.to_string()))
}

fn input_digests(cfg: &RunConfig) -> Result<BTreeMap<String, String>> {
    cfg.inputs()
        .into_iter()
        .map(|(k, p)| io::sha256_path(&p).map(|d| (k, d)))
        .collect()
}

/// `reconstruct`: writes `estimate.csv`, `observations.ndjson`,
/// `nmse.csv` (with truth) and `manifest.json` into the output directory.
pub fn cmd_reconstruct(cfg: &RunConfig, expected_inputs: Option<&BTreeMap<String, String>>) -> Result<RunManifest> {
    let started = experiment::unix_ms();
    let inputs = input_digests(cfg)?;
    if let Some(exp) = expected_inputs {
        if let Some((k, _)) = exp.iter().find(|(k, d)| inputs.get(*k) != Some(d)) {
            return Err(Error::config(format!("inputs.{k}"), "input file changed since the manifest was written"));
        }
    }
    let run = experiment::reconstruct(cfg)?;
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut outputs = BTreeMap::new();
    let est_path = dir.join("estimate.csv");
    io::write_matrix_csv(&est_path, &run.estimate.to_matrix())?;
    outputs.insert("estimate.csv".to_string(), io::sha256_path(&est_path)?);
    let obs_path = dir.join("observations.ndjson");
    io::write_observations(&obs_path, &run.plan, &run.observations)?;
    outputs.insert("observations.ndjson".to_string(), io::sha256_path(&obs_path)?);
    if let Some(series) = &run.nmse {
        let mut s = String::from("t,nmse\n");
        for (t, v) in series.values.iter().enumerate() {
            s.push_str(&format!("{t},{}\n", v.map_or_else(|| "undefined".to_string(), io::fmt_f64)));
        }
        let p = dir.join("nmse.csv");
        io::write_atomic(&p, s.as_bytes())?;
        outputs.insert("nmse.csv".to_string(), io::sha256_path(&p)?);
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seed: cfg.experiment.seed,
        inputs,
        outputs,
        started_unix_ms: started,
        finished_unix_ms: experiment::unix_ms(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::config("manifest", e.to_string()))?;
    io::write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

fn stream_filter(cfg: &RunConfig, horizon: Option<usize>, steady: bool) -> Result<(usize, StreamingFilter, Option<usize>)> {
    let exp = &cfg.experiment;
    exp.validate()?;
    if matches!(exp.kernel, KernelSpec::KroneckerProduct { .. }) {
        return Err(Error::config("kernel.type", "streaming needs a kernel with block-tridiagonal inverse"));
    }
    let (schedule, n, horizon) = if steady {
        let template = io::read_graph(&cfg.graph, None)?;
        if template.slots().iter().any(|s| s.adjacency() != template.slot(0).adjacency()) {
            log::warn!("steady-state schedule uses slot 0 of a graph that changes over time");
        }
        let g = TimeVaryingGraph::constant(template.slot(0).clone(), 3)?;
        let kernel = exp.kernel.build(&g)?;
        let schedule = KkfSchedule::steady_state(&kernel.inverse_blocks()?, 1e-13, 100_000)?;
        (schedule, g.n_vertices(), None)
    } else {
        let h = horizon.or(cfg.horizon);
        let g = io::read_graph(&cfg.graph, h)?;
        let kernel = exp.kernel.build(&g)?;
        if !kernel.tridiagonal_inverse() {
            return Err(Error::config("kernel", "streaming needs a kernel with block-tridiagonal inverse"));
        }
        (KkfSchedule::from_kernel(&kernel)?, g.n_vertices(), Some(g.n_slots()))
    };
    let mut filter = StreamingFilter::new(schedule, exp.mu);
    if let Some(v) = exp.noise_variance {
        filter = filter.with_fixed_noise(v);
    }
    Ok((n, filter, horizon))
}

fn error_record(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn check_record(rec: &SlotRecord, n: usize, next: usize, horizon: Option<usize>) -> std::result::Result<(), String> {
    if rec.t < next {
        return Err("non-monotone slot".into());
    }
    if horizon.is_some_and(|h| rec.t >= h) {
        return Err(format!("slot {} beyond horizon", rec.t));
    }
    if rec.indices.len() != rec.values.len() {
        return Err(format!("slot {}: {} indices but {} values", rec.t, rec.indices.len(), rec.values.len()));
    }
    if rec.indices.windows(2).any(|w| w[0] >= w[1]) || rec.indices.iter().any(|&i| i >= n) {
        return Err(format!("slot {}: indices must be increasing and below {n}", rec.t));
    }
    if rec.values.iter().any(|v| !v.is_finite()) {
        return Err(format!("slot {}: non-finite value", rec.t));
    }
    Ok(())
}

/// Streams records from `input` through the filter. Malformed records
/// produce an error record and are otherwise ignored; each output line
/// is flushed as soon as it is written.
pub fn run_stream(
    mut filter: StreamingFilter,
    n: usize,
    horizon: Option<usize>,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    let out_err = |source| Error::Io {
        path: "<stdout>".into(),
        source,
    };
    for line in input.lines() {
        let line = line.map_err(|source| Error::Io {
            path: "<stdin>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<SlotRecord>(&line)
            .map_err(|e| format!("malformed record: {e}"))
            .and_then(|rec| {
                check_record(&rec, n, filter.next_slot(), horizon)?;
                let values = DVector::from_vec(rec.values.clone());
                filter.push(rec.t, &rec.indices, &values).map_err(|e| e.to_string())
            });
        match outcome {
            Ok(steps) => {
                for (t, est) in steps {
                    writeln!(output, "{}", io::estimate_record(t, &est)).map_err(out_err)?;
                }
            }
            Err(msg) => writeln!(output, "{}", error_record(&msg)).map_err(out_err)?,
        }
        output.flush().map_err(out_err)?;
    }
    Ok(())
}

/// `sweep`: appends each run's rows to `results.csv` as it finishes (one
/// write per run), then rewrites the file in sorted order and writes
/// `manifest.json`.
pub fn cmd_sweep(spec_path: &Path, out_dir: &Path, threads: Option<usize>) -> Result<experiment::SweepReport> {
    let spec = SweepSpec::load(spec_path)?;
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let csv_path = out_dir.join("results.csv");
    let io_err = |source| Error::Io {
        path: csv_path.display().to_string(),
        source,
    };
    let mut file = File::create(&csv_path).map_err(io_err)?;
    file.write_all(SWEEP_CSV_HEADER.as_bytes()).map_err(io_err)?;
    drop(file);
    let file = Mutex::new(OpenOptions::new().append(true).open(&csv_path).map_err(io_err)?);
    let report = experiment::sweep(&spec, threads, &|run| {
        let rows = run.csv_rows();
        let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
        if f.write_all(rows.as_bytes()).and_then(|_| f.flush()).is_err() {
            log::warn!("could not append rows for {} seed {}", run.config_id, run.seed);
        }
    })?;
    io::write_atomic(&csv_path, report.to_csv().as_bytes())?;
    let manifest = serde_json::to_string_pretty(&report.manifest()).map_err(|e| Error::config("manifest", e.to_string()))?;
    io::write_atomic(&out_dir.join("manifest.json"), manifest.as_bytes())?;
    for (id, (mean, std)) in report.final_nmse_summary() {
        log::info!("{id}: final NMSE {mean:.4} +/- {std:.4}");
    }
    Ok(report)
}

fn cmd_validate(graph: Option<PathBuf>, config: Option<PathBuf>, horizon: Option<usize>, mut out: impl Write) -> Result<()> {
    let cfg = config.as_deref().map(RunConfig::load).transpose()?;
    let graph_path = graph
        .or_else(|| cfg.as_ref().map(|c| c.graph.clone()))
        .ok_or_else(|| Error::config("graph", "no graph given"))?;
    let horizon = horizon.or(cfg.as_ref().and_then(|c| c.horizon));
    let g = io::read_graph(&graph_path, horizon)?;
    let mut report = serde_json::json!({
        "graph": graph_path.display().to_string(),
        "vertices": g.n_vertices(),
        "slots": g.n_slots(),
        "valid": true,
    });
    let min_lap_eig = g
        .laplacians()
        .iter()
        .map(linalg::min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    report["laplacian_min_eigenvalue"] = min_lap_eig.into();
    if let Some(cfg) = &cfg {
        cfg.experiment.validate()?;
        let kernel = cfg.experiment.kernel.build(&g)?;
        report["kernel_block_bandwidth"] = kernel.block_bandwidth().into();
        report["kernel_tridiagonal_inverse"] = kernel.tridiagonal_inverse().into();
        if kernel.tridiagonal_inverse() {
            // the recursion succeeds exactly when the inverse is positive definite
            KkfSchedule::from_kernel(&kernel)?;
            report["kernel_positive_definite"] = true.into();
        } else {
            let min = kernel.min_eigenvalue();
            if !(min > 0.0) {
                return Err(Error::NotPositiveDefinite(format!("kernel minimum eigenvalue {min:.3e}")));
            }
            report["kernel_min_eigenvalue"] = min.into();
            report["kernel_positive_definite"] = true.into();
        }
        report["kernel_symmetry_tolerance"] = kernels::SYMMETRY_TOL.into();
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report).unwrap_or_default()).map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}
