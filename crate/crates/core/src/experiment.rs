//! Run configurations, estimator dispatch and parameter sweeps.
//!
//! A run config is one JSON document:
//!
//! ```json
//! {
//!   "graph": "graph.json",
//!   "truth": "truth.csv",
//!   "kernel": {"type": "timevarying",
//!              "spatial": {"family": "diffusion", "sigma2": 1.0},
//!              "bridge": {"type": "scaled-identity", "s": 0.5}},
//!   "estimator": "kkf",
//!   "mu": 0.001,
//!   "sampling": {"type": "random-fixed", "m": 4},
//!   "noise_std": 0.05,
//!   "seed": 7,
//!   "output": "out"
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, Estimate, OnlineClosedForm};
use crate::eval::{self, NmseSeries};
use crate::graph::{self, TimeVaryingGraph};
use crate::io;
use crate::kernels::{self, SpaceTimeKernel};
use crate::kkf;
use crate::sampling::{ObservationSet, SamplingPlan};
use crate::spectral::SpectralMap;

/// RNG stream used for drawing sampling sets.
const SAMPLING_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Batch,
    Instantaneous,
    Kkf,
    OnlineClosedform,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            Error::config(
                "estimator",
                format!("unknown estimator {s:?}; expected batch, instantaneous, kkf or online-closedform"),
            )
        })
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BridgeSpec {
    /// `B[t] = s·I` for every pair of consecutive slots.
    ScaledIdentity { s: f64 },
    /// Bridge matrices from a file: one CSV used for every pair, or a JSON
    /// list with `T − 1` entries.
    Matrix { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `bdiag{r(L[t])} + btridiag{diag(b[t]); −B}`.
    Timevarying { spatial: SpectralMap, bridge: BridgeSpec },
    /// `K_T ⊗ K_G` with `K_T` a Laplacian kernel of the time graph
    /// (a path by default). Needs a time-invariant graph.
    KroneckerProduct {
        spatial: SpectralMap,
        temporal: SpectralMap,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time_graph: Option<PathBuf>,
    },
    /// `r_T(L_T) ⊕ r_G(L_G)`. Needs a time-invariant graph.
    KroneckerSum {
        spatial: SpectralMap,
        temporal: SpectralMap,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time_graph: Option<PathBuf>,
    },
    /// `bdiag{r(L[t])}`: slots are reconstructed independently.
    BlockDiagonal { spatial: SpectralMap },
}

impl KernelSpec {
    pub fn spatial(&self) -> &SpectralMap {
        match self {
            KernelSpec::Timevarying { spatial, .. }
            | KernelSpec::KroneckerProduct { spatial, .. }
            | KernelSpec::KroneckerSum { spatial, .. }
            | KernelSpec::BlockDiagonal { spatial } => spatial,
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            KernelSpec::Timevarying {
                bridge: BridgeSpec::Matrix { path },
                ..
            } => *path = base.join(&*path),
            KernelSpec::KroneckerProduct { time_graph: Some(p), .. }
            | KernelSpec::KroneckerSum { time_graph: Some(p), .. } => *p = base.join(&*p),
            _ => {}
        }
    }

    /// Builds the space-time kernel over `g`.
    pub fn build(&self, g: &TimeVaryingGraph) -> Result<SpaceTimeKernel> {
        let (n, t) = (g.n_vertices(), g.n_slots());
        match self {
            KernelSpec::Timevarying { spatial, bridge } => {
                let bridges = match bridge {
                    BridgeSpec::ScaledIdentity { s } => {
                        if !(*s >= 0.0 && s.is_finite()) {
                            return Err(Error::config("kernel.bridge.s", format!("must be >= 0, got {s}")));
                        }
                        graph::scaled_identity_bridges(n, t, *s)
                    }
                    BridgeSpec::Matrix { path } => {
                        let mats = io::read_matrices(path)?;
                        if mats.len() == 1 {
                            vec![mats[0].clone(); t.saturating_sub(1)]
                        } else {
                            mats
                        }
                    }
                };
                kernels::timevarying_kernel_inverse(g, &vec![*spatial; t], &bridges)
            }
            KernelSpec::KroneckerProduct {
                spatial,
                temporal,
                time_graph,
            } => {
                let lg = static_laplacian(g)?;
                let lt = time_laplacian(time_graph.as_deref(), t)?;
                kernels::kronecker_product_kernel(
                    &kernels::laplacian_kernel(&lt, temporal)?,
                    &kernels::laplacian_kernel(&lg, spatial)?,
                )
            }
            KernelSpec::KroneckerSum {
                spatial,
                temporal,
                time_graph,
            } => {
                let lg = static_laplacian(g)?;
                let lt = time_laplacian(time_graph.as_deref(), t)?;
                kernels::kronecker_sum_kernel_inverse(
                    &kernels::laplacian_kernel_inverse(&lt, temporal)?,
                    &kernels::laplacian_kernel_inverse(&lg, spatial)?,
                )
            }
            KernelSpec::BlockDiagonal { spatial } => kernels::blockdiag_kernel_inverse(g, spatial),
        }
    }

    /// Copy with the bridge scale replaced, for sweeps over `s`.
    pub fn with_bridge_scale(&self, s: f64) -> Result<Self> {
        match self {
            KernelSpec::Timevarying { spatial, .. } => Ok(KernelSpec::Timevarying {
                spatial: *spatial,
                bridge: BridgeSpec::ScaledIdentity { s },
            }),
            _ => Err(Error::config("grid.s", "sweeping s needs a timevarying kernel")),
        }
    }
}

fn static_laplacian(g: &TimeVaryingGraph) -> Result<DMatrix<f64>> {
    let first = g.slot(0).adjacency();
    if g.slots().iter().any(|s| s.adjacency() != first) {
        return Err(Error::config("kernel.type", "Kronecker kernels need a time-invariant graph"));
    }
    Ok(g.slot(0).laplacian())
}

fn time_laplacian(path: Option<&Path>, t: usize) -> Result<DMatrix<f64>> {
    let w = match path {
        Some(p) => io::read_matrix_csv(p)?,
        None => graph::path_adjacency(t),
    };
    if w.nrows() != t || w.ncols() != t {
        return Err(Error::config("kernel.time_graph", format!("must be {t}x{t}, got {}x{}", w.nrows(), w.ncols())));
    }
    Ok(graph::Graph::new(w)?.laplacian())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SamplingSpec {
    Full,
    /// One random set of `m` vertices used at every slot.
    RandomFixed { m: usize },
    /// A fresh random set of `m` vertices per slot.
    RandomPerSlot { m: usize },
    TimeInvariant { indices: Vec<usize> },
    PerSlot { slots: Vec<Vec<usize>> },
}

impl SamplingSpec {
    pub fn build(&self, n: usize, t: usize, seed: u64) -> Result<SamplingPlan> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLING_STREAM);
        let plan = match self {
            SamplingSpec::Full => Ok(SamplingPlan::full(n, t)),
            SamplingSpec::RandomFixed { m } => SamplingPlan::random_fixed(n, t, *m, &mut rng),
            SamplingSpec::RandomPerSlot { m } => SamplingPlan::random_per_slot(n, t, *m, &mut rng),
            SamplingSpec::TimeInvariant { indices } => SamplingPlan::time_invariant(n, t, indices.clone()),
            SamplingSpec::PerSlot { slots } => {
                if slots.len() != t {
                    return Err(Error::config("sampling.slots", format!("{} slots listed, horizon is {t}", slots.len())));
                }
                SamplingPlan::new(n, slots.clone())
            }
        };
        plan.map_err(|e| Error::config("sampling", e.to_string()))
    }

    fn with_size(&self, m: usize) -> Result<Self> {
        match self {
            SamplingSpec::RandomFixed { .. } => Ok(SamplingSpec::RandomFixed { m }),
            SamplingSpec::RandomPerSlot { .. } => Ok(SamplingSpec::RandomPerSlot { m }),
            _ => Err(Error::config("grid.m", "sweeping m needs random sampling")),
        }
    }
}

/// Data-independent description of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub estimator: EstimatorKind,
    pub kernel: KernelSpec,
    pub mu: f64,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the filter's noise variance `μ·M[t]` (KKF only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::config("mu", format!("must be positive, got {}", self.mu)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise_std", format!("must be >= 0, got {}", self.noise_std)));
        }
        if let Some(v) = self.noise_variance {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config("noise_variance", format!("must be positive, got {v}")));
            }
        }
        self.kernel
            .spatial()
            .validate()
            .map_err(|e| Error::config("kernel.spatial", e.to_string()))
    }

    /// Short stable identifier: SHA-256 of the canonical JSON with the
    /// seed zeroed, first 16 hex digits.
    pub fn config_id(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        let canonical = serde_json::to_value(&c).map(|v| v.to_string()).unwrap_or_default();
        io::sha256_hex(canonical.as_bytes())[..16].to_string()
    }

    /// Runs the configured estimator.
    pub fn estimate(
        &self,
        g: &TimeVaryingGraph,
        kernel: &SpaceTimeKernel,
        plan: &SamplingPlan,
        obs: &ObservationSet,
    ) -> Result<Estimate> {
        run_estimator(self.estimator, g, self.kernel.spatial(), kernel, plan, obs, self.mu, self.noise_variance)
    }
}

/// Estimator dispatch. The instantaneous estimator uses the spatial map
/// on each slot's Laplacian; the others use the space-time kernel.
#[allow(clippy::too_many_arguments)]
pub fn run_estimator(
    kind: EstimatorKind,
    g: &TimeVaryingGraph,
    spatial: &SpectralMap,
    kernel: &SpaceTimeKernel,
    plan: &SamplingPlan,
    obs: &ObservationSet,
    mu: f64,
    noise_variance: Option<f64>,
) -> Result<Estimate> {
    match kind {
        EstimatorKind::Batch => estimators::batch_estimate(obs, plan, kernel, mu),
        EstimatorKind::Instantaneous => {
            let ks = g
                .laplacians()
                .iter()
                .map(|l| kernels::laplacian_kernel(l, spatial))
                .collect::<Result<Vec<_>>>()?;
            estimators::instantaneous_estimates(obs, plan, &ks, mu)
        }
        EstimatorKind::Kkf => {
            let noise = match noise_variance {
                Some(v) => vec![v; plan.n_slots()],
                None => obs.noise_variances(mu),
            };
            kkf::run_kkf_with_noise(kernel, obs, plan, &noise, mu).map(|o| o.estimate)
        }
        EstimatorKind::OnlineClosedform => OnlineClosedForm::new(kernel)?.filtered(obs, plan, mu),
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A complete `reconstruct` job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Adjacency source: CSV, JSON slot list, or directory of
    /// `adj_0001.csv` files.
    pub graph: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Ground truth, `N` rows by `T` columns. Observations are drawn from
    /// it unless `observations` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Observation stream file (one JSON record per line).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl RunConfig {
    /// Parses a config and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| locate_parse_error(&text, &e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).unwrap_or(base);
        cfg.resolve(&base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        self.graph = base.join(&self.graph);
        self.truth = self.truth.as_ref().map(|p| base.join(p));
        self.observations = self.observations.as_ref().map(|p| base.join(p));
        self.experiment.kernel.resolve(base);
    }

    /// Input files whose digests go into a manifest.
    pub fn inputs(&self) -> Vec<(String, PathBuf)> {
        let mut v = vec![("graph".to_string(), self.graph.clone())];
        if let Some(p) = &self.truth {
            v.push(("truth".into(), p.clone()));
        }
        if let Some(p) = &self.observations {
            v.push(("observations".into(), p.clone()));
        }
        match &self.experiment.kernel {
            KernelSpec::Timevarying {
                bridge: BridgeSpec::Matrix { path },
                ..
            } => v.push(("bridges".into(), path.clone())),
            KernelSpec::KroneckerProduct { time_graph: Some(p), .. }
            | KernelSpec::KroneckerSum { time_graph: Some(p), .. } => v.push(("time_graph".into(), p.clone())),
            _ => {}
        }
        v
    }
}

/// Turns a serde error into a config error naming the offending field
/// where serde reports one.
fn config_parse_error(e: &serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("<document>")
        .to_string();
    Error::config(field, msg)
}

/// Like [`config_parse_error`], but when serde cannot name the field
/// (flattened structs lose it), re-parses the typed top-level fields one
/// at a time to find the culprit.
fn locate_parse_error(text: &str, e: &serde_json::Error) -> Error {
    fn check<T: serde::de::DeserializeOwned>(v: &serde_json::Value, key: &str) -> Option<Error> {
        let field = v.get(key)?;
        serde_json::from_value::<T>(field.clone())
            .err()
            .map(|e| Error::config(key, e.to_string()))
    }
    let err = config_parse_error(e);
    if !matches!(&err, Error::Config { field, .. } if field == "<document>") {
        return err;
    }
    let Ok(v) = serde_json::from_str::<serde_json::Value>(text) else {
        return err;
    };
    check::<EstimatorKind>(&v, "estimator")
        .or_else(|| check::<KernelSpec>(&v, "kernel"))
        .or_else(|| check::<SamplingSpec>(&v, "sampling"))
        .or_else(|| check::<f64>(&v, "mu"))
        .or_else(|| check::<f64>(&v, "noise_std"))
        .or_else(|| check::<u64>(&v, "seed"))
        .or_else(|| check::<Option<usize>>(&v, "horizon"))
        .unwrap_or(err)
}

/// Everything a reconstruction produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub graph: TimeVaryingGraph,
    pub plan: SamplingPlan,
    pub observations: ObservationSet,
    pub estimate: Estimate,
    pub truth: Option<DMatrix<f64>>,
    pub nmse: Option<NmseSeries>,
}

/// Loads data, draws or reads observations, and runs the estimator.
pub fn reconstruct(cfg: &RunConfig) -> Result<RunOutput> {
    let exp = &cfg.experiment;
    exp.validate()?;
    let truth = cfg.truth.as_deref().map(io::read_matrix_csv).transpose()?;
    let horizon = cfg.horizon.or(truth.as_ref().map(DMatrix::ncols));
    let graph = io::read_graph(&cfg.graph, horizon)?;
    let (n, t) = (graph.n_vertices(), graph.n_slots());
    if let Some(f) = &truth {
        if f.nrows() != n || f.ncols() != t {
            return Err(Error::config(
                "truth",
                format!("is {}x{}, graph covers {n} vertices x {t} slots", f.nrows(), f.ncols()),
            ));
        }
    }
    let (plan, observations) = match (&cfg.observations, &truth) {
        (Some(p), _) => io::read_observations(p, n, t)?,
        (None, Some(f)) => {
            let plan = exp.sampling.build(n, t, exp.seed)?;
            let obs = eval::sample_signal(f, &plan, exp.noise_std, exp.seed)?;
            (plan, obs)
        }
        (None, None) => return Err(Error::config("truth", "either truth or observations is required")),
    };
    let kernel = exp.kernel.build(&graph)?;
    let estimate = exp.estimate(&graph, &kernel, &plan, &observations)?;
    if !estimate.is_finite() {
        return Err(Error::numerical(exp.estimator.to_string(), "non-finite estimate"));
    }
    let nmse = truth
        .as_ref()
        .map(|f| NmseSeries::of_estimate(f, &estimate, &plan))
        .transpose()?;
    Ok(RunOutput {
        graph,
        plan,
        observations,
        estimate,
        truth,
        nmse,
    })
}

/// Provenance of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    /// SHA-256 of each input.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each output file.
    pub outputs: BTreeMap<String, String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Synthetic or file-backed data for a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SweepData {
    /// A `k`-NN geometric graph (drifting when `drift > 0`) and a signal
    /// drawn from the time-varying kernel with `spatial` and bridge scale
    /// `s`, fresh per seed. The graph uses `graph_seed` when given.
    Synthetic {
        n: usize,
        t: usize,
        neighbors: usize,
        spatial: SpectralMap,
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        graph_seed: Option<u64>,
        #[serde(default)]
        drift: f64,
    },
    Files { graph: PathBuf, truth: PathBuf },
}

impl SweepData {
    /// Graph and truth for one seed.
    pub fn materialize(&self, seed: u64) -> Result<(TimeVaryingGraph, DMatrix<f64>)> {
        match self {
            SweepData::Synthetic {
                n,
                t,
                neighbors,
                spatial,
                s,
                graph_seed,
                drift,
            } => {
                let gs = graph_seed.unwrap_or(seed);
                let g = if *drift > 0.0 {
                    eval::drifting_geometric_graphs(*n, *neighbors, *t, *drift, gs)?
                } else {
                    TimeVaryingGraph::constant(eval::random_geometric_graph(*n, *neighbors, gs)?, *t)?
                };
                let truth = eval::generate_smooth_signal(&g, spatial, *s, seed)?;
                Ok((g, truth))
            }
            SweepData::Files { graph, truth } => {
                let f = io::read_matrix_csv(truth)?;
                let g = io::read_graph(graph, Some(f.ncols()))?;
                Ok((g, f))
            }
        }
    }
}

/// Axes of a sweep; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimator: Vec<EstimatorKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub data: SweepData,
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: SweepGrid,
    pub seeds: Vec<u64>,
}

fn axis<T: Clone>(v: &[T]) -> Vec<Option<T>> {
    if v.is_empty() {
        vec![None]
    } else {
        v.iter().cloned().map(Some).collect()
    }
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut spec: SweepSpec = serde_json::from_str(&text).map_err(|e| config_parse_error(&e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let SweepData::Files { graph, truth } = &mut spec.data {
            *graph = base.join(&*graph);
            *truth = base.join(&*truth);
        }
        spec.base.kernel.resolve(&base);
        Ok(spec)
    }

    /// Every grid cell, in a fixed order.
    pub fn configs(&self) -> Result<Vec<ExperimentConfig>> {
        let mut out = Vec::new();
        for est in axis(&self.grid.estimator) {
            for mu in axis(&self.grid.mu) {
                for s in axis(&self.grid.s) {
                    for m in axis(&self.grid.m) {
                        let mut c = self.base.clone();
                        if let Some(e) = est {
                            c.estimator = e;
                        }
                        if let Some(mu) = mu {
                            c.mu = mu;
                        }
                        if let Some(s) = s {
                            c.kernel = c.kernel.with_bridge_scale(s)?;
                        }
                        if let Some(m) = m {
                            c.sampling = c.sampling.with_size(m)?;
                        }
                        c.validate()?;
                        out.push(c);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Outcome of one (config, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub config_id: String,
    pub seed: u64,
    pub result: std::result::Result<NmseSeries, String>,
    pub wall_ms: f64,
}

impl SweepRun {
    /// CSV rows `config_id,seed,t,nmse,wall_ms`, one per slot.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        if let Ok(series) = &self.result {
            for (t, v) in series.values.iter().enumerate() {
                let nmse = v.map_or_else(|| "undefined".to_string(), io::fmt_f64);
                s.push_str(&format!("{},{},{},{},{:.3}\n", self.config_id, self.seed, t, nmse, self.wall_ms));
            }
        }
        s
    }
}

pub const SWEEP_CSV_HEADER: &str = "config_id,seed,t,nmse,wall_ms\n";

/// Results of a sweep, sorted by config id and seed.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub configs: BTreeMap<String, ExperimentConfig>,
    pub runs: Vec<SweepRun>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = SWEEP_CSV_HEADER.to_string();
        for r in &self.runs {
            s.push_str(&r.csv_rows());
        }
        s
    }

    /// Manifest JSON: config id to config, plus failed runs.
    pub fn manifest(&self) -> serde_json::Value {
        let failures: Vec<_> = self
            .runs
            .iter()
            .filter_map(|r| {
                r.result.as_ref().err().map(|e| {
                    serde_json::json!({"config_id": r.config_id, "seed": r.seed, "error": e})
                })
            })
            .collect();
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "configs": self.configs,
            "failures": failures,
        })
    }

    /// Mean and standard deviation of the final-slot NMSE per config,
    /// over the seeds where it is defined.
    pub fn final_nmse_summary(&self) -> BTreeMap<String, (f64, f64)> {
        let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &self.runs {
            if let Some(v) = r.result.as_ref().ok().and_then(NmseSeries::last) {
                by.entry(r.config_id.clone()).or_default().push(v);
            }
        }
        by.into_iter()
            .map(|(k, v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (k, (mean, var.sqrt()))
            })
            .collect()
    }

    /// Final-slot NMSE of one run.
    pub fn final_nmse(&self, config_id: &str, seed: u64) -> Option<f64> {
        self.runs
            .iter()
            .find(|r| r.config_id == config_id && r.seed == seed)
            .and_then(|r| r.result.as_ref().ok())
            .and_then(NmseSeries::last)
    }
}

/// Worker count from `GRAPHTIME_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("GRAPHTIME_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Runs every (config, seed) pair on a pool of `threads` workers
/// (`None`: `GRAPHTIME_THREADS`, else rayon's default). `on_run` sees
/// each run as it finishes. Failed runs are recorded, not fatal.
pub fn sweep(spec: &SweepSpec, threads: Option<usize>, on_run: &(dyn Fn(&SweepRun) + Sync)) -> Result<SweepReport> {
    let configs = spec.configs()?;
    let ids: Vec<String> = configs.iter().map(ExperimentConfig::config_id).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.or_else(threads_from_env) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;

    let runs = Mutex::new(Vec::new());
    pool.install(|| {
        spec.seeds.par_iter().for_each(|&seed| {
            let data = spec.data.materialize(seed);
            (0..configs.len()).into_par_iter().for_each(|c| {
                let start = Instant::now();
                let result = match &data {
                    Ok((g, truth)) => run_one(&configs[c], seed, g, truth).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("data generation: {e}")),
                };
                let run = SweepRun {
                    config_id: ids[c].clone(),
                    seed,
                    result,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                };
                on_run(&run);
                runs.lock().unwrap_or_else(|p| p.into_inner()).push(run);
            });
        });
    });
    let mut runs = runs.into_inner().unwrap_or_else(|p| p.into_inner());
    runs.sort_by(|a, b| (&a.config_id, a.seed).cmp(&(&b.config_id, b.seed)));
    Ok(SweepReport {
        configs: ids.into_iter().zip(configs).collect(),
        runs,
    })
}

fn run_one(cfg: &ExperimentConfig, seed: u64, g: &TimeVaryingGraph, truth: &DMatrix<f64>) -> Result<NmseSeries> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let (n, t) = (g.n_vertices(), g.n_slots());
    let plan = cfg.sampling.build(n, t, seed)?;
    let obs = eval::sample_signal(truth, &plan, cfg.noise_std, seed)?;
    let kernel = cfg.kernel.build(g)?;
    let est = cfg.estimate(g, &kernel, &plan, &obs)?;
    NmseSeries::of_estimate(truth, &est, &plan)
}
