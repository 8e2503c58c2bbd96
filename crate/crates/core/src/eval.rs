//! Observation synthesis, synthetic graphs and signals, and the
//! cumulative NMSE metric.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::graph::{Graph, TimeVaryingGraph};
use crate::kernels;
use crate::linalg::BlockTridiagonalCholesky;
use crate::sampling::{ObservationSet, SamplingPlan};
use crate::spectral::SpectralMap;

/// RNG stream reserved for observation noise, so that noise draws do not
/// shift when other consumers of the same seed change.
const NOISE_STREAM: u64 = 1;

/// `y[t] = truth[S[t], t] + e[t]` with i.i.d. `N(0, noise_std²)` noise.
pub fn sample_signal(truth: &DMatrix<f64>, plan: &SamplingPlan, noise_std: f64, seed: u64) -> Result<ObservationSet> {
    if truth.nrows() != plan.n_vertices() || truth.ncols() != plan.n_slots() {
        return Err(Error::Dimension(format!(
            "truth is {}x{}, plan covers {} vertices x {} slots",
            truth.nrows(),
            truth.ncols(),
            plan.n_vertices(),
            plan.n_slots()
        )));
    }
    let noise = Normal::new(0.0, noise_std)
        .map_err(|_| Error::Invalid(format!("noise std must be finite and >= 0, got {noise_std}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    let values = (0..plan.n_slots())
        .map(|t| {
            DVector::from_iterator(
                plan.count(t),
                plan.indices(t).iter().map(|&i| truth[(i, t)] + noise.sample(&mut rng)),
            )
        })
        .collect();
    ObservationSet::new(plan, values)
}

/// Cumulative NMSE over unobserved vertices of slots `0..=t`:
/// `Σ_τ ‖S^c[τ](f[τ] − f̂[τ])‖² / Σ_τ ‖S^c[τ] f[τ]‖²`.
///
/// `None` when the denominator is zero (e.g. every vertex sampled).
pub fn cumulative_nmse(
    truth: &DMatrix<f64>,
    estimates: &[DVector<f64>],
    plan: &SamplingPlan,
    t: usize,
) -> Result<Option<f64>> {
    let series = NmseSeries::compute(truth, estimates, plan)?;
    series
        .values
        .get(t)
        .copied()
        .ok_or_else(|| Error::Dimension(format!("slot {t} beyond horizon {}", series.values.len())))
}

/// Cumulative NMSE for every prefix of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseSeries {
    pub values: Vec<Option<f64>>,
}

impl NmseSeries {
    pub fn compute(truth: &DMatrix<f64>, estimates: &[DVector<f64>], plan: &SamplingPlan) -> Result<Self> {
        let n = plan.n_vertices();
        if truth.nrows() != n || truth.ncols() != plan.n_slots() || estimates.len() != plan.n_slots() {
            return Err(Error::Dimension(format!(
                "truth {}x{}, {} estimates, plan {} x {}",
                truth.nrows(),
                truth.ncols(),
                estimates.len(),
                n,
                plan.n_slots()
            )));
        }
        if let Some(bad) = estimates.iter().position(|e| e.len() != n) {
            return Err(Error::Dimension(format!("estimate for slot {bad} has wrong length")));
        }
        let mut num = 0.0;
        let mut den = 0.0;
        let mut values = Vec::with_capacity(plan.n_slots());
        for (tau, est) in estimates.iter().enumerate() {
            for i in plan.complement(tau) {
                let f = truth[(i, tau)];
                num += (f - est[i]).powi(2);
                den += f * f;
            }
            values.push((den > 0.0).then(|| num / den));
        }
        Ok(Self { values })
    }

    pub fn of_estimate(truth: &DMatrix<f64>, estimate: &Estimate, plan: &SamplingPlan) -> Result<Self> {
        Self::compute(truth, &estimate.slots, plan)
    }

    /// Value at the last slot.
    pub fn last(&self) -> Option<f64> {
        self.values.last().copied().flatten()
    }
}

/// `n` points uniform in the unit square, each joined to its `k` nearest
/// neighbours (symmetrised) with weight `exp(−d²/θ²)`, `θ` the mean
/// neighbour distance.
pub fn random_geometric_graph(n: usize, k: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    knn_graph(&pts, k)
}

/// A slowly drifting sequence of geometric graphs: every point moves by a
/// Gaussian step of std `drift` per slot (reflected into the unit square),
/// and the `k`-NN graph is rebuilt.
pub fn drifting_geometric_graphs(n: usize, k: usize, t: usize, drift: f64, seed: u64) -> Result<TimeVaryingGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut slots = Vec::with_capacity(t);
    for _ in 0..t {
        slots.push(knn_graph(&pts, k)?);
        for p in &mut pts {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            p.0 = reflect(p.0 + drift * dx);
            p.1 = reflect(p.1 + drift * dy);
        }
    }
    TimeVaryingGraph::new(slots)
}

fn reflect(x: f64) -> f64 {
    let y = x.rem_euclid(2.0);
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

fn knn_graph(pts: &[(f64, f64)], k: usize) -> Result<Graph> {
    let n = pts.len();
    if k == 0 || k >= n {
        return Err(Error::Invalid(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut edges = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(pts[i], pts[j]), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        edges.extend(others[..k].iter().map(|&(d, j)| (i, j, d)));
    }
    let theta = edges.iter().map(|e| e.2).sum::<f64>() / edges.len() as f64;
    let mut w = DMatrix::zeros(n, n);
    for (i, j, d) in edges {
        let v = (-(d / theta).powi(2)).exp();
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    Graph::new(w)
}

/// Draws `f̄ ~ N(0, K̄)` for the time-varying kernel with spatial map
/// `map` and `s·I` bridges, returned as an `N x T` matrix.
///
/// Uses a block Cholesky factor `K̄⁻¹ = LLᵀ` and `f̄ = L⁻ᵀw`, so the cost is
/// linear in `T` and the expected regularizer value is `NT`.
pub fn generate_smooth_signal(g: &TimeVaryingGraph, map: &SpectralMap, s: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(s > 0.0) {
        return Err(Error::Invalid(format!("temporal smoothness must be positive, got {s}")));
    }
    let kernel = kernels::timevarying_kernel_inverse_uniform(g, map, s)?;
    let chol = BlockTridiagonalCholesky::new(&kernel.inverse_blocks()?)?;
    let (n, t) = (g.n_vertices(), g.n_slots());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DVector::from_fn(n * t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let f = chol.solve_upper(&w);
    Ok(DMatrix::from_column_slice(n, t, f.as_slice()))
}
