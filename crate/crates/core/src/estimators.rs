//! Closed-form kernel ridge regression estimators.
//!
//! All three estimators minimise a fit term weighted per slot by `1/d[t]`
//! plus `μ f̄ᵀK̄⁻¹f̄`, and solve it through the representer form
//! `f̂ = K̄ S̄ᵀ (S̄ K̄ S̄ᵀ + μD)⁻¹ ȳ` with `D = bdiag{d[t] I}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SpaceTimeKernel;
use crate::linalg;
use crate::sampling::{ObservationSet, SamplingPlan};

/// Per-slot estimates `f̂[τ|t]`, `τ = 0..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimator: String,
    pub mu: f64,
    #[serde(skip)]
    pub slots: Vec<DVector<f64>>,
}

impl Estimate {
    pub fn new(estimator: impl Into<String>, mu: f64, slots: Vec<DVector<f64>>) -> Self {
        Self {
            estimator: estimator.into(),
            mu,
            slots,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, t: usize) -> &DVector<f64> {
        &self.slots[t]
    }

    /// `N x T` matrix with one column per slot.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.slots.first().map_or(0, DVector::len);
        DMatrix::from_fn(n, self.slots.len(), |i, t| self.slots[t][i])
    }

    /// Stacked vector `[f̂[0]; f̂[1]; …]`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.slots.first().map_or(0, DVector::len);
        let mut v = DVector::zeros(n * self.slots.len());
        for (t, s) in self.slots.iter().enumerate() {
            v.rows_mut(t * n, n).copy_from(s);
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn check_inputs(obs: &ObservationSet, plan: &SamplingPlan, n: usize, t: usize, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Invalid(format!("mu must be positive, got {mu}")));
    }
    if plan.n_vertices() != n || plan.n_slots() != t || obs.n_slots() != t {
        return Err(Error::Dimension(format!(
            "kernel is over {n} vertices x {t} slots, plan over {} x {}, observations over {} slots",
            plan.n_vertices(),
            plan.n_slots(),
            obs.n_slots()
        )));
    }
    Ok(())
}

/// `K[:, rows] (K[rows, rows] + diag(noise))⁻¹ y`.
pub(crate) fn representer_solve(
    k: &DMatrix<f64>,
    rows: &[usize],
    y: &DVector<f64>,
    noise: &DVector<f64>,
    stage: &str,
) -> Result<DVector<f64>> {
    if rows.is_empty() {
        return Ok(DVector::zeros(k.nrows()));
    }
    let m = rows.len();
    let mut gram = DMatrix::from_fn(m, m, |i, j| k[(rows[i], rows[j])]);
    for i in 0..m {
        gram[(i, i)] += noise[i];
    }
    let chol = linalg::cholesky(&gram, stage)
        .map_err(|_| Error::numerical(stage, "sampled Gram matrix plus noise is singular"))?;
    let cond = linalg::cholesky_condition(&chol);
    if cond > linalg::CONDITION_WARN {
        log::warn!("{stage}: condition estimate {cond:.3e} exceeds {:.0e}", linalg::CONDITION_WARN);
    }
    let alpha = chol.solve(y);
    let mut f = DVector::zeros(k.nrows());
    for (j, &r) in rows.iter().enumerate() {
        f.axpy(alpha[j], &k.column(r), 1.0);
    }
    Ok(f)
}

/// Single-slot KRR: minimiser of `‖y − S f‖²/d + μ fᵀK⁻¹f` for an `N x N`
/// kernel `K`. An empty slot yields the zero vector.
pub fn instantaneous_estimate(
    y: &DVector<f64>,
    indices: &[usize],
    kernel: &DMatrix<f64>,
    mu: f64,
    weight: f64,
) -> Result<DVector<f64>> {
    if y.len() != indices.len() {
        return Err(Error::Dimension(format!(
            "{} samples for {} indices",
            y.len(),
            indices.len()
        )));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= kernel.nrows()) {
        return Err(Error::Dimension(format!("index {i} outside a {}-vertex kernel", kernel.nrows())));
    }
    let noise = DVector::from_element(indices.len(), mu * weight);
    representer_solve(kernel, indices, y, &noise, "instantaneous estimate")
}

/// Runs [`instantaneous_estimate`] independently per slot, with kernel
/// `kernels[t]` at slot `t`.
pub fn instantaneous_estimates(
    obs: &ObservationSet,
    plan: &SamplingPlan,
    kernels: &[DMatrix<f64>],
    mu: f64,
) -> Result<Estimate> {
    let t = kernels.len();
    let n = kernels.first().map_or(0, DMatrix::nrows);
    check_inputs(obs, plan, n, t, mu)?;
    let slots = (0..t)
        .map(|s| instantaneous_estimate(obs.values(s), plan.indices(s), &kernels[s], mu, obs.weight(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::new("instantaneous", mu, slots))
}

fn stacked_rows(plan: &SamplingPlan, obs: &ObservationSet, mu: f64, upto: usize) -> (Vec<usize>, DVector<f64>, DVector<f64>) {
    let n = plan.n_vertices();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut noise = Vec::new();
    for t in 0..upto {
        for (j, &i) in plan.indices(t).iter().enumerate() {
            rows.push(t * n + i);
            y.push(obs.values(t)[j]);
            noise.push(mu * obs.weight(t));
        }
    }
    (rows, DVector::from_vec(y), DVector::from_vec(noise))
}

fn split(f: &DVector<f64>, n: usize, t: usize) -> Vec<DVector<f64>> {
    (0..t).map(|s| f.rows(s * n, n).into_owned()).collect()
}

/// Batch space-time KRR using every observation.
pub fn batch_estimate(obs: &ObservationSet, plan: &SamplingPlan, kernel: &SpaceTimeKernel, mu: f64) -> Result<Estimate> {
    let n = kernel.n_vertices();
    let t = kernel.n_slots();
    check_inputs(obs, plan, n, t, mu)?;
    let kbar = kernel.kernel_dense()?;
    let (rows, y, noise) = stacked_rows(plan, obs, mu, t);
    let f = representer_solve(&kbar, &rows, &y, &noise, "batch estimate")?;
    Ok(Estimate::new("batch", mu, split(&f, n, t)))
}

/// Growing-window KRR over a fixed horizon, re-solved from scratch at
/// every slot. Its per-slot cost grows cubically with the number of
/// samples seen so far.
#[derive(Debug, Clone)]
pub struct OnlineClosedForm {
    n: usize,
    t: usize,
    kbar: DMatrix<f64>,
}

impl OnlineClosedForm {
    pub fn new(kernel: &SpaceTimeKernel) -> Result<Self> {
        Ok(Self {
            n: kernel.n_vertices(),
            t: kernel.n_slots(),
            kbar: kernel.kernel_dense()?,
        })
    }

    /// Estimates `f̂[τ|t]` of every slot `τ` given observations in slots
    /// `0..=t`.
    pub fn estimate(&self, obs: &ObservationSet, plan: &SamplingPlan, mu: f64, t: usize) -> Result<Estimate> {
        check_inputs(obs, plan, self.n, self.t, mu)?;
        if t >= self.t {
            return Err(Error::Dimension(format!("slot {t} beyond horizon {}", self.t)));
        }
        let (rows, y, noise) = stacked_rows(plan, obs, mu, t + 1);
        let f = representer_solve(&self.kbar, &rows, &y, &noise, "online closed form")?;
        Ok(Estimate::new("online-closedform", mu, split(&f, self.n, self.t)))
    }

    /// The filtered sequence `f̂[t|t]` for every slot.
    pub fn filtered(&self, obs: &ObservationSet, plan: &SamplingPlan, mu: f64) -> Result<Estimate> {
        let slots = (0..self.t)
            .map(|t| self.estimate(obs, plan, mu, t).map(|e| e.slots[t].clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Estimate::new("online-closedform", mu, slots))
    }
}

/// One-shot [`OnlineClosedForm::estimate`].
pub fn online_closedform_estimate(
    obs: &ObservationSet,
    plan: &SamplingPlan,
    kernel: &SpaceTimeKernel,
    mu: f64,
    t: usize,
) -> Result<Estimate> {
    OnlineClosedForm::new(kernel)?.estimate(obs, plan, mu, t)
}

/// Batch objective `Σ_t ‖y[t] − S[t] f[t]‖² / d[t] + μ f̄ᵀK̄⁻¹f̄`.
pub fn batch_objective(
    f: &DVector<f64>,
    obs: &ObservationSet,
    plan: &SamplingPlan,
    kernel: &SpaceTimeKernel,
    mu: f64,
) -> Result<f64> {
    let n = plan.n_vertices();
    let mut fit = 0.0;
    for t in 0..plan.n_slots() {
        let r: f64 = plan
            .indices(t)
            .iter()
            .zip(obs.values(t).iter())
            .map(|(&i, &y)| (y - f[t * n + i]).powi(2))
            .sum();
        fit += r / obs.weight(t);
    }
    Ok(fit + mu * kernel.regularizer(f)?)
}
