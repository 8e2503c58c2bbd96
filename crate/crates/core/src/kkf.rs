//! Kernel Kalman filter: exact online KRR for block-tridiagonal inverse
//! kernels.
//!
//! When `K̄⁻¹ = btridiag{D[t]; E[t]}`, the online KRR objective can be
//! rewritten as a state-space least-squares problem with transition
//! matrices `P[t]` and plant-noise kernels `Q[t]`. [`KkfSchedule`] extracts
//! those by a backward recursion over the horizon, and [`KkfState::step`]
//! runs the familiar predict/correct cycle at `O(N³)` per slot,
//! independent of how many slots came before.
//!
//! Kernels whose inverse has block bandwidth `b > 1` are handled by
//! stacking `b` consecutive slots into one super-slot (see
//! [`lift_block_bandwidth`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::kernels::SpaceTimeKernel;
use crate::linalg::{self, BlockTridiagonal};
use crate::sampling::{ObservationSet, SamplingPlan};

/// Plant-noise kernels `Q[t]` and transitions `P[t]` of the filter.
///
/// A steady-state schedule stores only `Q[0]` and one repeated pair
/// `(Q, P)` used for every later slot, so it serves unbounded streams.
#[derive(Debug, Clone)]
pub struct KkfSchedule {
    plant: Vec<DMatrix<f64>>,
    plant_inv: Vec<DMatrix<f64>>,
    /// `transitions[k]` is `P[k + 1]`.
    transitions: Vec<DMatrix<f64>>,
    steady: bool,
}

impl KkfSchedule {
    /// Backward recursion from the blocks of `K̄⁻¹`:
    /// `Q⁻¹[T−1] = D[T−1]`, then for `t = T−1..1`:
    /// `P[t] = −Q[t]E[t]` and `Q⁻¹[t−1] = D[t−1] − P[t]ᵀQ⁻¹[t]P[t]`.
    ///
    /// Fails naming the slot whose `Q⁻¹` is not positive definite, which
    /// means the input was not positive definite.
    pub fn from_blocks(blocks: &BlockTridiagonal) -> Result<Self> {
        let t_len = blocks.n_blocks();
        let mut plant = vec![DMatrix::zeros(0, 0); t_len];
        let mut plant_inv = vec![DMatrix::zeros(0, 0); t_len];
        let mut transitions = vec![DMatrix::zeros(0, 0); t_len - 1];

        plant_inv[t_len - 1] = linalg::symmetrize(&blocks.diag[t_len - 1]);
        for t in (0..t_len).rev() {
            let q = invert_plant(&plant_inv[t], t)?;
            if t > 0 {
                let p = -(&q * &blocks.lower[t - 1]);
                let correction = p.transpose() * (&plant_inv[t] * &p);
                plant_inv[t - 1] = linalg::symmetrize(&(&blocks.diag[t - 1] - correction));
                transitions[t - 1] = p;
            }
            plant[t] = q;
        }
        Ok(Self {
            plant,
            plant_inv,
            transitions,
            steady: false,
        })
    }

    /// Schedule for a kernel whose inverse is block tridiagonal.
    pub fn from_kernel(kernel: &SpaceTimeKernel) -> Result<Self> {
        Self::from_blocks(&kernel.inverse_blocks()?)
    }

    /// Experimental steady-state schedule for time-invariant kernels.
    ///
    /// Uses block 0 as the first diagonal block, block 1 as the interior
    /// diagonal block, the last block as the terminal one and `lower[0]` as
    /// the off-diagonal block. Iterates `Q⁻¹ ← D_int − EᵀQE` from the
    /// terminal block until the update falls below `tol` (relative, max
    /// norm). The result is exact for slots far from the horizon end.
    pub fn steady_state(blocks: &BlockTridiagonal, tol: f64, max_iter: usize) -> Result<Self> {
        if blocks.n_blocks() < 3 {
            return Err(Error::Dimension("steady-state schedule needs a template with at least 3 slots".into()));
        }
        let first = &blocks.diag[0];
        let interior = &blocks.diag[1];
        let e = &blocks.lower[0];
        let mut q_inv = linalg::symmetrize(&blocks.diag[blocks.n_blocks() - 1]);
        let mut converged = false;
        for it in 0..max_iter {
            let q = invert_plant(&q_inv, it)?;
            let next = linalg::symmetrize(&(interior - e.transpose() * &q * e));
            let delta = (&next - &q_inv).amax() / next.amax().max(f64::MIN_POSITIVE);
            q_inv = next;
            if delta < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numerical(
                "steady-state schedule",
                format!("recursion did not converge in {max_iter} iterations"),
            ));
        }
        let q = invert_plant(&q_inv, 1)?;
        let p = -(&q * e);
        let q0_inv = linalg::symmetrize(&(first - p.transpose() * &q_inv * &p));
        let q0 = invert_plant(&q0_inv, 0)?;
        Ok(Self {
            plant: vec![q0, q],
            plant_inv: vec![q0_inv, q_inv],
            transitions: vec![p],
            steady: true,
        })
    }

    pub fn is_steady_state(&self) -> bool {
        self.steady
    }

    /// Number of slots covered, or `None` for a steady-state schedule.
    pub fn horizon(&self) -> Option<usize> {
        (!self.steady).then_some(self.plant.len())
    }

    pub fn n_vertices(&self) -> usize {
        self.plant[0].nrows()
    }

    /// `Q[t]`.
    pub fn plant(&self, t: usize) -> &DMatrix<f64> {
        &self.plant[t.min(self.plant.len() - 1)]
    }

    /// `Q⁻¹[t]`.
    pub fn plant_inv(&self, t: usize) -> &DMatrix<f64> {
        &self.plant_inv[t.min(self.plant_inv.len() - 1)]
    }

    /// `P[t]` for `t ≥ 1`.
    pub fn transition(&self, t: usize) -> &DMatrix<f64> {
        assert!(t >= 1, "slot 0 has no transition");
        &self.transitions[(t - 1).min(self.transitions.len() - 1)]
    }

    /// Rebuilds the blocks of `K̄⁻¹` from the schedule:
    /// `D[T−1] = Q⁻¹[T−1]`, `D[t−1] = Q⁻¹[t−1] + P[t]ᵀQ⁻¹[t]P[t]`,
    /// `E[t] = −Q⁻¹[t]P[t]`.
    pub fn to_inverse_blocks(&self) -> Result<BlockTridiagonal> {
        if self.steady {
            return Err(Error::Invalid("steady-state schedules have no finite horizon".into()));
        }
        let t_len = self.plant.len();
        let mut diag = self.plant_inv.clone();
        let mut lower = Vec::with_capacity(t_len - 1);
        for t in 1..t_len {
            let p = &self.transitions[t - 1];
            diag[t - 1] += p.transpose() * &self.plant_inv[t] * p;
            lower.push(-(&self.plant_inv[t] * p));
        }
        BlockTridiagonal::new(diag, lower)
    }

    /// `f[0]ᵀQ⁻¹[0]f[0] + Σ_{t≥1} (f[t] − P[t]f[t−1])ᵀQ⁻¹[t](f[t] − P[t]f[t−1])`,
    /// which equals `f̄ᵀK̄⁻¹f̄` for the kernel the schedule came from.
    pub fn state_space_energy(&self, f: &DVector<f64>) -> f64 {
        let n = self.n_vertices();
        let t_len = f.len() / n;
        let f0 = f.rows(0, n);
        let mut acc = f0.dot(&(self.plant_inv(0) * f0));
        for t in 1..t_len {
            let r = f.rows(t * n, n) - self.transition(t) * f.rows((t - 1) * n, n);
            acc += r.dot(&(self.plant_inv(t) * &r));
        }
        acc
    }
}

fn invert_plant(q_inv: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    let chol = linalg::cholesky(q_inv, &format!("Q⁻¹ at slot {t}")).map_err(|_| {
        Error::NotPositiveDefinite(format!(
            "Q⁻¹ at slot {t}: the inverse kernel is not positive definite or not block tridiagonal"
        ))
    })?;
    Ok(linalg::symmetrize(&chol.inverse()))
}

/// Observations of one slot as consumed by the filter.
#[derive(Debug, Clone, Copy)]
pub struct SlotObservation<'a> {
    pub indices: &'a [usize],
    pub values: &'a DVector<f64>,
    /// Per-sample noise variances (all equal to `v[t]` for ordinary slots).
    pub noise: &'a DVector<f64>,
}

/// Filter state after processing a slot.
#[derive(Debug, Clone)]
pub struct KkfState {
    /// Slot of the last posterior, `None` before the first step.
    pub t: Option<usize>,
    /// `f̂[t|t]`.
    pub f_post: DVector<f64>,
    /// `f̂[t|t−1]`.
    pub f_pred: DVector<f64>,
    /// `M[t|t]`.
    pub m_post: DMatrix<f64>,
    /// `M[t|t−1]`.
    pub m_pred: DMatrix<f64>,
    /// `G[t]`, `N x M[t]` (empty for unobserved slots).
    pub gain: DMatrix<f64>,
}

impl KkfState {
    /// `f̂[0|0] = 0`, `M[0|0] = 0`.
    pub fn initial(n: usize) -> Self {
        Self {
            t: None,
            f_post: DVector::zeros(n),
            f_pred: DVector::zeros(n),
            m_post: DMatrix::zeros(n, n),
            m_pred: DMatrix::zeros(n, n),
            gain: DMatrix::zeros(n, 0),
        }
    }

    pub fn next_slot(&self) -> usize {
        self.t.map_or(0, |t| t + 1)
    }

    /// One predict/correct cycle for the next slot.
    ///
    /// Unobserved slots skip the correction: the posterior equals the
    /// prediction. Error matrices are re-symmetrised after every update.
    pub fn step(&self, schedule: &KkfSchedule, obs: SlotObservation<'_>) -> Result<KkfState> {
        let t = self.next_slot();
        if let Some(h) = schedule.horizon() {
            if t >= h {
                return Err(Error::Dimension(format!("slot {t} beyond schedule horizon {h}")));
            }
        }
        let n = schedule.n_vertices();
        let m = obs.indices.len();
        if obs.values.len() != m || obs.noise.len() != m {
            return Err(Error::Dimension(format!(
                "slot {t}: {m} indices, {} values, {} noise variances",
                obs.values.len(),
                obs.noise.len()
            )));
        }
        if let Some(&i) = obs.indices.iter().find(|&&i| i >= n) {
            return Err(Error::Dimension(format!("slot {t}: vertex {i} out of range")));
        }

        let (f_pred, m_pred) = if t == 0 {
            (DVector::zeros(n), schedule.plant(0).clone())
        } else {
            let p = schedule.transition(t);
            let fp = p * &self.f_post;
            let mp = p * &self.m_post * p.transpose() + schedule.plant(t);
            (fp, linalg::symmetrize(&mp))
        };

        if m == 0 {
            return Ok(KkfState {
                t: Some(t),
                f_post: f_pred.clone(),
                f_pred,
                m_post: m_pred.clone(),
                m_pred,
                gain: DMatrix::zeros(n, 0),
            });
        }

        let idx = obs.indices;
        // M Sᵀ and v I + S M Sᵀ
        let ms = DMatrix::from_fn(n, m, |i, j| m_pred[(i, idx[j])]);
        let mut innovation = DMatrix::from_fn(m, m, |i, j| m_pred[(idx[i], idx[j])]);
        for (i, v) in obs.noise.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::Invalid(format!("slot {t}: noise variance must be positive, got {v}")));
            }
            innovation[(i, i)] += v;
        }
        let chol = linalg::cholesky(&innovation, "innovation matrix")
            .map_err(|_| Error::numerical("kkf step", format!("singular innovation matrix at slot {t}")))?;
        let gain = chol.solve(&ms.transpose()).transpose();

        let residual = DVector::from_fn(m, |j, _| obs.values[j] - f_pred[idx[j]]);
        let f_post = &f_pred + &gain * residual;
        let m_post = linalg::symmetrize(&(&m_pred - &gain * ms.transpose()));

        Ok(KkfState {
            t: Some(t),
            f_post,
            f_pred,
            m_post,
            m_pred,
            gain,
        })
    }
}

/// Everything the filter produces over a run.
#[derive(Debug, Clone)]
pub struct KkfOutput {
    /// `f̂[t|t]` per slot.
    pub estimate: Estimate,
    /// `f̂[t|t−1]` per slot.
    pub predictions: Vec<DVector<f64>>,
    /// `M[t|t]` per slot.
    pub errors: Vec<DMatrix<f64>>,
}

/// Runs the filter over per-slot observations with per-sample noise.
pub fn filter_slots<'a>(
    schedule: &KkfSchedule,
    slots: impl IntoIterator<Item = SlotObservation<'a>>,
    mu: f64,
) -> Result<KkfOutput> {
    let mut state = KkfState::initial(schedule.n_vertices());
    let mut est = Vec::new();
    let mut predictions = Vec::new();
    let mut errors = Vec::new();
    for obs in slots {
        state = state.step(schedule, obs)?;
        est.push(state.f_post.clone());
        predictions.push(state.f_pred.clone());
        errors.push(state.m_post.clone());
    }
    Ok(KkfOutput {
        estimate: Estimate::new("kkf", mu, est),
        predictions,
        errors,
    })
}

fn per_sample_noise(plan: &SamplingPlan, noise: &[f64]) -> Vec<DVector<f64>> {
    (0..plan.n_slots())
        .map(|t| DVector::from_element(plan.count(t), noise[t]))
        .collect()
}

/// Filters with a precomputed schedule and per-slot noise variances `v[t]`.
pub fn run_with_schedule(
    schedule: &KkfSchedule,
    obs: &ObservationSet,
    plan: &SamplingPlan,
    noise: &[f64],
    mu: f64,
) -> Result<KkfOutput> {
    if noise.len() != plan.n_slots() || obs.n_slots() != plan.n_slots() {
        return Err(Error::Dimension(format!(
            "{} slots in plan, {} in observations, {} noise variances",
            plan.n_slots(),
            obs.n_slots(),
            noise.len()
        )));
    }
    let noise_vecs = per_sample_noise(plan, noise);
    let slots = (0..plan.n_slots()).map(|t| SlotObservation {
        indices: plan.indices(t),
        values: obs.values(t),
        noise: &noise_vecs[t],
    });
    filter_slots(schedule, slots, mu)
}

/// Runs the kernel Kalman filter with the default noise `v[t] = μ·d[t]`,
/// which makes `f̂[t|t]` the exact online KRR estimate.
///
/// Kernels whose inverse has block bandwidth above one are lifted first;
/// see [`run_kkf_with_noise`].
pub fn run_kkf(kernel: &SpaceTimeKernel, obs: &ObservationSet, plan: &SamplingPlan, mu: f64) -> Result<KkfOutput> {
    run_kkf_with_noise(kernel, obs, plan, &obs.noise_variances(mu), mu)
}

/// [`run_kkf`] with explicit per-slot noise variances.
///
/// For bandwidth `b > 1` the output slot `t` in super-slot `τ = t / b`
/// holds the estimate of `f[t]` given all observations up to the end of
/// super-slot `τ`, and the error matrices are the matching diagonal blocks.
pub fn run_kkf_with_noise(
    kernel: &SpaceTimeKernel,
    obs: &ObservationSet,
    plan: &SamplingPlan,
    noise: &[f64],
    mu: f64,
) -> Result<KkfOutput> {
    if plan.n_vertices() != kernel.n_vertices() || plan.n_slots() != kernel.n_slots() {
        return Err(Error::Dimension(format!(
            "kernel over {} x {}, plan over {} x {}",
            kernel.n_vertices(),
            kernel.n_slots(),
            plan.n_vertices(),
            plan.n_slots()
        )));
    }
    if kernel.tridiagonal_inverse() {
        let schedule = KkfSchedule::from_kernel(kernel)?;
        return run_with_schedule(&schedule, obs, plan, noise, mu);
    }
    let lifted = lift_block_bandwidth(kernel, obs, plan, noise)?;
    let out = lifted.run(mu)?;
    Ok(lifted.unstack(&out))
}

/// A problem re-expressed over super-slots of `b` consecutive slots, so
/// that a bandwidth-`b` inverse kernel becomes block tridiagonal.
#[derive(Debug, Clone)]
pub struct LiftedProblem {
    pub bandwidth: usize,
    pub original_slots: usize,
    pub n_vertices: usize,
    pub kernel: SpaceTimeKernel,
    pub plan: SamplingPlan,
    pub values: Vec<DVector<f64>>,
    pub noise: Vec<DVector<f64>>,
}

/// Stacks `b` consecutive slots into super-slots, with `b` the block
/// bandwidth of `K̄⁻¹`.
///
/// Observations are concatenated and the sampling sets shifted into the
/// stacked vertex range. If `T` is not a multiple of `b`, trailing empty
/// slots are appended and decoupled from the rest with an identity
/// inverse-kernel block, which leaves every estimate unchanged.
pub fn lift_block_bandwidth(
    kernel: &SpaceTimeKernel,
    obs: &ObservationSet,
    plan: &SamplingPlan,
    noise: &[f64],
) -> Result<LiftedProblem> {
    let b = kernel.block_bandwidth();
    let n = kernel.n_vertices();
    let t_len = kernel.n_slots();
    if b > t_len {
        return Err(Error::Invalid(format!("block bandwidth {b} exceeds horizon {t_len}")));
    }
    if noise.len() != t_len || obs.n_slots() != t_len || plan.n_slots() != t_len {
        return Err(Error::Dimension("slot counts of kernel, plan, observations and noise differ".into()));
    }
    let supers = t_len.div_ceil(b);
    let padded = supers * b;

    let inv = kernel.inverse_dense()?;
    let mut big = DMatrix::identity(padded * n, padded * n);
    big.view_mut((0, 0), (t_len * n, t_len * n)).copy_from(&inv);
    let lifted_kernel = SpaceTimeKernel::from_inverse(b * n, big)?;
    if !lifted_kernel.tridiagonal_inverse() {
        return Err(Error::numerical(
            "bandwidth lifting",
            format!("lifted kernel still has block bandwidth {}", lifted_kernel.block_bandwidth()),
        ));
    }

    let mut slots = Vec::with_capacity(supers);
    let mut values = Vec::with_capacity(supers);
    let mut noise_vecs = Vec::with_capacity(supers);
    for tau in 0..supers {
        let mut idx = Vec::new();
        let mut y = Vec::new();
        let mut v = Vec::new();
        for k in 0..b {
            let t = tau * b + k;
            if t >= t_len {
                break;
            }
            idx.extend(plan.indices(t).iter().map(|i| k * n + i));
            y.extend(obs.values(t).iter().copied());
            v.extend(std::iter::repeat_n(noise[t], plan.count(t)));
        }
        slots.push(idx);
        values.push(DVector::from_vec(y));
        noise_vecs.push(DVector::from_vec(v));
    }
    Ok(LiftedProblem {
        bandwidth: b,
        original_slots: t_len,
        n_vertices: n,
        kernel: lifted_kernel,
        plan: SamplingPlan::new(b * n, slots)?,
        values,
        noise: noise_vecs,
    })
}

impl LiftedProblem {
    /// Filters over the super-slots.
    pub fn run(&self, mu: f64) -> Result<KkfOutput> {
        let schedule = KkfSchedule::from_kernel(&self.kernel)?;
        let slots = (0..self.plan.n_slots()).map(|tau| SlotObservation {
            indices: self.plan.indices(tau),
            values: &self.values[tau],
            noise: &self.noise[tau],
        });
        filter_slots(&schedule, slots, mu)
    }

    /// Splits super-slot output back into the original slots, dropping
    /// padding.
    pub fn unstack(&self, out: &KkfOutput) -> KkfOutput {
        let n = self.n_vertices;
        let b = self.bandwidth;
        let mut est = Vec::with_capacity(self.original_slots);
        let mut pred = Vec::with_capacity(self.original_slots);
        let mut errs = Vec::with_capacity(self.original_slots);
        for t in 0..self.original_slots {
            let (tau, k) = (t / b, t % b);
            est.push(out.estimate.slots[tau].rows(k * n, n).into_owned());
            pred.push(out.predictions[tau].rows(k * n, n).into_owned());
            errs.push(out.errors[tau].view((k * n, k * n), (n, n)).into_owned());
        }
        KkfOutput {
            estimate: Estimate::new("kkf", out.estimate.mu, est),
            predictions: pred,
            errors: errs,
        }
    }
}

/// Slot-by-slot filter for streams of observations.
///
/// Holds a single [`KkfState`], so memory does not grow with the number
/// of slots processed.
#[derive(Debug, Clone)]
pub struct StreamingFilter {
    schedule: KkfSchedule,
    state: KkfState,
    mu: f64,
    fixed_noise: Option<f64>,
}

impl StreamingFilter {
    /// Slots with `M` samples get noise variance `μ·max(M, 1)`, the same
    /// default as [`run_kkf`].
    pub fn new(schedule: KkfSchedule, mu: f64) -> Self {
        let n = schedule.n_vertices();
        Self {
            schedule,
            state: KkfState::initial(n),
            mu,
            fixed_noise: None,
        }
    }

    /// Uses variance `v` for every sample instead.
    pub fn with_fixed_noise(mut self, v: f64) -> Self {
        self.fixed_noise = Some(v);
        self
    }

    pub fn next_slot(&self) -> usize {
        self.state.next_slot()
    }

    pub fn state(&self) -> &KkfState {
        &self.state
    }

    /// Advances to slot `t`, treating skipped slots as unobserved, and
    /// returns `(slot, f̂[slot|slot])` for every slot advanced through.
    pub fn push(&mut self, t: usize, indices: &[usize], values: &DVector<f64>) -> Result<Vec<(usize, DVector<f64>)>> {
        if t < self.next_slot() {
            return Err(Error::Invalid("non-monotone slot".into()));
        }
        let mut out = Vec::with_capacity(t + 1 - self.next_slot());
        let empty = DVector::zeros(0);
        let mut state = self.state.clone();
        while state.next_slot() < t {
            state = state.step(
                &self.schedule,
                SlotObservation {
                    indices: &[],
                    values: &empty,
                    noise: &empty,
                },
            )?;
            out.push((state.t.unwrap_or(0), state.f_post.clone()));
        }
        let v = self.fixed_noise.unwrap_or(self.mu * indices.len().max(1) as f64);
        let noise = DVector::from_element(indices.len(), v);
        state = state.step(
            &self.schedule,
            SlotObservation {
                indices,
                values,
                noise: &noise,
            },
        )?;
        out.push((t, state.f_post.clone()));
        self.state = state;
        Ok(out)
    }
}
