//! Sampling plans and noisy observations.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-slot sets of observed vertices (0-based, strictly increasing).
///
/// Slots may be empty; such slots contribute nothing to the fitting term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    n_vertices: usize,
    slots: Vec<Vec<usize>>,
}

impl SamplingPlan {
    pub fn new(n_vertices: usize, slots: Vec<Vec<usize>>) -> Result<Self> {
        for (t, s) in slots.iter().enumerate() {
            if let Some(&bad) = s.iter().find(|&&i| i >= n_vertices) {
                return Err(Error::Invalid(format!(
                    "slot {t}: vertex index {bad} out of range for {n_vertices} vertices"
                )));
            }
            if s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid(format!(
                    "slot {t}: indices must be strictly increasing"
                )));
            }
        }
        Ok(Self { n_vertices, slots })
    }

    /// The same vertex set at every slot.
    pub fn time_invariant(n_vertices: usize, n_slots: usize, indices: Vec<usize>) -> Result<Self> {
        Self::new(n_vertices, vec![indices; n_slots])
    }

    /// Every vertex observed at every slot.
    pub fn full(n_vertices: usize, n_slots: usize) -> Self {
        Self {
            n_vertices,
            slots: vec![(0..n_vertices).collect(); n_slots],
        }
    }

    /// One uniformly drawn set of `m` vertices, used at every slot.
    pub fn random_fixed<R: Rng + ?Sized>(n_vertices: usize, n_slots: usize, m: usize, rng: &mut R) -> Result<Self> {
        if m > n_vertices {
            return Err(Error::Invalid(format!("cannot sample {m} of {n_vertices} vertices")));
        }
        let mut s = index::sample(rng, n_vertices, m).into_vec();
        s.sort_unstable();
        Self::time_invariant(n_vertices, n_slots, s)
    }

    /// An independent uniform draw of `m` vertices per slot.
    pub fn random_per_slot<R: Rng + ?Sized>(n_vertices: usize, n_slots: usize, m: usize, rng: &mut R) -> Result<Self> {
        if m > n_vertices {
            return Err(Error::Invalid(format!("cannot sample {m} of {n_vertices} vertices")));
        }
        let slots = (0..n_slots)
            .map(|_| {
                let mut s = index::sample(rng, n_vertices, m).into_vec();
                s.sort_unstable();
                s
            })
            .collect();
        Self::new(n_vertices, slots)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn indices(&self, t: usize) -> &[usize] {
        &self.slots[t]
    }

    pub fn slots(&self) -> &[Vec<usize>] {
        &self.slots
    }

    pub fn count(&self, t: usize) -> usize {
        self.slots[t].len()
    }

    pub fn total(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    /// Vertices not observed at slot `t`.
    pub fn complement(&self, t: usize) -> Vec<usize> {
        let mut mask = vec![true; self.n_vertices];
        for &i in &self.slots[t] {
            mask[i] = false;
        }
        (0..self.n_vertices).filter(|&i| mask[i]).collect()
    }

    /// Copy with every slot from `t` on emptied.
    pub fn truncated(&self, t: usize) -> Self {
        let slots = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| if i < t { s.clone() } else { Vec::new() })
            .collect();
        Self {
            n_vertices: self.n_vertices,
            slots,
        }
    }

    /// Copy extended with empty slots up to `n_slots`.
    pub fn padded(&self, n_slots: usize) -> Self {
        let mut slots = self.slots.clone();
        slots.resize(n_slots.max(slots.len()), Vec::new());
        Self {
            n_vertices: self.n_vertices,
            slots,
        }
    }

    /// The `M[t] x N` 0/1 selection matrix of slot `t`.
    pub fn selection_matrix(&self, t: usize) -> DMatrix<f64> {
        let s = &self.slots[t];
        let mut m = DMatrix::zeros(s.len(), self.n_vertices);
        for (r, &i) in s.iter().enumerate() {
            m[(r, i)] = 1.0;
        }
        m
    }
}

/// Noisy samples `y[t]` for a [`SamplingPlan`], plus per-slot fit weights.
///
/// The weight `d[t]` scales the slot's squared residual as `1 / d[t]`; it
/// defaults to the sample count `M[t]`, so that estimators solve the
/// per-slot-averaged least-squares fit. Kalman noise variances are
/// `μ·d[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    values: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl ObservationSet {
    pub fn new(plan: &SamplingPlan, values: Vec<DVector<f64>>) -> Result<Self> {
        let weights = (0..plan.n_slots()).map(|t| plan.count(t).max(1) as f64).collect();
        Self::with_weights(plan, values, weights)
    }

    pub fn with_weights(plan: &SamplingPlan, values: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != plan.n_slots() || weights.len() != plan.n_slots() {
            return Err(Error::Dimension(format!(
                "plan has {} slots, got {} value vectors and {} weights",
                plan.n_slots(),
                values.len(),
                weights.len()
            )));
        }
        for (t, y) in values.iter().enumerate() {
            if y.len() != plan.count(t) {
                return Err(Error::Dimension(format!(
                    "slot {t}: {} samples for {} sampled vertices",
                    y.len(),
                    plan.count(t)
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("slot {t}: non-finite sample")));
            }
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Invalid(format!("fit weights must be positive, got {w}")));
        }
        Ok(Self { values, weights })
    }

    pub fn n_slots(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self, t: usize) -> &DVector<f64> {
        &self.values[t]
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.weights[t]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Kalman observation-noise variances `v[t] = μ·d[t]`.
    pub fn noise_variances(&self, mu: f64) -> Vec<f64> {
        self.weights.iter().map(|w| mu * w).collect()
    }

    /// Copy with every slot from `t` on emptied (needs the matching plan).
    pub fn truncated(&self, t: usize) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| if i < t { v.clone() } else { DVector::zeros(0) })
            .collect();
        Self {
            values,
            weights: self.weights.clone(),
        }
    }

    /// Copy extended with empty slots (weight 1) up to `n_slots`.
    pub fn padded(&self, n_slots: usize) -> Self {
        let mut values = self.values.clone();
        let mut weights = self.weights.clone();
        values.resize(n_slots.max(values.len()), DVector::zeros(0));
        weights.resize(n_slots.max(weights.len()), 1.0);
        Self { values, weights }
    }
}
