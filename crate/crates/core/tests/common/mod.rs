//! Shared generators and independent reference computations.
#![allow(dead_code)]

use graphtime::graph::{Graph, TimeVaryingGraph};
use graphtime::sampling::{ObservationSet, SamplingPlan};
use graphtime::spectral::SpectralMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// Erdős–Rényi graph with edge probability `p` and weights in [0.1, 2].
pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                let v = rng.random_range(0.1..2.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    w
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    Graph::new(random_adjacency(rng, n, 0.5)).unwrap()
}

pub fn random_tv_graph(rng: &mut ChaCha8Rng, n: usize, t: usize) -> TimeVaryingGraph {
    TimeVaryingGraph::new((0..t).map(|_| random_graph(rng, n)).collect()).unwrap()
}

/// Diffusion or regularized-Laplacian map with a random parameter.
pub fn random_map(rng: &mut ChaCha8Rng) -> SpectralMap {
    let sigma2 = rng.random_range(0.1..3.0);
    if rng.random_bool(0.5) {
        SpectralMap::diffusion(sigma2)
    } else {
        SpectralMap::regularized_laplacian(sigma2)
    }
}

/// Per-slot random sets, roughly a fifth of them empty.
pub fn random_plan(rng: &mut ChaCha8Rng, n: usize, t: usize) -> SamplingPlan {
    let slots = (0..t)
        .map(|_| {
            if rng.random_bool(0.2) {
                return Vec::new();
            }
            let m = rng.random_range(1..=n);
            let mut s = rand::seq::index::sample(rng, n, m).into_vec();
            s.sort_unstable();
            s
        })
        .collect();
    SamplingPlan::new(n, slots).unwrap()
}

pub fn random_obs(rng: &mut ChaCha8Rng, plan: &SamplingPlan) -> ObservationSet {
    let values = (0..plan.n_slots())
        .map(|t| DVector::from_fn(plan.count(t), |_, _| rng.random_range(-2.0..2.0)))
        .collect();
    ObservationSet::new(plan, values).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// A random SPD block-tridiagonal matrix `LLᵀ`, with `L` block lower
/// bidiagonal and well-conditioned diagonal blocks.
pub fn random_spd_block_tridiagonal(rng: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n * t, n * t);
    for b in 0..t {
        for i in 0..n {
            l[(b * n + i, b * n + i)] = rng.random_range(0.5..2.0);
            for j in 0..i {
                l[(b * n + i, b * n + j)] = rng.random_range(-0.5..0.5);
            }
            if b > 0 {
                for j in 0..n {
                    l[(b * n + i, (b - 1) * n + j)] = rng.random_range(-0.7..0.7);
                }
            }
        }
    }
    let m = &l * l.transpose();
    (&m + m.transpose()) * 0.5
}

/// `Σ_t ‖y[t] − S[t]f[t]‖²/d[t] + μ f̄ᵀK̄⁻¹f̄` minimised by solving the normal
/// equations `(S̄ᵀD⁻¹S̄ + μK̄⁻¹) f̄ = S̄ᵀD⁻¹ȳ` with an LU factorisation.
pub fn normal_equations(obs: &ObservationSet, plan: &SamplingPlan, kinv: &DMatrix<f64>, mu: f64) -> DVector<f64> {
    let n = plan.n_vertices();
    let mut a = kinv * mu;
    let mut rhs = DVector::zeros(kinv.nrows());
    for t in 0..plan.n_slots() {
        let d = obs.weight(t);
        for (j, &i) in plan.indices(t).iter().enumerate() {
            a[(t * n + i, t * n + i)] += 1.0 / d;
            rhs[t * n + i] += obs.values(t)[j] / d;
        }
    }
    a.lu().solve(&rhs).expect("normal equations are nonsingular")
}

/// `max_t ‖a[t] − b[t]‖∞ / (1 + ‖b[t]‖∞)`.
pub fn slotwise_error(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax() / (1.0 + y.amax()))
        .fold(0.0, f64::max)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant (Higham 2005).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
