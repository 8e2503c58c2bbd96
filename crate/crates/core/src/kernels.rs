//! Laplacian kernels and space-time kernel constructions.
//!
//! Space-time kernels are `NT x NT` matrices over the time-major stacking
//! of a signal. They are usually built and stored through their inverse,
//! since that is where temporal structure lives: the kernel Kalman filter
//! needs `K̄⁻¹` to be block tridiagonal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, TimeVaryingGraph};
use crate::linalg::{self, BlockTridiagonal, SortedEigen};
use crate::spectral::SpectralMap;

/// Symmetry tolerance for stored kernel matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Relative magnitude below which an off-band block counts as zero.
pub const BAND_TOL: f64 = 1e-10;
/// Orthogonality tolerance for doubly-selective transforms.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// `r(L) = U diag(r(λ)) Uᵀ`, the inverse of the Laplacian kernel.
pub fn laplacian_kernel_inverse(laplacian: &DMatrix<f64>, map: &SpectralMap) -> Result<DMatrix<f64>> {
    map.validate()?;
    let eig = SortedEigen::new(laplacian)?;
    let weights = eig
        .values
        .iter()
        .map(|&l| map.try_eval(l))
        .collect::<Result<Vec<_>>>()?;
    Ok(eig.reconstruct_weights(&DVector::from_vec(weights)))
}

/// The Laplacian kernel itself, `U diag(1 / r(λ)) Uᵀ`.
pub fn laplacian_kernel(laplacian: &DMatrix<f64>, map: &SpectralMap) -> Result<DMatrix<f64>> {
    map.validate()?;
    let eig = SortedEigen::new(laplacian)?;
    let weights = eig
        .values
        .iter()
        .map(|&l| map.try_eval(l).map(|r| 1.0 / r))
        .collect::<Result<Vec<_>>>()?;
    Ok(eig.reconstruct_weights(&DVector::from_vec(weights)))
}

/// Whether a kernel is stored as `K̄` or as `K̄⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixForm {
    Kernel,
    Inverse,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DMatrix<f64>),
    Tridiagonal(BlockTridiagonal),
}

/// Symmetric positive definite space-time kernel over `N` vertices and `T`
/// slots, with the structural metadata the online filter relies on.
#[derive(Debug, Clone)]
pub struct SpaceTimeKernel {
    n: usize,
    t: usize,
    form: MatrixForm,
    storage: Storage,
    block_bandwidth: usize,
}

fn check_square(m: &DMatrix<f64>, n: usize, what: &str) -> Result<usize> {
    if n == 0 || !m.is_square() || m.nrows() % n != 0 {
        return Err(Error::Dimension(format!(
            "{what}: {}x{} matrix is not made of {n}x{n} blocks",
            m.nrows(),
            m.ncols()
        )));
    }
    let (asym, i, j) = linalg::max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::Invalid(format!(
            "{what}: not symmetric at ({i},{j}), difference {asym:.3e}"
        )));
    }
    Ok(m.nrows() / n)
}

impl SpaceTimeKernel {
    /// Wraps an explicit inverse kernel `K̄⁻¹`. Its block bandwidth is
    /// detected numerically.
    pub fn from_inverse(n: usize, inverse: DMatrix<f64>) -> Result<Self> {
        let t = check_square(&inverse, n, "inverse kernel")?;
        let block_bandwidth = linalg::block_bandwidth(&inverse, n, BAND_TOL).max(1);
        Ok(Self {
            n,
            t,
            form: MatrixForm::Inverse,
            storage: Storage::Dense(inverse),
            block_bandwidth,
        })
    }

    /// Wraps an explicit kernel `K̄`. The bandwidth of its inverse is
    /// detected by inverting once.
    pub fn from_kernel(n: usize, kernel: DMatrix<f64>) -> Result<Self> {
        let t = check_square(&kernel, n, "kernel")?;
        let inv = linalg::spd_inverse(&kernel, "kernel")?;
        let block_bandwidth = linalg::block_bandwidth(&inv, n, BAND_TOL).max(1);
        Ok(Self {
            n,
            t,
            form: MatrixForm::Kernel,
            storage: Storage::Dense(kernel),
            block_bandwidth,
        })
    }

    /// Wraps a block-tridiagonal inverse kept in block form.
    pub fn from_inverse_blocks(blocks: BlockTridiagonal) -> Result<Self> {
        for (t, d) in blocks.diag.iter().enumerate() {
            let (asym, _, _) = linalg::max_asymmetry(d);
            if asym > SYMMETRY_TOL {
                return Err(Error::Invalid(format!("inverse kernel diagonal block {t} is not symmetric")));
            }
        }
        Ok(Self {
            n: blocks.block_size(),
            t: blocks.n_blocks(),
            form: MatrixForm::Inverse,
            storage: Storage::Tridiagonal(blocks),
            block_bandwidth: 1,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_slots(&self) -> usize {
        self.t
    }

    pub fn form(&self) -> MatrixForm {
        self.form
    }

    /// Number of non-zero block diagonals of `K̄⁻¹` on each side (at least 1).
    pub fn block_bandwidth(&self) -> usize {
        self.block_bandwidth
    }

    pub fn tridiagonal_inverse(&self) -> bool {
        self.block_bandwidth <= 1
    }

    /// The stored matrix, densified.
    pub fn stored_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Tridiagonal(b) => b.to_dense(),
        }
    }

    /// `K̄⁻¹` as a dense matrix.
    pub fn inverse_dense(&self) -> Result<DMatrix<f64>> {
        match (self.form, &self.storage) {
            (MatrixForm::Inverse, _) => Ok(self.stored_dense()),
            (MatrixForm::Kernel, Storage::Dense(k)) => linalg::spd_inverse(k, "kernel"),
            (MatrixForm::Kernel, Storage::Tridiagonal(_)) => unreachable!("kernels are never stored in block form"),
        }
    }

    /// `K̄` as a dense matrix, factorising the inverse when needed.
    pub fn kernel_dense(&self) -> Result<DMatrix<f64>> {
        match (self.form, &self.storage) {
            (MatrixForm::Kernel, Storage::Dense(k)) => Ok(k.clone()),
            (MatrixForm::Inverse, _) => linalg::spd_inverse(&self.stored_dense(), "inverse kernel"),
            (MatrixForm::Kernel, Storage::Tridiagonal(_)) => unreachable!("kernels are never stored in block form"),
        }
    }

    /// Same kernel, stored explicitly as `K̄`.
    pub fn to_kernel_form(&self) -> Result<Self> {
        Ok(Self {
            n: self.n,
            t: self.t,
            form: MatrixForm::Kernel,
            storage: Storage::Dense(self.kernel_dense()?),
            block_bandwidth: self.block_bandwidth,
        })
    }

    /// Diagonal and sub-diagonal blocks of `K̄⁻¹`.
    ///
    /// Fails unless the inverse is block tridiagonal.
    pub fn inverse_blocks(&self) -> Result<BlockTridiagonal> {
        if !self.tridiagonal_inverse() {
            return Err(Error::Invalid(format!(
                "inverse kernel has block bandwidth {}; lift it to bandwidth 1 first",
                self.block_bandwidth
            )));
        }
        match (&self.storage, self.form) {
            (Storage::Tridiagonal(b), _) => Ok(b.clone()),
            _ => BlockTridiagonal::from_dense(&self.inverse_dense()?, self.n),
        }
    }

    /// `f̄ᵀ K̄⁻¹ f̄`.
    pub fn regularizer(&self, f: &DVector<f64>) -> Result<f64> {
        match (&self.storage, self.form) {
            (Storage::Tridiagonal(b), _) => Ok(b.quad_form(f)),
            (Storage::Dense(m), MatrixForm::Inverse) => Ok(f.dot(&(m * f))),
            (Storage::Dense(k), MatrixForm::Kernel) => {
                let chol = linalg::cholesky(k, "kernel")?;
                Ok(f.dot(&chol.solve(f)))
            }
        }
    }

    /// Smallest eigenvalue of the stored matrix. Dense, so only meant for
    /// desk-scale sanity checks.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.stored_dense())
    }
}

fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !linalg::is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::Invalid(format!("{what} is not symmetric")));
    }
    linalg::cholesky(m, what).map(|_| ())
}

/// Separable kernel `K̄ = K_T ⊗ K_G`, stored explicitly.
///
/// The inverse is tridiagonal exactly when `K_T⁻¹` is, which is checked
/// on the small temporal factor.
pub fn kronecker_product_kernel(k_time: &DMatrix<f64>, k_space: &DMatrix<f64>) -> Result<SpaceTimeKernel> {
    require_spd(k_time, "temporal kernel factor")?;
    require_spd(k_space, "spatial kernel factor")?;
    let kt_inv = linalg::spd_inverse(k_time, "temporal kernel factor")?;
    let block_bandwidth = linalg::block_bandwidth(&kt_inv, 1, BAND_TOL).max(1);
    Ok(SpaceTimeKernel {
        n: k_space.nrows(),
        t: k_time.nrows(),
        form: MatrixForm::Kernel,
        storage: Storage::Dense(linalg::kron(k_time, k_space)),
        block_bandwidth,
    })
}

/// Additive kernel `K̄⁻¹ = K_T⁻¹ ⊕ K_G⁻¹`, stored as the inverse.
pub fn kronecker_sum_kernel_inverse(
    kinv_time: &DMatrix<f64>,
    kinv_space: &DMatrix<f64>,
) -> Result<SpaceTimeKernel> {
    require_spd(kinv_time, "temporal inverse kernel factor")?;
    require_spd(kinv_space, "spatial inverse kernel factor")?;
    let block_bandwidth = linalg::block_bandwidth(kinv_time, 1, BAND_TOL).max(1);
    Ok(SpaceTimeKernel {
        n: kinv_space.nrows(),
        t: kinv_time.nrows(),
        form: MatrixForm::Inverse,
        storage: Storage::Dense(linalg::kron_sum(kinv_time, kinv_space)),
        block_bandwidth,
    })
}

fn require_orthogonal(u: &DMatrix<f64>, what: &str) -> Result<()> {
    if !u.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    let err = (u.transpose() * u - DMatrix::identity(u.nrows(), u.nrows())).amax();
    if err > ORTHOGONALITY_TOL {
        return Err(Error::Invalid(format!("{what} is not orthogonal (error {err:.3e})")));
    }
    Ok(())
}

/// Doubly-selective kernel `K̄⁻¹ = (U_T ⊗ U_G) diag(vec R) (U_T ⊗ U_G)ᵀ`.
///
/// `weights` is `N x T`: entry `(n, t)` is the penalty on spatial
/// frequency `n` at temporal frequency `t`, and `vec` stacks its columns.
pub fn doubly_selective_kernel_inverse(
    u_time: &DMatrix<f64>,
    u_space: &DMatrix<f64>,
    weights: &DMatrix<f64>,
) -> Result<SpaceTimeKernel> {
    require_orthogonal(u_time, "temporal transform")?;
    require_orthogonal(u_space, "spatial transform")?;
    if weights.nrows() != u_space.nrows() || weights.ncols() != u_time.nrows() {
        return Err(Error::Dimension(format!(
            "weights must be {}x{}, got {}x{}",
            u_space.nrows(),
            u_time.nrows(),
            weights.nrows(),
            weights.ncols()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Invalid(format!("frequency weights must be positive, found {w}")));
    }
    let u = linalg::kron(u_time, u_space);
    let r = DVector::from_column_slice(weights.as_slice());
    let inv = linalg::symmetrize(&(&u * DMatrix::from_diagonal(&r) * u.transpose()));
    SpaceTimeKernel::from_inverse(u_space.nrows(), inv)
}

/// Kernel for time-varying topologies:
/// `K̄⁻¹ = bdiag{r_t(L[t])} + btridiag{diag(b[t]); −B_t}`.
///
/// One spectral map per slot; `bridges[k]` joins slot `k` to slot `k + 1`.
/// The result is kept in block form and is always block tridiagonal.
pub fn timevarying_kernel_inverse(
    g: &TimeVaryingGraph,
    maps: &[SpectralMap],
    bridges: &[DMatrix<f64>],
) -> Result<SpaceTimeKernel> {
    if maps.len() != g.n_slots() {
        return Err(Error::Dimension(format!(
            "{} slots need {} spectral maps, got {}",
            g.n_slots(),
            g.n_slots(),
            maps.len()
        )));
    }
    // validates bridges as a side effect
    graph::extend_tridiagonal(g, bridges)?;
    let n = g.n_vertices();
    let mut blocks = graph::bridge_term(n, g.n_slots(), bridges);
    for ((d, l), map) in blocks.diag.iter_mut().zip(g.laplacians()).zip(maps) {
        *d += laplacian_kernel_inverse(&l, map)?;
    }
    SpaceTimeKernel::from_inverse_blocks(blocks)
}

/// [`timevarying_kernel_inverse`] with one map for every slot and `s·I`
/// bridges.
pub fn timevarying_kernel_inverse_uniform(
    g: &TimeVaryingGraph,
    map: &SpectralMap,
    s: f64,
) -> Result<SpaceTimeKernel> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Invalid(format!("bridge scale must be >= 0, got {s}")));
    }
    let maps = vec![*map; g.n_slots()];
    let bridges = graph::scaled_identity_bridges(g.n_vertices(), g.n_slots(), s);
    timevarying_kernel_inverse(g, &maps, &bridges)
}

/// Block-diagonal inverse kernel `bdiag{r(L[t])}`: no temporal coupling.
pub fn blockdiag_kernel_inverse(g: &TimeVaryingGraph, map: &SpectralMap) -> Result<SpaceTimeKernel> {
    timevarying_kernel_inverse_uniform(g, map, 0.0)
}
