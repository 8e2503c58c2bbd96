//! Dense linear-algebra helpers shared by the graph, kernel and filter code.
//!
//! Everything here works on `nalgebra` dynamic matrices. Space-time
//! quantities follow the time-major block layout: the vector of a
//! space-time signal stacks the `N` vertex values of slot 1, then slot 2,
//! and so on, so block `(t, t')` of an `NT x NT` matrix couples slot `t`
//! with slot `t'`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition numbers above this trigger a warning in the linear solves.
pub const CONDITION_WARN: f64 = 1e12;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// ascending.
///
/// Each eigenvector is normalised so that its first component whose
/// magnitude exceeds `1e-10` is positive, which fixes the sign ambiguity
/// and makes frequency indexing reproducible.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Eigenvectors stored as columns, in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "eigendecomposition needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                "eigendecomposition",
                "matrix has non-finite entries",
            ));
        }
        let n = m.nrows();
        let eig = SymmetricEigen::new(symmetrize(m));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut values = DVector::zeros(n);
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            values[dst] = eig.eigenvalues[src];
            let mut col = eig.eigenvectors.column(src).into_owned();
            if let Some(first) = col.iter().find(|v| v.abs() > 1e-10) {
                if *first < 0.0 {
                    col.neg_mut();
                }
            }
            vectors.set_column(dst, &col);
        }
        Ok(Self { values, vectors })
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        self.reconstruct_weights(&self.values.map(f))
    }

    /// `U diag(w) Uᵀ`.
    pub fn reconstruct_weights(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(weights);
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry `|m[i][j] - m[j][i]|`, with its location.
pub fn max_asymmetry(m: &DMatrix<f64>) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    worst
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && max_asymmetry(m).0 <= tol
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Kronecker sum `A ⊕ B = A ⊗ I + I ⊗ B` for square `A`, `B`.
pub fn kron_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ia = DMatrix::identity(a.nrows(), a.nrows());
    let ib = DMatrix::identity(b.nrows(), b.nrows());
    a.kronecker(&ib) + ia.kronecker(b)
}

/// Copy of the `(i, j)` block of size `n x n`.
pub fn block(m: &DMatrix<f64>, n: usize, i: usize, j: usize) -> DMatrix<f64> {
    m.view((i * n, j * n), (n, n)).into_owned()
}

pub fn set_block(m: &mut DMatrix<f64>, n: usize, i: usize, j: usize, b: &DMatrix<f64>) {
    m.view_mut((i * n, j * n), (n, n)).copy_from(b);
}

/// Number of non-zero block diagonals on either side of the main one.
///
/// A block is treated as zero when all its entries are at most
/// `rel_tol * max|m|` in magnitude. Block-diagonal matrices report 0.
pub fn block_bandwidth(m: &DMatrix<f64>, n: usize, rel_tol: f64) -> usize {
    let slots = m.nrows() / n;
    let scale = m.amax();
    let thresh = rel_tol * scale;
    let mut bw = 0;
    for i in 0..slots {
        for j in (i + 1)..slots {
            if j - i <= bw {
                continue;
            }
            let nonzero = m.view((i * n, j * n), (n, n)).iter().any(|v| v.abs() > thresh)
                || m.view((j * n, i * n), (n, n)).iter().any(|v| v.abs() > thresh);
            if nonzero {
                bw = j - i;
            }
        }
    }
    bw
}

/// Cholesky factorisation that reports what was being factorised on failure.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what}: matrix is not square")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Cheap condition estimate from a Cholesky factor: `(max l_ii / min l_ii)²`.
///
/// This is a lower bound on the 2-norm condition number; it is exact for
/// diagonal matrices and tracks near-singularity well enough for warnings.
pub fn cholesky_condition(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let n = l.nrows();
    if n == 0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (hi / lo).powi(2)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = cholesky(m, what)?;
    let cond = cholesky_condition(&chol);
    if cond > CONDITION_WARN {
        log::warn!("{what}: condition estimate {cond:.3e} exceeds {CONDITION_WARN:.0e}");
    }
    Ok(symmetrize(&chol.inverse()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Symmetric block-tridiagonal matrix stored by blocks.
///
/// `diag[t]` is block `(t, t)`; `lower[t]` is block `(t + 1, t)`, so the
/// super-diagonal block `(t, t + 1)` is `lower[t]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    pub lower: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn new(diag: Vec<DMatrix<f64>>, lower: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = diag.first() else {
            return Err(Error::Dimension("block-tridiagonal matrix needs at least one block".into()));
        };
        let n = first.nrows();
        if lower.len() + 1 != diag.len() {
            return Err(Error::Dimension(format!(
                "{} diagonal blocks need {} off-diagonal blocks, got {}",
                diag.len(),
                diag.len() - 1,
                lower.len()
            )));
        }
        for (t, b) in diag.iter().chain(lower.iter()).enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::Dimension(format!(
                    "block {t} is {}x{}, expected {n}x{n}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { diag, lower })
    }

    /// Extracts the tridiagonal band of a dense `NT x NT` matrix.
    pub fn from_dense(m: &DMatrix<f64>, n: usize) -> Result<Self> {
        if n == 0 || m.nrows() % n != 0 || !m.is_square() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix cannot be split into {n}x{n} blocks",
                m.nrows(),
                m.ncols()
            )));
        }
        let slots = m.nrows() / n;
        let diag = (0..slots).map(|t| block(m, n, t, t)).collect();
        let lower = (1..slots).map(|t| block(m, n, t, t - 1)).collect();
        Self::new(diag, lower)
    }

    pub fn block_size(&self) -> usize {
        self.diag[0].nrows()
    }

    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.block_size();
        let t = self.n_blocks();
        let mut m = DMatrix::zeros(n * t, n * t);
        for (i, d) in self.diag.iter().enumerate() {
            set_block(&mut m, n, i, i, d);
        }
        for (i, e) in self.lower.iter().enumerate() {
            set_block(&mut m, n, i + 1, i, e);
            set_block(&mut m, n, i, i + 1, &e.transpose());
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.block_size();
        let mut y = DVector::zeros(x.len());
        for t in 0..self.n_blocks() {
            let xt = x.rows(t * n, n);
            let mut yt = &self.diag[t] * xt;
            if t > 0 {
                yt += &self.lower[t - 1] * x.rows((t - 1) * n, n);
            }
            if t + 1 < self.n_blocks() {
                yt += self.lower[t].tr_mul(&x.rows((t + 1) * n, n));
            }
            y.rows_mut(t * n, n).copy_from(&yt);
        }
        y
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }
}

/// Block Cholesky factor `L` of a symmetric positive definite
/// block-tridiagonal matrix `A = L Lᵀ`, with `L` lower block-bidiagonal.
#[derive(Debug, Clone)]
pub struct BlockTridiagonalCholesky {
    /// Lower-triangular diagonal factors `L_tt`.
    diag: Vec<DMatrix<f64>>,
    /// Sub-diagonal factors `C_t = L_(t+1,t)`.
    lower: Vec<DMatrix<f64>>,
}

impl BlockTridiagonalCholesky {
    pub fn new(a: &BlockTridiagonal) -> Result<Self> {
        let mut diag: Vec<DMatrix<f64>> = Vec::with_capacity(a.n_blocks());
        let mut lower = Vec::with_capacity(a.lower.len());
        let l0 = cholesky(&a.diag[0], "block Cholesky, slot 0")?.unpack();
        diag.push(l0);
        for t in 1..a.n_blocks() {
            let prev = &diag[t - 1];
            // C_t L_{t-1}ᵀ = E_t  <=>  L_{t-1} C_tᵀ = E_tᵀ
            let ct_t = prev
                .solve_lower_triangular(&a.lower[t - 1].transpose())
                .ok_or_else(|| Error::numerical("block Cholesky", format!("singular factor at slot {}", t - 1)))?;
            let ct = ct_t.transpose();
            let schur = symmetrize(&(&a.diag[t] - &ct * &ct_t));
            let lt = cholesky(&schur, &format!("block Cholesky, slot {t}"))?.unpack();
            lower.push(ct);
            diag.push(lt);
        }
        Ok(Self { diag, lower })
    }

    /// Solves `Lᵀ x = w`. For white `w`, `x` has covariance `A⁻¹`.
    pub fn solve_upper(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.diag[0].nrows();
        let slots = self.diag.len();
        let mut x = DVector::zeros(n * slots);
        for t in (0..slots).rev() {
            let mut rhs: DVector<f64> = w.rows(t * n, n).into_owned();
            if t + 1 < slots {
                rhs -= self.lower[t].tr_mul(&x.rows((t + 1) * n, n));
            }
            let xt = self.diag[t]
                .tr_solve_lower_triangular(&rhs)
                .expect("Cholesky factor has a positive diagonal");
            x.rows_mut(t * n, n).copy_from(&xt);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_eigen_orders_and_fixes_signs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = SortedEigen::new(&m).unwrap();
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
        for c in 0..3 {
            let col = e.vectors.column(c);
            let first = col.iter().find(|v| v.abs() > 1e-10).unwrap();
            assert!(*first > 0.0);
        }
        let back = e.reconstruct_with(|x| x);
        assert!((back - m).amax() < 1e-12);
    }

    #[test]
    fn kron_sum_matches_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 2, &[5.0, 0.5, 0.5, 7.0]);
        let s = kron_sum(&a, &b);
        assert_eq!(s[(0, 0)], 6.0);
        assert_eq!(s[(0, 1)], 0.5);
        assert_eq!(s[(0, 2)], 2.0);
        assert_eq!(s[(3, 3)], 10.0);
    }

    #[test]
    fn bandwidth_detection() {
        let mut m = DMatrix::identity(6, 6);
        assert_eq!(block_bandwidth(&m, 2, 1e-12), 0);
        m[(2, 0)] = 0.3;
        m[(0, 2)] = 0.3;
        assert_eq!(block_bandwidth(&m, 2, 1e-12), 1);
        m[(5, 0)] = 0.1;
        m[(0, 5)] = 0.1;
        assert_eq!(block_bandwidth(&m, 2, 1e-12), 2);
    }

    #[test]
    fn block_tridiagonal_roundtrip_and_cholesky() {
        let d = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let e = DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -1.0]);
        let bt = BlockTridiagonal::new(vec![d.clone(), d.clone(), d], vec![e.clone(), e]).unwrap();
        let dense = bt.to_dense();
        assert_eq!(BlockTridiagonal::from_dense(&dense, 2).unwrap(), bt);

        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0, 2.0]);
        assert!((bt.mul_vec(&x) - &dense * &x).amax() < 1e-12);

        // Lᵀ x = w  =>  A x = L w
        let chol = BlockTridiagonalCholesky::new(&bt).unwrap();
        let w = DVector::from_vec(vec![0.3, -0.1, 1.0, 2.0, -0.5, 0.7]);
        let sol = chol.solve_upper(&w);
        let full = cholesky(&dense, "test").unwrap();
        let l = full.l();
        let expected = (l.transpose()).solve_upper_triangular(&w).unwrap();
        assert!((sol - expected).amax() < 1e-10);
    }
}
