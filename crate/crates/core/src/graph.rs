//! Static and time-varying graphs, Laplacians and extended graphs.
//!
//! An extended graph replicates every vertex once per time slot. Its
//! adjacency is an `NT x NT` matrix whose `t`-th diagonal `N x N` block is
//! the slot-`t` adjacency; the remaining blocks encode how replicas at
//! different slots are connected.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, BlockTridiagonal};

/// Absolute tolerance for the symmetry and sign checks on adjacency input.
pub const VALIDATION_TOL: f64 = 1e-9;

/// Undirected weighted graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
}

impl Graph {
    /// Validates and wraps an adjacency matrix.
    ///
    /// The matrix must be square, finite, symmetric and non-negative (to
    /// within [`VALIDATION_TOL`]) with a zero diagonal. Nothing is
    /// corrected silently; use [`symmetrize`] first for noisy input.
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        validate_adjacency(&adjacency)?;
        Ok(Self { adjacency })
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(&self.adjacency)
    }
}

fn validate_adjacency(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == 0 || !a.is_square() {
        return Err(Error::Dimension(format!(
            "adjacency must be a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(Error::Invalid(format!("adjacency entry ({i},{j}) is not finite")));
            }
            if v < -VALIDATION_TOL {
                return Err(Error::Invalid(format!("adjacency entry ({i},{j}) = {v} is negative")));
            }
            if i == j && v.abs() > VALIDATION_TOL {
                return Err(Error::Invalid(format!("adjacency has a self-loop at ({i},{i}) = {v}")));
            }
            if j > i && (v - a[(j, i)]).abs() > VALIDATION_TOL {
                return Err(Error::Invalid(format!(
                    "adjacency is not symmetric at row {i}, col {j}: {v} vs {}",
                    a[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Averages a matrix with its transpose, `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(a)
}

/// `L = diag(W·1) − W`.
pub fn laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&row_sums(w)) - w
}

/// Sequence of graphs over a common vertex set, one per time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingGraph {
    slots: Vec<Graph>,
}

impl TimeVaryingGraph {
    pub fn new(slots: Vec<Graph>) -> Result<Self> {
        let Some(first) = slots.first() else {
            return Err(Error::Dimension("time-varying graph needs at least one slot".into()));
        };
        let n = first.n_vertices();
        if let Some((t, g)) = slots.iter().enumerate().find(|(_, g)| g.n_vertices() != n) {
            return Err(Error::Dimension(format!(
                "slot {t} has {} vertices, slot 0 has {n}",
                g.n_vertices()
            )));
        }
        Ok(Self { slots })
    }

    pub fn from_adjacencies(adj: Vec<DMatrix<f64>>) -> Result<Self> {
        let slots = adj
            .into_iter()
            .enumerate()
            .map(|(t, a)| {
                Graph::new(a).map_err(|e| match e {
                    Error::Invalid(msg) => Error::Invalid(format!("slot {t}: {msg}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(slots)
    }

    /// The same graph repeated over `t` slots.
    pub fn constant(g: Graph, t: usize) -> Result<Self> {
        Self::new(vec![g; t])
    }

    pub fn n_vertices(&self) -> usize {
        self.slots[0].n_vertices()
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, t: usize) -> &Graph {
        &self.slots[t]
    }

    pub fn slots(&self) -> &[Graph] {
        &self.slots
    }

    pub fn laplacians(&self) -> Vec<DMatrix<f64>> {
        self.slots.iter().map(Graph::laplacian).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtendedStructure {
    BlockTridiagonal,
    KroneckerSum,
    General,
}

/// Graph over `N·T` vertex replicas, ordered slot by slot.
#[derive(Debug, Clone)]
pub struct ExtendedGraph {
    n_vertices: usize,
    n_slots: usize,
    adjacency: DMatrix<f64>,
    structure: ExtendedStructure,
}

impl ExtendedGraph {
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn structure(&self) -> ExtendedStructure {
        self.structure
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(&self.adjacency)
    }

    /// The `t`-th diagonal block, i.e. the slot-`t` spatial adjacency.
    pub fn slot_adjacency(&self, t: usize) -> DMatrix<f64> {
        linalg::block(&self.adjacency, self.n_vertices, t, t)
    }
}

fn check_bridges(g: &TimeVaryingGraph, bridges: &[DMatrix<f64>]) -> Result<()> {
    let n = g.n_vertices();
    let t = g.n_slots();
    if bridges.len() + 1 != t {
        return Err(Error::Dimension(format!(
            "{t} slots need {} bridge matrices, got {}",
            t - 1,
            bridges.len()
        )));
    }
    for (i, b) in bridges.iter().enumerate() {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::Dimension(format!(
                "bridge {} is {}x{}, expected {n}x{n}",
                i + 1,
                b.nrows(),
                b.ncols()
            )));
        }
        if let Some(v) = b.iter().find(|v| !v.is_finite() || **v < -VALIDATION_TOL) {
            return Err(Error::Invalid(format!("bridge {} has invalid entry {v}", i + 1)));
        }
    }
    Ok(())
}

/// Extended graph with slot adjacencies on the diagonal and bridge `k`
/// (connecting slot `k` to slot `k + 1`) on the first sub-diagonal, its
/// transpose on the super-diagonal.
///
/// `bridges[k]` is the bridge entering slot `k + 1`, so a graph with `T`
/// slots takes `T − 1` bridges.
pub fn extend_tridiagonal(g: &TimeVaryingGraph, bridges: &[DMatrix<f64>]) -> Result<ExtendedGraph> {
    check_bridges(g, bridges)?;
    let n = g.n_vertices();
    let diag = g.slots().iter().map(|s| s.adjacency().clone()).collect();
    let adjacency = BlockTridiagonal::new(diag, bridges.to_vec())?.to_dense();
    Ok(ExtendedGraph {
        n_vertices: n,
        n_slots: g.n_slots(),
        adjacency,
        structure: ExtendedStructure::BlockTridiagonal,
    })
}

/// Cartesian-product extension `W_T ⊕ W` of a time-invariant graph.
pub fn extend_kronecker_sum(g: &Graph, time_adjacency: &DMatrix<f64>) -> Result<ExtendedGraph> {
    validate_adjacency(time_adjacency)
        .map_err(|e| Error::Invalid(format!("time adjacency: {e}")))?;
    Ok(ExtendedGraph {
        n_vertices: g.n_vertices(),
        n_slots: time_adjacency.nrows(),
        adjacency: linalg::kron_sum(time_adjacency, g.adjacency()),
        structure: ExtendedStructure::KroneckerSum,
    })
}

/// Path-graph time adjacency: slots `t` and `t ± 1` are joined with weight 1.
pub fn path_adjacency(t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t, t, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
}

/// Temporal degree vectors `b[t]` of the bridge term.
///
/// `b[0] = B₁ᵀ1`, `b[t] = (B_{t+1}ᵀ + B_t)1` for interior slots and
/// `b[T−1] = B_{T−1}1`, where `B_k` is `bridges[k − 1]`.
pub(crate) fn bridge_degrees(n: usize, t: usize, bridges: &[DMatrix<f64>]) -> Vec<DVector<f64>> {
    let mut b = vec![DVector::zeros(n); t];
    for (k, bridge) in bridges.iter().enumerate() {
        // bridge k sits at block (k + 1, k)
        b[k + 1] += row_sums(bridge);
        b[k] += row_sums(&bridge.transpose());
    }
    b
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

/// Block-tridiagonal temporal term `btridiag{diag(b[t]); −B_t}`.
pub(crate) fn bridge_term(n: usize, t: usize, bridges: &[DMatrix<f64>]) -> BlockTridiagonal {
    let diag = bridge_degrees(n, t, bridges)
        .into_iter()
        .map(|b| DMatrix::from_diagonal(&b))
        .collect();
    let lower = bridges.iter().map(|b| -b).collect();
    BlockTridiagonal { diag, lower }
}

/// Laplacian of the block-tridiagonal extension of a time-varying graph:
/// `bdiag{L[t]} + btridiag{diag(b[t]); −B_t}`.
///
/// For diagonal bridges its quadratic form splits into the per-slot
/// spatial terms plus `Σ (f[t] − f[t−1])ᵀ B_t (f[t] − f[t−1])`.
pub fn extended_laplacian_timevarying(
    g: &TimeVaryingGraph,
    bridges: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    Ok(extended_laplacian_blocks(g, bridges)?.to_dense())
}

pub(crate) fn extended_laplacian_blocks(
    g: &TimeVaryingGraph,
    bridges: &[DMatrix<f64>],
) -> Result<BlockTridiagonal> {
    check_bridges(g, bridges)?;
    let n = g.n_vertices();
    let mut term = bridge_term(n, g.n_slots(), bridges);
    for (d, l) in term.diag.iter_mut().zip(g.laplacians()) {
        *d += l;
    }
    Ok(term)
}

/// `s·I` bridges for every slot transition.
pub fn scaled_identity_bridges(n: usize, t: usize, s: f64) -> Vec<DMatrix<f64>> {
    vec![DMatrix::identity(n, n) * s; t.saturating_sub(1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    #[test]
    fn laplacian_of_edge() {
        let l = laplacian(&pair());
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_of_empty_graph_is_zero() {
        let l = laplacian(&DMatrix::zeros(3, 3));
        assert_eq!(l, DMatrix::zeros(3, 3));
    }

    #[test]
    fn rejects_asymmetric_adjacency_with_location() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.5, 0.0]);
        let err = Graph::new(a).unwrap_err().to_string();
        assert!(err.contains("row 1, col 2"), "{err}");
    }

    #[test]
    fn rejects_negative_and_self_loops() {
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(Graph::new(neg).is_err());
        let lp = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(Graph::new(lp).is_err());
    }

    #[test]
    fn tolerance_admits_text_roundtrip_noise() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0 + 1e-12, 0.0]);
        assert!(Graph::new(a).is_ok());
    }

    #[test]
    fn extend_tridiagonal_single_slot() {
        let g = TimeVaryingGraph::from_adjacencies(vec![pair()]).unwrap();
        let ext = extend_tridiagonal(&g, &[]).unwrap();
        assert_eq!(ext.adjacency(), &pair());
    }

    #[test]
    fn extend_tridiagonal_two_slots_layout() {
        let g = TimeVaryingGraph::from_adjacencies(vec![pair(), pair()]).unwrap();
        let ext = extend_tridiagonal(&g, &[DMatrix::identity(2, 2)]).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 1.0, 0.0, //
                1.0, 0.0, 0.0, 1.0, //
                1.0, 0.0, 0.0, 1.0, //
                0.0, 1.0, 1.0, 0.0,
            ],
        );
        assert_eq!(ext.adjacency(), &expected);
        assert_eq!(ext.structure(), ExtendedStructure::BlockTridiagonal);
    }

    #[test]
    fn extend_tridiagonal_rejects_wrong_bridge_count() {
        let g = TimeVaryingGraph::from_adjacencies(vec![pair(), pair()]).unwrap();
        assert!(matches!(extend_tridiagonal(&g, &[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn kronecker_sum_without_time_edges_is_block_copies() {
        let g = Graph::new(pair()).unwrap();
        let ext = extend_kronecker_sum(&g, &DMatrix::zeros(3, 3)).unwrap();
        let expected = DMatrix::identity(3, 3).kronecker(&pair());
        assert_eq!(ext.adjacency(), &expected);
    }

    #[test]
    fn kronecker_sum_rejects_bad_time_adjacency() {
        let g = Graph::new(pair()).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(extend_kronecker_sum(&g, &bad).is_err());
    }

    #[test]
    fn timevarying_laplacian_single_slot_is_spatial() {
        let g = TimeVaryingGraph::from_adjacencies(vec![pair()]).unwrap();
        let l = extended_laplacian_timevarying(&g, &[]).unwrap();
        assert_eq!(l, laplacian(&pair()));
    }

    #[test]
    fn timevarying_laplacian_pure_chain() {
        let z = DMatrix::zeros(2, 2);
        let g = TimeVaryingGraph::from_adjacencies(vec![z.clone(), z.clone(), z]).unwrap();
        let l = extended_laplacian_timevarying(&g, &scaled_identity_bridges(2, 3, 1.0)).unwrap();
        let f = DVector::from_vec(vec![1.0, 2.0, 0.5, -1.0, 3.0, 3.0]);
        let direct = (0.5f64 - 1.0).powi(2) + (-1.0f64 - 2.0).powi(2) + (3.0f64 - 0.5).powi(2) + (3.0f64 + 1.0).powi(2);
        assert!((f.dot(&(&l * &f)) - direct).abs() < 1e-12);
    }

    #[test]
    fn bridge_degrees_three_cases() {
        let b1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let b2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 1.0, 0.0]);
        let deg = bridge_degrees(2, 3, &[b1.clone(), b2.clone()]);
        // first slot: B₂ᵀ1 in the 1-based naming, i.e. column sums of b1
        assert_eq!(deg[0], DVector::from_vec(vec![1.0, 5.0]));
        // interior: row sums of b1 + column sums of b2
        assert_eq!(deg[1], DVector::from_vec(vec![3.0 + 1.5, 3.0 + 0.0]));
        // last: row sums of b2
        assert_eq!(deg[2], DVector::from_vec(vec![0.5, 1.0]));
    }
}
