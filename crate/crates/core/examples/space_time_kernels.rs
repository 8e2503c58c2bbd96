//! Constructs the kernel families on one small graph and prints their
//! block bandwidth and smallest eigenvalue.

use graphtime::eval;
use graphtime::graph::{self, TimeVaryingGraph};
use graphtime::kernels;
use graphtime::linalg::SortedEigen;
use graphtime::spectral::SpectralMap;
use nalgebra::DMatrix;

fn main() -> graphtime::Result<()> {
    let (n, t) = (6, 5);
    let g = eval::random_geometric_graph(n, 2, 7)?;
    let tv = TimeVaryingGraph::constant(g.clone(), t)?;
    let map = SpectralMap::diffusion(1.0);

    let report = |name: &str, k: &kernels::SpaceTimeKernel| {
        println!(
            "{name:<22} bandwidth {}  tridiagonal inverse {:<5}  min eigenvalue {:.3e}",
            k.block_bandwidth(),
            k.tridiagonal_inverse(),
            k.min_eigenvalue()
        );
    };

    report("time-varying (s = 1)", &kernels::timevarying_kernel_inverse_uniform(&tv, &map, 1.0)?);
    report("block-diagonal", &kernels::blockdiag_kernel_inverse(&tv, &map)?);

    let lt = graph::laplacian(&graph::path_adjacency(t));
    let kg = kernels::laplacian_kernel(&g.laplacian(), &map)?;
    let kt = kernels::laplacian_kernel(&lt, &SpectralMap::regularized_laplacian(2.0))?;
    report("kronecker product", &kernels::kronecker_product_kernel(&kt, &kg)?);

    let kinv_t = kernels::laplacian_kernel_inverse(&lt, &SpectralMap::shifted_identity(0.1))?;
    let kinv_g = kernels::laplacian_kernel_inverse(&g.laplacian(), &map)?;
    report("kronecker sum", &kernels::kronecker_sum_kernel_inverse(&kinv_t, &kinv_g)?);

    // low-pass in both time and space
    let ug = SortedEigen::new(&g.laplacian())?;
    let ut = SortedEigen::new(&lt)?;
    let w = DMatrix::from_fn(n, t, |i, j| 1.0 + ug.values[i] + 4.0 * ut.values[j]);
    report("doubly selective", &kernels::doubly_selective_kernel_inverse(&ut.vectors, &ug.vectors, &w)?);
    Ok(())
}
