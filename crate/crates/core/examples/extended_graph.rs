//! Builds the extended graph of a three-slot time-varying graph and checks
//! that its Laplacian quadratic form splits into spatial and temporal terms.

use graphtime::graph::{self, TimeVaryingGraph};
use nalgebra::{DMatrix, DVector};

fn main() -> graphtime::Result<()> {
    // a triangle that loses one edge in the middle slot
    let full = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
    let mut cut = full.clone();
    cut[(0, 2)] = 0.0;
    cut[(2, 0)] = 0.0;
    let g = TimeVaryingGraph::from_adjacencies(vec![full.clone(), cut, full])?;

    let bridges = graph::scaled_identity_bridges(3, 3, 0.5);
    let ext = graph::extend_tridiagonal(&g, &bridges)?;
    println!("extended adjacency ({:?}):{}", ext.structure(), ext.adjacency());

    let f = DVector::from_vec(vec![1.0, 0.0, -1.0, 1.0, 0.5, -1.0, 0.0, 0.5, -0.5]);
    let total = f.dot(&(ext.laplacian() * &f));
    let spatial: f64 = (0..3)
        .map(|t| {
            let ft = f.rows(t * 3, 3);
            ft.dot(&(g.slot(t).laplacian() * ft))
        })
        .sum();
    println!("f'Lf = {total:.4}, spatial part {spatial:.4}, temporal part {:.4}", total - spatial);

    let ks = graph::extend_kronecker_sum(g.slot(0), &graph::path_adjacency(3))?;
    println!("Kronecker-sum extension of slot 0 has {} vertices", ks.adjacency().nrows());
    Ok(())
}
