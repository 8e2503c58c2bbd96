//! Batch and instantaneous kernel ridge regression on a synthetic signal.

use graphtime::estimators;
use graphtime::eval::{self, NmseSeries};
use graphtime::graph::TimeVaryingGraph;
use graphtime::kernels;
use graphtime::sampling::SamplingPlan;
use graphtime::spectral::SpectralMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> graphtime::Result<()> {
    let (n, t, m) = (20, 30, 8);
    let g = TimeVaryingGraph::constant(eval::random_geometric_graph(n, 4, 3)?, t)?;
    let map = SpectralMap::diffusion(1.0);
    let truth = eval::generate_smooth_signal(&g, &map, 5.0, 3)?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let plan = SamplingPlan::random_per_slot(n, t, m, &mut rng)?;
    let obs = eval::sample_signal(&truth, &plan, 0.05, 3)?;
    let mu = 1e-3;

    let kernel = kernels::timevarying_kernel_inverse_uniform(&g, &map, 5.0)?;
    let batch = estimators::batch_estimate(&obs, &plan, &kernel, mu)?;
    let spatial: Vec<_> = (0..t).map(|s| kernels::laplacian_kernel(&g.slot(s).laplacian(), &map)).collect::<graphtime::Result<_>>()?;
    let inst = estimators::instantaneous_estimates(&obs, &plan, &spatial, mu)?;

    for (name, est) in [("batch", &batch), ("instantaneous", &inst)] {
        let nmse = NmseSeries::of_estimate(&truth, est, &plan)?;
        println!("{name:<14} NMSE at t = {}: {:.4}", t - 1, nmse.last().unwrap_or(f64::NAN));
    }
    println!("batch objective {:.4}", estimators::batch_objective(&batch.stacked(), &obs, &plan, &kernel, mu)?);
    Ok(())
}
