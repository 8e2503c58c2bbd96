//! Feeds a long observation stream through the steady-state filter, one
//! slot at a time, with a fixed state size.

use graphtime::eval;
use graphtime::graph::TimeVaryingGraph;
use graphtime::kernels;
use graphtime::kkf::{KkfSchedule, StreamingFilter};
use graphtime::spectral::SpectralMap;
use nalgebra::DVector;

fn main() -> graphtime::Result<()> {
    let n = 12;
    let g = eval::random_geometric_graph(n, 3, 2)?;
    let template = TimeVaryingGraph::constant(g, 3)?;
    let kernel = kernels::timevarying_kernel_inverse_uniform(&template, &SpectralMap::diffusion(1.0), 2.0)?;
    let schedule = KkfSchedule::steady_state(&kernel.inverse_blocks()?, 1e-13, 100_000)?;
    let mut filter = StreamingFilter::new(schedule, 1e-2);

    let indices = [0, 4, 8];
    for t in (0..5000).step_by(2) {
        // a slow oscillation seen at three vertices, every other slot
        let phase = t as f64 * 0.01;
        let y = DVector::from_fn(3, |i, _| (phase + i as f64).sin());
        let out = filter.push(t, &indices, &y)?;
        if t % 1000 == 0 {
            let (slot, est) = out.last().expect("push returns the requested slot");
            println!("t = {slot:>4}  f[0] = {:+.4}  observed {:+.4}", est[0], y[0]);
        }
    }
    println!("next slot {}", filter.next_slot());
    Ok(())
}
