//! Kernel Kalman filter on a drifting graph, compared with the online
//! closed form it reproduces.

use graphtime::estimators::OnlineClosedForm;
use graphtime::eval::{self, NmseSeries};
use graphtime::kernels;
use graphtime::kkf::{self, KkfSchedule};
use graphtime::sampling::SamplingPlan;
use graphtime::spectral::SpectralMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> graphtime::Result<()> {
    let (n, t, m) = (25, 40, 10);
    let g = eval::drifting_geometric_graphs(n, 4, t, 0.02, 5)?;
    let map = SpectralMap::diffusion(1.0);
    let truth = eval::generate_smooth_signal(&g, &map, 5.0, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let plan = SamplingPlan::random_fixed(n, t, m, &mut rng)?;
    let obs = eval::sample_signal(&truth, &plan, 0.1, 5)?;
    let mu = 0.01 / m as f64;

    let kernel = kernels::timevarying_kernel_inverse_uniform(&g, &map, 5.0)?;
    let schedule = KkfSchedule::from_kernel(&kernel)?;
    println!("schedule covers {:?} slots", schedule.horizon());

    let out = kkf::run_kkf(&kernel, &obs, &plan, mu)?;
    let closed = OnlineClosedForm::new(&kernel)?.filtered(&obs, &plan, mu)?;
    let diff = (0..t).map(|s| (out.estimate.slot(s) - closed.slot(s)).amax()).fold(0.0, f64::max);
    println!("max |KKF - closed form| = {diff:.2e}");

    let nmse = NmseSeries::of_estimate(&truth, &out.estimate, &plan)?;
    for s in (0..t).step_by(8) {
        println!("t = {s:>2}  NMSE {:.4}  trace M[t|t] {:.4}", nmse.values[s].unwrap_or(f64::NAN), out.errors[s].trace());
    }
    Ok(())
}
