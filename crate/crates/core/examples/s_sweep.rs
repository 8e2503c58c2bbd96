//! Sweeps the bridge weight `s` on synthetic data and prints the mean final
//! NMSE per value.

use graphtime::experiment::{self, ExperimentConfig, SweepData, SweepGrid, SweepSpec};

fn main() -> graphtime::Result<()> {
    let base: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "estimator": "kkf",
        "kernel": {
            "type": "timevarying",
            "spatial": {"family": "diffusion", "sigma2": 1.0},
            "bridge": {"type": "scaled-identity", "s": 1.0}
        },
        "mu": 1e-3,
        "sampling": {"type": "random-fixed", "m": 8},
        "noise_std": 0.1,
        "seed": 0
    }))
    .expect("valid base config");
    let spec = SweepSpec {
        data: SweepData::Synthetic {
            n: 20,
            t: 40,
            neighbors: 4,
            spatial: graphtime::spectral::SpectralMap::diffusion(1.0),
            s: 1.0,
            graph_seed: Some(1),
            drift: 0.0,
        },
        base,
        grid: SweepGrid {
            s: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0],
            ..Default::default()
        },
        seeds: (0..5).collect(),
    };
    let report = experiment::sweep(&spec, None, &|_| {})?;
    let bridge_s = |c: &ExperimentConfig| {
        serde_json::to_value(&c.kernel).ok().and_then(|k| k["bridge"]["s"].as_f64()).unwrap_or(f64::NAN)
    };
    let mut rows: Vec<(f64, f64, f64)> = report
        .final_nmse_summary()
        .into_iter()
        .map(|(id, (mean, std))| (bridge_s(&report.configs[&id]), mean, std))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (s, mean, std) in rows {
        println!("s = {s:<8} final NMSE {mean:.4} +/- {std:.4}");
    }
    Ok(())
}
