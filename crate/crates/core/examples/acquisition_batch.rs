//! Proposes one batch with each acquisition function from the same surrogate.

use droplet_bo::acquisition::{propose_batch, AcquisitionKind};
use droplet_bo::rng::stream_rng;
use droplet_bo::sampling::lhs_plan;
use droplet_bo::surrogate::{fit_points, FitOptions};

fn main() {
    let xs: Vec<Vec<f64>> = lhs_plan(2, 15, &mut stream_rng(1, 0))
        .unwrap()
        .points
        .iter()
        .map(|p| p.values().to_vec())
        .collect();
    let ys: Vec<f64> = xs.iter().map(|x| (x[0] - 0.7).powi(2) + 2.0 * (x[1] - 0.3).powi(2)).collect();
    let model = fit_points(xs, ys, &FitOptions::default()).expect("fit");

    for kind in [AcquisitionKind::Ei, AcquisitionKind::Mpi, AcquisitionKind::Lcb { beta: 2.0 }] {
        let batch = propose_batch(&model, kind, 5, 0.1, 4096, &mut stream_rng(1, 1)).expect("batch");
        println!("{kind}");
        for (x, a) in batch.points.iter().zip(&batch.acq_values) {
            let p = model.posterior_at(x);
            println!(
                "  x=({:.3}, {:.3}) acq={a:.4e} mean={:.4} sd={:.4}",
                x[0],
                x[1],
                p.mean,
                p.std_dev()
            );
        }
    }
}
