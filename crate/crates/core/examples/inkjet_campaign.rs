//! Full optimization campaign on the simulated inkjet printer: 20 Latin
//! hypercube prints followed by four batches of ten.
//!
//! ```text
//! cargo run --release --example inkjet_campaign -- [ei|mpi|lcb] [seed]
//! ```

use droplet_bo::analysis::{feasibility_fraction, Scope};
use droplet_bo::config::{AcquisitionChoice, ExperimentConfig};
use droplet_bo::devices::{InkjetSimulator, SimulatedDevice};
use droplet_bo::experiment::{run_experiment, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let acquisition: AcquisitionChoice = args.next().map_or(AcquisitionChoice::Ei, |a| a.parse().expect("ei, mpi or lcb"));
    let seed: u64 = args.next().map_or(7, |a| a.parse().expect("seed must be an integer"));
    let config = ExperimentConfig {
        acquisition,
        ..Default::default()
    };
    let mut device = SimulatedDevice::new(InkjetSimulator::new());
    let (state, report) = run_experiment(&config, &mut device, seed, RunOptions::default()).expect("run");

    for b in &report.batches {
        let mean = b.losses.iter().sum::<f64>() / b.losses.len() as f64;
        println!("batch {}: mean loss {mean:.3}, best so far {:.3}", b.batch_index, b.running_best);
    }
    let names: Vec<String> = state.space.dims().iter().map(|d| d.column_label()).collect();
    for (name, v) in names.iter().zip(&report.best_physical) {
        println!("best {name} = {v:.4}");
    }
    println!("best loss {:.4} at sample {}", report.best_loss, report.best_index);
    let f = feasibility_fraction(&state, config.feasibility_threshold, Scope::AcquiredOnly).unwrap();
    println!("acquired samples below {}: {:.1}%", config.feasibility_threshold, 100.0 * f);
    if let Some(s) = state.surrogates.last() {
        let ls: Vec<String> = s.hyper.lengthscales.iter().map(|l| format!("{l:.3}")).collect();
        println!("final lengthscales [{}]", ls.join(", "));
    }
}
