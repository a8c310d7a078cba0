//! Runs a short inkjet campaign and writes the plot-ready analysis files.
//!
//! ```text
//! cargo run --release --example analysis_report -- [out_dir]
//! ```

use std::path::PathBuf;

use droplet_bo::analysis::{feasibility_fraction, parameter_density, running_minimum, write_report, Scope};
use droplet_bo::config::ExperimentConfig;
use droplet_bo::devices::{InkjetSimulator, SimulatedDevice};
use droplet_bo::experiment::{run_experiment, RunOptions};

fn main() {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("droplet-report"), PathBuf::from);
    let config = ExperimentConfig::default();
    let mut device = SimulatedDevice::new(InkjetSimulator::new());
    let (state, _) = run_experiment(&config, &mut device, 2, RunOptions::default()).expect("run");

    let trace = running_minimum(&state);
    println!("running minimum after each batch:");
    for k in 0..=config.num_batches {
        let end = config.init_count + k * config.batch_size;
        println!("  batch {k}: {:.4}", trace[end - 1]);
    }
    for scope in [Scope::AcquiredOnly, Scope::All] {
        let f = feasibility_fraction(&state, config.feasibility_threshold, scope).unwrap();
        println!("feasible fraction ({scope:?}): {:.3}", f);
    }
    for (d, def) in state.space.dims().iter().enumerate() {
        let curve = parameter_density(&state, d, 256).unwrap();
        let peak = curve.iter().cloned().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        println!("{} density peaks at {:.3} (normalized)", def.name, peak.0);
    }
    for path in write_report(&state, &out).expect("write report") {
        println!("wrote {}", path.display());
    }
}
