//! Optimization campaign on the simulated flow-focusing chip, followed by the
//! learned loss topology over (water, oil) pressure.
//!
//! ```text
//! cargo run --release --example microfluidic_campaign -- [ei|mpi|lcb] [seed]
//! ```

use droplet_bo::analysis::topology_grid;
use droplet_bo::config::{AcquisitionChoice, ExperimentConfig};
use droplet_bo::devices::{MicrofluidicSimulator, SimulatedDevice};
use droplet_bo::experiment::{run_experiment, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let acquisition: AcquisitionChoice = args.next().map_or(AcquisitionChoice::Mpi, |a| a.parse().expect("ei, mpi or lcb"));
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed must be an integer"));
    let config = ExperimentConfig {
        acquisition,
        ..Default::default()
    };
    let mut device = SimulatedDevice::new(MicrofluidicSimulator::new());
    let (state, report) = run_experiment(&config, &mut device, seed, RunOptions::default()).expect("run");
    println!(
        "best loss {:.4} at water {:.0} mbar, oil {:.0} mbar",
        report.best_loss, report.best_physical[0], report.best_physical[1]
    );

    // Rows run from high oil pressure down; '.' marks cells without data.
    let grid = topology_grid(&state, (0, 1), 24).unwrap();
    println!("loss topology (x: water, y: oil), digits are loss x 10");
    for r in (0..grid.resolution).rev() {
        let row: String = (0..grid.resolution)
            .map(|c| match grid.get(r, c) {
                Some(v) => char::from_digit(((v * 10.0).floor() as u32).min(9), 10).unwrap(),
                None => '.',
            })
            .collect();
        println!("  {row}");
    }
}
