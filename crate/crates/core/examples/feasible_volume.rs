//! Monte-Carlo estimate of each simulator's feasible volume: the fraction of
//! uniformly drawn control vectors whose image scores below 0.75. This is the
//! random-sampling baseline an optimizer has to beat.
//!
//! ```text
//! cargo run --release --example feasible_volume -- [draws] [seed]
//! ```

use droplet_bo::analysis::monte_carlo_feasible_volume;
use droplet_bo::devices::{InkjetSimulator, MicrofluidicSimulator, FEASIBLE_VOLUME_SEED};

fn main() {
    let mut args = std::env::args().skip(1);
    let draws: usize = args.next().map_or(10_000, |a| a.parse().expect("draws must be an integer"));
    let seed: u64 = args.next().map_or(FEASIBLE_VOLUME_SEED, |a| a.parse().expect("seed must be an integer"));
    let start = std::time::Instant::now();
    let inkjet = monte_carlo_feasible_volume(&InkjetSimulator::new(), draws, seed, 0.75);
    println!("inkjet-sim       feasible volume {inkjet:.4} ({draws} draws, seed {seed})");
    let micro = monte_carlo_feasible_volume(&MicrofluidicSimulator::new(), draws, seed, 0.75);
    println!("microfluidic-sim feasible volume {micro:.4} ({draws} draws, seed {seed})");
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
}
