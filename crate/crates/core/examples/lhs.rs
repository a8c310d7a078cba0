//! Latin hypercube initialization over the inkjet control box.
//!
//! ```text
//! cargo run --example lhs -- [points] [seed]
//! ```

use droplet_bo::devices::{InkjetSimulator, Simulator};
use droplet_bo::rng::{stream_rng, INIT_STREAM};
use droplet_bo::sampling::lhs_plan;

fn main() {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().map_or(20, |a| a.parse().expect("points must be an integer"));
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed must be an integer"));
    let space = InkjetSimulator::new().space().clone();
    let plan = lhs_plan(space.len(), k, &mut stream_rng(seed, INIT_STREAM)).expect("at least one point");

    let labels: Vec<String> = space.dims().iter().map(|d| d.column_label()).collect();
    println!("i,{},strata", labels.join(","));
    for (i, x) in plan.points.iter().enumerate() {
        let physical: Vec<String> = space.denormalize(x).iter().map(|v| format!("{v:.4}")).collect();
        let strata: Vec<String> = (0..space.len()).map(|d| plan.stratum(i, d).to_string()).collect();
        println!("{i},{},{}", physical.join(","), strata.join("/"));
    }
}
