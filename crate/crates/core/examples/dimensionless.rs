//! Dimensionless groups for a water jet.
//!
//! ```text
//! cargo run --example dimensionless -- [diameter_um] [velocity_m_s]
//! ```

use droplet_bo::devices::{dimensionless, FluidProperties};

fn main() {
    let mut args = std::env::args().skip(1);
    let d_um: f64 = args.next().map_or(70.0, |a| a.parse().expect("diameter must be a number"));
    let v: f64 = args.next().map_or(1.0, |a| a.parse().expect("velocity must be a number"));
    let fluid = FluidProperties {
        velocity: v,
        ..FluidProperties::water(d_um * 1e-6)
    };
    match dimensionless(&fluid) {
        Ok(d) => {
            println!("water, {d_um} um jet, {v} m/s");
            println!("Oh = {:.5}", d.oh);
            println!("We = {:.4}", d.we);
            println!("Re = {:.3}", d.re);
            println!("Ca = {:.3e}", d.ca);
            println!("Bo = {:.3e}", d.bo);
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    }
}
