//! Scores a droplet image and lists the segmented droplets.
//!
//! ```text
//! cargo run --example score_image -- <image.png|image.pgm> [count_max]
//! ```
//!
//! Without an argument a simulated inkjet frame is scored instead.

use droplet_bo::devices::{InkjetSimulator, Simulator};
use droplet_bo::space::ControlVector;
use droplet_bo::vision::{droplet_geometry, score, DropletImage, ScoreOpts};

fn main() {
    let mut args = std::env::args().skip(1);
    let image = match args.next() {
        Some(path) => DropletImage::load(path.as_ref()).unwrap_or_else(|e| {
            eprintln!("{e}");
            std::process::exit(2);
        }),
        None => InkjetSimulator::new().render(&ControlVector::new(vec![0.5, 0.1, 0.8]).unwrap(), 1),
    };
    let count_max: u32 = args.next().map_or(50, |a| a.parse().expect("count_max must be an integer"));
    let opts = ScoreOpts {
        count_max,
        ..Default::default()
    };
    let s = score(&image, &opts).expect("count_max is positive");
    println!("{}x{} image", image.width(), image.height());
    println!("loss={:.4} geom_loss={:.4} yield_loss={:.4} count={}", s.loss, s.geom_loss, s.yield_loss, s.droplet_count());
    for (i, region) in s.segmentation.regions.iter().enumerate().take(10) {
        if let Ok(g) = droplet_geometry(region) {
            println!(
                "droplet {i:>2}: area {:>4} centre ({:6.1}, {:6.1}) chords {:.1}/{:.1} xor {}",
                region.len(),
                g.centroid.0,
                g.centroid.1,
                g.r_major,
                g.r_minor,
                g.xor_count(region)
            );
        }
    }
}
