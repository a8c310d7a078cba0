//! Drives the file-exchange device the way a lab controller would: the
//! optimizer writes suggestion CSVs and a stand-in "operator" thread answers
//! each one with images rendered by the inkjet simulator.
//!
//! ```text
//! cargo run --release --example file_exchange -- [dir]
//! ```

use std::path::PathBuf;
use std::time::Duration;

use droplet_bo::config::ExperimentConfig;
use droplet_bo::devices::{FileAdapter, FileAdapterOptions, InkjetSimulator, Simulator};
use droplet_bo::experiment::{run_experiment, RunOptions};

fn main() {
    let dir: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("droplet-exchange"), PathBuf::from);
    let _ = std::fs::remove_dir_all(&dir);
    let sim = InkjetSimulator::new();
    let space = sim.space().clone();
    let config = ExperimentConfig {
        init_count: 8,
        batch_size: 4,
        num_batches: 2,
        ..Default::default()
    };
    let opts = FileAdapterOptions {
        poll_interval: Duration::from_millis(20),
        timeout: Duration::from_secs(60),
    };
    let mut device = FileAdapter::open(&dir, space.clone(), opts).expect("open exchange directory");

    let operator_dir = dir.clone();
    let batches = config.num_batches + 1;
    let operator = std::thread::spawn(move || {
        for batch in 0..batches {
            let csv_path = operator_dir.join(format!("batch_{batch}_suggestions.csv"));
            while !operator_dir.join(format!("batch_{batch}")).is_dir() {
                std::thread::sleep(Duration::from_millis(10));
            }
            let mut reader = csv::Reader::from_path(&csv_path).expect("suggestions");
            for row in reader.records() {
                let row = row.expect("row");
                let id: usize = row[0].parse().expect("sample id");
                let physical: Vec<f64> = (1..row.len()).map(|c| row[c].parse().expect("value")).collect();
                let x = space.normalize(&physical).expect("in bounds");
                let image = sim.render(&x, (batch * 100 + id) as u64);
                let path = operator_dir.join(format!("batch_{batch}/sample_{id}.png"));
                image.save_png(&path).expect("write image");
            }
            println!("operator: answered {}", csv_path.display());
        }
    });

    let (state, report) = run_experiment(&config, &mut device, 3, RunOptions::default()).expect("run");
    operator.join().unwrap();
    println!("{} samples scored, best loss {:.4}", state.samples.len(), report.best_loss);
}
