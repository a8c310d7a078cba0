//! Simulated milliscale inkjet printer imaging a deposition plate.
//!
//! The plate pattern is driven by a regime score
//! `ρ = 0.6·(1 − frequency) + 0.4·speed` (normalized controls): above 0.55
//! rows of droplets that become rounder and more numerous as ρ grows,
//! between 0.35 and 0.55 chains of merged drops, below 0.35 continuous
//! streaks. Pressure only changes the drop size slightly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::render::Canvas;
use super::Simulator;
use crate::space::{ControlVector, ParameterDef, ParameterSpace};
use crate::vision::DropletImage;

pub const PLATE_SIDE: usize = 512;
pub const FREQUENCY_WEIGHT: f64 = 0.6;
pub const SPEED_WEIGHT: f64 = 0.4;
pub const DROPLET_REGIME: f64 = 0.55;
pub const STREAK_REGIME: f64 = 0.35;
pub const INKJET_COUNT_MAX: u32 = 50;

const GRID_ROWS: usize = 6;
const GRID_COLS: usize = 8;
const BASE_RADIUS: f64 = 14.0;
const BACKGROUND: f64 = 210.0;
const INK: f64 = 50.0;
const NOISE_SIGMA: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct InkjetSimulator {
    space: ParameterSpace,
}

impl Default for InkjetSimulator {
    fn default() -> Self {
        Self::new()
    }
}

impl InkjetSimulator {
    pub fn new() -> Self {
        let space = ParameterSpace::new(vec![
            ParameterDef::new("pressure", 0.03, 0.15, "MPa"),
            ParameterDef::new("frequency", 1.0, 600.0, "Hz"),
            ParameterDef::new("speed", 10.0, 360.0, "mm/s"),
        ])
        .expect("inkjet space is valid");
        Self { space }
    }
}

/// Regime score of a normalized `(pressure, frequency, speed)` vector.
pub fn inkjet_regime(x: &[f64]) -> f64 {
    FREQUENCY_WEIGHT * (1.0 - x[1]) + SPEED_WEIGHT * x[2]
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl Simulator for InkjetSimulator {
    fn name(&self) -> &'static str {
        "inkjet-sim"
    }

    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn count_max(&self) -> u32 {
        INKJET_COUNT_MAX
    }

    fn render(&self, x: &ControlVector, seed: u64) -> DropletImage {
        let v = x.values();
        let rho = inkjet_regime(v);
        let radius = BASE_RADIUS * (1.0 + 0.1 * (v[0] - 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut canvas = Canvas::new(PLATE_SIDE, PLATE_SIDE);
        let cell_h = PLATE_SIDE as f64 / GRID_ROWS as f64;
        let cell_w = PLATE_SIDE as f64 / GRID_COLS as f64;

        if rho >= DROPLET_REGIME {
            let t = (rho - DROPLET_REGIME) / (1.0 - DROPLET_REGIME);
            let count = (12.0 + 36.0 * t).round() as usize;
            let aspect = 1.0 + 2.5 * (1.0 - t).powi(2);
            let ecc_sigma = 0.25 * (1.0 - t);
            for slot in 0..count.min(GRID_ROWS * GRID_COLS) {
                let (gr, gc) = (slot / GRID_COLS, slot % GRID_COLS);
                let row = (gr as f64 + 0.5) * cell_h + 4.0 * gauss(&mut rng);
                let col = (gc as f64 + 0.5) * cell_w + 4.0 * gauss(&mut rng);
                let r = radius * (1.0 + 0.05 * gauss(&mut rng));
                let a_i = (aspect * (ecc_sigma * gauss(&mut rng)).exp()).max(1.0);
                let angle = 0.15 * (1.0 - t) * gauss(&mut rng);
                canvas.ellipse(row, col, r * a_i.sqrt(), r / a_i.sqrt(), angle);
            }
        } else if rho >= STREAK_REGIME {
            let u = (rho - STREAK_REGIME) / (DROPLET_REGIME - STREAK_REGIME);
            let links = 4 + (4.0 * (1.0 - u)).round() as usize;
            let r = 0.85 * radius;
            let step = 1.6 * r;
            let chain_len = (links - 1) as f64 * step;
            let pitch = chain_len + 2.0 * r + 24.0;
            let per_row = ((PLATE_SIDE as f64 - 10.0) / pitch).floor().max(1.0) as usize;
            for gr in 0..GRID_ROWS {
                for k in 0..per_row {
                    let row = (gr as f64 + 0.5) * cell_h + 4.0 * gauss(&mut rng);
                    let c0 = 10.0 + r + k as f64 * pitch + 3.0 * gauss(&mut rng);
                    let tilt = 3.0 * gauss(&mut rng);
                    canvas.capsule((row, c0), (row + tilt, c0 + chain_len), r * (1.0 + 0.05 * gauss(&mut rng)));
                }
            }
        } else {
            let half = radius * (0.5 + 0.5 * rho / STREAK_REGIME);
            for gr in 0..GRID_ROWS {
                let centre = (gr as f64 + 0.5) * cell_h + 3.0 * gauss(&mut rng);
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let amp = 2.0 + 2.0 * rng.random::<f64>();
                canvas.band(
                    0.0,
                    PLATE_SIDE as f64,
                    |c| centre + amp * (c / 40.0 + phase).sin(),
                    |c| half * (1.0 + 0.15 * (c / 23.0 + 2.0 * phase).sin()),
                );
            }
        }
        canvas.render(BACKGROUND, INK, NOISE_SIGMA, rng.random())
    }
}
