//! Simulated flow-focusing microfluidic chip imaged downstream of the junction.
//!
//! Droplets pinch off inside the band `|water − 0.65·oil| < 0.18` (normalized
//! pressures) once `oil > 0.1`. Above the band water flows as an unbroken
//! stream; below it nothing flows. Higher oil pressure makes smaller, more
//! numerous drops; near the upper edge drops stretch and crowd together,
//! near the lower edge they thin out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::render::Canvas;
use super::Simulator;
use crate::space::{ControlVector, ParameterDef, ParameterSpace};
use crate::vision::DropletImage;

pub const CHANNEL_WIDTH: usize = 512;
pub const CHANNEL_HEIGHT: usize = 256;
pub const BAND_SLOPE: f64 = 0.65;
pub const BAND_HALF_WIDTH: f64 = 0.18;
pub const MIN_OIL: f64 = 0.1;
pub const MICROFLUIDIC_COUNT_MAX: u32 = 30;

const BACKGROUND: f64 = 40.0;
const WATER: f64 = 190.0;
const NOISE_SIGMA: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct MicrofluidicSimulator {
    space: ParameterSpace,
}

impl Default for MicrofluidicSimulator {
    fn default() -> Self {
        Self::new()
    }
}

impl MicrofluidicSimulator {
    pub fn new() -> Self {
        let space = ParameterSpace::new(vec![
            ParameterDef::new("water_pressure", 0.0, 2000.0, "mbar"),
            ParameterDef::new("oil_pressure", 0.0, 2000.0, "mbar"),
        ])
        .expect("microfluidic space is valid");
        Self { space }
    }
}

/// Signed position across the dripping band: |u| < 1 inside, u ≥ 1 above
/// (stream), u ≤ −1 below (no flow).
pub fn band_position(x: &[f64]) -> f64 {
    (x[0] - BAND_SLOPE * x[1]) / BAND_HALF_WIDTH
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl Simulator for MicrofluidicSimulator {
    fn name(&self) -> &'static str {
        "microfluidic-sim"
    }

    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn count_max(&self) -> u32 {
        MICROFLUIDIC_COUNT_MAX
    }

    fn render(&self, x: &ControlVector, seed: u64) -> DropletImage {
        let (water, oil) = (x[0], x[1]);
        let u = band_position(x.values());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut canvas = Canvas::new(CHANNEL_WIDTH, CHANNEL_HEIGHT);
        let mid = CHANNEL_HEIGHT as f64 / 2.0;

        if u <= -1.0 {
            // Oil pressure stalls the water line.
        } else if u >= 1.0 || oil <= MIN_OIL {
            let half = 8.0 + 8.0 * water;
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            canvas.band(
                0.0,
                CHANNEL_WIDTH as f64,
                |c| mid + 4.0 * (c / 50.0 + phase).sin(),
                |c| half * (1.0 + 0.04 * (c / 31.0 + phase).sin()),
            );
        } else {
            let radius = 26.0 - 12.0 * oil;
            let lanes = if oil < 0.45 {
                1
            } else if oil < 0.8 {
                2
            } else {
                3
            };
            // Stretch and crowding grow towards the stream side of the band.
            let upper = ((u - 0.3) / 0.7).max(0.0);
            let aspect = 1.0 + 1.5 * upper * upper;
            let gap = radius * (0.9 - 0.8 * upper);
            let a = radius * aspect.sqrt();
            let b = radius / aspect.sqrt();
            let pitch = 2.0 * a + gap;
            let slots = ((CHANNEL_WIDTH as f64 - 8.0) / pitch).floor() as usize;
            let occupancy = 0.35 + 0.65 * ((u + 1.0) / 0.6).min(1.0);
            let lane_pitch = 2.0 * b + 0.6 * radius;
            for lane in 0..lanes {
                let row = mid + (lane as f64 - (lanes - 1) as f64 / 2.0) * lane_pitch;
                let offset = if lane % 2 == 1 { 0.5 * pitch } else { 0.0 };
                for k in 0..slots {
                    let keep: f64 = rng.random();
                    let jr = 2.0 * gauss(&mut rng);
                    let jc = 2.0 * gauss(&mut rng);
                    let scale = 1.0 + 0.04 * gauss(&mut rng);
                    if keep >= occupancy {
                        continue;
                    }
                    let col = 4.0 + a + offset + k as f64 * pitch + jc;
                    if col + a > CHANNEL_WIDTH as f64 {
                        continue;
                    }
                    canvas.ellipse(row + jr, col, a * scale, b * scale, 0.0);
                }
            }
        }
        canvas.render(BACKGROUND, WATER, NOISE_SIGMA, rng.random())
    }
}
