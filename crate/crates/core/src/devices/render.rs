//! Anti-aliased shape painting for the simulated cameras.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::vision::DropletImage;

/// Per-pixel ink coverage in `[0, 1]`, later mapped onto two grey levels.
#[derive(Debug, Clone)]
pub struct Canvas {
    width: usize,
    height: usize,
    coverage: Vec<f32>,
}

/// Coverage of a pixel whose centre is `sd` pixels outside a shape edge.
fn edge_coverage(sd: f64) -> f32 {
    (0.5 - sd).clamp(0.0, 1.0) as f32
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            coverage: vec![0.0; width * height],
        }
    }

    pub fn coverage(&self) -> &[f32] {
        &self.coverage
    }

    fn paint<F: Fn(f64, f64) -> f64>(&mut self, bbox: (f64, f64, f64, f64), signed_distance: F) {
        let (r0, r1, c0, c1) = bbox;
        let rows = (r0.floor().max(0.0) as usize)..((r1.ceil() + 1.0).clamp(0.0, self.height as f64) as usize);
        let cols = (c0.floor().max(0.0) as usize)..((c1.ceil() + 1.0).clamp(0.0, self.width as f64) as usize);
        for r in rows {
            for c in cols.clone() {
                let cov = edge_coverage(signed_distance(r as f64, c as f64));
                let cell = &mut self.coverage[r * self.width + c];
                *cell = cell.max(cov);
            }
        }
    }

    pub fn disk(&mut self, row: f64, col: f64, radius: f64) {
        self.paint((row - radius - 1.0, row + radius + 1.0, col - radius - 1.0, col + radius + 1.0), |r, c| {
            ((r - row).powi(2) + (c - col).powi(2)).sqrt() - radius
        });
    }

    /// Ellipse with semi-axes `a` (along `angle`, radians from the column
    /// axis) and `b`. The edge distance is a first-order estimate.
    pub fn ellipse(&mut self, row: f64, col: f64, a: f64, b: f64, angle: f64) {
        let (sin, cos) = angle.sin_cos();
        let ext = a.max(b) + 1.0;
        self.paint((row - ext, row + ext, col - ext, col + ext), |r, c| {
            let (dr, dc) = (r - row, c - col);
            let u = dc * cos + dr * sin;
            let v = -dc * sin + dr * cos;
            let g = (u / a).powi(2) + (v / b).powi(2) - 1.0;
            let grad = 2.0 * ((u / (a * a)).powi(2) + (v / (b * b)).powi(2)).sqrt();
            if grad > 0.0 {
                g / grad
            } else {
                -b
            }
        });
    }

    /// Stadium: all points within `radius` of the segment `(r0,c0)–(r1,c1)`.
    pub fn capsule(&mut self, p0: (f64, f64), p1: (f64, f64), radius: f64) {
        let bbox = (
            p0.0.min(p1.0) - radius - 1.0,
            p0.0.max(p1.0) + radius + 1.0,
            p0.1.min(p1.1) - radius - 1.0,
            p0.1.max(p1.1) + radius + 1.0,
        );
        let (dr, dc) = (p1.0 - p0.0, p1.1 - p0.1);
        let len2 = dr * dr + dc * dc;
        self.paint(bbox, |r, c| {
            let t = if len2 > 0.0 {
                (((r - p0.0) * dr + (c - p0.1) * dc) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qr, qc) = (p0.0 + t * dr, p0.1 + t * dc);
            ((r - qr).powi(2) + (c - qc).powi(2)).sqrt() - radius
        });
    }

    /// Horizontal band whose centre line is `centre(col)` and half-thickness
    /// `half(col)`, spanning `col0..col1`.
    pub fn band<C: Fn(f64) -> f64, H: Fn(f64) -> f64>(&mut self, col0: f64, col1: f64, centre: C, half: H) {
        let c_start = col0.floor().max(0.0) as usize;
        let c_end = (col1.ceil() as usize).min(self.width);
        for c in c_start..c_end {
            let cf = c as f64;
            let (mid, h) = (centre(cf), half(cf));
            let r_start = (mid - h - 1.0).floor().max(0.0) as usize;
            let r_end = ((mid + h + 2.0).ceil().max(0.0) as usize).min(self.height);
            for r in r_start..r_end {
                let cov = edge_coverage((r as f64 - mid).abs() - h);
                let cell = &mut self.coverage[r * self.width + c];
                *cell = cell.max(cov);
            }
        }
    }

    /// Maps coverage onto `background`..`ink` grey levels and adds Gaussian
    /// sensor noise of standard deviation `noise_sigma`.
    pub fn render(&self, background: f64, ink: f64, noise_sigma: f64, seed: u64) -> DropletImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_sigma).expect("non-negative sigma");
        let pixels = self
            .coverage
            .iter()
            .map(|&cov| {
                let v = background + (ink - background) * f64::from(cov) + noise.sample(&mut rng);
                v.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        DropletImage::new(self.width, self.height, pixels).expect("canvas is at least the minimum size")
    }
}
