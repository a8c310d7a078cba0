//! Droplet scoring: segmentation of a grayscale frame into indexed droplet
//! regions, then circularity and yield losses.

mod geometry;
mod raster;
mod loss;
mod segment;

use thiserror::Error;

pub use self::geometry::{droplet_geometry, rasterize_disk, DropletGeometry, MIN_REGION_AREA};
pub use self::raster::{luminance, DropletImage, MIN_SIDE};
pub use self::loss::{geom_loss, yield_loss};
pub use self::segment::{
    dilate, distance_transform, erode, otsu_threshold, segment, SegOpts, SegmentationResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("cannot read image {path}: {reason}")]
    BadImage { path: String, reason: String },
    #[error("region of {area} pixels is too small for chord fitting")]
    DegenerateRegion { area: usize },
    #[error("count_max must be at least 1, got {0}")]
    InvalidCountMax(u32),
}

/// Integer pixel coordinate. Signed so fitted circles may extend past the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub row: i32,
    pub col: i32,
}

impl Pixel {
    pub fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn neighbours4(self) -> [Pixel; 4] {
        [
            Pixel::new(self.row - 1, self.col),
            Pixel::new(self.row, self.col - 1),
            Pixel::new(self.row, self.col + 1),
            Pixel::new(self.row + 1, self.col),
        ]
    }

    pub fn dist2(self, other: Pixel) -> i64 {
        let dr = i64::from(self.row - other.row);
        let dc = i64::from(self.col - other.col);
        dr * dr + dc * dc
    }
}

/// Scoring knobs: segmentation options plus the yield normalization constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOpts {
    pub segmentation: SegOpts,
    pub count_max: u32,
}

impl Default for ScoreOpts {
    fn default() -> Self {
        Self {
            segmentation: SegOpts::default(),
            count_max: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub loss: f64,
    pub geom_loss: f64,
    pub yield_loss: f64,
    pub segmentation: SegmentationResult,
}

impl Score {
    pub fn droplet_count(&self) -> usize {
        self.segmentation.droplet_count()
    }
}

/// Segments `image` and returns ℓ = (L_geom + L_yield) / 2 with its parts.
pub fn score(image: &DropletImage, opts: &ScoreOpts) -> Result<Score, VisionError> {
    let segmentation = segment(image, &opts.segmentation);
    let geom = geom_loss(&segmentation);
    let yld = yield_loss(&segmentation, opts.count_max)?;
    Ok(Score {
        loss: 0.5 * (geom + yld),
        geom_loss: geom,
        yield_loss: yld,
        segmentation,
    })
}
