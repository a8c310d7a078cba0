use std::path::Path;

use super::VisionError;

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropletImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

pub const MIN_SIDE: usize = 16;

impl DropletImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, VisionError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(VisionError::InvalidImage(format!(
                "{width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(VisionError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, VisionError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample(&self, factor: usize) -> Self {
        let (w, h) = (self.width * factor, self.height * factor);
        let mut pixels = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                pixels.push(self.get(r / factor, c / factor));
            }
        }
        Self {
            width: w,
            height: h,
            pixels,
        }
    }

    /// Reads an 8-bit PNG (gray or colour) or binary PGM. Colour is reduced
    /// with `0.299 R + 0.587 G + 0.114 B`, rounded half-up.
    pub fn load(path: &Path) -> Result<Self, VisionError> {
        let bad = |reason: String| VisionError::BadImage {
            path: path.display().to_string(),
            reason,
        };
        let decoded = image::ImageReader::open(path)
            .map_err(|e| bad(e.to_string()))?
            .with_guessed_format()
            .map_err(|e| bad(e.to_string()))?
            .decode()
            .map_err(|e| bad(e.to_string()))?;
        let (width, height) = (decoded.width() as usize, decoded.height() as usize);
        let pixels = match decoded {
            image::DynamicImage::ImageLuma8(buf) => buf.into_raw(),
            image::DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
                .collect(),
        };
        Self::new(width, height, pixels).map_err(|e| bad(e.to_string()))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), VisionError> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| VisionError::BadImage {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save_pgm(&self, path: &Path) -> Result<(), VisionError> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend_from_slice(&self.pixels);
        std::fs::write(path, bytes).map_err(|e| VisionError::BadImage {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Integer luminance with half-up rounding.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((weighted + 500) / 1000) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_and_mismatched() {
        assert!(DropletImage::new(15, 20, vec![0; 300]).is_err());
        assert!(DropletImage::new(16, 16, vec![0; 10]).is_err());
        assert!(DropletImage::new(16, 16, vec![0; 256]).is_ok());
    }

    #[test]
    fn luminance_rounds_half_up() {
        assert_eq!(luminance(255, 255, 255), 255);
        assert_eq!(luminance(0, 0, 0), 0);
        // 0.299 * 10 + 0.587 * 1 + 0.114 * 0 = 3.577
        assert_eq!(luminance(10, 1, 0), 4);
        // 1.495 + 2.935 = 4.43
        assert_eq!(luminance(5, 5, 0), 4);
        // 0.299 * 1 + 0.587 * 2 + 0.114 * 3 = 1.815
        assert_eq!(luminance(1, 2, 3), 2);
        // 1.495 + 0.57 = 2.065
        assert_eq!(luminance(5, 0, 5), 2);
    }

    #[test]
    fn png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = DropletImage::filled(20, 17, 30).unwrap();
        img.set(3, 4, 250);
        let png = dir.path().join("a.png");
        let pgm = dir.path().join("a.pgm");
        img.save_png(&png).unwrap();
        img.save_pgm(&pgm).unwrap();
        assert_eq!(DropletImage::load(&png).unwrap(), img);
        assert_eq!(DropletImage::load(&pgm).unwrap(), img);
    }

    #[test]
    fn colour_png_uses_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let mut rgb = vec![0u8; 16 * 16 * 3];
        rgb[0..3].copy_from_slice(&[200, 100, 50]);
        image::save_buffer(&path, &rgb, 16, 16, image::ExtendedColorType::Rgb8).unwrap();
        let img = DropletImage::load(&path).unwrap();
        assert_eq!(img.get(0, 0), luminance(200, 100, 50));
        assert_eq!(img.get(0, 0), 124); // 59.8 + 58.7 + 5.7 = 124.2
    }

    #[test]
    fn unreadable_file_is_bad_image() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not an image").unwrap();
        assert!(matches!(
            DropletImage::load(&path),
            Err(VisionError::BadImage { .. })
        ));
    }

    #[test]
    fn upsample_doubles() {
        let mut img = DropletImage::filled(16, 16, 0).unwrap();
        img.set(1, 2, 9);
        let up = img.upsample(2);
        assert_eq!((up.width(), up.height()), (32, 32));
        assert_eq!(up.get(2, 4), 9);
        assert_eq!(up.get(3, 5), 9);
        assert_eq!(up.get(4, 4), 0);
    }
}
