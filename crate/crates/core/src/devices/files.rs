//! Human-in-the-loop exchange: suggestions go out as CSV, images come back
//! as files dropped into the run directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use super::{DeviceAdapter, DeviceError, RunRequest};
use crate::space::ParameterSpace;
use crate::vision::DropletImage;

pub const LOCK_FILE: &str = "run.lock";
/// Significant digits of physical values in suggestion files.
pub const CSV_SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct FileAdapterOptions {
    pub poll_interval: Duration,
    pub timeout: Duration,
}

impl Default for FileAdapterOptions {
    fn default() -> Self {
        Self {
            poll_interval: Duration::from_secs(1),
            timeout: Duration::from_secs(24 * 3600),
        }
    }
}

/// Writes `batch_<k>_suggestions.csv` into the run directory and waits for
/// `batch_<k>/sample_<i>.png` (or `.pgm`), `i` being the zero-based row.
/// Holds `run.lock` for its lifetime.
#[derive(Debug)]
pub struct FileAdapter {
    dir: PathBuf,
    space: ParameterSpace,
    opts: FileAdapterOptions,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DeviceError {
    DeviceError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Plain decimal rendering with `digits` significant digits, trailing zeros trimmed.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl FileAdapter {
    pub fn open(dir: impl AsRef<Path>, space: ParameterSpace, opts: FileAdapterOptions) -> Result<Self, DeviceError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let lock = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
                writeln!(f, "pid={}\ntimestamp={stamp}", std::process::id()).map_err(|e| io_err(&lock, e))?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&lock).unwrap_or_default().replace('\n', " ");
                return Err(DeviceError::Locked {
                    path: dir.display().to_string(),
                    holder: holder.trim().to_string(),
                });
            }
            Err(e) => return Err(io_err(&lock, e)),
        }
        Ok(Self { dir, space, opts })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn suggestions_path(&self, batch: usize) -> PathBuf {
        self.dir.join(format!("batch_{batch}_suggestions.csv"))
    }

    pub fn image_dir(&self, batch: usize) -> PathBuf {
        self.dir.join(format!("batch_{batch}"))
    }

    /// Writes the suggestion file for `batch` in physical units.
    pub fn write_suggestions(&self, batch: usize, requests: &[RunRequest]) -> Result<PathBuf, DeviceError> {
        let path = self.suggestions_path(batch);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| io_err(&path, e))?;
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.space.dims().iter().map(|d| d.column_label()));
        w.write_record(&header).map_err(|e| io_err(&path, e))?;
        for (i, r) in requests.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(
                self.space
                    .denormalize(&r.x)
                    .into_iter()
                    .map(|v| format_significant(v, CSV_SIGNIFICANT_DIGITS)),
            );
            w.write_record(&row).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        fs::create_dir_all(self.image_dir(batch)).map_err(|e| io_err(&self.image_dir(batch), e))?;
        Ok(path)
    }

    fn find_image(&self, batch: usize, i: usize) -> Option<PathBuf> {
        ["png", "pgm"]
            .iter()
            .map(|ext| self.image_dir(batch).join(format!("sample_{i}.{ext}")))
            .find(|p| p.is_file())
    }

    /// Polls until every image of `batch` exists, then loads them in order.
    pub fn collect_images(&self, batch: usize, n: usize) -> Result<Vec<Result<DropletImage, DeviceError>>, DeviceError> {
        let start = Instant::now();
        loop {
            let found: Vec<Option<PathBuf>> = (0..n).map(|i| self.find_image(batch, i)).collect();
            let missing: Vec<usize> = found.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(i, _)| i).collect();
            if missing.is_empty() {
                return Ok(found
                    .into_iter()
                    .map(|p| {
                        let p = p.expect("all present");
                        DropletImage::load(&p).map_err(|e| DeviceError::BadImage {
                            path: p.display().to_string(),
                            reason: e.to_string(),
                        })
                    })
                    .collect());
            }
            if start.elapsed() >= self.opts.timeout {
                if missing.len() == n {
                    return Err(DeviceError::Timeout {
                        batch,
                        waited_secs: start.elapsed().as_secs(),
                    });
                }
                return Err(DeviceError::MissingImage { batch, ids: missing });
            }
            log::debug!("batch {batch}: waiting for {} of {n} images", missing.len());
            std::thread::sleep(self.opts.poll_interval.min(self.opts.timeout.saturating_sub(start.elapsed())));
        }
    }
}

impl Drop for FileAdapter {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(LOCK_FILE));
    }
}

impl DeviceAdapter for FileAdapter {
    fn name(&self) -> String {
        format!("files:{}", self.dir.display())
    }

    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn run_batch(
        &mut self,
        batch_index: usize,
        requests: &[RunRequest],
    ) -> Result<Vec<Result<DropletImage, DeviceError>>, DeviceError> {
        let path = self.write_suggestions(batch_index, requests)?;
        log::info!("wrote {}; waiting for images in {}", path.display(), self.image_dir(batch_index).display());
        self.collect_images(batch_index, requests.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(300.5, 12), "300.5");
        assert_eq!(format_significant(0.09, 12), "0.09");
        assert_eq!(format_significant(1234.5678901234, 12), "1234.56789012");
        assert_eq!(format_significant(0.0, 12), "0");
        assert_eq!(format_significant(-2.5e-5, 3), "-0.000025");
    }
}
