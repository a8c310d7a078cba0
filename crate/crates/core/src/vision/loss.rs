use super::{droplet_geometry, SegmentationResult, VisionError};

/// Circularity loss: summed `|droplet XOR fitted circle|` over summed
/// droplet area, clamped to `[0, 1]`. No droplets scores the worst case, 1.
pub fn geom_loss(seg: &SegmentationResult) -> f64 {
    let area = seg.droplet_pixels();
    if seg.regions.is_empty() || area == 0 {
        return 1.0;
    }
    let xor: usize = seg
        .regions
        .iter()
        .map(|region| match droplet_geometry(region) {
            Ok(g) => g.xor_count(region),
            // Too small to fit a circle: nothing in it counts as circular.
            Err(_) => region.len(),
        })
        .sum();
    (xor as f64 / area as f64).clamp(0.0, 1.0)
}

/// Yield loss: half the background fraction plus half the shortfall of the
/// droplet count below `count_max`. Counts above `count_max` saturate.
pub fn yield_loss(seg: &SegmentationResult, count_max: u32) -> Result<f64, VisionError> {
    if count_max < 1 {
        return Err(VisionError::InvalidCountMax(count_max));
    }
    let total = seg.total_pixels() as f64;
    let background = total - seg.droplet_pixels() as f64;
    let count = (seg.droplet_count() as u64).min(u64::from(count_max)) as f64;
    let cmax = f64::from(count_max);
    let value = 0.5 * background / total + 0.5 * (cmax - count) / cmax;
    Ok(value.clamp(0.0, 1.0))
}
