//! Marker-controlled watershed segmentation.
//!
//! Pipeline: global Otsu threshold with automatic polarity, binary opening,
//! exact Euclidean distance transform, peak markers, then priority flooding
//! of the inverted distance surface from the markers. All connectivity is
//! 4-neighbour, so every output region is 4-connected.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{DropletImage, Pixel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegOpts {
    /// Regions with fewer pixels are discarded.
    pub min_area: usize,
    /// A distance peak seeds a droplet only if it reaches this fraction of
    /// its connected component's maximum distance.
    pub marker_frac: f64,
    /// Minimum height (pixels) a distance peak must rise above the saddle
    /// joining it to a higher peak to seed its own droplet.
    pub peak_dynamic: f64,
    /// Iterations of 3x3 erosion followed by as many dilations.
    pub opening_iterations: usize,
}

impl Default for SegOpts {
    fn default() -> Self {
        Self {
            min_area: 20,
            marker_frac: 0.4,
            peak_dynamic: 2.0,
            opening_iterations: 2,
        }
    }
}

impl SegOpts {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.marker_frac > 0.0 && self.marker_frac <= 1.0) {
            return Err(format!("marker_frac {} outside (0, 1]", self.marker_frac));
        }
        if !(self.peak_dynamic >= 0.0 && self.peak_dynamic.is_finite()) {
            return Err(format!("peak_dynamic {} must be >= 0", self.peak_dynamic));
        }
        Ok(())
    }
}

/// Indexed droplets extracted from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub width: usize,
    pub height: usize,
    /// Per-pixel droplet index, row-major; 0 is background.
    pub labels: Vec<u32>,
    /// `regions[i]` holds the pixels labelled `i + 1`, in raster order.
    pub regions: Vec<Vec<Pixel>>,
    pub marker_count: usize,
    pub threshold: u8,
    pub dark_foreground: bool,
}

impl SegmentationResult {
    pub fn droplet_count(&self) -> usize {
        self.regions.len()
    }

    pub fn total_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn droplet_pixels(&self) -> usize {
        self.regions.iter().map(Vec::len).sum()
    }

    /// Builds a result directly from labelled regions (used by tests and
    /// callers with their own segmentation).
    pub fn from_regions(width: usize, height: usize, regions: Vec<Vec<Pixel>>) -> Self {
        let mut labels = vec![0u32; width * height];
        for (i, region) in regions.iter().enumerate() {
            for p in region {
                labels[p.row as usize * width + p.col as usize] = i as u32 + 1;
            }
        }
        Self {
            width,
            height,
            labels,
            marker_count: regions.len(),
            regions,
            threshold: 0,
            dark_foreground: false,
        }
    }
}

pub fn segment(image: &DropletImage, opts: &SegOpts) -> SegmentationResult {
    let (w, h) = (image.width(), image.height());
    let threshold = otsu_threshold(image.pixels());
    let bright = image.pixels().iter().filter(|&&v| v > threshold).count();
    let dark = image.pixels().len() - bright;
    let dark_foreground = dark < bright;
    let mut mask: Vec<bool> = image
        .pixels()
        .iter()
        .map(|&v| if dark_foreground { v <= threshold } else { v > threshold })
        .collect();
    for _ in 0..opts.opening_iterations {
        mask = erode(&mask, w, h);
    }
    for _ in 0..opts.opening_iterations {
        mask = dilate(&mask, w, h);
    }

    let dist = distance_transform(&mask, w, h);
    let (components, component_max) = components(&mask, &dist, w, h);
    let markers: Vec<usize> = peak_markers(&mask, &dist, w, h, opts.peak_dynamic)
        .into_iter()
        .filter(|&p| {
            let comp = components[p] as usize - 1;
            dist[p] >= opts.marker_frac * component_max[comp]
        })
        .collect();
    let marker_count = markers.len();
    let flooded = flood(&mask, &dist, w, h, &markers);

    // Discard small basins and relabel in raster order of first appearance.
    let mut sizes = vec![0usize; marker_count + 1];
    for &l in &flooded {
        sizes[l as usize] += 1;
    }
    let mut remap = vec![0u32; marker_count + 1];
    let mut regions: Vec<Vec<Pixel>> = Vec::new();
    let mut labels = vec![0u32; w * h];
    for (idx, &l) in flooded.iter().enumerate() {
        if l == 0 || sizes[l as usize] < opts.min_area {
            continue;
        }
        if remap[l as usize] == 0 {
            regions.push(Vec::with_capacity(sizes[l as usize]));
            remap[l as usize] = regions.len() as u32;
        }
        let new = remap[l as usize];
        labels[idx] = new;
        regions[new as usize - 1].push(Pixel::new((idx / w) as i32, (idx % w) as i32));
    }

    SegmentationResult {
        width: w,
        height: h,
        labels,
        regions,
        marker_count,
        threshold,
        dark_foreground,
    }
}

/// Otsu's threshold: values `<= t` form one class, values `> t` the other.
pub fn otsu_threshold(pixels: &[u8]) -> u8 {
    let mut hist = [0u64; 256];
    for &v in pixels {
        hist[v as usize] += 1;
    }
    let total = pixels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut weight_low, mut sum_low) = (0.0, 0.0);
    let (mut best, mut best_var) = (0u8, -1.0);
    for (t, &count) in hist.iter().enumerate() {
        weight_low += count as f64;
        if weight_low == 0.0 {
            continue;
        }
        let weight_high = total - weight_low;
        if weight_high == 0.0 {
            break;
        }
        sum_low += t as f64 * count as f64;
        let mean_low = sum_low / weight_low;
        let mean_high = (sum_all - sum_low) / weight_high;
        let var = weight_low * weight_high * (mean_low - mean_high).powi(2);
        if var > best_var {
            best_var = var;
            best = t as u8;
        }
    }
    best
}

fn neighbours4(idx: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (idx / w, idx % w);
    let up = (r > 0).then(|| idx - w);
    let down = (r + 1 < h).then(|| idx + w);
    let left = (c > 0).then(|| idx - 1);
    let right = (c + 1 < w).then(|| idx + 1);
    [up, left, right, down].into_iter().flatten()
}

/// 3x3 erosion; pixels outside the image do not erode.
pub fn erode(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    morph(mask, w, h, true)
}

/// 3x3 dilation; pixels outside the image do not dilate.
pub fn dilate(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    morph(mask, w, h, false)
}

fn morph(mask: &[bool], w: usize, h: usize, erosion: bool) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for r in 0..h {
        let rows = r.saturating_sub(1)..=(r + 1).min(h - 1);
        for c in 0..w {
            let cols = c.saturating_sub(1)..=(c + 1).min(w - 1);
            let mut all = true;
            let mut any = false;
            for rr in rows.clone() {
                for cc in cols.clone() {
                    let v = mask[rr * w + cc];
                    all &= v;
                    any |= v;
                }
            }
            out[r * w + c] = if erosion { all } else { any };
        }
    }
    out
}

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel inside the image (separable lower-envelope method).
/// Background pixels get 0. With no background at all every pixel gets
/// `w + h`.
pub fn distance_transform(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    if mask.iter().all(|&m| m) {
        return vec![(w + h) as f64; w * h];
    }
    const INF: f64 = 1e20;
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { INF } else { 0.0 }).collect();
    let mut f = vec![0.0; w.max(h)];
    let mut d = vec![0.0; w.max(h)];
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        edt_1d(&f[..h], &mut d[..h]);
        for r in 0..h {
            grid[r * w + c] = d[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        edt_1d(&f[..w], &mut d[..w]);
        grid[r * w..(r + 1) * w].copy_from_slice(&d[..w]);
    }
    grid.into_iter().map(f64::sqrt).collect()
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *out = diff * diff + f[p];
    }
}

/// 4-connected foreground components (1-based labels) and each one's
/// maximum distance value.
fn components(mask: &[bool], dist: &[f64], w: usize, h: usize) -> (Vec<u32>, Vec<f64>) {
    let mut labels = vec![0u32; w * h];
    let mut maxima = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        maxima.push(0.0f64);
        let label = maxima.len() as u32;
        labels[start] = label;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let m = maxima.last_mut().expect("pushed above");
            *m = m.max(dist[p]);
            for q in neighbours4(p, w, h) {
                if mask[q] && labels[q] == 0 {
                    labels[q] = label;
                    queue.push_back(q);
                }
            }
        }
    }
    (labels, maxima)
}

/// Distance peaks whose dynamic (height above the saddle towards a higher
/// peak) is at least `min_dynamic`, plus the highest peak of every
/// component. Returned sorted by pixel index.
fn peak_markers(mask: &[bool], dist: &[f64], w: usize, h: usize, min_dynamic: f64) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut order: Vec<usize> = (0..w * h).filter(|&i| mask[i]).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));

    let mut parent = vec![NONE; w * h];
    // Peak pixel of each root; dist[peak] is its height.
    let mut peak = vec![NONE; w * h];
    let mut markers = Vec::new();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let higher = |a: usize, b: usize| -> bool {
        match dist[a].total_cmp(&dist[b]) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a < b,
        }
    };

    for &p in &order {
        parent[p] = p;
        peak[p] = p;
        for q in neighbours4(p, w, h) {
            if parent[q] == NONE {
                continue;
            }
            let rp = find(&mut parent, p);
            let rq = find(&mut parent, q);
            if rp == rq {
                continue;
            }
            let (win, lose) = if higher(peak[rp], peak[rq]) { (rp, rq) } else { (rq, rp) };
            if dist[peak[lose]] - dist[p] >= min_dynamic {
                markers.push(peak[lose]);
            }
            parent[lose] = win;
        }
    }
    for &p in &order {
        if parent[p] == p {
            markers.push(peak[p]);
        }
    }
    markers.sort_unstable();
    markers
}

#[derive(PartialEq, Eq)]
struct Front {
    height: u64,
    seq: u64,
    pixel: usize,
}

impl Ord for Front {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on height; earlier insertion first among equals.
        self.height
            .cmp(&other.height)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Front {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Floods the foreground from `markers` (labels `1..`), visiting pixels
/// with larger distance first.
fn flood(mask: &[bool], dist: &[f64], w: usize, h: usize, markers: &[usize]) -> Vec<u32> {
    let mut labels = vec![0u32; w * h];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    // Distances are non-negative, so their bit patterns order like the values.
    let key = |p: usize| dist[p].to_bits();
    for (i, &m) in markers.iter().enumerate() {
        labels[m] = i as u32 + 1;
        heap.push(Front {
            height: key(m),
            seq,
            pixel: m,
        });
        seq += 1;
    }
    while let Some(Front { pixel, .. }) = heap.pop() {
        let label = labels[pixel];
        for q in neighbours4(pixel, w, h) {
            if mask[q] && labels[q] == 0 {
                labels[q] = label;
                heap.push(Front {
                    height: key(q),
                    seq,
                    pixel: q,
                });
                seq += 1;
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_edt(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
        (0..w * h)
            .map(|i| {
                if !mask[i] {
                    return 0.0;
                }
                let (r, c) = ((i / w) as f64, (i % w) as f64);
                (0..w * h)
                    .filter(|&j| !mask[j])
                    .map(|j| {
                        let (rr, cc) = ((j / w) as f64, (j % w) as f64);
                        ((r - rr).powi(2) + (c - cc).powi(2)).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn edt_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (23, 17);
        for _ in 0..5 {
            let mask: Vec<bool> = (0..w * h).map(|_| rng.random::<f64>() < 0.85).collect();
            let fast = distance_transform(&mask, w, h);
            let slow = brute_edt(&mask, w, h);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn otsu_splits_bimodal() {
        let mut px = vec![40u8; 500];
        px.extend(vec![200u8; 300]);
        let t = otsu_threshold(&px);
        assert!((40..200).contains(&t));
        assert_eq!(otsu_threshold(&[7u8; 100]), 0);
    }

    #[test]
    fn opening_removes_speckle() {
        let (w, h) = (20, 20);
        let mut mask = vec![false; w * h];
        mask[5 * w + 5] = true;
        for r in 10..18 {
            for c in 10..18 {
                mask[r * w + c] = true;
            }
        }
        let mut m = mask.clone();
        for _ in 0..2 {
            m = erode(&m, w, h);
        }
        for _ in 0..2 {
            m = dilate(&m, w, h);
        }
        assert!(!m[5 * w + 5]);
        assert_eq!(m.iter().filter(|&&v| v).count(), 64);
    }

    #[test]
    fn flat_ridge_yields_single_marker() {
        // A long bar has a flat distance ridge: one marker only.
        let (w, h) = (60, 20);
        let mut mask = vec![false; w * h];
        for r in 5..15 {
            for c in 3..57 {
                mask[r * w + c] = true;
            }
        }
        let dist = distance_transform(&mask, w, h);
        assert_eq!(peak_markers(&mask, &dist, w, h, 2.0).len(), 1);
    }
}
