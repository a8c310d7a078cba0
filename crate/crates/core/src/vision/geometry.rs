//! Chord-based circle fitting for a single droplet region.
//!
//! Lengths are measured between pixel centres: the major chord is the
//! region's diameter (farthest pair of pixels), the minor chord the widest
//! cross-section perpendicular to it. The fitted circle sits where the two
//! chords cross and has radius `(r_major + r_minor) / 4`.

use std::collections::HashSet;

use super::{Pixel, VisionError};

#[derive(Debug, Clone, PartialEq)]
pub struct DropletGeometry {
    /// (row, col) of the chord intersection.
    pub centroid: (f64, f64),
    pub r_major: f64,
    pub r_minor: f64,
    pub circle_radius: f64,
    pub circle_pixels: Vec<Pixel>,
}

impl DropletGeometry {
    /// `|region XOR circle|`.
    pub fn xor_count(&self, region: &[Pixel]) -> usize {
        let circle: HashSet<Pixel> = self.circle_pixels.iter().copied().collect();
        let shared = region.iter().filter(|p| circle.contains(p)).count();
        region.len() + circle.len() - 2 * shared
    }
}

/// Smallest region (pixels) with a defined geometry.
pub const MIN_REGION_AREA: usize = 3;

pub fn droplet_geometry(region: &[Pixel]) -> Result<DropletGeometry, VisionError> {
    if region.len() < MIN_REGION_AREA {
        return Err(VisionError::DegenerateRegion { area: region.len() });
    }
    let members: HashSet<Pixel> = region.iter().copied().collect();
    let boundary: Vec<Pixel> = region
        .iter()
        .copied()
        .filter(|p| p.neighbours4().iter().any(|q| !members.contains(q)))
        .collect();

    let hull = convex_hull(&boundary);
    let (p1, p2) = diameter(&hull);
    let (y1, x1) = (f64::from(p1.row), f64::from(p1.col));
    let length = ((f64::from(p2.row) - y1).powi(2) + (f64::from(p2.col) - x1).powi(2)).sqrt();
    let (uy, ux) = (
        (f64::from(p2.row) - y1) / length,
        (f64::from(p2.col) - x1) / length,
    );
    // Perpendicular direction.
    let (vy, vx) = (ux, -uy);

    // Cross-section extent per unit-width slice along the major axis.
    let mut slices: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    for p in region {
        let (dy, dx) = (f64::from(p.row) - y1, f64::from(p.col) - x1);
        let t = dy * uy + dx * ux;
        let s = dy * vy + dx * vx;
        let e = slices.entry(t.round() as i64).or_insert((s, s));
        e.0 = e.0.min(s);
        e.1 = e.1.max(s);
    }
    let half = length / 2.0;
    let (best_slice, best_extent) = slices
        .iter()
        .map(|(&k, &(lo, hi))| (k, hi - lo))
        .fold(None::<(i64, f64)>, |best, (k, extent)| match best {
            None => Some((k, extent)),
            Some((bk, be)) => {
                let better = extent > be + 1e-9
                    || ((extent - be).abs() <= 1e-9
                        && (k as f64 - half).abs() < (bk as f64 - half).abs() - 1e-9);
                Some(if better { (k, extent) } else { (bk, be) })
            }
        })
        .expect("region is non-empty");

    // Straight one-pixel lines still have unit width.
    let r_major = length.max(1.0);
    let r_minor = best_extent.max(1.0).min(r_major);
    let t = best_slice as f64;
    let centroid = (y1 + t * uy, x1 + t * ux);
    let circle_radius = (r_major + r_minor) / 4.0;
    Ok(DropletGeometry {
        centroid,
        r_major,
        r_minor,
        circle_radius,
        circle_pixels: rasterize_disk(centroid, circle_radius),
    })
}

/// Integer pixels whose centres lie within `radius` of `center`.
pub fn rasterize_disk(center: (f64, f64), radius: f64) -> Vec<Pixel> {
    // Absorbs rounding in the centroid so exact lattice distances count.
    let r2 = radius * radius + 1e-9;
    let (cy, cx) = center;
    let r0 = (cy - radius).floor() as i32;
    let r1 = (cy + radius).ceil() as i32;
    let c0 = (cx - radius).floor() as i32;
    let c1 = (cx + radius).ceil() as i32;
    let mut out = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let (dy, dx) = (f64::from(r) - cy, f64::from(c) - cx);
            if dy * dy + dx * dx <= r2 {
                out.push(Pixel::new(r, c));
            }
        }
    }
    out
}

fn cross(o: Pixel, a: Pixel, b: Pixel) -> i64 {
    let (ax, ay) = (i64::from(a.col - o.col), i64::from(a.row - o.row));
    let (bx, by) = (i64::from(b.col - o.col), i64::from(b.row - o.row));
    ax * by - ay * bx
}

/// Andrew's monotone chain; collinear points dropped.
fn convex_hull(points: &[Pixel]) -> Vec<Pixel> {
    let mut pts: Vec<Pixel> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Pixel> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter().chain(pts.iter().rev().skip(1)) {
        // Lower hull on the forward pass, upper hull on the way back.
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 2 {
        // All points collinear: the chain collapses to the two extremes.
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

/// Farthest pair among `points`; the first pair found wins ties.
fn diameter(points: &[Pixel]) -> (Pixel, Pixel) {
    let mut best = (points[0], points[0]);
    let mut best_d = -1i64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            let d = a.dist2(b);
            if d > best_d {
                best_d = d;
                best = (a, b);
            }
        }
    }
    if best_d <= 0 {
        best = (points[0], points[0]);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn disk(cy: i32, cx: i32, r: i32) -> Vec<Pixel> {
        let mut v = Vec::new();
        for y in -r..=r {
            for x in -r..=r {
                if x * x + y * y <= r * r {
                    v.push(Pixel::new(cy + y, cx + x));
                }
            }
        }
        v
    }

    fn ellipse(cy: i32, cx: i32, a: f64, b: f64) -> Vec<Pixel> {
        let mut v = Vec::new();
        let (ai, bi) = (a.ceil() as i32, b.ceil() as i32);
        for y in -bi..=bi {
            for x in -ai..=ai {
                let (fx, fy) = (f64::from(x) / a, f64::from(y) / b);
                if fx * fx + fy * fy <= 1.0 {
                    v.push(Pixel::new(cy + y, cx + x));
                }
            }
        }
        v
    }

    #[test]
    fn disk_maps_to_itself() {
        let region = disk(50, 50, 20);
        let g = droplet_geometry(&region).unwrap();
        assert!((g.r_major - 40.0).abs() <= 1.0, "{}", g.r_major);
        assert!((g.r_minor - 40.0).abs() <= 1.0, "{}", g.r_minor);
        let xor = g.xor_count(&region);
        assert!(xor as f64 <= 0.03 * region.len() as f64, "xor {xor}");
    }

    #[test]
    fn ellipse_chords() {
        let region = ellipse(40, 60, 20.0, 10.0);
        let g = droplet_geometry(&region).unwrap();
        assert!((g.r_major - 40.0).abs() <= 1.0, "{}", g.r_major);
        assert!((g.r_minor - 20.0).abs() <= 1.0, "{}", g.r_minor);
        assert!((g.centroid.0 - 40.0).abs() < 1e-9 && (g.centroid.1 - 60.0).abs() < 1e-9);
        assert!((g.circle_radius - 15.0).abs() <= 0.5);
    }

    #[test]
    fn tiny_regions() {
        let two = [Pixel::new(0, 0), Pixel::new(0, 1)];
        assert!(matches!(
            droplet_geometry(&two),
            Err(VisionError::DegenerateRegion { area: 2 })
        ));
        let square = [
            Pixel::new(0, 0),
            Pixel::new(0, 1),
            Pixel::new(1, 0),
            Pixel::new(1, 1),
        ];
        let g = droplet_geometry(&square).unwrap();
        assert!((g.r_major - g.r_minor).abs() < 1e-12);
        assert!((g.r_major - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn straight_line_has_unit_width() {
        let line: Vec<Pixel> = (0..5).map(|c| Pixel::new(3, c)).collect();
        let g = droplet_geometry(&line).unwrap();
        assert_eq!(g.r_major, 4.0);
        assert_eq!(g.r_minor, 1.0);
        assert!(g.r_minor > 0.0);
    }

    #[test]
    fn hull_diameter_matches_all_pairs() {
        let region = ellipse(0, 0, 13.5, 6.2);
        let hull = convex_hull(&region);
        let (a, b) = diameter(&hull);
        let brute = region
            .iter()
            .flat_map(|p| region.iter().map(move |q| p.dist2(*q)))
            .max()
            .unwrap();
        assert_eq!(a.dist2(b), brute);
    }
}
