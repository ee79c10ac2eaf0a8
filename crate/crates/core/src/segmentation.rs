//! Nucleus-of-interest segmentation via the polar-image contour pipeline.
//!
//! Stages per frame:
//! 1. median filter (radius 3) and Otsu threshold for a coarse foreground,
//! 2. connected components, pick the candidate closest to the image center,
//! 3. polar transform around the candidate centroid,
//! 4. Gaussian blur (sigma 2) plus per-row 1-D median (radius 3) on the polar
//!    image, then Otsu on the polar image,
//! 5. per-angle contour radius from the binary polar image,
//! 6. rasterize the contour polygon back to a cartesian mask and apply it to
//!    the original frame.

use crate::error::{Error, Result};
use crate::frame::{BinaryMask, Frame, IntensityProfile};
use crate::imageops::{
    apply_mask, bilinear_sample, gaussian_blur, intensity_histogram, median_filter,
    median_filter_1d, otsu_threshold, otsu_threshold_bin, OTSU_BINS,
};

/// A connected foreground component with its size and center of gravity.
#[derive(Debug, Clone)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub centroid: (f64, f64),
    /// Inclusive bounding box (x0, y0, x1, y1).
    pub bbox: (usize, usize, usize, usize),
}

impl Component {
    /// Distance from the centroid to the farthest bounding-box corner, an
    /// upper bound on the component radius.
    pub fn bounding_radius(&self) -> f64 {
        let (x0, y0, x1, y1) = self.bbox;
        let corners = [
            (x0 as f64, y0 as f64),
            (x1 as f64, y0 as f64),
            (x0 as f64, y1 as f64),
            (x1 as f64, y1 as f64),
        ];
        corners
            .iter()
            .map(|&(x, y)| ((x - self.centroid.0).powi(2) + (y - self.centroid.1).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }
}

/// 8-connected component labeling.
///
/// Returns the label image (0 = background) and the components ordered by
/// (area descending, centroid row, centroid column).
pub fn connected_components(mask: &BinaryMask) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut components = Vec::new();
    let mut queue: Vec<(usize, usize)> = Vec::new();
    let mut next_label = 0u32;

    for sy in 0..h {
        for sx in 0..w {
            if !mask.get(sx, sy) || labels[sy * w + sx] != 0 {
                continue;
            }
            next_label += 1;
            let label = next_label;
            labels[sy * w + sx] = label;
            queue.clear();
            queue.push((sx, sy));
            let mut area = 0usize;
            let mut sum_x = 0.0f64;
            let mut sum_y = 0.0f64;
            let mut bbox = (sx, sy, sx, sy);
            while let Some((x, y)) = queue.pop() {
                area += 1;
                sum_x += x as f64;
                sum_y += y as f64;
                bbox.0 = bbox.0.min(x);
                bbox.1 = bbox.1.min(y);
                bbox.2 = bbox.2.max(x);
                bbox.3 = bbox.3.max(y);
                let x0 = x.saturating_sub(1);
                let y0 = y.saturating_sub(1);
                let x1 = (x + 1).min(w - 1);
                let y1 = (y + 1).min(h - 1);
                for ny in y0..=y1 {
                    for nx in x0..=x1 {
                        if mask.get(nx, ny) && labels[ny * w + nx] == 0 {
                            labels[ny * w + nx] = label;
                            queue.push((nx, ny));
                        }
                    }
                }
            }
            components.push(Component {
                label,
                area,
                centroid: (sum_x / area as f64, sum_y / area as f64),
                bbox,
            });
        }
    }

    components.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.centroid.1.total_cmp(&b.centroid.1))
            .then(a.centroid.0.total_cmp(&b.centroid.0))
    });
    (labels, components)
}

/// Pick the nucleus of interest: among components with at least `min_area`
/// pixels, the one whose centroid is closest to `image_center`; ties go to
/// the larger area.
pub fn select_noi(
    components: &[Component],
    image_center: (f64, f64),
    min_area: usize,
) -> Result<Component> {
    components
        .iter()
        .filter(|c| c.area >= min_area)
        .min_by(|a, b| {
            let da = (a.centroid.0 - image_center.0).powi(2)
                + (a.centroid.1 - image_center.1).powi(2);
            let db = (b.centroid.0 - image_center.0).powi(2)
                + (b.centroid.1 - image_center.1).powi(2);
            da.total_cmp(&db)
                .then(b.area.cmp(&a.area))
                .then(a.centroid.1.total_cmp(&b.centroid.1))
                .then(a.centroid.0.total_cmp(&b.centroid.0))
        })
        .cloned()
        .ok_or(Error::NoNucleusFound { min_area })
}

/// An image resampled on a polar grid around a center point. Row `i` holds
/// angle `2*pi*i / n_angles`, column `j` holds radius `j * r_max /
/// (n_radii - 1)`.
#[derive(Debug, Clone)]
pub struct PolarImage {
    pub n_angles: usize,
    pub n_radii: usize,
    /// Row-major (angle-major) sample grid.
    pub values: Vec<f32>,
    pub center: (f64, f64),
    pub r_max: f64,
}

impl PolarImage {
    #[inline]
    pub fn get(&self, angle: usize, radius: usize) -> f32 {
        self.values[angle * self.n_radii + radius]
    }

    pub fn radius_step(&self) -> f64 {
        self.r_max / (self.n_radii - 1) as f64
    }

    /// View the polar grid as a frame (width = radii, height = angles) so
    /// cartesian filters apply directly.
    pub fn as_frame(&self) -> Frame {
        Frame::new(self.n_radii, self.n_angles, self.values.clone(), 16)
    }
}

/// Resample `img` on a polar grid around `center` with bilinear
/// interpolation; samples outside the image are 0.
pub fn polar_transform(
    img: &Frame,
    center: (f64, f64),
    n_angles: usize,
    n_radii: usize,
    r_max: f64,
) -> PolarImage {
    assert!(r_max > 0.0, "polar_transform requires r_max > 0");
    assert!(n_angles >= 1 && n_radii >= 2);
    let dr = r_max / (n_radii - 1) as f64;
    let mut values = Vec::with_capacity(n_angles * n_radii);
    for i in 0..n_angles {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_angles as f64;
        let (sin_t, cos_t) = theta.sin_cos();
        for j in 0..n_radii {
            let r = j as f64 * dr;
            values.push(bilinear_sample(img, center.0 + r * cos_t, center.1 + r * sin_t));
        }
    }
    PolarImage {
        n_angles,
        n_radii,
        values,
        center,
        r_max,
    }
}

/// Binary polar image produced by thresholding a (smoothed) polar image.
#[derive(Debug, Clone)]
pub struct PolarBinary {
    pub n_angles: usize,
    pub n_radii: usize,
    pub bits: Vec<bool>,
}

impl PolarBinary {
    #[inline]
    pub fn get(&self, angle: usize, radius: usize) -> bool {
        self.bits[angle * self.n_radii + radius]
    }
}

/// Per-angle contour radius in radial-bin units.
///
/// For each angle row the contour sits at the last column of the foreground
/// run that starts at the center column. Rows whose center column is
/// background are filled with the median of their nearest valid circular
/// neighbors; if fewer than `min_valid_frac` of rows are valid the contour is
/// rejected.
pub fn extract_contour(polar_bin: &PolarBinary, min_valid_frac: f64) -> Result<Vec<f64>> {
    let n = polar_bin.n_angles;
    let mut radii: Vec<Option<f64>> = vec![None; n];
    for i in 0..n {
        if !polar_bin.get(i, 0) {
            continue;
        }
        let mut j = 0usize;
        while j + 1 < polar_bin.n_radii && polar_bin.get(i, j + 1) {
            j += 1;
        }
        radii[i] = Some(j as f64);
    }
    let valid = radii.iter().filter(|r| r.is_some()).count();
    if (valid as f64) < min_valid_frac * n as f64 || valid == 0 {
        return Err(Error::ContourExtractionFailed { valid, total: n });
    }

    let filled: Vec<f64> = (0..n)
        .map(|i| {
            if let Some(r) = radii[i] {
                return r;
            }
            // Nearest valid row in each circular direction; median of the
            // two (their mean).
            let mut fwd = None;
            let mut bwd = None;
            for step in 1..n {
                if fwd.is_none() {
                    if let Some(r) = radii[(i + step) % n] {
                        fwd = Some(r);
                    }
                }
                if bwd.is_none() {
                    if let Some(r) = radii[(i + n - step % n) % n] {
                        bwd = Some(r);
                    }
                }
                if fwd.is_some() && bwd.is_some() {
                    break;
                }
            }
            match (fwd, bwd) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => unreachable!("at least one valid row exists"),
            }
        })
        .collect();
    Ok(filled)
}

/// Scanline fill of the closed polygon whose vertex `i` lies at
/// `center + radius[i] * (cos, sin)(2*pi*i/n)`.
///
/// A pixel at integer coordinates (x, y) is set when it lies between a
/// crossing pair on its scanline (half-open crossing rule, closed fill
/// interval).
pub fn rasterize_contour(
    contour_px: &[f64],
    center: (f64, f64),
    width: usize,
    height: usize,
) -> BinaryMask {
    let n = contour_px.len();
    let vertices: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let (s, c) = theta.sin_cos();
            (center.0 + contour_px[i] * c, center.1 + contour_px[i] * s)
        })
        .collect();

    let mut mask = BinaryMask::filled(width, height, false);
    let mut crossings: Vec<f64> = Vec::new();
    for y in 0..height {
        let fy = y as f64;
        crossings.clear();
        for i in 0..n {
            let (x1, y1) = vertices[i];
            let (x2, y2) = vertices[(i + 1) % n];
            if (y1 <= fy && fy < y2) || (y2 <= fy && fy < y1) {
                crossings.push(x1 + (fy - y1) / (y2 - y1) * (x2 - x1));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let lo = pair[0].ceil().max(0.0) as i64;
            let hi = pair[1].floor().min(width as f64 - 1.0) as i64;
            for x in lo..=hi.min(width as i64 - 1) {
                if x >= 0 {
                    mask.set(x as usize, y, true);
                }
            }
        }
    }
    mask
}

#[derive(Debug, Clone)]
pub struct SegmentationParams {
    pub median_radius: usize,
    pub n_angles: usize,
    pub n_radii: usize,
    /// Maximum sampled radius; defaults to half the image diagonal.
    pub r_max: Option<f64>,
    /// Minimum component area as a fraction of the image pixels.
    pub min_area_frac: f64,
    pub polar_blur_sigma: f64,
    pub polar_median_radius: usize,
    /// The polar Otsu histogram covers columns up to this multiple of the
    /// coarse component's bounding radius.
    pub bounding_radius_factor: f64,
    /// Minimum fraction of valid contour rows.
    pub min_valid_contour_frac: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            median_radius: 3,
            n_angles: 360,
            n_radii: 256,
            r_max: None,
            min_area_frac: 0.005,
            polar_blur_sigma: 2.0,
            polar_median_radius: 3,
            bounding_radius_factor: 1.5,
            min_valid_contour_frac: 0.25,
        }
    }
}

/// Final segmentation of one frame.
#[derive(Debug, Clone)]
pub struct SegmentedFrame {
    /// Nucleus mask rasterized from the polar contour.
    pub mask: BinaryMask,
    /// Coarse-stage centroid of the nucleus, the polar center.
    pub centroid: (f64, f64),
    /// Per-angle contour radius in pixels.
    pub contour: Vec<f64>,
    /// Original frame with everything outside the mask zeroed.
    pub masked: Frame,
    /// All coarse Otsu foreground (every component); the complement defines
    /// the background region for intensity correction.
    pub coarse_foreground: BinaryMask,
}

/// Intermediate products of `segment_frame`, kept for QC export.
#[derive(Debug, Clone)]
pub struct SegmentationStages {
    pub median_filtered: Frame,
    pub coarse_threshold: f32,
    pub coarse_mask: BinaryMask,
    pub polar: PolarImage,
    pub polar_smoothed: PolarImage,
    pub polar_binary: PolarBinary,
    pub result: SegmentedFrame,
}

/// Run the full per-frame segmentation pipeline, returning all intermediates.
pub fn segment_frame_stages(img: &Frame, params: &SegmentationParams) -> Result<SegmentationStages> {
    let (w, h) = (img.width(), img.height());
    let median_filtered = median_filter(img, params.median_radius);
    let (coarse_threshold, coarse_mask) = otsu_threshold(&median_filtered, OTSU_BINS)
        .map_err(|_| Error::NoNucleusFound {
            min_area: (params.min_area_frac * (w * h) as f64).ceil() as usize,
        })?;

    let (_, components) = connected_components(&coarse_mask);
    let min_area = (params.min_area_frac * (w * h) as f64).ceil() as usize;
    let image_center = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let noi = select_noi(&components, image_center, min_area)?;

    let r_max = params
        .r_max
        .unwrap_or_else(|| 0.5 * ((w * w + h * h) as f64).sqrt());
    let polar = polar_transform(
        &median_filtered,
        noi.centroid,
        params.n_angles,
        params.n_radii,
        r_max,
    );

    // Smooth the polar image: Gaussian blur, then a 1-D median along each
    // angle row.
    let blurred = gaussian_blur(&polar.as_frame(), params.polar_blur_sigma);
    let mut smoothed_values = Vec::with_capacity(polar.values.len());
    for i in 0..params.n_angles {
        let row: Vec<f64> = (0..params.n_radii)
            .map(|j| blurred.get(j, i) as f64)
            .collect();
        let filtered = median_filter_1d(&IntensityProfile::new(row), params.polar_median_radius);
        smoothed_values.extend(filtered.values.iter().map(|&v| v as f32));
    }
    let polar_smoothed = PolarImage {
        n_angles: params.n_angles,
        n_radii: params.n_radii,
        values: smoothed_values,
        center: polar.center,
        r_max,
    };

    // Otsu on the polar image, restricted to columns within the coarse
    // bounding radius so the background class stays representative.
    let dr = polar_smoothed.radius_step();
    let col_limit = ((noi.bounding_radius() * params.bounding_radius_factor / dr).ceil() as usize)
        .clamp(1, params.n_radii - 1);
    let hist = intensity_histogram(
        (0..params.n_angles)
            .flat_map(|i| (0..=col_limit).map(move |j| (i, j)))
            .map(|(i, j)| polar_smoothed.get(i, j)),
        OTSU_BINS,
    );
    let polar_bin = otsu_threshold_bin(&hist).map_err(|_| Error::ContourExtractionFailed {
        valid: 0,
        total: params.n_angles,
    })?;
    let polar_threshold = (polar_bin + 1) as f32 / OTSU_BINS as f32;
    let bits: Vec<bool> = (0..params.n_angles)
        .flat_map(|i| {
            let polar_smoothed = &polar_smoothed;
            (0..params.n_radii)
                .map(move |j| j <= col_limit && polar_smoothed.get(i, j) > polar_threshold)
        })
        .collect();
    let polar_binary = PolarBinary {
        n_angles: params.n_angles,
        n_radii: params.n_radii,
        bits,
    };

    let contour_bins = extract_contour(&polar_binary, params.min_valid_contour_frac)?;
    let contour: Vec<f64> = contour_bins.iter().map(|&b| b * dr).collect();
    let mask = rasterize_contour(&contour, noi.centroid, w, h);
    let masked = apply_mask(img, &mask);

    Ok(SegmentationStages {
        median_filtered,
        coarse_threshold,
        coarse_mask: coarse_mask.clone(),
        polar,
        polar_smoothed,
        polar_binary,
        result: SegmentedFrame {
            mask,
            centroid: noi.centroid,
            contour,
            masked,
            coarse_foreground: coarse_mask,
        },
    })
}

/// Segment one frame; see [`segment_frame_stages`] for the intermediates.
pub fn segment_frame(img: &Frame, params: &SegmentationParams) -> Result<SegmentedFrame> {
    segment_frame_stages(img, params).map(|stages| stages.result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ellipse_frame(
        w: usize,
        h: usize,
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        intensity: f32,
    ) -> Frame {
        Frame::from_fn(w, h, |x, y| {
            let dx = (x as f64 - cx) / a;
            let dy = (y as f64 - cy) / b;
            if dx * dx + dy * dy <= 1.0 {
                intensity
            } else {
                0.0
            }
        })
    }

    fn ellipse_mask(w: usize, h: usize, cx: f64, cy: f64, a: f64, b: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let dx = (x as f64 - cx) / a;
            let dy = (y as f64 - cy) / b;
            dx * dx + dy * dy <= 1.0
        })
    }

    #[test]
    fn components_two_blocks() {
        let mask = BinaryMask::from_fn(12, 6, |x, y| {
            (x < 3 && y < 3) || ((8..11).contains(&x) && (2..5).contains(&y))
        });
        let (_, comps) = connected_components(&mask);
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.area == 9));
    }

    #[test]
    fn components_empty_mask() {
        let (_, comps) = connected_components(&BinaryMask::filled(5, 5, false));
        assert!(comps.is_empty());
    }

    #[test]
    fn components_match_flood_fill_oracle() {
        // Pseudo-random mask; oracle is an independent BFS flood fill.
        let mask = BinaryMask::from_fn(24, 24, |x, y| ((x * 31 + y * 17 + 7) % 5) < 2);
        let (labels, comps) = connected_components(&mask);

        // Oracle labeling.
        let (w, h) = (24usize, 24usize);
        let mut oracle = vec![0u32; w * h];
        let mut next = 0u32;
        let mut areas = Vec::new();
        for sy in 0..h {
            for sx in 0..w {
                if !mask.get(sx, sy) || oracle[sy * w + sx] != 0 {
                    continue;
                }
                next += 1;
                let mut area = 0;
                let mut q = std::collections::VecDeque::new();
                oracle[sy * w + sx] = next;
                q.push_back((sx, sy));
                while let Some((x, y)) = q.pop_front() {
                    area += 1;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let nx = x as i64 + dx;
                            let ny = y as i64 + dy;
                            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                                let (nx, ny) = (nx as usize, ny as usize);
                                if mask.get(nx, ny) && oracle[ny * w + nx] == 0 {
                                    oracle[ny * w + nx] = next;
                                    q.push_back((nx, ny));
                                }
                            }
                        }
                    }
                }
                areas.push(area);
            }
        }
        assert_eq!(comps.len(), areas.len());
        // Same partition: two pixels share a label in ours iff they share one
        // in the oracle.
        for i in 0..w * h {
            for j in (i + 1)..w * h {
                let ours = labels[i] != 0 && labels[i] == labels[j];
                let theirs = oracle[i] != 0 && oracle[i] == oracle[j];
                assert_eq!(ours, theirs, "partition mismatch at {i},{j}");
            }
        }
    }

    #[test]
    fn select_noi_prefers_central() {
        let comps = vec![
            Component {
                label: 1,
                area: 500,
                centroid: (60.0, 50.0),
                bbox: (40, 30, 80, 70),
            },
            Component {
                label: 2,
                area: 800,
                centroid: (10.0, 10.0),
                bbox: (0, 0, 20, 20),
            },
        ];
        let noi = select_noi(&comps, (50.0, 50.0), 100).unwrap();
        assert_eq!(noi.label, 1);

        let single = select_noi(&comps[1..], (50.0, 50.0), 100).unwrap();
        assert_eq!(single.label, 2);

        assert!(matches!(
            select_noi(&comps, (50.0, 50.0), 10_000),
            Err(Error::NoNucleusFound { .. })
        ));
    }

    #[test]
    fn polar_axis_convention_and_disk_step() {
        let img = ellipse_frame(64, 64, 31.5, 31.5, 20.0, 20.0, 0.8);
        let polar = polar_transform(&img, (31.5, 31.5), 90, 64, 32.0);
        let dr = polar.radius_step();
        // Row 0 is the horizontal ray to the right of the center.
        for j in 0..64 {
            let r = j as f64 * dr;
            let expected = bilinear_sample(&img, 31.5 + r, 31.5);
            assert!((polar.get(0, j) - expected).abs() < 1e-7);
        }
        // Every row steps from high to 0 near radius 20.
        let drop = (20.0 / dr).floor() as usize;
        for i in 0..90 {
            assert!(polar.get(i, drop.saturating_sub(2)) > 0.4);
            assert!(polar.get(i, (drop + 3).min(63)) < 0.4);
        }
    }

    #[test]
    fn polar_matches_per_sample_oracle() {
        let img = Frame::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 11) as f32 / 11.0);
        let center = (14.3, 16.8);
        let polar = polar_transform(&img, center, 36, 20, 12.0);
        for i in 0..36 {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / 36.0;
            for j in 0..20 {
                let r = j as f64 * 12.0 / 19.0;
                let expected =
                    bilinear_sample(&img, center.0 + r * theta.cos(), center.1 + r * theta.sin());
                assert!((polar.get(i, j) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn contour_of_disk_phantom_is_flat() {
        let n_angles = 72;
        let n_radii = 50;
        let bits: Vec<bool> = (0..n_angles)
            .flat_map(|_| (0..n_radii).map(|j| j <= 30))
            .collect();
        let pb = PolarBinary {
            n_angles,
            n_radii,
            bits,
        };
        let contour = extract_contour(&pb, 0.25).unwrap();
        assert!(contour.iter().all(|&r| (r - 30.0).abs() <= 1.0));
    }

    #[test]
    fn contour_ellipse_matches_analytic_radius() {
        // Binary polar image of an ellipse a=60, b=40 sampled directly from
        // the analytic interior test.
        let (n_angles, n_radii) = (360, 256);
        let r_max = 100.0;
        let dr = r_max / (n_radii - 1) as f64;
        let (a, b) = (60.0f64, 40.0f64);
        let bits: Vec<bool> = (0..n_angles)
            .flat_map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / n_angles as f64;
                (0..n_radii).map(move |j| {
                    let r = j as f64 * dr;
                    let x = r * theta.cos() / a;
                    let y = r * theta.sin() / b;
                    x * x + y * y <= 1.0
                })
            })
            .collect();
        let pb = PolarBinary {
            n_angles,
            n_radii,
            bits,
        };
        let contour = extract_contour(&pb, 0.25).unwrap();
        for i in 0..n_angles {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n_angles as f64;
            let expected =
                a * b / ((b * theta.cos()).powi(2) + (a * theta.sin()).powi(2)).sqrt() / dr;
            assert!(
                (contour[i] - expected).abs() <= 2.0,
                "angle row {i}: contour {} vs analytic {}",
                contour[i],
                expected
            );
        }
    }

    #[test]
    fn contour_all_background_fails() {
        let pb = PolarBinary {
            n_angles: 36,
            n_radii: 16,
            bits: vec![false; 36 * 16],
        };
        assert!(matches!(
            extract_contour(&pb, 0.25),
            Err(Error::ContourExtractionFailed { .. })
        ));
    }

    #[test]
    fn rasterize_matches_point_in_polygon_oracle() {
        // Lumpy star-shaped contour.
        let n = 90;
        let contour: Vec<f64> = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                14.0 + 3.0 * (3.0 * t).sin() + 1.5 * (5.0 * t + 0.7).cos()
            })
            .collect();
        let center = (24.2, 22.7);
        let mask = rasterize_contour(&contour, center, 48, 48);

        // Even-odd ray-casting oracle at each pixel center.
        let vertices: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (
                    center.0 + contour[i] * t.cos(),
                    center.1 + contour[i] * t.sin(),
                )
            })
            .collect();
        for y in 0..48 {
            for x in 0..48 {
                let (px, py) = (x as f64, y as f64);
                let mut inside = false;
                for i in 0..n {
                    let (x1, y1) = vertices[i];
                    let (x2, y2) = vertices[(i + 1) % n];
                    if (y1 <= py && py < y2) || (y2 <= py && py < y1) {
                        let xc = x1 + (py - y1) / (y2 - y1) * (x2 - x1);
                        if px < xc {
                            inside = !inside;
                        }
                    }
                }
                assert_eq!(mask.get(x, y), inside, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn segment_noiseless_ellipse_high_iou() {
        let img = ellipse_frame(128, 128, 63.0, 64.0, 40.0, 28.0, 0.7);
        let seg = segment_frame(&img, &SegmentationParams::default()).unwrap();
        let truth = ellipse_mask(128, 128, 63.0, 64.0, 40.0, 28.0);
        let iou = seg.mask.iou(&truth);
        assert!(iou >= 0.98, "IoU {iou}");
        assert!((seg.centroid.0 - 63.0).abs() < 1.0);
        assert!((seg.centroid.1 - 64.0).abs() < 1.0);
    }

    #[test]
    fn segment_picks_central_nucleus_over_distractor() {
        let mut img = ellipse_frame(128, 128, 64.0, 64.0, 30.0, 24.0, 0.6);
        // Peripheral distractor nucleus.
        for y in 0..128 {
            for x in 0..128 {
                let dx = (x as f64 - 14.0) / 12.0;
                let dy = (y as f64 - 13.0) / 10.0;
                if dx * dx + dy * dy <= 1.0 {
                    img.set(x, y, 0.75);
                }
            }
        }
        let seg = segment_frame(&img, &SegmentationParams::default()).unwrap();
        assert!((seg.centroid.0 - 64.0).abs() < 2.0);
        assert!((seg.centroid.1 - 64.0).abs() < 2.0);
    }

    #[test]
    fn segment_blank_frame_fails() {
        let img = Frame::zeros(64, 64);
        assert!(matches!(
            segment_frame(&img, &SegmentationParams::default()),
            Err(Error::NoNucleusFound { .. })
        ));
    }

    #[test]
    fn segment_translation_covariant() {
        let base = ellipse_frame(128, 128, 56.0, 60.0, 30.0, 22.0, 0.65);
        let shifted = ellipse_frame(128, 128, 56.0 + 9.0, 60.0 - 6.0, 30.0, 22.0, 0.65);
        let p = SegmentationParams::default();
        let a = segment_frame(&base, &p).unwrap();
        let b = segment_frame(&shifted, &p).unwrap();
        assert!((b.centroid.0 - a.centroid.0 - 9.0).abs() < 1e-6);
        assert!((b.centroid.1 - a.centroid.1 + 6.0).abs() < 1e-6);
        for y in 0..128 {
            for x in 0..128 {
                let sx = x as i64 - 9;
                let sy = y as i64 + 6;
                let expected = if sx >= 0 && sy >= 0 && sx < 128 && sy < 128 {
                    a.mask.get(sx as usize, sy as usize)
                } else {
                    false
                };
                assert_eq!(b.mask.get(x, y), expected, "mask mismatch at ({x},{y})");
            }
        }
    }

    #[test]
    fn segment_mask_is_single_component() {
        let img = ellipse_frame(96, 96, 48.0, 47.0, 28.0, 20.0, 0.7);
        let seg = segment_frame(&img, &SegmentationParams::default()).unwrap();
        let (_, comps) = connected_components(&seg.mask);
        assert_eq!(comps.len(), 1);
    }

    #[test]
    fn contour_of_convex_phantom_varies_smoothly() {
        let img = ellipse_frame(128, 128, 64.0, 64.0, 42.0, 30.0, 0.7);
        let p = SegmentationParams::default();
        let seg = segment_frame(&img, &p).unwrap();
        let dr = p
            .r_max
            .unwrap_or_else(|| 0.5 * ((128.0f64 * 128.0) * 2.0).sqrt())
            / (p.n_radii - 1) as f64;
        for i in 0..seg.contour.len() {
            let next = seg.contour[(i + 1) % seg.contour.len()];
            let jump = (seg.contour[i] - next).abs() / dr;
            assert!(jump <= 3.0, "radius jump {jump} bins at row {i}");
        }
    }

    #[test]
    fn select_noi_invariant_to_mask_preserving_rescale() {
        let img = ellipse_frame(96, 96, 48.0, 48.0, 25.0, 20.0, 0.8);
        let scaled = Frame::from_fn(96, 96, |x, y| img.get(x, y) * 0.5);
        let p = SegmentationParams::default();
        let a = segment_frame(&img, &p).unwrap();
        let b = segment_frame(&scaled, &p).unwrap();
        assert_eq!(a.centroid, b.centroid);
        assert_eq!(a.mask, b.mask);
    }
}
