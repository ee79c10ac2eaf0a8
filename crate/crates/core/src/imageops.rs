//! Primitive image operations shared by every pipeline stage: rank and
//! Gaussian filtering, Otsu thresholding, projections, interpolation and
//! masking.
//!
//! Border policy: convolution replicates edge pixels, rank filters clip the
//! window to the image bounds and take the median of the in-bounds subset.

use crate::error::{Error, Result};
use crate::frame::{BinaryMask, Frame, FrameRole, ImageStack, IntensityProfile};

/// Number of histogram bins used for Otsu thresholding regardless of the
/// source bit depth, so thresholds are comparable across stacks.
pub const OTSU_BINS: usize = 256;

/// Median of the values in `buf`, by sorting and picking the middle element
/// (`buf[len / 2]` after sorting). `buf` must be nonempty.
fn median_in_place(buf: &mut [f32]) -> f32 {
    let mid = buf.len() / 2;
    *buf.select_nth_unstable_by(mid, f32::total_cmp).1
}

/// 2-D median filter over the Chebyshev-ball window of the given radius,
/// clipped at image borders.
pub fn median_filter(img: &Frame, radius: usize) -> Frame {
    assert!(radius >= 1, "median_filter requires radius >= 1");
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0f32; w * h];
    let mut window = Vec::with_capacity((2 * radius + 1) * (2 * radius + 1));
    for y in 0..h {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        for x in 0..w {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            window.clear();
            for wy in y0..=y1 {
                let row = &img.pixels()[wy * w + x0..wy * w + x1 + 1];
                window.extend_from_slice(row);
            }
            out[y * w + x] = median_in_place(&mut window);
        }
    }
    Frame::new(w, h, out, img.bit_depth_source)
}

/// 1-D median filter over a window of `2 * radius + 1` samples, clipped at
/// the profile ends.
pub fn median_filter_1d(profile: &IntensityProfile, radius: usize) -> IntensityProfile {
    assert!(radius >= 1, "median_filter_1d requires radius >= 1");
    let n = profile.values.len();
    let mut out = Vec::with_capacity(n);
    let mut window: Vec<f64> = Vec::with_capacity(2 * radius + 1);
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n.saturating_sub(1));
        window.clear();
        window.extend_from_slice(&profile.values[lo..=hi]);
        let mid = window.len() / 2;
        out.push(*window.select_nth_unstable_by(mid, f64::total_cmp).1);
    }
    IntensityProfile::new(out)
}

/// Discrete Gaussian kernel truncated at `±ceil(3 sigma)` and renormalized to
/// sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "gaussian_blur requires sigma > 0");
    let half = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Separable Gaussian blur with edge replication at the borders.
pub fn gaussian_blur(img: &Frame, sigma: f64) -> Frame {
    let kernel = gaussian_kernel(sigma);
    let half = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);

    // Horizontal pass.
    let mut tmp = vec![0.0f32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x + k as i64 - half).clamp(0, w - 1);
                acc += kv * img.get(sx as usize, y as usize) as f64;
            }
            tmp[(y * w + x) as usize] = acc as f32;
        }
    }

    // Vertical pass.
    let mut out = vec![0.0f32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = (y + k as i64 - half).clamp(0, h - 1);
                acc += kv * tmp[(sy * w + x) as usize] as f64;
            }
            out[(y * w + x) as usize] = acc as f32;
        }
    }
    Frame::new(w as usize, h as usize, out, img.bit_depth_source)
}

/// Histogram of intensities over `[0, 1]` with fixed bins.
pub fn intensity_histogram(values: impl Iterator<Item = f32>, n_bins: usize) -> Vec<u64> {
    let mut hist = vec![0u64; n_bins];
    for v in values {
        let bin = ((v as f64 * n_bins as f64) as usize).min(n_bins - 1);
        hist[bin] += 1;
    }
    hist
}

/// Threshold bin maximizing the between-class variance of the histogram.
///
/// Returns the last bin of the background class; ties break toward the lower
/// bin. Errors if all mass falls into a single bin.
pub fn otsu_threshold_bin(hist: &[u64]) -> Result<usize> {
    let n_bins = hist.len();
    let total: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let total = total as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    let mut best_bin = 0usize;
    let mut best_var = -1.0f64;
    for t in 0..n_bins - 1 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 {
            continue;
        }
        if w1 == 0.0 {
            break;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let var_between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var_between > best_var {
            best_var = var_between;
            best_bin = t;
        }
    }
    Ok(best_bin)
}

/// Otsu thresholding over an `n_bins` histogram of `[0, 1]` intensities.
///
/// The returned threshold is the upper edge of the background class's last
/// bin; the mask marks pixels strictly above it.
pub fn otsu_threshold(img: &Frame, n_bins: usize) -> Result<(f32, BinaryMask)> {
    let hist = intensity_histogram(img.pixels().iter().copied(), n_bins);
    let bin = otsu_threshold_bin(&hist)?;
    let threshold = (bin + 1) as f32 / n_bins as f32;
    let bits = img.pixels().iter().map(|&v| v > threshold).collect();
    Ok((threshold, BinaryMask::new(img.width(), img.height(), bits)))
}

/// Per-pixel arithmetic mean over the selected frames (the avg-t projection).
///
/// The default selection for ROI detection is post-irradiation frames only;
/// the dark frame never participates.
pub fn avg_t_projection(stack: &ImageStack, include: impl Fn(usize, FrameRole) -> bool) -> Result<Frame> {
    let indices: Vec<usize> = (0..stack.len())
        .filter(|&i| include(i, stack.roles[i]))
        .collect();
    avg_t_projection_indices(&stack.frames, &indices)
}

/// Mean projection over an explicit frame index list, accumulated in `f64`.
pub fn avg_t_projection_indices(frames: &[Frame], indices: &[usize]) -> Result<Frame> {
    if indices.is_empty() {
        return Err(Error::EmptySelection);
    }
    let first = &frames[indices[0]];
    let (w, h) = (first.width(), first.height());
    let mut acc = vec![0.0f64; w * h];
    for &i in indices {
        for (a, &p) in acc.iter_mut().zip(frames[i].pixels()) {
            *a += p as f64;
        }
    }
    let n = indices.len() as f64;
    let pixels = acc.iter().map(|&a| (a / n) as f32).collect();
    Ok(Frame::new(w, h, pixels, first.bit_depth_source))
}

/// Sum of intensities per column, optionally restricted to a mask.
pub fn sum_y_projection(img: &Frame, mask: Option<&BinaryMask>) -> IntensityProfile {
    if let Some(m) = mask {
        assert_eq!(m.width(), img.width());
        assert_eq!(m.height(), img.height());
    }
    let (w, h) = (img.width(), img.height());
    let mut values = vec![0.0f64; w];
    for y in 0..h {
        for x in 0..w {
            if mask.is_none_or(|m| m.get(x, y)) {
                values[x] += img.get(x, y) as f64;
            }
        }
    }
    IntensityProfile::new(values)
}

/// Zero pixels outside the mask, leave pixels inside unchanged.
pub fn apply_mask(img: &Frame, mask: &BinaryMask) -> Frame {
    assert_eq!(mask.width(), img.width());
    assert_eq!(mask.height(), img.height());
    let pixels = img
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(&p, &b)| if b { p } else { 0.0 })
        .collect();
    Frame::new(img.width(), img.height(), pixels, img.bit_depth_source)
}

/// Bilinear interpolation at subpixel coordinates; samples outside the image
/// contribute 0.
pub fn bilinear_sample(img: &Frame, x: f64, y: f64) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);

    let fetch = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= img.width() as i64 || yi >= img.height() as i64 {
            0.0
        } else {
            img.get(xi as usize, yi as usize) as f64
        }
    };

    let v00 = fetch(x0, y0);
    let v10 = fetch(x0 + 1, y0);
    let v01 = fetch(x0, y0 + 1);
    let v11 = fetch(x0 + 1, y0 + 1);
    let top = v00 * (1.0 - fx) + v10 * fx;
    let bot = v01 * (1.0 - fx) + v11 * fx;
    (top * (1.0 - fy) + bot * fy) as f32
}

/// Dilate the mask by a Chebyshev ball of the given radius.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        let x0 = x.saturating_sub(radius);
        let x1 = (x + radius).min(w - 1);
        for wy in y0..=y1 {
            for wx in x0..=x1 {
                if mask.get(wx, wy) {
                    return true;
                }
            }
        }
        false
    })
}
