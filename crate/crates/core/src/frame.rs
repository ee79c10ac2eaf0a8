//! Core raster types: grayscale frames, binary masks, multi-frame stacks and
//! 1-D column profiles.
//!
//! Pixel intensities are `f32` in `[0, 1]`, row-major. Statistics and
//! projections accumulate in `f64` so that sums over a 60-frame stack do not
//! drift.

use serde::{Deserialize, Serialize};

/// A single grayscale frame with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    /// Bit depth of the source data (8 or 16) before normalization.
    pub bit_depth_source: u8,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, bit_depth_source: u8) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        Frame {
            width,
            height,
            pixels,
            bit_depth_source,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Frame::new(width, height, vec![0.0; width * height], 16)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Frame::new(width, height, pixels, 16)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v;
    }

    #[inline]
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    /// Center of the pixel grid, the rotation center used by rigid transforms.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    pub fn same_size(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-frame role within an acquisition stack.
///
/// Frame 0 is the pre-irradiation baseline; an optional dark frame recorded
/// during laser scanning follows; the remainder are post-irradiation frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameRole {
    PreIrradiation,
    Dark,
    PostIrradiation,
}

impl FrameRole {
    /// Stable identifier used in CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            FrameRole::PreIrradiation => "pre_irradiation",
            FrameRole::Dark => "dark",
            FrameRole::PostIrradiation => "post_irradiation",
        }
    }
}

/// An ordered, immutable multi-frame stack with role tags and timestamps.
#[derive(Debug, Clone)]
pub struct ImageStack {
    pub frames: Vec<Frame>,
    pub roles: Vec<FrameRole>,
    /// Acquisition time of each frame in seconds, strictly increasing.
    pub timestamps_s: Vec<f64>,
    pub source_id: String,
}

impl ImageStack {
    pub fn new(
        frames: Vec<Frame>,
        roles: Vec<FrameRole>,
        timestamps_s: Vec<f64>,
        source_id: String,
    ) -> Self {
        assert_eq!(frames.len(), roles.len());
        assert_eq!(frames.len(), timestamps_s.len());
        debug_assert!(
            timestamps_s.windows(2).all(|w| w[0] < w[1]),
            "timestamps must be strictly increasing"
        );
        debug_assert!(
            frames.windows(2).all(|w| w[0].same_size(&w[1])),
            "all frames must share dimensions"
        );
        ImageStack {
            frames,
            roles,
            timestamps_s,
            source_id,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Frame::width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, Frame::height)
    }

    /// Indices of frames with the given role, in acquisition order.
    pub fn indices_with_role(&self, role: FrameRole) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| (r == role).then_some(i))
            .collect()
    }
}

/// Row-major boolean mask tied to the dimensions of the image it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height);
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        BinaryMask::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask::new(width, height, bits)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Pointwise union, used to combine per-frame nucleus masks.
    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        BinaryMask::new(self.width, self.height, bits)
    }

    /// Centroid (mean x, mean y) of the foreground, `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0u64;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Intersection-over-union against another mask of the same size.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        let mut inter = 0u64;
        let mut union = 0u64;
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            if a && b {
                inter += 1;
            }
            if a || b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Per-column intensity sums of an image, produced by the sum-y projection.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    pub values: Vec<f64>,
}

impl IntensityProfile {
    pub fn new(values: Vec<f64>) -> Self {
        IntensityProfile { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_accessors_row_major() {
        let f = Frame::from_fn(3, 2, |x, y| (y * 3 + x) as f32);
        assert_eq!(f.get(0, 0), 0.0);
        assert_eq!(f.get(2, 0), 2.0);
        assert_eq!(f.get(0, 1), 3.0);
        assert_eq!(f.pixels()[4], 4.0);
    }

    #[test]
    fn mask_centroid_and_iou() {
        let m = BinaryMask::from_fn(4, 4, |x, y| x >= 2 && y >= 2);
        assert_eq!(m.count(), 4);
        assert_eq!(m.centroid(), Some((2.5, 2.5)));
        let full = BinaryMask::filled(4, 4, true);
        assert!((m.iou(&full) - 4.0 / 16.0).abs() < 1e-12);
        assert_eq!(m.iou(&m), 1.0);
    }

    #[test]
    fn stack_role_indices() {
        let f = Frame::zeros(2, 2);
        let stack = ImageStack::new(
            vec![f.clone(), f.clone(), f.clone()],
            vec![
                FrameRole::PreIrradiation,
                FrameRole::Dark,
                FrameRole::PostIrradiation,
            ],
            vec![0.0, 6.5, 13.0],
            "test".into(),
        );
        assert_eq!(stack.indices_with_role(FrameRole::PostIrradiation), [2]);
        assert_eq!(stack.indices_with_role(FrameRole::Dark), [1]);
    }
}
