//! Background-corrected intensity measurement and cross-experiment
//! aggregation.
//!
//! Per frame, the mean intensity of the stripe box restricted to the nucleus
//! mask (I_ROI) and the mean over the whole nucleus (I_NOI) are measured
//! after subtracting the background estimate from both. The quotient is
//! scaled so the pre-irradiation frame equals 1 exactly. Background is
//! subtracted from both sides of the quotient: subtracting from only one
//! side would leave the ratio dependent on the detector gain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{BinaryMask, Frame, FrameRole};
use crate::imageops::dilate;
use crate::roi::Roi;

/// Mean intensity over the background region: the complement of all coarse
/// foreground components, eroded by `erosion_radius` pixels (realized as a
/// dilation of the foreground).
#[derive(Debug, Clone, Copy)]
pub struct BackgroundEstimate {
    pub value: f64,
    pub n_pixels: usize,
}

pub fn estimate_background(
    frame: &Frame,
    foreground: &BinaryMask,
    erosion_radius: usize,
) -> BackgroundEstimate {
    let grown = dilate(foreground, erosion_radius);
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            if !grown.get(x, y) {
                sum += frame.get(x, y) as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        log::warn!("background region is empty; assuming background 0");
        BackgroundEstimate {
            value: 0.0,
            n_pixels: 0,
        }
    } else {
        BackgroundEstimate {
            value: sum / n as f64,
            n_pixels: n,
        }
    }
}

/// Background-subtracted mean intensities of one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameMeasurement {
    /// Mean over the ROI box intersected with the nucleus mask, minus
    /// background, clamped at 0.
    pub i_roi: f64,
    /// Mean over the whole nucleus mask, minus background, clamped at 0.
    pub i_noi: f64,
}

pub fn measure_frame(
    frame: &Frame,
    roi: &Roi,
    noi_mask: &BinaryMask,
    background: f64,
) -> Result<FrameMeasurement> {
    let mut roi_sum = 0.0f64;
    let mut roi_n = 0usize;
    let mut noi_sum = 0.0f64;
    let mut noi_n = 0usize;
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            if noi_mask.get(x, y) {
                let v = frame.get(x, y) as f64;
                noi_sum += v;
                noi_n += 1;
                if roi.contains(x, y) {
                    roi_sum += v;
                    roi_n += 1;
                }
            }
        }
    }
    if roi_n == 0 || noi_n == 0 {
        return Err(Error::EmptyRoiIntersection);
    }
    Ok(FrameMeasurement {
        i_roi: (roi_sum / roi_n as f64 - background).max(0.0),
        i_noi: (noi_sum / noi_n as f64 - background).max(0.0),
    })
}

/// One row of the per-stack curve. Excluded points (the dark frame, frames
/// that failed segmentation or registration, empty ROI intersections) carry
/// no values.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub frame_index: usize,
    pub role: FrameRole,
    pub time_s: f64,
    pub i_roi: Option<f64>,
    pub i_noi: Option<f64>,
    /// I_ROI / I_NOI scaled so the pre-irradiation frame is exactly 1.
    pub ratio: Option<f64>,
    pub excluded: bool,
}

/// The normalized accumulation curve of one stack.
#[derive(Debug, Clone, Serialize)]
pub struct IntensityCurve {
    pub points: Vec<CurvePoint>,
    pub source_id: String,
}

impl IntensityCurve {
    /// Points that carry a ratio, in acquisition order.
    pub fn included(&self) -> impl Iterator<Item = &CurvePoint> {
        self.points.iter().filter(|p| !p.excluded)
    }
}

/// Build the normalized curve from per-frame measurements.
///
/// The quotient q_k = I_ROI / I_NOI is computed for every measured frame and
/// scaled by the pre-irradiation quotient; a non-positive pre-irradiation
/// quotient rejects the stack. Frames with a missing measurement or
/// non-positive I_NOI are excluded.
pub fn compute_curve(
    measurements: &[Option<FrameMeasurement>],
    roles: &[FrameRole],
    timestamps_s: &[f64],
    source_id: &str,
) -> Result<IntensityCurve> {
    assert_eq!(measurements.len(), roles.len());
    assert_eq!(measurements.len(), timestamps_s.len());

    let pre_idx = roles
        .iter()
        .position(|&r| r == FrameRole::PreIrradiation)
        .ok_or_else(|| Error::StackRejected {
            reason: "stack has no pre-irradiation frame".into(),
        })?;
    let pre = measurements[pre_idx].ok_or_else(|| Error::StackRejected {
        reason: "pre-irradiation frame was not measured".into(),
    })?;
    if pre.i_noi <= 0.0 {
        return Err(Error::NormalizationFailed { q0: f64::NAN });
    }
    let q0 = pre.i_roi / pre.i_noi;
    if q0 <= 0.0 {
        return Err(Error::NormalizationFailed { q0 });
    }

    let points = (0..measurements.len())
        .map(|k| {
            let role = roles[k];
            let time_s = timestamps_s[k];
            let excluded_base = CurvePoint {
                frame_index: k,
                role,
                time_s,
                i_roi: None,
                i_noi: None,
                ratio: None,
                excluded: true,
            };
            if role == FrameRole::Dark {
                return excluded_base;
            }
            let Some(m) = measurements[k] else {
                return excluded_base;
            };
            if m.i_noi <= 0.0 {
                return excluded_base;
            }
            let ratio = if k == pre_idx {
                1.0
            } else {
                (m.i_roi / m.i_noi) / q0
            };
            CurvePoint {
                frame_index: k,
                role,
                time_s,
                i_roi: Some(m.i_roi),
                i_noi: Some(m.i_noi),
                ratio: Some(ratio),
                excluded: false,
            }
        })
        .collect();

    Ok(IntensityCurve {
        points,
        source_id: source_id.to_string(),
    })
}

/// One aggregated time step: mean ratio, standard error and sample count.
#[derive(Debug, Clone, Serialize)]
pub struct AggregatePoint {
    pub time_s: f64,
    pub mean_ratio: f64,
    /// Sample standard deviation over sqrt(n); 0 when n = 1.
    pub stderr: f64,
    pub n: usize,
}

/// Mean +- standard error per time step across stacks of one condition.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateCurve {
    pub label: String,
    pub points: Vec<AggregatePoint>,
}

/// Sum in ascending value order so the result is independent of input order.
fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Aggregate curves point-by-point, aligned by frame index over the common
/// prefix. Excluded points do not contribute, so `n` can vary per point;
/// indices where no curve contributes are dropped.
pub fn aggregate(curves: &[IntensityCurve], label: &str) -> Result<AggregateCurve> {
    if curves.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let common_len = curves.iter().map(|c| c.points.len()).min().unwrap_or(0);
    let mut points = Vec::new();
    for k in 0..common_len {
        let mut ratios: Vec<f64> = Vec::new();
        let mut times: Vec<f64> = Vec::new();
        for curve in curves {
            let p = &curve.points[k];
            if let Some(r) = p.ratio {
                ratios.push(r);
                times.push(p.time_s);
            }
        }
        let n = ratios.len();
        if n == 0 {
            continue;
        }
        let mean = canonical_sum(&mut ratios) / n as f64;
        let time_s = canonical_sum(&mut times) / n as f64;
        let stderr = if n > 1 {
            let mut sq: Vec<f64> = ratios.iter().map(|&r| (r - mean) * (r - mean)).collect();
            let var = canonical_sum(&mut sq) / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        points.push(AggregatePoint {
            time_s,
            mean_ratio: mean,
            stderr,
            n,
        });
    }
    Ok(AggregateCurve {
        label: label.to_string(),
        points,
    })
}
