//! Per-stack orchestration: segmentation of every frame, registration onto
//! the pre-irradiation reference, stripe detection, measurement and curve
//! assembly.
//!
//! Frames are segmented in parallel (each frame is independent and
//! deterministic); registration runs sequentially because each frame's
//! result seeds the next frame's initialization.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameRole, ImageStack};
use crate::measurement::{
    compute_curve, estimate_background, measure_frame, FrameMeasurement, IntensityCurve,
};
use crate::registration::{register_stack, warp, RegistrationParams, RigidTransform};
use crate::roi::{detect_roi, Roi, RoiDetection, RoiDiagnostics, RoiParams};
use crate::segmentation::{
    segment_frame_stages, SegmentationParams, SegmentationStages, SegmentedFrame,
};

#[derive(Debug, Clone, Default)]
pub struct PipelineParams {
    pub segmentation: SegmentationParams,
    pub registration: RegistrationParams,
    pub roi: RoiParams,
    pub measurement: MeasurementParams,
}

#[derive(Debug, Clone)]
pub struct MeasurementParams {
    /// Erosion of the background region away from foreground borders.
    pub background_erosion_px: usize,
    /// Reject the stack when more than this fraction of analyzable frames
    /// fails segmentation.
    pub max_failed_frame_frac: f64,
}

impl Default for MeasurementParams {
    fn default() -> Self {
        MeasurementParams {
            background_erosion_px: 2,
            max_failed_frame_frac: 0.2,
        }
    }
}

/// Outcome of one frame within a stack analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FrameStatus {
    Ok,
    Dark,
    SegmentationFailed(String),
    RegistrationFailed(String),
    MeasurementExcluded(String),
}

/// Wall-clock duration of each stage, milliseconds.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimings {
    pub segmentation_ms: f64,
    pub registration_ms: f64,
    pub roi_ms: f64,
    pub measurement_ms: f64,
}

/// Complete analysis result for one stack.
#[derive(Debug, Clone)]
pub struct StackAnalysis {
    pub source_id: String,
    pub curve: IntensityCurve,
    pub roi: Roi,
    pub roi_diagnostics: RoiDiagnostics,
    pub transforms: Vec<Option<RigidTransform>>,
    pub frame_status: Vec<FrameStatus>,
    pub avg_t: Frame,
    pub reference_contour: Vec<f64>,
    pub reference_centroid: (f64, f64),
    /// Segmentation intermediates of the pre-irradiation frame, kept when QC
    /// export is requested.
    pub reference_stages: Option<SegmentationStages>,
    pub timings: StageTimings,
}

impl StackAnalysis {
    pub fn n_excluded_frames(&self) -> usize {
        self.frame_status
            .iter()
            .filter(|s| !matches!(s, FrameStatus::Ok))
            .count()
    }

    pub fn low_confidence_roi(&self) -> bool {
        self.roi_diagnostics.low_confidence
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Run the full analysis on one loaded stack.
///
/// `keep_qc` retains the reference frame's segmentation intermediates for
/// later export. Per-frame failures are flagged; the stack is rejected when
/// the pre-irradiation frame fails, when more than the configured fraction
/// of frames fails segmentation, or when normalization is impossible.
pub fn analyze_stack(
    stack: &ImageStack,
    params: &PipelineParams,
    keep_qc: bool,
) -> Result<StackAnalysis> {
    let n = stack.len();
    let pre_idx = stack
        .roles
        .iter()
        .position(|&r| r == FrameRole::PreIrradiation)
        .ok_or_else(|| Error::StackRejected {
            reason: "stack has no pre-irradiation frame".into(),
        })?;

    // --- Segmentation (parallel over frames) -----------------------------
    let t0 = Instant::now();
    let seg_results: Vec<Option<std::result::Result<SegmentationStages, String>>> = stack
        .frames
        .par_iter()
        .enumerate()
        .map(|(k, frame)| {
            if stack.roles[k] == FrameRole::Dark {
                return None;
            }
            Some(
                segment_frame_stages(frame, &params.segmentation).map_err(|e| e.to_string()),
            )
        })
        .collect();
    let segmentation_ms = ms_since(t0);

    let mut frame_status: Vec<FrameStatus> = Vec::with_capacity(n);
    let mut segmented: Vec<Option<SegmentedFrame>> = Vec::with_capacity(n);
    let mut reference_stages: Option<SegmentationStages> = None;
    let mut n_attempted = 0usize;
    let mut n_failed = 0usize;
    for (k, res) in seg_results.into_iter().enumerate() {
        match res {
            None => {
                frame_status.push(FrameStatus::Dark);
                segmented.push(None);
            }
            Some(Ok(stages)) => {
                n_attempted += 1;
                frame_status.push(FrameStatus::Ok);
                if k == pre_idx && keep_qc {
                    reference_stages = Some(stages.clone());
                }
                segmented.push(Some(stages.result));
            }
            Some(Err(msg)) => {
                n_attempted += 1;
                n_failed += 1;
                frame_status.push(FrameStatus::SegmentationFailed(msg));
                segmented.push(None);
            }
        }
    }

    if segmented[pre_idx].is_none() {
        let reason = match &frame_status[pre_idx] {
            FrameStatus::SegmentationFailed(msg) => {
                format!("pre-irradiation frame failed segmentation: {msg}")
            }
            _ => "pre-irradiation frame failed segmentation".into(),
        };
        return Err(Error::StackRejected { reason });
    }
    if n_attempted > 0
        && (n_failed as f64) > params.measurement.max_failed_frame_frac * n_attempted as f64
    {
        return Err(Error::StackRejected {
            reason: format!("segmentation failed for {n_failed} of {n_attempted} frames"),
        });
    }

    // --- Registration (sequential, chained initialization) ----------------
    let t0 = Instant::now();
    let registration = register_stack(&segmented, &stack.roles, &params.registration)?;
    for &(k, ref msg) in &registration.failures {
        frame_status[k] = FrameStatus::RegistrationFailed(msg.clone());
    }
    // Warp the original (unmasked) frames into the reference coordinates for
    // measurement; the pre-irradiation frame is the reference itself.
    let registered_originals: Vec<Option<Frame>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = registration.transforms[k]?;
            if k == pre_idx {
                Some(stack.frames[k].clone())
            } else {
                Some(warp(&stack.frames[k], &t))
            }
        })
        .collect();
    let registration_ms = ms_since(t0);

    // --- Stripe ROI detection --------------------------------------------
    let t0 = Instant::now();
    let post_indices: Vec<usize> = (0..n)
        .filter(|&k| {
            stack.roles[k] == FrameRole::PostIrradiation
                && registration.registered_masked[k].is_some()
        })
        .collect();
    if post_indices.is_empty() {
        return Err(Error::StackRejected {
            reason: "no post-irradiation frame survived segmentation and registration".into(),
        });
    }
    let reg_frames: Vec<Frame> = post_indices
        .iter()
        .map(|&k| registration.registered_masked[k].clone().unwrap())
        .collect();
    let reg_masks: Vec<_> = post_indices
        .iter()
        .map(|&k| registration.warped_masks[k].clone().unwrap())
        .collect();
    let RoiDetection {
        roi,
        peak: _,
        diagnostics,
        avg_t,
        union_mask: _,
    } = detect_roi(&reg_frames, &reg_masks, &params.roi)?;
    let roi_ms = ms_since(t0);

    // --- Measurement -------------------------------------------------------
    let t0 = Instant::now();
    let measurements: Vec<Option<FrameMeasurement>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let frame = registered_originals[k].as_ref()?;
            let mask = registration.warped_masks[k].as_ref()?;
            let seg = segmented[k].as_ref()?;
            // Background comes from the unregistered frame: the offset is
            // position-independent and the unwarped frame has no zero-filled
            // border.
            let bg = estimate_background(
                &stack.frames[k],
                &seg.coarse_foreground,
                params.measurement.background_erosion_px,
            );
            measure_frame(frame, &roi, mask, bg.value).ok()
        })
        .collect();
    for k in 0..n {
        if measurements[k].is_none() && frame_status[k] == FrameStatus::Ok {
            frame_status[k] =
                FrameStatus::MeasurementExcluded("ROI does not intersect the nucleus mask".into());
        }
    }
    let curve = compute_curve(
        &measurements,
        &stack.roles,
        &stack.timestamps_s,
        &stack.source_id,
    )?;
    let measurement_ms = ms_since(t0);

    let reference = segmented[pre_idx].as_ref().unwrap();
    Ok(StackAnalysis {
        source_id: stack.source_id.clone(),
        curve,
        roi,
        roi_diagnostics: diagnostics,
        transforms: registration.transforms,
        frame_status,
        avg_t,
        reference_contour: reference.contour.clone(),
        reference_centroid: reference.centroid,
        reference_stages,
        timings: StageTimings {
            segmentation_ms,
            registration_ms,
            roi_ms,
            measurement_ms,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{
        generate, EllipseSpec, FactorSchedule, MotionSchedule, PhantomSpec, StripeSpec,
    };

    fn quick_spec() -> PhantomSpec {
        PhantomSpec {
            width: 128,
            height: 128,
            n_post: 6,
            with_dark: true,
            nucleus: EllipseSpec {
                cx: 63.5,
                cy: 63.5,
                a: 36.0,
                b: 26.0,
                intensity: 0.55,
            },
            stripe: StripeSpec {
                column: 63.5,
                width: 4.0,
                length: 40.0,
                factors: FactorSchedule::RampTo(1.8),
            },
            motion: MotionSchedule::None,
            background: 0.05,
            noise_sigma: 0.0,
            roi_width: 10,
            roi_height: 70,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn analyze_recovers_flat_and_ramped_curves() {
        let (stack, truth) = generate(&quick_spec(), 11).unwrap();
        let analysis = analyze_stack(&stack, &PipelineParams::default(), false).unwrap();
        assert_eq!(analysis.curve.points[0].ratio, Some(1.0));
        assert!(analysis.curve.points[1].excluded); // dark frame
        for p in analysis.curve.included() {
            let t = truth.true_ratio[p.frame_index].unwrap();
            let r = p.ratio.unwrap();
            assert!(
                (r - t).abs() < 0.05,
                "frame {}: measured {r} vs truth {t}",
                p.frame_index
            );
        }
        assert!((analysis.roi.x as f64 + analysis.roi.width as f64 / 2.0 - 64.0).abs() <= 4.0);
    }

    #[test]
    fn blank_stack_is_rejected_with_no_nucleus() {
        let frames: Vec<Frame> = (0..4).map(|_| Frame::zeros(64, 64)).collect();
        let roles = vec![
            FrameRole::PreIrradiation,
            FrameRole::Dark,
            FrameRole::PostIrradiation,
            FrameRole::PostIrradiation,
        ];
        let ts = vec![0.0, 6.5, 13.0, 19.5];
        let stack = ImageStack::new(frames, roles, ts, "blank".into());
        let err = analyze_stack(&stack, &PipelineParams::default(), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no nucleus found"), "unexpected reason: {msg}");
    }
}
