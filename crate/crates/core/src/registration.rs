//! Rigid-body alignment of segmented frames to the pre-irradiation reference.
//!
//! The motion model is translation plus rotation about the image center. Each
//! post-irradiation frame is registered directly against the reference (not
//! frame-to-frame, which would accumulate drift over 60 frames) and the
//! optimizer is seeded with the previous frame's result.
//!
//! The objective is the mean squared intensity difference over pixels where
//! both images are nonzero, minimized by Levenberg-Marquardt descent on a
//! coarse-to-fine pyramid. Damping is applied relative to the diagonal of the
//! normal matrix, which keeps the parameter trajectory invariant under a
//! global intensity gain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BinaryMask, Frame, FrameRole};
use crate::imageops::bilinear_sample;
use crate::segmentation::SegmentedFrame;

/// 2-D translation plus rotation (radians) about the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub dx: f64,
    pub dy: f64,
    pub theta: f64,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        dx: 0.0,
        dy: 0.0,
        theta: 0.0,
    };

    pub fn new(dx: f64, dy: f64, theta: f64) -> Self {
        RigidTransform { dx, dy, theta }
    }

    /// Map a point: rotate about `center`, then translate.
    pub fn apply(&self, x: f64, y: f64, center: (f64, f64)) -> (f64, f64) {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let (ux, uy) = (x - center.0, y - center.1);
        (
            c * ux - s * uy + center.0 + self.dx,
            s * ux + c * uy + center.1 + self.dy,
        )
    }

    pub fn inverse(&self) -> Self {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        RigidTransform {
            dx: -(c * self.dx + s * self.dy),
            dy: -(-s * self.dx + c * self.dy),
            theta: -self.theta,
        }
    }

    /// Composition: apply `self` first, then `after`.
    pub fn then(&self, after: &RigidTransform) -> Self {
        let (c, s) = (after.theta.cos(), after.theta.sin());
        RigidTransform {
            dx: c * self.dx - s * self.dy + after.dx,
            dy: s * self.dx + c * self.dy + after.dy,
            theta: self.theta + after.theta,
        }
    }

    fn stepped(&self, delta: [f64; 3]) -> Self {
        RigidTransform {
            dx: self.dx + delta[0],
            dy: self.dy + delta[1],
            theta: self.theta + delta[2],
        }
    }

    fn scaled_translation(&self, factor: f64) -> Self {
        RigidTransform {
            dx: self.dx * factor,
            dy: self.dy * factor,
            theta: self.theta,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationParams {
    /// Downsampling factors, coarse to fine. The finest factor must be 1.
    pub pyramid_factors: Vec<usize>,
    /// Iteration budget per pyramid level.
    pub max_iterations: usize,
    /// Convergence threshold on the translation step, pixels.
    pub tol_translation: f64,
    /// Convergence threshold on the rotation step, radians.
    pub tol_rotation: f64,
    /// Minimum overlap as a fraction of the reference foreground.
    pub min_overlap_frac: f64,
    /// Pyramid levels smaller than this on either side are skipped.
    pub min_level_size: usize,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            pyramid_factors: vec![4, 2, 1],
            max_iterations: 200,
            tol_translation: 0.01,
            tol_rotation: 0.0005,
            min_overlap_frac: 0.1,
            min_level_size: 8,
        }
    }
}

/// Result of registering one moving frame against the reference.
#[derive(Debug, Clone)]
pub struct PairRegistration {
    pub transform: RigidTransform,
    /// Full-resolution objective at the initialization.
    pub mse_init: f64,
    /// Full-resolution objective at the returned transform; never exceeds
    /// `mse_init`.
    pub mse_final: f64,
    pub iterations: usize,
    /// Valid-pixel count at the returned transform over the reference
    /// foreground count.
    pub overlap_frac: f64,
}

/// Resample an image under a rigid transform with bilinear interpolation;
/// out-of-bounds samples are 0.
pub fn warp(img: &Frame, t: &RigidTransform) -> Frame {
    let center = img.center();
    let inv = t.inverse();
    Frame::from_fn(img.width(), img.height(), |x, y| {
        let (sx, sy) = inv.apply(x as f64, y as f64, center);
        bilinear_sample(img, sx, sy)
    })
}

/// Warp a binary mask with nearest-neighbor resampling.
pub fn warp_mask_nearest(mask: &BinaryMask, t: &RigidTransform) -> BinaryMask {
    let center = (
        (mask.width() as f64 - 1.0) / 2.0,
        (mask.height() as f64 - 1.0) / 2.0,
    );
    let inv = t.inverse();
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (sx, sy) = inv.apply(x as f64, y as f64, center);
        let xi = sx.round() as i64;
        let yi = sy.round() as i64;
        if xi < 0 || yi < 0 || xi >= mask.width() as i64 || yi >= mask.height() as i64 {
            false
        } else {
            mask.get(xi as usize, yi as usize)
        }
    })
}

/// Block-mean downsampling by an integer factor; a trailing remainder is
/// cropped.
pub fn downsample(img: &Frame, factor: usize) -> Frame {
    assert!(factor >= 1);
    if factor == 1 {
        return img.clone();
    }
    let w = img.width() / factor;
    let h = img.height() / factor;
    let norm = 1.0 / (factor * factor) as f64;
    Frame::from_fn(w, h, |x, y| {
        let mut acc = 0.0f64;
        for by in 0..factor {
            for bx in 0..factor {
                acc += img.get(x * factor + bx, y * factor + by) as f64;
            }
        }
        (acc * norm) as f32
    })
}

/// Candidate pixels: reference foreground with coordinates relative to the
/// rotation center.
struct Candidates {
    entries: Vec<(f32, f32, f32)>, // (x, y, reference value)
    center: (f64, f64),
}

fn collect_candidates(reference: &Frame) -> Candidates {
    let mut entries = Vec::new();
    for y in 0..reference.height() {
        for x in 0..reference.width() {
            let v = reference.get(x, y);
            if v > 0.0 {
                entries.push((x as f32, y as f32, v));
            }
        }
    }
    Candidates {
        entries,
        center: reference.center(),
    }
}

/// Sum of squared residuals and valid-pixel count at transform `t`.
fn evaluate(moving: &Frame, cand: &Candidates, t: &RigidTransform) -> (f64, usize) {
    let inv = t.inverse();
    let (c, s) = (inv.theta.cos(), inv.theta.sin());
    let (cx, cy) = cand.center;
    // Inline the inverse map: s = R_inv (p - center) + center + d_inv.
    let tx = cx + inv.dx;
    let ty = cy + inv.dy;
    let mut sse = 0.0f64;
    let mut n = 0usize;
    for &(x, y, rv) in &cand.entries {
        let ux = x as f64 - cx;
        let uy = y as f64 - cy;
        let sx = c * ux - s * uy + tx;
        let sy = s * ux + c * uy + ty;
        let m = bilinear_sample(moving, sx, sy);
        if m > 0.0 {
            let r = m as f64 - rv as f64;
            sse += r * r;
            n += 1;
        }
    }
    (sse, n)
}

/// Central-difference gradient images with clamped borders.
fn gradients(img: &Frame) -> (Frame, Frame) {
    let (w, h) = (img.width(), img.height());
    let gx = Frame::from_fn(w, h, |x, y| {
        let xm = x.saturating_sub(1);
        let xp = (x + 1).min(w - 1);
        (img.get(xp, y) - img.get(xm, y)) / (xp - xm).max(1) as f32
    });
    let gy = Frame::from_fn(w, h, |x, y| {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        (img.get(x, yp) - img.get(x, ym)) / (yp - ym).max(1) as f32
    });
    (gx, gy)
}

/// Gauss-Newton normal equations at `t` over the valid pixel set.
#[allow(clippy::type_complexity)]
fn normal_equations(
    moving: &Frame,
    grad: &(Frame, Frame),
    cand: &Candidates,
    t: &RigidTransform,
) -> ([[f64; 3]; 3], [f64; 3], f64, usize) {
    let inv = t.inverse();
    let (ci, si) = (inv.theta.cos(), inv.theta.sin());
    let (cx, cy) = cand.center;
    let tx = cx + inv.dx;
    let ty = cy + inv.dy;
    // Jacobian of the sample position s = R_{-theta}(u - d) + center w.r.t.
    // (dx, dy, theta), with u the pixel offset from the rotation center.
    let (ct, st) = (t.theta.cos(), t.theta.sin());
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    let mut sse = 0.0f64;
    let mut n = 0usize;
    for &(x, y, rv) in &cand.entries {
        let ux = x as f64 - cx;
        let uy = y as f64 - cy;
        let sx = ci * ux - si * uy + tx;
        let sy = si * ux + ci * uy + ty;
        let m = bilinear_sample(moving, sx, sy);
        if m <= 0.0 {
            continue;
        }
        let r = m as f64 - rv as f64;
        let gx = bilinear_sample(&grad.0, sx, sy) as f64;
        let gy = bilinear_sample(&grad.1, sx, sy) as f64;
        // d s / d dx = -R_{-theta} e_x, d s / d dy = -R_{-theta} e_y.
        let j_dx = -(gx * ct - gy * st);
        let j_dy = -(gx * st + gy * ct);
        // d s / d theta = dR_{-theta}/dtheta (u - d).
        let vx = ux - t.dx;
        let vy = uy - t.dy;
        let dsx = -st * vx + ct * vy;
        let dsy = -ct * vx - st * vy;
        let j_th = gx * dsx + gy * dsy;
        let j = [j_dx, j_dy, j_th];
        for p in 0..3 {
            for q in p..3 {
                a[p][q] += j[p] * j[q];
            }
            b[p] += j[p] * r;
        }
        sse += r * r;
        n += 1;
    }
    for p in 0..3 {
        for q in 0..p {
            a[p][q] = a[q][p];
        }
    }
    (a, b, sse, n)
}

/// Solve (A + lambda diag(A)) delta = -b by Gaussian elimination.
fn solve_damped(a: &[[f64; 3]; 3], b: &[f64; 3], lambda: f64) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for p in 0..3 {
        for q in 0..3 {
            m[p][q] = a[p][q];
        }
        m[p][p] += lambda * a[p][p].max(1e-12);
        m[p][3] = -b[p];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for q in col..4 {
                m[row][q] -= f * m[col][q];
            }
        }
    }
    let mut delta = [0.0f64; 3];
    for col in (0..3).rev() {
        let mut v = m[col][3];
        for q in col + 1..3 {
            v -= m[col][q] * delta[q];
        }
        delta[col] = v / m[col][col];
    }
    delta.iter().all(|d| d.is_finite()).then_some(delta)
}

/// Levenberg-Marquardt descent at a single pyramid level.
fn lm_level(
    reference: &Frame,
    moving: &Frame,
    init: RigidTransform,
    params: &RegistrationParams,
) -> (RigidTransform, usize) {
    let cand = collect_candidates(reference);
    if cand.entries.is_empty() {
        return (init, 0);
    }
    let min_valid = ((cand.entries.len() as f64) * params.min_overlap_frac).ceil() as usize;
    let grad = gradients(moving);

    let mut t = init;
    let (sse, n) = evaluate(moving, &cand, &t);
    let mut mse = if n > 0 { sse / n as f64 } else { f64::INFINITY };
    let mut lambda = 1e-3;
    let mut iterations = 0usize;

    while iterations < params.max_iterations {
        let (a, b, _, n_now) = normal_equations(moving, &grad, &cand, &t);
        if n_now == 0 {
            break;
        }
        let mut accepted = false;
        let mut converged = false;
        while iterations < params.max_iterations {
            iterations += 1;
            let Some(delta) = solve_damped(&a, &b, lambda) else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
                continue;
            };
            let t_new = t.stepped(delta);
            let (sse_new, n_new) = evaluate(moving, &cand, &t_new);
            let mse_new = if n_new > 0 {
                sse_new / n_new as f64
            } else {
                f64::INFINITY
            };
            if n_new >= min_valid.min(n_now) && mse_new < mse {
                t = t_new;
                mse = mse_new;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                converged = delta[0].abs() < params.tol_translation
                    && delta[1].abs() < params.tol_translation
                    && delta[2].abs() < params.tol_rotation;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !accepted || converged {
            break;
        }
    }
    (t, iterations)
}

/// Register `moving` onto `reference`, returning the transform that minimizes
/// the masked mean squared difference.
///
/// Optimization runs coarse to fine over the pyramid, seeded by `init`. The
/// returned objective never exceeds the objective at `init`; if the final
/// overlap drops below `min_overlap_frac` of the reference foreground the
/// registration is reported as diverged.
pub fn register_pair(
    reference: &Frame,
    moving: &Frame,
    init: &RigidTransform,
    params: &RegistrationParams,
) -> Result<PairRegistration> {
    assert!(
        reference.same_size(moving),
        "register_pair requires equal dimensions"
    );
    let ref_fg = reference.pixels().iter().filter(|&&v| v > 0.0).count();
    let mov_fg = moving.pixels().iter().filter(|&&v| v > 0.0).count();
    if ref_fg == 0 || mov_fg == 0 {
        return Err(Error::RegistrationDiverged {
            overlap_frac: 0.0,
            min_frac: params.min_overlap_frac,
        });
    }

    let mut factors: Vec<usize> = params
        .pyramid_factors
        .iter()
        .copied()
        .filter(|&f| {
            f >= 1
                && reference.width() / f >= params.min_level_size
                && reference.height() / f >= params.min_level_size
        })
        .collect();
    factors.sort_unstable_by(|a, b| b.cmp(a));
    if factors.last() != Some(&1) {
        factors.push(1);
    }

    let mut t = *init;
    let mut iterations = 0usize;
    for &f in &factors {
        let (level_ref, level_mov) = if f == 1 {
            (reference.clone(), moving.clone())
        } else {
            (downsample(reference, f), downsample(moving, f))
        };
        let seeded = t.scaled_translation(1.0 / f as f64);
        let (level_t, iters) = lm_level(&level_ref, &level_mov, seeded, params);
        t = level_t.scaled_translation(f as f64);
        iterations += iters;
    }

    // The objective at the result must not exceed the objective at the
    // initialization; fall back to the initialization otherwise.
    let cand = collect_candidates(reference);
    let (sse_i, n_i) = evaluate(moving, &cand, init);
    let mse_init = if n_i > 0 { sse_i / n_i as f64 } else { f64::INFINITY };
    let (sse_f, n_f) = evaluate(moving, &cand, &t);
    let mut mse_final = if n_f > 0 { sse_f / n_f as f64 } else { f64::INFINITY };
    let mut n_final = n_f;
    if mse_final > mse_init {
        t = *init;
        mse_final = mse_init;
        n_final = n_i;
    }

    let overlap_frac = n_final as f64 / ref_fg as f64;
    if overlap_frac < params.min_overlap_frac {
        return Err(Error::RegistrationDiverged {
            overlap_frac,
            min_frac: params.min_overlap_frac,
        });
    }

    Ok(PairRegistration {
        transform: t,
        mse_init,
        mse_final,
        iterations,
        overlap_frac,
    })
}

/// Per-stack registration output; entries are `None` for the dark frame and
/// for frames that failed segmentation or diverged.
#[derive(Debug, Clone)]
pub struct StackRegistration {
    pub transforms: Vec<Option<RigidTransform>>,
    pub registered_masked: Vec<Option<Frame>>,
    pub warped_masks: Vec<Option<BinaryMask>>,
    /// (frame index, reason) for frames that diverged.
    pub failures: Vec<(usize, String)>,
}

/// Register every post-irradiation frame onto the masked pre-irradiation
/// frame, chaining each frame's result into the next frame's initialization.
pub fn register_stack(
    segmented: &[Option<SegmentedFrame>],
    roles: &[FrameRole],
    params: &RegistrationParams,
) -> Result<StackRegistration> {
    assert_eq!(segmented.len(), roles.len());
    let pre_idx = roles
        .iter()
        .position(|&r| r == FrameRole::PreIrradiation)
        .ok_or_else(|| Error::StackRejected {
            reason: "stack has no pre-irradiation frame".into(),
        })?;
    let reference = segmented[pre_idx]
        .as_ref()
        .ok_or_else(|| Error::StackRejected {
            reason: "pre-irradiation frame failed segmentation".into(),
        })?;

    let n = segmented.len();
    let mut out = StackRegistration {
        transforms: vec![None; n],
        registered_masked: vec![None; n],
        warped_masks: vec![None; n],
        failures: Vec::new(),
    };
    out.transforms[pre_idx] = Some(RigidTransform::IDENTITY);
    out.registered_masked[pre_idx] = Some(reference.masked.clone());
    out.warped_masks[pre_idx] = Some(reference.mask.clone());

    let mut chain_init = RigidTransform::IDENTITY;
    for i in 0..n {
        if roles[i] != FrameRole::PostIrradiation {
            continue;
        }
        let Some(seg) = segmented[i].as_ref() else {
            continue; // already flagged by segmentation
        };
        match register_pair(&reference.masked, &seg.masked, &chain_init, params) {
            Ok(reg) => {
                chain_init = reg.transform;
                out.registered_masked[i] = Some(warp(&seg.masked, &reg.transform));
                out.warped_masks[i] = Some(warp_mask_nearest(&seg.mask, &reg.transform));
                out.transforms[i] = Some(reg.transform);
            }
            Err(e) => {
                out.failures.push((i, e.to_string()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::gaussian_blur;

    fn smooth_phantom(w: usize, h: usize) -> Frame {
        let img = Frame::from_fn(w, h, |x, y| {
            let dx = (x as f64 - w as f64 / 2.0) / (w as f64 * 0.28);
            let dy = (y as f64 - h as f64 / 2.0) / (h as f64 * 0.22);
            if dx * dx + dy * dy <= 1.0 {
                (0.5 + 0.3 * (x as f64 * 0.23).sin() * (y as f64 * 0.17).cos()) as f32
            } else {
                0.0
            }
        });
        gaussian_blur(&img, 1.5)
    }

    #[test]
    fn transform_group_laws() {
        let t = RigidTransform::new(3.2, -1.7, 0.21);
        let u = RigidTransform::new(-0.8, 2.4, -0.05);
        let id = RigidTransform::IDENTITY;
        let center = (17.0, 23.0);

        // t * t^-1 = id
        let round = t.then(&t.inverse());
        assert!(round.dx.abs() < 1e-9 && round.dy.abs() < 1e-9 && round.theta.abs() < 1e-9);

        // identity composition
        let same = t.then(&id);
        assert!((same.dx - t.dx).abs() < 1e-12 && (same.theta - t.theta).abs() < 1e-12);

        // composition agrees with sequential application
        let p = (5.0, -2.0);
        let via_compose = t.then(&u).apply(p.0, p.1, center);
        let a = t.apply(p.0, p.1, center);
        let sequential = u.apply(a.0, a.1, center);
        assert!((via_compose.0 - sequential.0).abs() < 1e-9);
        assert!((via_compose.1 - sequential.1).abs() < 1e-9);
    }

    #[test]
    fn warp_identity_is_exact() {
        let img = smooth_phantom(48, 40);
        let out = warp(&img, &RigidTransform::IDENTITY);
        assert_eq!(out.pixels(), img.pixels());
    }

    #[test]
    fn warp_integer_translation_shifts_exactly() {
        let img = smooth_phantom(48, 48);
        let out = warp(&img, &RigidTransform::new(3.0, -2.0, 0.0));
        for y in 4..44 {
            for x in 4..44 {
                let expected = img.get(x - 3, y + 2);
                assert!(
                    (out.get(x, y) - expected).abs() < 1e-6,
                    "shift mismatch at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn warp_round_trip_small_error() {
        let img = smooth_phantom(64, 64);
        let t = RigidTransform::new(2.3, -1.1, 0.05);
        let back = warp(&warp(&img, &t), &t.inverse());
        let mae: f64 = img
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / img.pixels().len() as f64;
        assert!(mae < 1e-3, "round-trip mean abs error {mae}");
    }

    #[test]
    fn register_identity_pair() {
        let img = smooth_phantom(96, 96);
        let reg = register_pair(
            &img,
            &img,
            &RigidTransform::IDENTITY,
            &RegistrationParams::default(),
        )
        .unwrap();
        assert!(reg.transform.dx.abs() < 0.05);
        assert!(reg.transform.dy.abs() < 0.05);
        assert!(reg.transform.theta.abs() < 0.001);
        assert!(reg.mse_final <= reg.mse_init);
    }

    #[test]
    fn register_recovers_translation() {
        let img = smooth_phantom(96, 96);
        let moving = warp(&img, &RigidTransform::new(5.0, -3.0, 0.0));
        let reg = register_pair(
            &img,
            &moving,
            &RigidTransform::IDENTITY,
            &RegistrationParams::default(),
        )
        .unwrap();
        assert!((reg.transform.dx + 5.0).abs() < 0.25, "dx {}", reg.transform.dx);
        assert!((reg.transform.dy - 3.0).abs() < 0.25, "dy {}", reg.transform.dy);
        assert!(reg.mse_final <= reg.mse_init);
    }

    #[test]
    fn register_recovers_rotation() {
        let img = smooth_phantom(96, 96);
        let angle = 4.0f64.to_radians();
        let moving = warp(&img, &RigidTransform::new(0.0, 0.0, angle));
        let reg = register_pair(
            &img,
            &moving,
            &RigidTransform::IDENTITY,
            &RegistrationParams::default(),
        )
        .unwrap();
        assert!(
            (reg.transform.theta + angle).abs() < 0.25f64.to_radians(),
            "theta {}",
            reg.transform.theta
        );
    }

    #[test]
    fn register_empty_moving_diverges() {
        let img = smooth_phantom(64, 64);
        let blank = Frame::zeros(64, 64);
        assert!(matches!(
            register_pair(
                &img,
                &blank,
                &RigidTransform::IDENTITY,
                &RegistrationParams::default()
            ),
            Err(Error::RegistrationDiverged { .. })
        ));
    }

    #[test]
    fn downsample_block_means() {
        let img = Frame::from_fn(4, 4, |x, y| (y * 4 + x) as f32 / 16.0);
        let half = downsample(&img, 2);
        assert_eq!(half.width(), 2);
        let expected = (0.0 + 1.0 + 4.0 + 5.0) / 4.0 / 16.0;
        assert!((half.get(0, 0) - expected).abs() < 1e-7);
    }
}
