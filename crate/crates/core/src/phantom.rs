//! Synthetic stacks with exact ground truth: an elliptical nucleus with a
//! vertical accumulation stripe, optional distractor blobs, scripted rigid
//! motion, a background offset and additive Gaussian noise.
//!
//! The ground truth (per-frame masks and transforms, the stripe column and
//! the analytic ratio curve) is derived from the spec geometry alone and
//! never touches the analysis code paths it is used to verify.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frame::{BinaryMask, Frame, FrameRole, ImageStack};
use crate::registration::RigidTransform;
use crate::roi::Roi;

/// A filled ellipse with a flat intensity.
#[derive(Debug, Clone, Copy)]
pub struct EllipseSpec {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub intensity: f32,
}

impl EllipseSpec {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.a;
        let dy = (y - self.cy) / self.b;
        dx * dx + dy * dy <= 1.0
    }
}

/// Per-frame stripe accumulation factors. The pre-irradiation frame always
/// carries factor 1.
#[derive(Debug, Clone)]
pub enum FactorSchedule {
    /// Constant factor on every post-irradiation frame.
    Flat(f64),
    /// Linear ramp from 1 at the pre-irradiation frame to `to` at the last
    /// post-irradiation frame.
    RampTo(f64),
    /// Explicit per-frame factors (one per stack frame, dark included).
    PerFrame(Vec<f64>),
}

/// Vertical accumulation stripe with a Gaussian cross-section
/// (sigma = width / 3), restricted to `length` rows around the nucleus
/// center row.
#[derive(Debug, Clone)]
pub struct StripeSpec {
    pub column: f64,
    pub width: f64,
    pub length: f64,
    pub factors: FactorSchedule,
}

/// Scripted rigid motion of frame k relative to the pre-irradiation frame.
#[derive(Debug, Clone)]
pub enum MotionSchedule {
    None,
    /// Cumulative per-frame drift: frame k moves by k times these rates.
    Drift {
        dx_per_frame: f64,
        dy_per_frame: f64,
        dtheta_per_frame: f64,
    },
    /// Explicit per-frame transforms (one per stack frame).
    PerFrame(Vec<RigidTransform>),
}

#[derive(Debug, Clone)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub n_post: usize,
    pub with_dark: bool,
    pub frame_interval_s: f64,
    pub bit_depth: u8,
    pub nucleus: EllipseSpec,
    pub stripe: StripeSpec,
    pub motion: MotionSchedule,
    pub background: f32,
    pub noise_sigma: f32,
    /// Additive blobs; outside the nucleus they act as segmentation
    /// distractors, inside as competing bright spots.
    pub distractors: Vec<EllipseSpec>,
    /// Box size assumed for the analytic ratio curve.
    pub roi_width: usize,
    pub roi_height: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            width: 512,
            height: 512,
            n_post: 60,
            with_dark: true,
            frame_interval_s: 6.5,
            bit_depth: 16,
            nucleus: EllipseSpec {
                cx: 255.5,
                cy: 255.5,
                a: 110.0,
                b: 80.0,
                intensity: 0.55,
            },
            stripe: StripeSpec {
                column: 255.5,
                width: 6.0,
                length: 130.0,
                factors: FactorSchedule::RampTo(1.8),
            },
            motion: MotionSchedule::None,
            background: 0.06,
            noise_sigma: 0.0,
            distractors: Vec::new(),
            roi_width: 20,
            roi_height: 180,
        }
    }
}

/// Exact per-frame truth for a generated stack.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Analytic nucleus mask of each frame, in frame coordinates.
    pub noi_masks: Vec<BinaryMask>,
    /// Content motion of each frame relative to the pre-irradiation frame.
    pub transforms: Vec<RigidTransform>,
    pub stripe_column: f64,
    /// Analytic normalized ratio per frame; `None` for the dark frame.
    pub true_ratio: Vec<Option<f64>>,
    /// Ideal measurement box used for the analytic curve.
    pub roi: Roi,
}

impl PhantomSpec {
    pub fn n_frames(&self) -> usize {
        1 + usize::from(self.with_dark) + self.n_post
    }

    pub fn roles(&self) -> Vec<FrameRole> {
        let mut roles = vec![FrameRole::PreIrradiation];
        if self.with_dark {
            roles.push(FrameRole::Dark);
        }
        roles.extend(std::iter::repeat_n(FrameRole::PostIrradiation, self.n_post));
        roles
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidPhantomSpec(m.into()));
        if self.width == 0 || self.height == 0 || self.n_post == 0 {
            return bad("dimensions and post-frame count must be nonzero");
        }
        if !(self.bit_depth == 8 || self.bit_depth == 16) {
            return bad("bit depth must be 8 or 16");
        }
        if self.nucleus.a <= 0.0 || self.nucleus.b <= 0.0 {
            return bad("nucleus semi-axes must be positive");
        }
        if self.noise_sigma < 0.0 {
            return bad("noise sigma must be non-negative");
        }
        if self.stripe.width <= 0.0 || self.stripe.length <= 0.0 {
            return bad("stripe width and length must be positive");
        }
        if (self.stripe.column - self.nucleus.cx).abs() > self.nucleus.a {
            return bad("stripe lies outside the nucleus");
        }
        if let FactorSchedule::PerFrame(f) = &self.stripe.factors {
            if f.len() != self.n_frames() {
                return bad("per-frame factor schedule length mismatch");
            }
            if (f[0] - 1.0).abs() > 1e-12 {
                return bad("factor schedule must start at 1.0");
            }
        }
        if let MotionSchedule::PerFrame(t) = &self.motion {
            if t.len() != self.n_frames() {
                return bad("per-frame motion schedule length mismatch");
            }
        }
        Ok(())
    }

    /// Accumulation factor of frame k (absolute index).
    pub fn factor(&self, k: usize) -> f64 {
        let first_post = 1 + usize::from(self.with_dark);
        match &self.stripe.factors {
            FactorSchedule::PerFrame(f) => f[k],
            _ if k < first_post => 1.0,
            FactorSchedule::Flat(v) => *v,
            FactorSchedule::RampTo(to) => {
                let j = (k - first_post + 1) as f64;
                1.0 + (to - 1.0) * j / self.n_post as f64
            }
        }
    }

    /// Content motion of frame k relative to the reference.
    pub fn transform(&self, k: usize) -> RigidTransform {
        match &self.motion {
            MotionSchedule::None => RigidTransform::IDENTITY,
            MotionSchedule::Drift {
                dx_per_frame,
                dy_per_frame,
                dtheta_per_frame,
            } => RigidTransform::new(
                dx_per_frame * k as f64,
                dy_per_frame * k as f64,
                dtheta_per_frame * k as f64,
            ),
            MotionSchedule::PerFrame(t) => t[k],
        }
    }

    /// Stripe multiplier profile at a point, in [0, 1].
    fn stripe_profile(&self, x: f64, y: f64) -> f64 {
        if (y - self.nucleus.cy).abs() > self.stripe.length / 2.0 {
            return 0.0;
        }
        let sigma = self.stripe.width / 3.0;
        (-0.5 * ((x - self.stripe.column) / sigma).powi(2)).exp()
    }

    /// Noise-free, background-free content at a reference-frame point.
    fn content(&self, x: f64, y: f64, factor: f64) -> f32 {
        let mut v = 0.0f32;
        if self.nucleus.contains(x, y) {
            v += self.nucleus.intensity
                * (1.0 + (factor - 1.0) * self.stripe_profile(x, y)) as f32;
        }
        for d in &self.distractors {
            if d.contains(x, y) {
                v += d.intensity;
            }
        }
        v
    }
}

/// Generate a stack and its ground truth; deterministic in (spec, seed).
pub fn generate(spec: &PhantomSpec, seed: u64) -> Result<(ImageStack, GroundTruth)> {
    spec.validate()?;
    let n = spec.n_frames();
    let roles = spec.roles();
    let (w, h) = (spec.width, spec.height);
    let center = (
        (w as f64 - 1.0) / 2.0,
        (h as f64 - 1.0) / 2.0,
    );
    let q_max = ((1u32 << spec.bit_depth) - 1) as f32;

    let mut frames = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    let mut transforms = Vec::with_capacity(n);

    for k in 0..n {
        let t = if roles[k] == FrameRole::PreIrradiation {
            RigidTransform::IDENTITY
        } else {
            spec.transform(k)
        };
        let inv = t.inverse();
        let factor = spec.factor(k);
        let dark = roles[k] == FrameRole::Dark;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let noise = (spec.noise_sigma > 0.0)
            .then(|| Normal::new(0.0f64, spec.noise_sigma as f64).unwrap());

        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64, y as f64, center);
                let mut v = if dark {
                    0.0
                } else {
                    spec.content(sx, sy, factor)
                };
                v += spec.background;
                if let Some(dist) = &noise {
                    v += dist.sample(&mut rng) as f32;
                }
                let q = (v.clamp(0.0, 1.0) * q_max).round() / q_max;
                pixels.push(q);
            }
        }
        frames.push(Frame::new(w, h, pixels, spec.bit_depth));

        let mask = BinaryMask::from_fn(w, h, |x, y| {
            let (sx, sy) = inv.apply(x as f64, y as f64, center);
            !dark && spec.nucleus.contains(sx, sy)
        });
        masks.push(mask);
        transforms.push(t);
    }

    let timestamps = (0..n).map(|k| k as f64 * spec.frame_interval_s).collect();
    let stack = ImageStack::new(frames, roles, timestamps, format!("phantom-{seed}"));
    let truth = ground_truth(spec, masks, transforms)?;
    Ok((stack, truth))
}

/// Ideal measurement box in reference coordinates, mirroring the placement
/// rule: horizontally centered on the stripe column, vertically centered on
/// the nucleus extent when the box is at least as tall.
fn ideal_roi(spec: &PhantomSpec) -> Roi {
    let (w, h) = (spec.width, spec.height);
    let width = spec.roi_width.min(w);
    let height = spec.roi_height.min(h);
    let x = (spec.stripe.column.round() as i64 - (width / 2) as i64)
        .clamp(0, (w - width) as i64) as usize;
    let extent_lo = (spec.nucleus.cy - spec.nucleus.b).ceil() as i64;
    let extent = (2.0 * spec.nucleus.b).floor() as i64 + 1;
    let y = if extent <= height as i64 {
        (extent_lo + (extent - height as i64).div_euclid(2)).clamp(0, (h - height) as i64) as usize
    } else {
        // Tall nucleus: center the box on the stripe segment.
        (spec.nucleus.cy.round() as i64 - (height / 2) as i64).clamp(0, (h - height) as i64)
            as usize
    };
    Roi {
        x,
        y,
        width,
        height,
    }
}

/// Analytic ratio curve via area-weighted means over the reference geometry,
/// computed by direct pixel enumeration of the spec.
fn ground_truth(
    spec: &PhantomSpec,
    noi_masks: Vec<BinaryMask>,
    transforms: Vec<RigidTransform>,
) -> Result<GroundTruth> {
    let roi = ideal_roi(spec);
    let roles = spec.roles();
    let n = spec.n_frames();

    let mut true_ratio = vec![None; n];
    let mut q0 = None;
    for k in 0..n {
        if roles[k] == FrameRole::Dark {
            continue;
        }
        let factor = spec.factor(k);
        let mut roi_sum = 0.0f64;
        let mut roi_n = 0u64;
        let mut noi_sum = 0.0f64;
        let mut noi_n = 0u64;
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (fx, fy) = (x as f64, y as f64);
                if !spec.nucleus.contains(fx, fy) {
                    continue;
                }
                let v = spec.content(fx, fy, factor) as f64;
                noi_sum += v;
                noi_n += 1;
                if roi.contains(x, y) {
                    roi_sum += v;
                    roi_n += 1;
                }
            }
        }
        if roi_n == 0 || noi_n == 0 {
            return Err(Error::InvalidPhantomSpec(
                "ideal ROI does not intersect the nucleus".into(),
            ));
        }
        let q = (roi_sum / roi_n as f64) / (noi_sum / noi_n as f64);
        let q0 = *q0.get_or_insert(q);
        true_ratio[k] = Some(q / q0);
    }

    Ok(GroundTruth {
        noi_masks,
        transforms,
        stripe_column: spec.stripe.column,
        true_ratio,
        roi,
    })
}

// ---------------------------------------------------------------------------
// Flat key-value (de)serialization of the spec, stored beside generated
// stacks.

impl PhantomSpec {
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("width", self.width.to_string());
        kv("height", self.height.to_string());
        kv("post_frames", self.n_post.to_string());
        kv("dark_frame", self.with_dark.to_string());
        kv("frame_interval_s", self.frame_interval_s.to_string());
        kv("bit_depth", self.bit_depth.to_string());
        kv("background", self.background.to_string());
        kv("noise_sigma", self.noise_sigma.to_string());
        kv(
            "nucleus",
            format!(
                "{},{},{},{},{}",
                self.nucleus.cx, self.nucleus.cy, self.nucleus.a, self.nucleus.b,
                self.nucleus.intensity
            ),
        );
        let factors = match &self.stripe.factors {
            FactorSchedule::Flat(v) => format!("flat:{v}"),
            FactorSchedule::RampTo(v) => format!("ramp:{v}"),
            FactorSchedule::PerFrame(f) => format!(
                "list:{}",
                f.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
            ),
        };
        kv(
            "stripe",
            format!(
                "{},{},{},{}",
                self.stripe.column, self.stripe.width, self.stripe.length, factors
            ),
        );
        let motion = match &self.motion {
            MotionSchedule::None => "none".to_string(),
            MotionSchedule::Drift {
                dx_per_frame,
                dy_per_frame,
                dtheta_per_frame,
            } => format!("drift:{dx_per_frame},{dy_per_frame},{dtheta_per_frame}"),
            MotionSchedule::PerFrame(ts) => format!(
                "list:{}",
                ts.iter()
                    .map(|t| format!("{},{},{}", t.dx, t.dy, t.theta))
                    .collect::<Vec<_>>()
                    .join(";")
            ),
        };
        kv("motion", motion);
        for d in &self.distractors {
            kv(
                "distractor",
                format!("{},{},{},{},{}", d.cx, d.cy, d.a, d.b, d.intensity),
            );
        }
        kv("roi_width", self.roi_width.to_string());
        kv("roi_height", self.roi_height.to_string());
        out
    }

    /// Parse the flat key-value format; unknown keys are errors.
    pub fn from_key_values(text: &str) -> Result<PhantomSpec> {
        let mut spec = PhantomSpec::default();
        spec.distractors.clear();
        let bad = |line: usize, m: String| Error::InvalidPhantomSpec(format!("line {line}: {m}"));

        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line_no, "expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let parse_f64 = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| bad(line_no, format!("invalid number `{v}`")))
            };
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| bad(line_no, format!("invalid integer `{v}`")))
            };
            let parse_ellipse = |v: &str| -> Result<EllipseSpec> {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 5 {
                    return Err(bad(line_no, "expected cx,cy,a,b,intensity".into()));
                }
                Ok(EllipseSpec {
                    cx: parse_f64(parts[0])?,
                    cy: parse_f64(parts[1])?,
                    a: parse_f64(parts[2])?,
                    b: parse_f64(parts[3])?,
                    intensity: parse_f64(parts[4])? as f32,
                })
            };

            match key {
                "width" => spec.width = parse_usize(value)?,
                "height" => spec.height = parse_usize(value)?,
                "post_frames" => spec.n_post = parse_usize(value)?,
                "dark_frame" => {
                    spec.with_dark = value
                        .parse::<bool>()
                        .map_err(|_| bad(line_no, "expected true or false".into()))?
                }
                "frame_interval_s" => spec.frame_interval_s = parse_f64(value)?,
                "bit_depth" => spec.bit_depth = parse_usize(value)? as u8,
                "background" => spec.background = parse_f64(value)? as f32,
                "noise_sigma" => spec.noise_sigma = parse_f64(value)? as f32,
                "nucleus" => spec.nucleus = parse_ellipse(value)?,
                "distractor" => spec.distractors.push(parse_ellipse(value)?),
                "roi_width" => spec.roi_width = parse_usize(value)?,
                "roi_height" => spec.roi_height = parse_usize(value)?,
                "stripe" => {
                    let parts: Vec<&str> = value.splitn(4, ',').map(str::trim).collect();
                    if parts.len() != 4 {
                        return Err(bad(line_no, "expected column,width,length,factors".into()));
                    }
                    let factors = match parts[3].split_once(':') {
                        Some(("flat", v)) => FactorSchedule::Flat(parse_f64(v)?),
                        Some(("ramp", v)) => FactorSchedule::RampTo(parse_f64(v)?),
                        Some(("list", v)) => FactorSchedule::PerFrame(
                            v.split(';')
                                .map(|s| parse_f64(s.trim()))
                                .collect::<Result<Vec<f64>>>()?,
                        ),
                        _ => return Err(bad(line_no, "factors must be flat:, ramp: or list:".into())),
                    };
                    spec.stripe = StripeSpec {
                        column: parse_f64(parts[0])?,
                        width: parse_f64(parts[1])?,
                        length: parse_f64(parts[2])?,
                        factors,
                    };
                }
                "motion" => {
                    spec.motion = if value == "none" {
                        MotionSchedule::None
                    } else if let Some(rest) = value.strip_prefix("drift:") {
                        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                        if parts.len() != 3 {
                            return Err(bad(line_no, "drift needs dx,dy,dtheta".into()));
                        }
                        MotionSchedule::Drift {
                            dx_per_frame: parse_f64(parts[0])?,
                            dy_per_frame: parse_f64(parts[1])?,
                            dtheta_per_frame: parse_f64(parts[2])?,
                        }
                    } else if let Some(rest) = value.strip_prefix("list:") {
                        let ts = rest
                            .split(';')
                            .map(|triple| {
                                let p: Vec<&str> = triple.split(',').map(str::trim).collect();
                                if p.len() != 3 {
                                    return Err(bad(line_no, "list entries need dx,dy,theta".into()));
                                }
                                Ok(RigidTransform::new(
                                    parse_f64(p[0])?,
                                    parse_f64(p[1])?,
                                    parse_f64(p[2])?,
                                ))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        MotionSchedule::PerFrame(ts)
                    } else {
                        return Err(bad(line_no, "motion must be none, drift: or list:".into()));
                    };
                }
                other => {
                    return Err(Error::InvalidPhantomSpec(format!(
                        "line {line_no}: unknown key `{other}`"
                    )))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> PhantomSpec {
        PhantomSpec {
            width: 96,
            height: 96,
            n_post: 4,
            with_dark: true,
            nucleus: EllipseSpec {
                cx: 47.5,
                cy: 47.5,
                a: 28.0,
                b: 20.0,
                intensity: 0.55,
            },
            stripe: StripeSpec {
                column: 47.5,
                width: 4.0,
                length: 30.0,
                factors: FactorSchedule::RampTo(1.8),
            },
            roi_width: 10,
            roi_height: 60,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn flat_factors_yield_flat_unit_ratio() {
        let mut spec = small_spec();
        spec.stripe.factors = FactorSchedule::Flat(1.0);
        spec.noise_sigma = 0.0;
        let (stack, truth) = generate(&spec, 1).unwrap();
        // All non-dark frames identical at factor 1 and no motion.
        let pre = &stack.frames[0];
        for (k, f) in stack.frames.iter().enumerate() {
            if stack.roles[k] != FrameRole::Dark {
                assert_eq!(f.pixels(), pre.pixels(), "frame {k}");
            }
        }
        for (k, r) in truth.true_ratio.iter().enumerate() {
            match stack.roles[k] {
                FrameRole::Dark => assert!(r.is_none()),
                _ => assert!((r.unwrap() - 1.0).abs() < 1e-12),
            }
        }
    }

    #[test]
    fn fixed_seed_regenerates_identical_stack() {
        let mut spec = small_spec();
        spec.noise_sigma = 0.05;
        let (a, _) = generate(&spec, 42).unwrap();
        let (b, _) = generate(&spec, 42).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.pixels(), fb.pixels());
        }
        let (c, _) = generate(&spec, 43).unwrap();
        assert!(a.frames[2].pixels() != c.frames[2].pixels());
    }

    #[test]
    fn rendered_foreground_matches_mask_at_zero_noise() {
        let mut spec = small_spec();
        spec.noise_sigma = 0.0;
        spec.background = 0.0;
        let (stack, truth) = generate(&spec, 5).unwrap();
        for k in [0usize, 2, 3] {
            let rendered = BinaryMask::from_fn(spec.width, spec.height, |x, y| {
                stack.frames[k].get(x, y) > 0.0
            });
            assert_eq!(rendered.iou(&truth.noi_masks[k]), 1.0, "frame {k}");
        }
    }

    #[test]
    fn ramp_truth_matches_independent_enumeration() {
        let spec = small_spec();
        let (_, truth) = generate(&spec, 9).unwrap();
        // Independent oracle: accumulate stripe mass over the ideal band and
        // the whole nucleus, then form the two-term ratio directly.
        let roi = truth.roi;
        let sigma = spec.stripe.width / 3.0;
        let mut band_g = 0.0f64;
        let mut band_n = 0u64;
        let mut noi_g = 0.0f64;
        let mut noi_n = 0u64;
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (fx, fy) = (x as f64, y as f64);
                if !spec.nucleus.contains(fx, fy) {
                    continue;
                }
                let g = if (fy - spec.nucleus.cy).abs() <= spec.stripe.length / 2.0 {
                    (-0.5 * ((fx - spec.stripe.column) / sigma).powi(2)).exp()
                } else {
                    0.0
                };
                noi_g += g;
                noi_n += 1;
                if roi.contains(x, y) {
                    band_g += g;
                    band_n += 1;
                }
            }
        }
        let r_band = band_g / band_n as f64;
        let r_noi = noi_g / noi_n as f64;
        for (k, maybe) in truth.true_ratio.iter().enumerate() {
            let Some(r) = maybe else { continue };
            let f = spec.factor(k);
            let expected = (1.0 + (f - 1.0) * r_band) / (1.0 + (f - 1.0) * r_noi);
            assert!(
                (r - expected).abs() < 1e-9,
                "frame {k}: {r} vs closed form {expected}"
            );
        }
        // The ramp ends at its target.
        let last = truth.true_ratio.last().unwrap().unwrap();
        assert!(last > 1.0);
    }

    #[test]
    fn stripe_outside_nucleus_rejected() {
        let mut spec = small_spec();
        spec.stripe.column = 90.0;
        assert!(matches!(
            generate(&spec, 1),
            Err(Error::InvalidPhantomSpec(_))
        ));
    }

    #[test]
    fn key_value_round_trip() {
        let mut spec = small_spec();
        spec.noise_sigma = 0.04;
        spec.motion = MotionSchedule::Drift {
            dx_per_frame: 0.2,
            dy_per_frame: -0.1,
            dtheta_per_frame: 0.001,
        };
        spec.distractors.push(EllipseSpec {
            cx: 12.0,
            cy: 14.0,
            a: 8.0,
            b: 6.0,
            intensity: 0.5,
        });
        let text = spec.to_key_values();
        let parsed = PhantomSpec::from_key_values(&text).unwrap();
        let (a, _) = generate(&spec, 7).unwrap();
        let (b, _) = generate(&parsed, 7).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.pixels(), fb.pixels());
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let err = PhantomSpec::from_key_values("wdith = 10\n");
        assert!(matches!(err, Err(Error::InvalidPhantomSpec(_))));
    }
}
