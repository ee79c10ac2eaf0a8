//! Detection of the irradiated stripe: the avg-t projection of the
//! registered stack is collapsed to a column profile, candidate peaks are
//! ranked by three equally weighted scores (topographic prominence, Haar-like
//! band response, distance to the nucleus center) and a fixed-size box is
//! placed on the winner.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{BinaryMask, Frame, IntensityProfile};
use crate::imageops::{avg_t_projection_indices, median_filter_1d, sum_y_projection};

/// Fixed-size axis-aligned box covering the irradiated stripe; `x`, `y` is
/// the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// A candidate peak with raw and min-max-normalized scores.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredPeak {
    /// Column index of the peak.
    pub x: usize,
    pub raw_height: f64,
    pub raw_haar: f64,
    pub raw_center: f64,
    pub norm_height: f64,
    pub norm_haar: f64,
    pub norm_center: f64,
    /// Sum of the three normalized scores, in [0, 3].
    pub s_total: f64,
}

#[derive(Debug, Clone)]
pub struct RoiParams {
    pub width: usize,
    pub height: usize,
    /// Columns need at least this many nucleus rows to host a candidate.
    pub min_mask_rows: usize,
    /// Detections whose top-two score gap falls below this margin are
    /// flagged low-confidence.
    pub low_confidence_margin: f64,
}

impl Default for RoiParams {
    fn default() -> Self {
        RoiParams {
            width: 20,
            height: 180,
            min_mask_rows: 5,
            low_confidence_margin: 0.15,
        }
    }
}

/// Width of the Haar-like feature: 1.25x the ROI width, rounded up to odd.
pub fn feature_width(roi_width: usize) -> usize {
    let w = (1.25 * roi_width as f64).ceil() as usize;
    if w % 2 == 0 {
        w + 1
    } else {
        w
    }
}

/// Strict local maxima of the profile; a plateau counts once, at its leftmost
/// index. Maxima at the profile endpoints are excluded, as are columns where
/// `eligible` is false.
pub fn find_candidate_peaks(
    profile: &IntensityProfile,
    eligible: Option<&[bool]>,
) -> Result<Vec<usize>> {
    let v = &profile.values;
    let n = v.len();
    let mut peaks = Vec::new();
    let mut i = 0usize;
    while i < n {
        // Plateau [i, j] of equal values.
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let rising = i > 0 && v[i - 1] < v[i];
        let falling = j + 1 < n && v[j + 1] < v[i];
        if rising && falling && eligible.is_none_or(|e| e[i]) {
            peaks.push(i);
        }
        i = j + 1;
    }
    if peaks.is_empty() {
        return Err(Error::NoPeakFound);
    }
    Ok(peaks)
}

/// Topographic prominence of the peak within `+-window_radius` columns.
///
/// On each side the walk (past the peak's own plateau) stops at the first
/// value at or above the peak; the side's saddle is the minimum encountered.
/// The prominence is the peak height minus the higher saddle. A peak with no
/// such stop on either side scores height minus the window minimum.
pub fn score_height(profile: &IntensityProfile, peak: usize, window_radius: usize) -> f64 {
    let v = &profile.values;
    let n = v.len();
    let lo = peak.saturating_sub(window_radius);
    let hi = (peak + window_radius).min(n - 1);
    let pv = v[peak];

    // Own plateau bounds.
    let mut pl = peak;
    while pl > lo && v[pl - 1] == pv {
        pl -= 1;
    }
    let mut pr = peak;
    while pr < hi && v[pr + 1] == pv {
        pr += 1;
    }

    let walk = |range: &mut dyn Iterator<Item = usize>| -> (Option<f64>, f64) {
        let mut saddle = f64::INFINITY;
        for i in range {
            saddle = saddle.min(v[i]);
            if v[i] >= pv {
                return (Some(saddle), saddle);
            }
        }
        (None, saddle)
    };

    let (left_stop, left_min) = walk(&mut (lo..pl).rev());
    let (right_stop, right_min) = walk(&mut (pr + 1..=hi));

    match (left_stop, right_stop) {
        // Isolated peak: height above the window minimum.
        (None, None) => pv - left_min.min(right_min).min(pv),
        _ => {
            // A side without a stop contributes its minimum; an empty side
            // (infinite minimum) contributes nothing.
            let base_l = left_stop.unwrap_or(left_min);
            let base_r = right_stop.unwrap_or(right_min);
            let base = if base_l.is_finite() && base_r.is_finite() {
                base_l.max(base_r)
            } else {
                base_l.min(base_r)
            };
            pv - base
        }
    }
}

/// Haar-like band response: mean over the central band of `feature_width`
/// columns minus the mean over two flanking bands of half that width, all
/// clipped to the profile.
pub fn score_haar(profile: &IntensityProfile, peak: usize, feature_width: usize) -> f64 {
    let v = &profile.values;
    let n = v.len() as i64;
    let half = (feature_width as i64 - 1) / 2;
    let flank = (feature_width / 2) as i64;
    let c_lo = peak as i64 - half;
    let c_hi = peak as i64 + half;

    let band_mean = |lo: i64, hi: i64| -> (f64, usize) {
        let lo = lo.max(0);
        let hi = hi.min(n - 1);
        if lo > hi {
            return (0.0, 0);
        }
        let mut sum = 0.0;
        for i in lo..=hi {
            sum += v[i as usize];
        }
        (sum, (hi - lo + 1) as usize)
    };

    let (c_sum, c_n) = band_mean(c_lo, c_hi);
    let (l_sum, l_n) = band_mean(c_lo - flank, c_lo - 1);
    let (r_sum, r_n) = band_mean(c_hi + 1, c_hi + flank);
    let central = if c_n > 0 { c_sum / c_n as f64 } else { 0.0 };
    let flanks = if l_n + r_n > 0 {
        (l_sum + r_sum) / (l_n + r_n) as f64
    } else {
        0.0
    };
    central - flanks
}

/// Distance score: closer to the nucleus center is better.
pub fn score_center(peak: usize, noi_centroid_x: f64) -> f64 {
    -(peak as f64 - noi_centroid_x).abs()
}

fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        raw.iter().map(|&r| (r - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; raw.len()]
    }
}

/// Raw per-candidate scores before normalization.
#[derive(Debug, Clone)]
pub struct RawScores {
    pub x: usize,
    pub height: f64,
    pub haar: f64,
    pub center: f64,
}

/// Normalize each score across candidates, sum with equal weights and pick
/// the winner. Ties go to the candidate closest to the nucleus center, then
/// to the leftmost column.
pub fn select_peak(candidates: &[RawScores]) -> (usize, Vec<ScoredPeak>) {
    assert!(!candidates.is_empty(), "select_peak requires candidates");
    let heights: Vec<f64> = candidates.iter().map(|c| c.height).collect();
    let haars: Vec<f64> = candidates.iter().map(|c| c.haar).collect();
    let centers: Vec<f64> = candidates.iter().map(|c| c.center).collect();
    let nh = min_max_normalize(&heights);
    let na = min_max_normalize(&haars);
    let nc = min_max_normalize(&centers);

    let scored: Vec<ScoredPeak> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| ScoredPeak {
            x: c.x,
            raw_height: c.height,
            raw_haar: c.haar,
            raw_center: c.center,
            norm_height: nh[i],
            norm_haar: na[i],
            norm_center: nc[i],
            s_total: nh[i] + na[i] + nc[i],
        })
        .collect();

    let chosen = (0..scored.len())
        .max_by(|&i, &j| {
            scored[i]
                .s_total
                .total_cmp(&scored[j].s_total)
                .then(scored[i].raw_center.total_cmp(&scored[j].raw_center))
                .then(scored[j].x.cmp(&scored[i].x))
        })
        .unwrap();
    (chosen, scored)
}

/// Place the fixed-size box: horizontally centered on the peak column
/// (clamped to the image); vertically centered on the nucleus extent when
/// the nucleus is no taller than the box, otherwise at the y maximizing the
/// box's mean avg-t intensity over the nucleus mask.
pub fn place_roi(
    avg_t: &Frame,
    noi_mask: &BinaryMask,
    peak_x: usize,
    width: usize,
    height: usize,
) -> Roi {
    let img_w = avg_t.width();
    let img_h = avg_t.height();
    let width = width.min(img_w);
    let height = height.min(img_h);
    let x = (peak_x as i64 - (width / 2) as i64).clamp(0, (img_w - width) as i64) as usize;

    // Vertical extent of the nucleus at the peak column.
    let col = peak_x.min(img_w - 1);
    let mut y_min = None;
    let mut y_max = None;
    for y in 0..img_h {
        if noi_mask.get(col, y) {
            y_min.get_or_insert(y);
            y_max = Some(y);
        }
    }
    let (extent_lo, extent_hi) = match (y_min, y_max) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => (0, img_h - 1),
    };
    let extent = extent_hi - extent_lo + 1;

    let y = if extent <= height {
        let centered = extent_lo as i64 + (extent as i64 - height as i64).div_euclid(2);
        centered.clamp(0, (img_h - height) as i64) as usize
    } else {
        // Exhaustive scan maximizing the box mean over the nucleus mask.
        let mut best_y = 0usize;
        let mut best_mean = f64::NEG_INFINITY;
        for y0 in 0..=img_h - height {
            let mut sum = 0.0f64;
            let mut n = 0usize;
            for yy in y0..y0 + height {
                for xx in x..x + width {
                    if noi_mask.get(xx, yy) {
                        sum += avg_t.get(xx, yy) as f64;
                        n += 1;
                    }
                }
            }
            if n == 0 {
                continue;
            }
            let mean = sum / n as f64;
            if mean > best_mean {
                best_mean = mean;
                best_y = y0;
            }
        }
        best_y
    };

    Roi {
        x,
        y,
        width,
        height,
    }
}

/// Per-stack ROI detection diagnostics, serialized as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RoiDiagnostics {
    pub candidates: Vec<ScoredPeak>,
    pub chosen_x: usize,
    pub roi: Roi,
    /// Gap in `s_total` between the best and second-best candidate; equals
    /// the winner's `s_total` when it is the only candidate.
    pub confidence_margin: f64,
    pub low_confidence: bool,
    pub noi_centroid_x: f64,
}

/// Full ROI detection result.
#[derive(Debug, Clone)]
pub struct RoiDetection {
    pub roi: Roi,
    pub peak: ScoredPeak,
    pub diagnostics: RoiDiagnostics,
    pub avg_t: Frame,
    pub union_mask: BinaryMask,
}

/// Detect the stripe ROI from registered post-irradiation frames and their
/// warped nucleus masks.
pub fn detect_roi(
    registered: &[Frame],
    masks: &[BinaryMask],
    params: &RoiParams,
) -> Result<RoiDetection> {
    assert_eq!(registered.len(), masks.len());
    if registered.is_empty() {
        return Err(Error::EmptySelection);
    }
    let indices: Vec<usize> = (0..registered.len()).collect();
    let avg_t = avg_t_projection_indices(registered, &indices)?;
    let union_mask = masks
        .iter()
        .skip(1)
        .fold(masks[0].clone(), |acc, m| acc.union(m));

    let (w, h) = (avg_t.width(), avg_t.height());
    let mut col_rows = vec![0usize; w];
    for y in 0..h {
        for x in 0..w {
            if union_mask.get(x, y) {
                col_rows[x] += 1;
            }
        }
    }
    let eligible: Vec<bool> = col_rows.iter().map(|&c| c >= params.min_mask_rows).collect();

    let profile = sum_y_projection(&avg_t, Some(&union_mask));
    let smoothed = median_filter_1d(&profile, 3);
    let peaks = find_candidate_peaks(&smoothed, Some(&eligible))?;

    let centroid_x = union_mask
        .centroid()
        .map(|(x, _)| x)
        .ok_or(Error::NoPeakFound)?;
    let fw = feature_width(params.width);
    let raw: Vec<RawScores> = peaks
        .iter()
        .map(|&x| RawScores {
            x,
            height: score_height(&smoothed, x, 2 * params.width),
            haar: score_haar(&smoothed, x, fw),
            center: score_center(x, centroid_x),
        })
        .collect();
    let (chosen_idx, scored) = select_peak(&raw);
    let peak = scored[chosen_idx].clone();

    let roi = place_roi(&avg_t, &union_mask, peak.x, params.width, params.height);

    let mut totals: Vec<f64> = scored.iter().map(|s| s.s_total).collect();
    totals.sort_by(|a, b| b.total_cmp(a));
    let confidence_margin = if totals.len() >= 2 {
        totals[0] - totals[1]
    } else {
        totals[0]
    };

    let diagnostics = RoiDiagnostics {
        candidates: scored,
        chosen_x: peak.x,
        roi,
        confidence_margin,
        low_confidence: confidence_margin < params.low_confidence_margin,
        noi_centroid_x: centroid_x,
    };

    Ok(RoiDetection {
        roi,
        peak,
        diagnostics,
        avg_t,
        union_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(values: Vec<f64>) -> IntensityProfile {
        IntensityProfile::new(values)
    }

    #[test]
    fn peaks_triangular_bump() {
        let p = profile(vec![0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(find_candidate_peaks(&p, None).unwrap(), vec![3]);
    }

    #[test]
    fn peaks_monotone_profile_errors() {
        let p = profile((0..10).map(|i| i as f64).collect());
        assert!(matches!(
            find_candidate_peaks(&p, None),
            Err(Error::NoPeakFound)
        ));
    }

    #[test]
    fn peaks_two_bumps_left_to_right() {
        let p = profile(vec![0.0, 2.0, 0.5, 0.5, 3.0, 0.0]);
        assert_eq!(find_candidate_peaks(&p, None).unwrap(), vec![1, 4]);
    }

    #[test]
    fn peaks_plateau_reports_leftmost() {
        let p = profile(vec![0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0]);
        assert_eq!(find_candidate_peaks(&p, None).unwrap(), vec![2]);
    }

    #[test]
    fn prominence_lone_bump() {
        let mut v = vec![1.0; 41];
        v[20] = 5.0;
        v[19] = 3.0;
        v[21] = 3.0;
        let p = profile(v);
        assert_eq!(score_height(&p, 20, 40), 4.0);
    }

    #[test]
    fn prominence_two_equal_bumps_share_saddle() {
        // Baseline 0, two bumps of height 5 with a saddle at 2 between them.
        let mut v = vec![0.0; 31];
        v[10] = 5.0;
        v[9] = 3.0;
        v[11] = 3.0;
        for i in 12..19 {
            v[i] = 2.0;
        }
        v[19] = 3.0;
        v[21] = 3.0;
        v[20] = 5.0;
        let p = profile(v);
        assert_eq!(score_height(&p, 10, 30), 3.0);
        assert_eq!(score_height(&p, 20, 30), 3.0);
    }

    /// Brute-force prominence with the same saddle convention: exhaustive
    /// search for the nearest at-or-above position per side, then the range
    /// minimum in between.
    fn prominence_oracle(v: &[f64], peak: usize, window: usize) -> f64 {
        let lo = peak.saturating_sub(window);
        let hi = (peak + window).min(v.len() - 1);
        let pv = v[peak];
        let mut pl = peak;
        while pl > lo && v[pl - 1] == pv {
            pl -= 1;
        }
        let mut pr = peak;
        while pr < hi && v[pr + 1] == pv {
            pr += 1;
        }
        let left_stop = (lo..pl).rev().find(|&i| v[i] >= pv);
        let right_stop = (pr + 1..=hi).find(|&i| v[i] >= pv);
        let range_min = |a: usize, b: usize| v[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        let left_base = match left_stop {
            Some(l) => range_min(l, pl - 1),
            None if pl > lo => range_min(lo, pl - 1),
            None => f64::INFINITY,
        };
        let right_base = match right_stop {
            Some(r) => range_min(pr + 1, r),
            None if pr < hi => range_min(pr + 1, hi),
            None => f64::INFINITY,
        };
        match (left_stop, right_stop) {
            (None, None) => pv - left_base.min(right_base).min(pv),
            _ => {
                let base = if left_base.is_finite() && right_base.is_finite() {
                    left_base.max(right_base)
                } else {
                    left_base.min(right_base)
                };
                pv - base
            }
        }
    }

    #[test]
    fn prominence_matches_exhaustive_oracle() {
        let mut state = 11u64;
        let values: Vec<f64> = (0..120)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((state >> 33) % 1000) as f64 / 100.0
            })
            .collect();
        let p = profile(values.clone());
        let peaks = find_candidate_peaks(&p, None).unwrap();
        for &peak in &peaks {
            let ours = score_height(&p, peak, 40);
            let oracle = prominence_oracle(&values, peak, 40);
            assert!(
                (ours - oracle).abs() < 1e-12,
                "peak {peak}: {ours} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn haar_flat_profile_zero() {
        let p = profile(vec![2.5; 50]);
        assert!(score_haar(&p, 25, 11).abs() < 1e-12);
    }

    #[test]
    fn haar_matched_rectangular_pulse() {
        let mut v = vec![0.0; 60];
        // Pulse exactly covering the central band of width 11 around column 30.
        for i in 25..=35 {
            v[i] = 4.0;
        }
        let p = profile(v);
        assert!((score_haar(&p, 30, 11) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn haar_gaussian_bump_matches_band_means() {
        let sigma = 4.0f64;
        let v: Vec<f64> = (0..81)
            .map(|i| (-0.5 * ((i as f64 - 40.0) / sigma).powi(2)).exp())
            .collect();
        let p = profile(v.clone());
        let fw = 10usize;
        let ours = score_haar(&p, 40, fw);
        // Direct band means: central [36, 44] (half = 4), flanks of width 5.
        let central: f64 = v[36..=44].iter().sum::<f64>() / 9.0;
        let flanks: f64 = (v[31..=35].iter().sum::<f64>() + v[45..=49].iter().sum::<f64>()) / 10.0;
        assert!((ours - (central - flanks)).abs() < 1e-12);
        // Frozen from the direct evaluation above.
        assert!((ours - 0.650_814_227_899_909_4).abs() < 1e-9);
    }

    #[test]
    fn center_score_examples() {
        assert_eq!(score_center(50, 50.0), 0.0);
        assert!(score_center(55, 50.0) > score_center(70, 50.0));
        assert_eq!(score_center(45, 50.0), score_center(55, 50.0));
    }

    #[test]
    fn select_single_candidate_totals_one_point_five() {
        let raw = vec![RawScores {
            x: 10,
            height: 3.0,
            haar: 1.0,
            center: -2.0,
        }];
        let (idx, scored) = select_peak(&raw);
        assert_eq!(idx, 0);
        assert_eq!(scored[0].s_total, 1.5);
    }

    #[test]
    fn select_dominator_wins() {
        let raw = vec![
            RawScores {
                x: 10,
                height: 5.0,
                haar: 2.0,
                center: -1.0,
            },
            RawScores {
                x: 40,
                height: 1.0,
                haar: 0.5,
                center: -30.0,
            },
        ];
        let (idx, scored) = select_peak(&raw);
        assert_eq!(idx, 0);
        assert_eq!(scored[0].s_total, 3.0);
        assert_eq!(scored[1].s_total, 0.0);
    }

    #[test]
    fn select_central_wins_among_equals() {
        // Equal height/haar, different center distance: normalized center
        // decides (0.5 + 0.5 + 1 vs 0.5 + 0.5 + 0).
        let raw = vec![
            RawScores {
                x: 48,
                height: 2.0,
                haar: 1.0,
                center: -3.0,
            },
            RawScores {
                x: 80,
                height: 2.0,
                haar: 1.0,
                center: -35.0,
            },
        ];
        let (idx, scored) = select_peak(&raw);
        assert_eq!(idx, 0);
        assert_eq!(scored[0].s_total, 2.0);
        assert_eq!(scored[1].s_total, 1.0);
    }

    #[test]
    fn select_tie_breaks_toward_center_then_left() {
        // Mirror-symmetric candidates: totals tie, center distances tie,
        // leftmost wins.
        let raw = vec![
            RawScores {
                x: 60,
                height: 2.0,
                haar: 1.0,
                center: -10.0,
            },
            RawScores {
                x: 40,
                height: 2.0,
                haar: 1.0,
                center: -10.0,
            },
        ];
        let (idx, _) = select_peak(&raw);
        assert_eq!(raw[idx].x, 40);
    }

    #[test]
    fn feature_width_odd_and_slightly_larger() {
        assert_eq!(feature_width(20), 25);
        assert_eq!(feature_width(30), 39);
        assert_eq!(feature_width(8), 11);
        for w in 3..60 {
            let f = feature_width(w);
            assert!(f % 2 == 1 && f as f64 >= 1.25 * w as f64);
        }
    }

    #[test]
    fn place_roi_centers_short_nucleus() {
        let avgel = Frame::zeros(64, 64);
        // Nucleus rows 20..=39 at the peak column: extent 20 < height 30.
        let mask = BinaryMask::from_fn(64, 64, |_, y| (20..40).contains(&y));
        let roi = place_roi(&avgel, &mask, 32, 10, 30);
        assert_eq!(roi.x, 27);
        assert_eq!(roi.y, 15); // 20 + (20 - 30)/2
        assert_eq!(roi.height, 30);
    }

    #[test]
    fn place_roi_scans_tall_nucleus() {
        // Nucleus fills the column; bright band in the upper half.
        let avg_t = Frame::from_fn(64, 64, |_, y| if (10..20).contains(&y) { 0.9 } else { 0.1 });
        let mask = BinaryMask::filled(64, 64, true);
        let roi = place_roi(&avg_t, &mask, 32, 10, 12);
        // Exhaustive oracle over all y positions.
        let mut best = (0usize, f64::NEG_INFINITY);
        for y0 in 0..=52usize {
            let mut sum = 0.0;
            for yy in y0..y0 + 12 {
                for xx in roi.x..roi.x + 10 {
                    sum += avg_t.get(xx, yy) as f64;
                }
            }
            let mean = sum / (12.0 * 10.0);
            if mean > best.1 {
                best = (y0, mean);
            }
        }
        assert_eq!(roi.y, best.0);
    }

    #[test]
    fn place_roi_clamps_at_edge() {
        let avg_t = Frame::zeros(64, 64);
        let mask = BinaryMask::filled(64, 64, true);
        let roi = place_roi(&avg_t, &mask, 2, 20, 70);
        assert_eq!(roi.x, 0);
        assert_eq!(roi.height, 64);
        let roi2 = place_roi(&avg_t, &mask, 63, 20, 30);
        assert_eq!(roi2.x, 44);
    }

    #[test]
    fn select_peak_invariant_under_affine_profile_rescale() {
        let mut state = 3u64;
        for trial in 0..200 {
            let values: Vec<f64> = (0..100)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    ((state >> 33) % 1000) as f64 / 50.0
                })
                .collect();
            let p = profile(values.clone());
            let Ok(peaks) = find_candidate_peaks(&p, None) else {
                continue;
            };
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let a = 0.1 + ((state >> 33) % 100) as f64 / 10.0;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let b = ((state >> 33) % 100) as f64 - 50.0;
            let rescaled = profile(values.iter().map(|&v| a * v + b).collect());

            let score = |pr: &IntensityProfile| {
                let raw: Vec<RawScores> = peaks
                    .iter()
                    .map(|&x| RawScores {
                        x,
                        height: score_height(pr, x, 40),
                        haar: score_haar(pr, x, 25),
                        center: score_center(x, 50.0),
                    })
                    .collect();
                let (idx, _) = select_peak(&raw);
                peaks[idx]
            };
            assert_eq!(score(&p), score(&rescaled), "trial {trial}, a={a}, b={b}");
        }
    }
}
