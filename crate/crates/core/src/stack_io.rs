//! Stack loading and all file output: multi-page TIFF and a raw binary
//! format on the way in, CSV curves, JSON diagnostics and PNG overlays on
//! the way out.
//!
//! All writes go through a temporary file in the target directory followed
//! by a rename, so readers never observe partial output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

use crate::error::{Error, Result};
use crate::frame::{BinaryMask, Frame, FrameRole, ImageStack};
use crate::measurement::{AggregateCurve, IntensityCurve};
use crate::roi::Roi;

const RAW_MAGIC: &[u8; 4] = b"RSTK";
const RAW_VERSION: u16 = 1;

/// How frame roles map onto page order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    /// Page 0 pre-irradiation, page 1 dark, the rest post-irradiation.
    PreDarkPost,
    /// Page 0 pre-irradiation, the rest post-irradiation.
    PrePost,
    /// A single pre-irradiation page.
    PreOnly,
}

impl LayoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::PreDarkPost => "pre-dark-post",
            LayoutKind::PrePost => "pre-post",
            LayoutKind::PreOnly => "pre-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "pre-dark-post" => Some(LayoutKind::PreDarkPost),
            "pre-post" => Some(LayoutKind::PrePost),
            "pre-only" => Some(LayoutKind::PreOnly),
            _ => None,
        }
    }

    /// Role of each page; pure in (layout, page count).
    pub fn assign_roles(self, pages: usize) -> Result<Vec<FrameRole>> {
        let mismatch = || Error::LayoutMismatch {
            pages,
            layout: self.as_str().to_string(),
        };
        match self {
            LayoutKind::PreDarkPost => {
                if pages < 2 {
                    return Err(mismatch());
                }
                let mut roles = vec![FrameRole::PreIrradiation, FrameRole::Dark];
                roles.extend(std::iter::repeat_n(FrameRole::PostIrradiation, pages - 2));
                Ok(roles)
            }
            LayoutKind::PrePost => {
                if pages < 1 {
                    return Err(mismatch());
                }
                let mut roles = vec![FrameRole::PreIrradiation];
                roles.extend(std::iter::repeat_n(FrameRole::PostIrradiation, pages - 1));
                Ok(roles)
            }
            LayoutKind::PreOnly => {
                if pages != 1 {
                    return Err(mismatch());
                }
                Ok(vec![FrameRole::PreIrradiation])
            }
        }
    }
}

/// Frame-role layout plus the acquisition interval used to synthesize
/// timestamps when the file carries none.
#[derive(Debug, Clone, Copy)]
pub struct StackLayout {
    pub kind: LayoutKind,
    pub frame_interval_s: f64,
}

impl Default for StackLayout {
    fn default() -> Self {
        StackLayout {
            kind: LayoutKind::PreDarkPost,
            frame_interval_s: 6.5,
        }
    }
}

fn source_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Load a multi-page grayscale stack (TIFF or raw), normalizing intensities
/// to `[0, 1]` by the bit-depth maximum.
pub fn load_stack(path: &Path, layout: &StackLayout) -> Result<ImageStack> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    drop(file);

    let (frames, interval) = if &magic == RAW_MAGIC {
        load_raw_frames(path)?
    } else {
        (load_tiff_frames(path)?, None)
    };

    if frames.is_empty() {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: "file contains no pages".into(),
        });
    }
    if !frames.windows(2).all(|w| w[0].same_size(&w[1])) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: "pages differ in size".into(),
        });
    }

    let roles = layout.kind.assign_roles(frames.len())?;
    let dt = interval.unwrap_or(layout.frame_interval_s);
    let timestamps = (0..frames.len()).map(|k| k as f64 * dt).collect();
    Ok(ImageStack::new(
        frames,
        roles,
        timestamps,
        source_id_from_path(path),
    ))
}

fn load_tiff_frames(path: &Path) -> Result<Vec<Frame>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(|e| Error::TiffDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut frames = Vec::new();
    loop {
        let (w, h) = decoder.dimensions().map_err(|e| Error::TiffDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (w, h) = (w as usize, h as usize);
        let result = decoder.read_image().map_err(|e| Error::TiffDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let frame = match result {
            DecodingResult::U8(data) => {
                let pixels = data.iter().map(|&v| v as f32 / 255.0).collect();
                Frame::new(w, h, pixels, 8)
            }
            DecodingResult::U16(data) => {
                let pixels = data.iter().map(|&v| v as f32 / 65535.0).collect();
                Frame::new(w, h, pixels, 16)
            }
            _ => {
                return Err(Error::UnsupportedFormat {
                    path: path.to_path_buf(),
                    message: "only 8- and 16-bit grayscale TIFF pages are supported".into(),
                })
            }
        };
        if frame.pixels().len() != w * h {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                message: "page is not single-channel grayscale".into(),
            });
        }
        frames.push(frame);
        if !decoder.more_images() {
            break;
        }
        decoder.next_image().map_err(|e| Error::TiffDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    Ok(frames)
}

/// Raw stack layout: magic "RSTK", version u16, bit depth u16, width u32,
/// height u32, frame count u32, frame interval f64 (0 = unspecified), then
/// row-major little-endian samples per frame.
fn load_raw_frames(path: &Path) -> Result<(Vec<Frame>, Option<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; 4 + 2 + 2 + 4 + 4 + 4 + 8];
    reader
        .read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        message: message.into(),
    };
    if &header[0..4] != RAW_MAGIC {
        return Err(bad("bad raw-stack magic"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != RAW_VERSION {
        return Err(bad("unsupported raw-stack version"));
    }
    let bit_depth = u16::from_le_bytes([header[6], header[7]]);
    let width = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let n_frames = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    let interval = f64::from_le_bytes(header[20..28].try_into().unwrap());
    if !(bit_depth == 8 || bit_depth == 16) {
        return Err(bad("raw-stack bit depth must be 8 or 16"));
    }
    if width == 0 || height == 0 || n_frames == 0 {
        return Err(bad("raw-stack dimensions must be nonzero"));
    }

    let mut frames = Vec::with_capacity(n_frames);
    let px = width * height;
    for _ in 0..n_frames {
        let pixels = if bit_depth == 8 {
            let mut buf = vec![0u8; px];
            reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            buf.iter().map(|&v| v as f32 / 255.0).collect()
        } else {
            let mut buf = vec![0u8; px * 2];
            reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            buf.chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32 / 65535.0)
                .collect()
        };
        frames.push(Frame::new(width, height, pixels, bit_depth as u8));
    }
    Ok((frames, (interval > 0.0).then_some(interval)))
}

fn quantize(frame: &Frame, bit_depth: u8) -> Vec<u16> {
    let max = ((1u32 << bit_depth) - 1) as f32;
    frame
        .pixels()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16)
        .collect()
}

/// Atomically write `bytes` producing `path`.
fn write_atomic(path: &Path, write_fn: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp: PathBuf = {
        let mut os = path.as_os_str().to_owned();
        os.push(".tmp");
        PathBuf::from(os)
    };
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut writer = BufWriter::new(file);
    write_fn(&mut writer)?;
    writer.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(writer);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write a stack as multi-page grayscale TIFF, quantized to the given bit
/// depth (8 or 16).
pub fn save_stack_tiff(frames: &[Frame], bit_depth: u8, path: &Path) -> Result<()> {
    assert!(bit_depth == 8 || bit_depth == 16);
    write_atomic(path, |writer| {
        let mut encoder = TiffEncoder::new(writer).map_err(|e| Error::TiffEncode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for frame in frames {
            let q = quantize(frame, bit_depth);
            let encode_err = |e: tiff::TiffError| Error::TiffEncode {
                path: path.to_path_buf(),
                message: e.to_string(),
            };
            if bit_depth == 8 {
                let data: Vec<u8> = q.iter().map(|&v| v as u8).collect();
                encoder
                    .write_image::<colortype::Gray8>(
                        frame.width() as u32,
                        frame.height() as u32,
                        &data,
                    )
                    .map_err(encode_err)?;
            } else {
                encoder
                    .write_image::<colortype::Gray16>(
                        frame.width() as u32,
                        frame.height() as u32,
                        &q,
                    )
                    .map_err(encode_err)?;
            }
        }
        Ok(())
    })
}

/// Write a stack in the raw binary format; `interval_s` of 0 means
/// unspecified.
pub fn save_stack_raw(
    frames: &[Frame],
    bit_depth: u8,
    interval_s: f64,
    path: &Path,
) -> Result<()> {
    assert!(bit_depth == 8 || bit_depth == 16);
    assert!(!frames.is_empty());
    let (w, h) = (frames[0].width(), frames[0].height());
    write_atomic(path, |writer| {
        let io_err = |e: std::io::Error| Error::io(path, e);
        writer.write_all(RAW_MAGIC).map_err(io_err)?;
        writer.write_all(&RAW_VERSION.to_le_bytes()).map_err(io_err)?;
        writer
            .write_all(&(bit_depth as u16).to_le_bytes())
            .map_err(io_err)?;
        writer.write_all(&(w as u32).to_le_bytes()).map_err(io_err)?;
        writer.write_all(&(h as u32).to_le_bytes()).map_err(io_err)?;
        writer
            .write_all(&(frames.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        writer.write_all(&interval_s.to_le_bytes()).map_err(io_err)?;
        for frame in frames {
            let q = quantize(frame, bit_depth);
            if bit_depth == 8 {
                let bytes: Vec<u8> = q.iter().map(|&v| v as u8).collect();
                writer.write_all(&bytes).map_err(io_err)?;
            } else {
                let mut bytes = Vec::with_capacity(q.len() * 2);
                for v in q {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                writer.write_all(&bytes).map_err(io_err)?;
            }
        }
        Ok(())
    })
}

/// Format with 6 significant digits and a `.` decimal point.
pub fn format_sig(v: f64) -> String {
    const SIG: i32 = 6;
    if v == 0.0 || !v.is_finite() {
        return format!("{:.*}", (SIG - 1) as usize, if v == 0.0 { 0.0 } else { v });
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (SIG - 1 - magnitude).max(0) as usize;
    let formatted = format!("{v:.decimals$}");
    // Rounding can add a digit (0.99999951 -> "1.000000"); reformat once.
    let reparsed: f64 = formatted.parse().unwrap_or(v);
    if reparsed != 0.0 {
        let new_mag = reparsed.abs().log10().floor() as i32;
        if new_mag != magnitude {
            let decimals = (SIG - 1 - new_mag).max(0) as usize;
            return format!("{v:.decimals$}");
        }
    }
    formatted
}

/// Write the per-stack curve CSV:
/// `frame_index,role,time_s,i_roi,i_noi,ratio,excluded`.
pub fn write_curve_csv(curve: &IntensityCurve, path: &Path) -> Result<()> {
    if curve.points.is_empty() {
        return Err(Error::EmptyCurve);
    }
    write_atomic(path, |writer| {
        let io_err = |e: std::io::Error| Error::io(path, e);
        writer
            .write_all(b"frame_index,role,time_s,i_roi,i_noi,ratio,excluded\n")
            .map_err(io_err)?;
        for p in &curve.points {
            let opt = |v: Option<f64>| v.map(format_sig).unwrap_or_default();
            let line = format!(
                "{},{},{},{},{},{},{}\n",
                p.frame_index,
                p.role.as_str(),
                format_sig(p.time_s),
                opt(p.i_roi),
                opt(p.i_noi),
                opt(p.ratio),
                p.excluded
            );
            writer.write_all(line.as_bytes()).map_err(io_err)?;
        }
        Ok(())
    })
}

/// Write the aggregate CSV: `time_s,mean_ratio,stderr,n`.
pub fn write_aggregate_csv(agg: &AggregateCurve, path: &Path) -> Result<()> {
    if agg.points.is_empty() {
        return Err(Error::EmptyCurve);
    }
    write_atomic(path, |writer| {
        let io_err = |e: std::io::Error| Error::io(path, e);
        writer
            .write_all(b"time_s,mean_ratio,stderr,n\n")
            .map_err(io_err)?;
        for p in &agg.points {
            let line = format!(
                "{},{},{},{}\n",
                format_sig(p.time_s),
                format_sig(p.mean_ratio),
                format_sig(p.stderr),
                p.n
            );
            writer.write_all(line.as_bytes()).map_err(io_err)?;
        }
        Ok(())
    })
}

/// Transform CSV written when QC is enabled: `frame_index,dx,dy,theta_rad`;
/// unregistered frames leave the fields empty.
pub fn write_transforms_csv(
    transforms: &[Option<crate::registration::RigidTransform>],
    path: &Path,
) -> Result<()> {
    write_atomic(path, |writer| {
        let io_err = |e: std::io::Error| Error::io(path, e);
        writer
            .write_all(b"frame_index,dx,dy,theta_rad\n")
            .map_err(io_err)?;
        for (k, t) in transforms.iter().enumerate() {
            let line = match t {
                Some(t) => format!(
                    "{},{},{},{}\n",
                    k,
                    format_sig(t.dx),
                    format_sig(t.dy),
                    format_sig(t.theta)
                ),
                None => format!("{k},,,\n"),
            };
            writer.write_all(line.as_bytes()).map_err(io_err)?;
        }
        Ok(())
    })
}

fn to_gray8(frame: &Frame) -> image::GrayImage {
    let peak = frame.pixels().iter().copied().fold(0.0f32, f32::max);
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    image::GrayImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let v = (frame.get(x as usize, y as usize) * scale).round().clamp(0.0, 255.0);
        image::Luma([v as u8])
    })
}

fn draw_line(img: &mut image::RgbImage, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
    let steps = (a.0 - b.0).abs().max((a.1 - b.1).abs()).ceil() as usize + 1;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (a.0 + t * (b.0 - a.0)).round() as i64;
        let y = (a.1 + t * (b.1 - a.1)).round() as i64;
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, image::Rgb(color));
        }
    }
}

/// QC overlay: the avg-t projection with the nucleus contour (red) and the
/// detected ROI (green) as 1-px outlines.
pub fn write_overlay_png(
    avg_t: &Frame,
    contour_px: &[f64],
    centroid: (f64, f64),
    roi: &Roi,
    path: &Path,
) -> Result<()> {
    let gray = to_gray8(avg_t);
    let mut rgb = image::RgbImage::from_fn(gray.width(), gray.height(), |x, y| {
        let v = gray.get_pixel(x, y).0[0];
        image::Rgb([v, v, v])
    });

    let n = contour_px.len();
    let vertex = |i: usize| {
        let theta = 2.0 * std::f64::consts::PI * (i % n) as f64 / n as f64;
        (
            centroid.0 + contour_px[i % n] * theta.cos(),
            centroid.1 + contour_px[i % n] * theta.sin(),
        )
    };
    for i in 0..n {
        draw_line(&mut rgb, vertex(i), vertex(i + 1), [220, 40, 40]);
    }

    let green = [40, 220, 40];
    let (x0, y0) = (roi.x as f64, roi.y as f64);
    let (x1, y1) = ((roi.x + roi.width - 1) as f64, (roi.y + roi.height - 1) as f64);
    draw_line(&mut rgb, (x0, y0), (x1, y0), green);
    draw_line(&mut rgb, (x1, y0), (x1, y1), green);
    draw_line(&mut rgb, (x1, y1), (x0, y1), green);
    draw_line(&mut rgb, (x0, y1), (x0, y0), green);

    rgb.save(path).map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Grayscale PNG of a frame, contrast-stretched to its peak (QC export).
pub fn write_frame_png(frame: &Frame, path: &Path) -> Result<()> {
    to_gray8(frame).save(path).map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Binary mask as a black-and-white PNG (QC export).
pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let img = image::GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        image::Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
