//! Raster primitives: frame buffers, grayscale conversion, bilinear
//! warping under a rigid transform, integral images and box means.
//!
//! All pixel math runs in 64-bit floats; samples stay within `[0, 255]`
//! and are only quantized to 8 bits at file export. Every operation here
//! is a pure function of its inputs, and the value types are immutable
//! after construction.

use crate::motion::RigidTransform;
use std::path::Path;
use thiserror::Error;

pub mod io;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid frame geometry: {0}")]
    InvalidGeometry(String),
    #[error("sample out of range at index {index}: {value}")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("channel counts differ: {0} vs {1}")]
    ChannelMismatch(u8, u8),
    #[error("box region is degenerate (fully off-image or empty)")]
    DegenerateRegion,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: std::path::PathBuf, message: String },
}

impl ImagingError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), message: message.into() }
    }
}

/// A raster image with 1 or 3 channels and row-major interleaved samples
/// in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<f64>,
    /// Ordinal position in the source video; 0 for standalone images.
    pub index: usize,
}

impl Frame {
    pub fn new(
        width: u32,
        height: u32,
        channels: u8,
        data: Vec<f64>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidGeometry(format!("{width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(ImagingError::InvalidGeometry(format!("{channels} channels")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImagingError::InvalidGeometry(format!(
                "data length {} != {expected}",
                data.len()
            )));
        }
        if let Some((index, &value)) =
            data.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 255.0)
        {
            return Err(ImagingError::SampleOutOfRange { index, value });
        }
        Ok(Self { width, height, channels, data, index: 0 })
    }

    /// Builds a frame by evaluating `f(x, y, channel)`; results are clamped
    /// to `[0, 255]` (non-finite values become 0).
    pub fn from_fn(width: u32, height: u32, channels: u8, mut f: impl FnMut(u32, u32, u8) -> f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_sample(f(x, y, c)));
                }
            }
        }
        Self { width, height, channels, data, index: 0 }
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: f64) -> Self {
        Self::from_fn(width, height, channels, |_, _, _| value)
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32, channel: u8) -> f64 {
        debug_assert!(x < self.width && y < self.height && channel < self.channels);
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize
            + channel as usize]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// Single-channel raster, the detector input.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self, ImagingError> {
        let frame = Frame::new(width, height, 1, data)?;
        Ok(Self { width, height, data: frame.data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let frame = Frame::from_fn(width, height, 1, |x, y, _| f(x, y));
        Self { width, height, data: frame.data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn to_frame(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.clone(),
            index: 0,
        }
    }
}

pub(crate) fn clamp_sample(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(0.0, 255.0)
    } else {
        0.0
    }
}

pub(crate) fn frame_from_parts(
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<f64>,
    index: usize,
) -> Frame {
    debug_assert_eq!(data.len(), width as usize * height as usize * channels as usize);
    Frame { width, height, channels, data, index }
}

/// ITU-R BT.601 luma conversion; single-channel input is copied as-is.
pub fn to_grayscale(frame: &Frame) -> GrayFrame {
    match frame.channels {
        1 => GrayFrame { width: frame.width, height: frame.height, data: frame.data.clone() },
        _ => {
            let mut data = Vec::with_capacity(frame.width as usize * frame.height as usize);
            for px in frame.data.chunks_exact(3) {
                data.push(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]);
            }
            GrayFrame { width: frame.width, height: frame.height, data }
        }
    }
}

/// Bilinear sample with zero fill outside the pixel grid.
fn sample_zero_fill(frame: &Frame, channel: u8, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let x0 = x0 as i64;
    let y0 = y0 as i64;
    let mut acc = 0.0;
    for (dx, dy, w) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if w == 0.0 {
            continue;
        }
        let (x, y) = (x0 + dx, y0 + dy);
        if x >= 0 && y >= 0 && (x as u32) < frame.width && (y as u32) < frame.height {
            acc += w * frame.get(x as u32, y as u32, channel);
        }
    }
    acc
}

/// Warps a frame under a rigid transform via inverse mapping with bilinear
/// interpolation. Output pixel `(x, y)` samples the input at
/// `t^-1 (x, y)`; samples falling outside the input yield 0, which
/// reproduces the black borders characteristic of stabilized frames.
pub fn warp_rigid(frame: &Frame, t: &RigidTransform) -> Frame {
    if t.is_identity() {
        return frame.clone();
    }
    let inv = t.invert();
    let mut out = Frame {
        width: frame.width,
        height: frame.height,
        channels: frame.channels,
        data: vec![0.0; frame.data.len()],
        index: frame.index,
    };
    let mut i = 0;
    for y in 0..frame.height {
        for x in 0..frame.width {
            let (sx, sy) = inv.apply((x as f64, y as f64));
            for c in 0..frame.channels {
                out.data[i] = sample_zero_fill(frame, c, sx, sy);
                i += 1;
            }
        }
    }
    out
}

/// Bilinear resize with edge clamping (no black borders).
pub fn resize_bilinear(frame: &Frame, new_width: u32, new_height: u32) -> Frame {
    if new_width == frame.width && new_height == frame.height {
        return frame.clone();
    }
    let sx_scale = frame.width as f64 / new_width as f64;
    let sy_scale = frame.height as f64 / new_height as f64;
    let max_x = (frame.width - 1) as f64;
    let max_y = (frame.height - 1) as f64;
    let mut out = Frame {
        width: new_width,
        height: new_height,
        channels: frame.channels,
        data: vec![0.0; new_width as usize * new_height as usize * frame.channels as usize],
        index: frame.index,
    };
    let mut i = 0;
    for y in 0..new_height {
        let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, max_y);
        for x in 0..new_width {
            let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, max_x);
            let x0 = sx.floor().min(max_x - 1.0).max(0.0);
            let y0 = sy.floor().min(max_y - 1.0).max(0.0);
            let fx = (sx - x0).clamp(0.0, 1.0);
            let fy = (sy - y0).clamp(0.0, 1.0);
            let (x0, y0) = (x0 as u32, y0 as u32);
            let x1 = (x0 + 1).min(frame.width - 1);
            let y1 = (y0 + 1).min(frame.height - 1);
            for c in 0..frame.channels {
                let v = (1.0 - fx) * (1.0 - fy) * frame.get(x0, y0, c)
                    + fx * (1.0 - fy) * frame.get(x1, y0, c)
                    + (1.0 - fx) * fy * frame.get(x0, y1, c)
                    + fx * fy * frame.get(x1, y1, c);
                out.data[i] = clamp_sample(v);
                i += 1;
            }
        }
    }
    out
}

/// Summed-area table: entry `(x, y)` holds the exact sum of all gray
/// samples in the rectangle `[0, x) x [0, y)`; row 0 and column 0 are zero.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    /// (width + 1) x (height + 1), row-major.
    table: Vec<f64>,
}

pub fn integral(gray: &GrayFrame) -> IntegralImage {
    let (w, h) = (gray.width as usize, gray.height as usize);
    let stride = w + 1;
    let mut table = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0.0;
        for x in 0..w {
            row_sum += gray.data[y * w + x];
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
        }
    }
    IntegralImage { width: gray.width, height: gray.height, table }
}

impl IntegralImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Cumulative sum over `[0, x) x [0, y)`.
    pub fn at(&self, x: u32, y: u32) -> f64 {
        debug_assert!(x <= self.width && y <= self.height);
        self.table[y as usize * (self.width as usize + 1) + x as usize]
    }

    /// Sum over the inclusive pixel rectangle `[x0, x1] x [y0, y1]`
    /// (4 table lookups).
    pub fn rect_sum(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> f64 {
        debug_assert!(x0 <= x1 && y0 <= y1 && x1 < self.width && y1 < self.height);
        self.at(x1 + 1, y1 + 1) - self.at(x0, y1 + 1) - self.at(x1 + 1, y0) + self.at(x0, y0)
    }
}

/// Mean intensity over the axis-aligned square of side `2 * radius`
/// centered at `center`, clipped to the image. A pixel belongs to the
/// square when its integer center lies inside `[c - r, c + r]`.
pub fn box_mean(
    ii: &IntegralImage,
    center: (f64, f64),
    radius: f64,
) -> Result<f64, ImagingError> {
    let (cx, cy) = center;
    let x0 = (cx - radius).ceil();
    let x1 = (cx + radius).floor();
    let y0 = (cy - radius).ceil();
    let y1 = (cy + radius).floor();
    let x0 = x0.max(0.0);
    let y0 = y0.max(0.0);
    let x1 = x1.min(ii.width as f64 - 1.0);
    let y1 = y1.min(ii.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return Err(ImagingError::DegenerateRegion);
    }
    let (x0, y0, x1, y1) = (x0 as u32, y0 as u32, x1 as u32, y1 as u32);
    let count = (x1 - x0 + 1) as f64 * (y1 - y0 + 1) as f64;
    Ok(ii.rect_sum(x0, y0, x1, y1) / count)
}

/// Per-sample alpha blend `alpha * p1 + (1 - alpha) * p2`, clamped to
/// `[0, 255]`. For `alpha` outside `[0, 1]` this extrapolates before
/// clamping.
pub fn alpha_blend(p1: &Frame, p2: &Frame, alpha: f64) -> Result<Frame, ImagingError> {
    if p1.width != p2.width || p1.height != p2.height {
        return Err(ImagingError::DimensionMismatch(p1.width, p1.height, p2.width, p2.height));
    }
    if p1.channels != p2.channels {
        return Err(ImagingError::ChannelMismatch(p1.channels, p2.channels));
    }
    if alpha == 1.0 {
        return Ok(p1.clone());
    }
    let data = p1
        .data
        .iter()
        .zip(&p2.data)
        .map(|(&a, &b)| clamp_sample(alpha * a + (1.0 - alpha) * b))
        .collect();
    Ok(Frame { width: p1.width, height: p1.height, channels: p1.channels, data, index: p1.index })
}

/// Peak signal-to-noise ratio in dB over the interior of two same-shape
/// frames, ignoring a `margin`-pixel border. Returns infinity for
/// identical interiors.
pub fn psnr_interior(a: &Frame, b: &Frame, margin: u32) -> Result<f64, ImagingError> {
    if !a.same_shape(b) {
        return Err(ImagingError::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    if a.width <= 2 * margin || a.height <= 2 * margin {
        return Err(ImagingError::DegenerateRegion);
    }
    let mut se = 0.0;
    let mut n = 0usize;
    for y in margin..a.height - margin {
        for x in margin..a.width - margin {
            for c in 0..a.channels {
                let d = a.get(x, y, c) - b.get(x, y, c);
                se += d * d;
                n += 1;
            }
        }
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}
