//! Frame loading, intensity planes, area resampling and the patch grid.
//!
//! Intensities are stored row-major as `f64` in `[0, 1]`. Patch `i` sits at
//! grid row `i / grid_w` and column `i % grid_w`; edge patches are kept even
//! when they are only partially covered by pixels.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A row-major grayscale intensity plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "expected {} intensities for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width) {
            data.extend(row.iter().rev());
        }
        Self {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Quantizes to 8 bits (`round(255 v)`), clamping to `[0, 1]` first.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// A grayscale frame with its identity inside a scan sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct UltrasoundFrame {
    pub id: String,
    pub sequence_id: String,
    pub frame_index: u64,
    pub pixels: ImagePlane,
}

impl UltrasoundFrame {
    pub fn new(
        id: impl Into<String>,
        sequence_id: impl Into<String>,
        frame_index: u64,
        pixels: ImagePlane,
    ) -> Result<Self> {
        if let Some(bad) = pixels
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            id: id.into(),
            sequence_id: sequence_id.into(),
            frame_index,
            pixels,
        })
    }

    /// Convenience for tests and synthetic data: a frame alone in its own sequence.
    pub fn standalone(id: impl Into<String>, pixels: ImagePlane) -> Result<Self> {
        let id = id.into();
        Self::new(id.clone(), id, 0, pixels)
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }
}

/// Loads a PNG or binary PGM and normalizes it to `[0, 1]`.
///
/// RGB(A) inputs are reduced to luma with [`LUMA_WEIGHTS`]; alpha is ignored.
pub fn load_frame(
    path: impl AsRef<Path>,
    id: &str,
    sequence_id: &str,
    frame_index: u64,
) -> Result<UltrasoundFrame> {
    let path = path.as_ref();
    let plane = load_plane(path)?;
    UltrasoundFrame::new(id, sequence_id, frame_index, plane)
}

pub fn load_plane(path: &Path) -> Result<ImagePlane> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let image = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    plane_from_dynamic(&image).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn plane_from_dynamic(image: &DynamicImage) -> Result<ImagePlane> {
    let (width, height) = (image.width() as usize, image.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "zero-dimension image {height}x{width}"
        )));
    }
    let data: Vec<f64> = match image {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf
            .as_raw()
            .chunks_exact(2)
            .map(|p| p[0] as f64 / 255.0)
            .collect(),
        DynamicImage::ImageRgb8(buf) => buf.as_raw().chunks_exact(3).map(luma).collect(),
        DynamicImage::ImageRgba8(buf) => buf.as_raw().chunks_exact(4).map(luma).collect(),
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported pixel format {:?}; expected 8-bit gray or RGB",
                other.color()
            )))
        }
    };
    ImagePlane::new(height, width, data)
}

fn luma(px: &[u8]) -> f64 {
    let y = LUMA_WEIGHTS[0] * px[0] as f64
        + LUMA_WEIGHTS[1] * px[1] as f64
        + LUMA_WEIGHTS[2] * px[2] as f64;
    (y / 255.0).clamp(0.0, 1.0)
}

/// Output of [`resize_area`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resized {
    pub plane: ImagePlane,
    /// Set when the target was larger than the source in either axis and
    /// nearest-neighbor sampling was used instead of box averaging.
    pub upsampled: bool,
}

/// Box-filter (area-averaging) resize.
///
/// Each output cell is the overlap-weighted mean of the source pixels it
/// covers, so fractional scale factors are handled exactly. Requests that
/// enlarge either axis fall back to nearest-neighbor and are flagged.
pub fn resize_area(plane: &ImagePlane, out_h: usize, out_w: usize) -> Result<Resized> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidInput(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    let (in_h, in_w) = (plane.height(), plane.width());
    if out_h > in_h || out_w > in_w {
        let plane = ImagePlane::from_fn(out_h, out_w, |y, x| {
            let sy = ((y as f64 + 0.5) * in_h as f64 / out_h as f64) as usize;
            let sx = ((x as f64 + 0.5) * in_w as f64 / out_w as f64) as usize;
            plane.get(sy.min(in_h - 1), sx.min(in_w - 1))
        })?;
        return Ok(Resized {
            plane,
            upsampled: true,
        });
    }

    let row_weights = box_weights(in_h, out_h);
    let col_weights = box_weights(in_w, out_w);

    // Rows first: out_h x in_w intermediate.
    let mut tmp = vec![0.0; out_h * in_w];
    for (oy, taps) in row_weights.iter().enumerate() {
        let dst = &mut tmp[oy * in_w..(oy + 1) * in_w];
        for &(sy, w) in taps {
            let src = &plane.data()[sy * in_w..(sy + 1) * in_w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let row = &tmp[oy * in_w..(oy + 1) * in_w];
        for taps in &col_weights {
            let v: f64 = taps.iter().map(|&(sx, w)| w * row[sx]).sum();
            out.push(v.clamp(0.0, 1.0));
        }
    }
    Ok(Resized {
        plane: ImagePlane::new(out_h, out_w, out)?,
        upsampled: false,
    })
}

/// Per output index, the source indices it overlaps and their normalized weights.
fn box_weights(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            if input.is_multiple_of(output) {
                let k = input / output;
                return (o * k..(o + 1) * k).map(|i| (i, 1.0 / k as f64)).collect();
            }
            let start = o as f64 * scale;
            let end = (o + 1) as f64 * scale;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(input);
            (first..last)
                .filter_map(|i| {
                    let overlap = (end.min((i + 1) as f64) - start.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Pixel bounds of one patch, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl PatchRect {
    pub fn pixel_count(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }
}

/// Decomposition of an `height x width` image into `patch_size` squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub height: usize,
    pub width: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::InvalidInput("patch_size must be at least 1".into()));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(Self {
            patch_size,
            height,
            width,
            grid_h: height.div_ceil(patch_size),
            grid_w: width.div_ceil(patch_size),
        })
    }

    /// Total patch count `N`.
    pub fn len(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, column)` of patch `index`.
    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.grid_w, index % self.grid_w)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.grid_w + col
    }

    pub fn rect(&self, index: usize) -> PatchRect {
        let (m, n) = self.coords(index);
        let p = self.patch_size;
        PatchRect {
            y0: m * p,
            y1: ((m + 1) * p).min(self.height),
            x0: n * p,
            x1: ((n + 1) * p).min(self.width),
        }
    }

    /// `|P_i|`, the number of pixels in patch `index`.
    pub fn pixel_count(&self, index: usize) -> usize {
        self.rect(index).pixel_count()
    }

    /// Patch containing pixel `(y, x)`.
    #[inline]
    pub fn patch_of(&self, y: usize, x: usize) -> usize {
        self.index(y / self.patch_size, x / self.patch_size)
    }

    /// Intensities of one patch, row-major within the patch.
    pub fn patch_pixels(&self, plane: &ImagePlane, index: usize) -> Vec<f64> {
        let r = self.rect(index);
        let mut out = Vec::with_capacity(r.pixel_count());
        for y in r.y0..r.y1 {
            out.extend_from_slice(&plane.data()[y * plane.width() + r.x0..y * plane.width() + r.x1]);
        }
        out
    }
}

/// Patch grid for `frame`.
pub fn patchify(frame: &UltrasoundFrame, patch_size: usize) -> Result<PatchGrid> {
    PatchGrid::new(frame.height(), frame.width(), patch_size)
}
