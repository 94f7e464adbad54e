use std::path::Path;

use image::GrayImage;

use crate::error::{Error, Result};

/// 8-bit pixels `round(255 v_i / max_j v_j)`; all zeros when the maximum is
/// not positive. Negative values clamp to 0.
pub fn heatmap_pixels(values: &[f64]) -> Result<Vec<u8>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("heatmap values must be finite".into()));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(vec![0; values.len()]);
    }
    Ok(values
        .iter()
        .map(|&v| (255.0 * v.max(0.0) / max).round() as u8)
        .collect())
}

/// One pixel per patch, row-major.
pub fn heatmap_image(values: &[f64], grid_h: usize, grid_w: usize) -> Result<GrayImage> {
    if values.len() != grid_h * grid_w {
        return Err(Error::InvalidInput(format!(
            "{} values for a {grid_h}x{grid_w} grid",
            values.len()
        )));
    }
    let pixels = heatmap_pixels(values)?;
    GrayImage::from_raw(grid_w as u32, grid_h as u32, pixels)
        .ok_or_else(|| Error::InvalidInput("heatmap dimensions overflow".into()))
}

/// Writes the heatmap as a grayscale PNG.
pub fn emit_heatmap(values: &[f64], grid_h: usize, grid_w: usize, path: &Path) -> Result<()> {
    let img = heatmap_image(values, grid_h, grid_w)?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other}", path.display())),
    })
}
