//! Acoustic sector extraction.
//!
//! [`detect_roi`] finds the fan-shaped imaging region of a frame, which is
//! then summarized per patch by [`patch_coverage`] and reduced to the polar
//! landmarks used by the masking prior by [`polar_landmarks`].

pub mod components;
mod coverage;
mod landmarks;
pub mod morphology;

use std::path::Path;

use image::{GrayImage, ImageEncoder};

use crate::error::{Error, Result};
use crate::imaging::{load_plane, UltrasoundFrame};

pub use coverage::{patch_coverage, CoverageGrid};
pub use landmarks::{polar_landmarks, CenterlineMode, PolarGeometry, H_MIN};

pub const DEFAULT_BG_THRESHOLD: f64 = 10.0 / 255.0;
pub const DEFAULT_CLOSE_RADIUS: usize = 5;

/// Pixel-level sector membership `M(u)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    height: usize,
    width: usize,
    mask: Vec<bool>,
    pixel_count: usize,
}

impl RoiMask {
    pub fn from_bits(height: usize, width: usize, mask: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || mask.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "mask of {} values does not fit {height}x{width}",
                mask.len()
            )));
        }
        let pixel_count = mask.iter().filter(|&&b| b).count();
        Ok(Self {
            height,
            width,
            mask,
            pixel_count,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count == 0
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut mask = Vec::with_capacity(self.mask.len());
        for row in self.mask.chunks(self.width) {
            mask.extend(row.iter().rev());
        }
        Self { mask, ..*self }
    }

    /// Intersection over union; two empty masks count as identical.
    pub fn iou(&self, other: &RoiMask) -> f64 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.mask.iter().zip(&other.mask) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Binary PGM (P5), 0 outside and 255 inside.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let encoder = image::codecs::pnm::PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(
                image::codecs::pnm::SampleEncoding::Binary,
            ));
        encoder
            .write_image(
                &bytes,
                self.width as u32,
                self.height as u32,
                image::ExtendedColorType::L8,
            )
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    /// Reads a grayscale mask image; any nonzero pixel is inside.
    pub fn read_image(path: &Path) -> Result<Self> {
        let plane = load_plane(path)?;
        let mask = plane.data().iter().map(|&v| v > 0.0).collect();
        Self::from_bits(plane.height(), plane.width(), mask)
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([if self.contains(y as usize, x as usize) { 255 } else { 0 }])
        })
    }
}

/// Thresholds, closes with a disc, keeps the largest 4-connected component
/// and fills its holes.
///
/// Fails with [`Error::EmptyRoi`] when no pixel exceeds `bg_threshold`.
pub fn detect_roi(frame: &UltrasoundFrame, bg_threshold: f64, close_radius: usize) -> Result<RoiMask> {
    if !(bg_threshold > 0.0 && bg_threshold < 1.0) {
        return Err(Error::InvalidInput(format!(
            "bg_threshold must lie in (0, 1), got {bg_threshold}"
        )));
    }
    let (h, w) = (frame.height(), frame.width());
    let fg: Vec<bool> = frame.pixels.data().iter().map(|&v| v > bg_threshold).collect();
    if !fg.iter().any(|&b| b) {
        return Err(Error::EmptyRoi);
    }
    let closed = morphology::close(&fg, h, w, close_radius);
    let largest = components::largest_component(&closed, h, w).ok_or(Error::EmptyRoi)?;
    let filled = components::fill_holes(&largest, h, w);
    RoiMask::from_bits(h, w, filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ImagePlane;
    use crate::synth::{FanGeometry, FanRenderer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(plane: ImagePlane) -> UltrasoundFrame {
        UltrasoundFrame::standalone("f", plane).unwrap()
    }

    #[test]
    fn black_frame_has_no_roi() {
        let f = frame(ImagePlane::filled(20, 20, 0.0).unwrap());
        assert!(matches!(detect_roi(&f, DEFAULT_BG_THRESHOLD, 5), Err(Error::EmptyRoi)));
    }

    #[test]
    fn bright_frame_is_all_roi() {
        let f = frame(ImagePlane::filled(17, 23, 0.8).unwrap());
        let m = detect_roi(&f, DEFAULT_BG_THRESHOLD, 5).unwrap();
        assert_eq!(m.pixel_count(), 17 * 23);
    }

    #[test]
    fn bad_threshold_rejected() {
        let f = frame(ImagePlane::filled(4, 4, 0.8).unwrap());
        assert!(detect_roi(&f, 0.0, 1).is_err());
        assert!(detect_roi(&f, 1.0, 1).is_err());
    }

    #[test]
    fn keeps_largest_blob_and_fills_it() {
        let plane = ImagePlane::from_fn(40, 40, |y, x| {
            let big = (5..30).contains(&y) && (5..30).contains(&x) && !((15..18).contains(&y) && (15..18).contains(&x));
            let small = (34..37).contains(&y) && (34..37).contains(&x);
            if big || small { 0.6 } else { 0.0 }
        })
        .unwrap();
        let m = detect_roi(&frame(plane), DEFAULT_BG_THRESHOLD, 1).unwrap();
        assert_eq!(m.pixel_count(), 25 * 25);
        assert!(components::is_solid_region(m.bits(), 40, 40));
    }

    #[test]
    fn recovers_analytic_fan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let geom = FanGeometry {
            apex_y: 8.0,
            apex_x: 100.0,
            opening_deg: 70.0,
            radius: 170.0,
            inner_radius: 0.0,
        };
        let renderer = FanRenderer::default();
        let (plane, truth) = renderer.render(192, 200, &geom, &mut rng);
        let m = detect_roi(&frame(plane), DEFAULT_BG_THRESHOLD, DEFAULT_CLOSE_RADIUS).unwrap();
        let truth = RoiMask::from_bits(192, 200, truth).unwrap();
        assert!(m.iou(&truth) >= 0.95, "iou {}", m.iou(&truth));
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let m = RoiMask::from_bits(2, 3, vec![true, false, true, false, true, true]).unwrap();
        m.write_pgm(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(&bytes[bytes.len() - 6..], &[255, 0, 255, 0, 255, 255]);
        assert_eq!(RoiMask::read_image(&path).unwrap(), m);
    }

    #[test]
    fn mirror_flips_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = FanGeometry {
            apex_y: 4.0,
            apex_x: 40.0,
            opening_deg: 60.0,
            radius: 70.0,
            inner_radius: 0.0,
        };
        let (plane, _) = FanRenderer::default().render(80, 96, &geom, &mut rng);
        let a = detect_roi(&frame(plane.clone()), DEFAULT_BG_THRESHOLD, 3).unwrap();
        let b = detect_roi(&frame(plane.flip_horizontal()), DEFAULT_BG_THRESHOLD, 3).unwrap();
        assert_eq!(a.flip_horizontal(), b);
    }
}
