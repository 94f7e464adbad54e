use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imaging::{PatchGrid, UltrasoundFrame};

/// Unsigned orientation bins over `[0, 180)` degrees.
pub const HOG_BINS: usize = 9;

/// Per-patch texture strength in `[0, 1]`.
///
/// Gradients are central differences `I(x+1) - I(x-1)` with replicated
/// borders. Each patch accumulates a magnitude-weighted histogram of
/// unsigned orientations (hard binning); its score is the histogram's L2
/// norm, divided by the largest score in the frame.
pub fn hog_scores(frame: &UltrasoundFrame, grid: &PatchGrid) -> Result<Vec<f64>> {
    let plane = &frame.pixels;
    let (h, w) = (plane.height(), plane.width());
    if (grid.height, grid.width) != (h, w) {
        return Err(Error::InvalidInput(format!(
            "grid covers {}x{} but frame is {h}x{w}",
            grid.height, grid.width
        )));
    }
    let bin_width = PI / HOG_BINS as f64;
    let mut hist = vec![[0.0f64; HOG_BINS]; grid.len()];
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = plane.get(y, right) - plane.get(y, left);
            let gy = plane.get(down, x) - plane.get(up, x);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += PI;
            }
            if angle >= PI {
                angle -= PI;
            }
            let bin = ((angle / bin_width) as usize).min(HOG_BINS - 1);
            hist[grid.patch_of(y, x)][bin] += mag;
        }
    }
    let scores: Vec<f64> = hist
        .iter()
        .map(|hb| hb.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(vec![0.0; scores.len()]);
    }
    Ok(scores.into_iter().map(|s| s / max).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ImagePlane;

    fn frame(plane: ImagePlane) -> UltrasoundFrame {
        UltrasoundFrame::standalone("f", plane).unwrap()
    }

    /// Straightforward per-patch histogram with explicit degree arithmetic.
    fn oracle_scores(plane: &ImagePlane, p: usize) -> Vec<f64> {
        let (h, w) = (plane.height() as isize, plane.width() as isize);
        let at = |y: isize, x: isize| plane.get(y.clamp(0, h - 1) as usize, x.clamp(0, w - 1) as usize);
        let grid = PatchGrid::new(h as usize, w as usize, p).unwrap();
        let mut raw = Vec::new();
        for i in 0..grid.len() {
            let r = grid.rect(i);
            let mut bins = [0.0; 9];
            for y in r.y0 as isize..r.y1 as isize {
                for x in r.x0 as isize..r.x1 as isize {
                    let gx = at(y, x + 1) - at(y, x - 1);
                    let gy = at(y + 1, x) - at(y - 1, x);
                    let mag = (gx * gx + gy * gy).sqrt();
                    if mag > 0.0 {
                        let deg = gy.atan2(gx).to_degrees().rem_euclid(180.0);
                        bins[((deg / 20.0).floor() as usize).min(8)] += mag;
                    }
                }
            }
            raw.push(bins.iter().map(|b| b * b).sum::<f64>().sqrt());
        }
        let max = raw.iter().copied().fold(0.0, f64::max);
        raw.iter().map(|s| if max > 0.0 { s / max } else { 0.0 }).collect()
    }

    #[test]
    fn constant_image_scores_zero() {
        let f = frame(ImagePlane::filled(32, 48, 0.7).unwrap());
        let g = PatchGrid::new(32, 48, 16).unwrap();
        assert_eq!(hog_scores(&f, &g).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn single_textured_patch_scores_one() {
        // texture kept two pixels away from the patch border so neighbours see no gradient
        let plane = ImagePlane::from_fn(48, 48, |y, x| {
            let inner = (18..30).contains(&y) && (18..30).contains(&x);
            if inner {
                0.5 + 0.4 * (((x * 7 + y * 3) % 5) as f64 / 4.0 - 0.5)
            } else {
                0.5
            }
        })
        .unwrap();
        let g = PatchGrid::new(48, 48, 16).unwrap();
        let s = hog_scores(&frame(plane), &g).unwrap();
        for (i, v) in s.iter().enumerate() {
            assert_eq!(*v, if i == 4 { 1.0 } else { 0.0 }, "patch {i}");
        }
    }

    #[test]
    fn vertical_step_across_patch_boundary_is_shared_equally() {
        let plane = ImagePlane::from_fn(16, 32, |_, x| if x < 16 { 0.2 } else { 0.8 }).unwrap();
        let g = PatchGrid::new(16, 32, 16).unwrap();
        let s = hog_scores(&frame(plane.clone()), &g).unwrap();
        assert!((s[0] - s[1]).abs() < 1e-9);
        assert_eq!(s[0], 1.0);
        let oracle = oracle_scores(&plane, 16);
        assert!((oracle[0] - oracle[1]).abs() < 1e-9);
    }

    #[test]
    fn agrees_with_oracle_on_rich_texture() {
        let plane = ImagePlane::from_fn(37, 45, |y, x| {
            let v = ((x as f64 * 0.37).sin() * (y as f64 * 0.23).cos() + 1.0) / 2.0;
            (v * 0.9 + ((x * y) % 7) as f64 * 0.01).clamp(0.0, 1.0)
        })
        .unwrap();
        let f = frame(plane.clone());
        for p in [5, 8, 16] {
            let g = PatchGrid::new(37, 45, p).unwrap();
            let fast = hog_scores(&f, &g).unwrap();
            let slow = oracle_scores(&plane, p);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
