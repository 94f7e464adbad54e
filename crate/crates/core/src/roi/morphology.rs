//! Binary morphology with a disc structuring element.
//!
//! Each disc row is a horizontal run, so dilation and erosion reduce to
//! window counts over per-row prefix sums: `O(H W (2r + 1))`.

/// Half-width of the disc of radius `r` at vertical offset `dy`.
fn disc_runs(radius: usize) -> Vec<(isize, usize)> {
    let r = radius as isize;
    (-r..=r)
        .map(|dy| {
            let w = ((radius * radius) as f64 - (dy * dy) as f64).sqrt().floor() as usize;
            (dy, w)
        })
        .collect()
}

fn row_prefix(mask: &[bool], height: usize, width: usize) -> Vec<u32> {
    let mut prefix = vec![0u32; height * (width + 1)];
    for y in 0..height {
        let row = &mask[y * width..(y + 1) * width];
        let dst = &mut prefix[y * (width + 1)..(y + 1) * (width + 1)];
        for x in 0..width {
            dst[x + 1] = dst[x] + row[x] as u32;
        }
    }
    prefix
}

/// Pixels outside the image count as background.
pub fn dilate(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let prefix = row_prefix(mask, height, width);
    let runs = disc_runs(radius);
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = runs.iter().any(|&(dy, w)| {
                let sy = y as isize + dy;
                if sy < 0 || sy >= height as isize {
                    return false;
                }
                let p = &prefix[sy as usize * (width + 1)..];
                let lo = x.saturating_sub(w);
                let hi = (x + w + 1).min(width);
                p[hi] > p[lo]
            });
        }
    }
    out
}

/// Pixels outside the image count as foreground, so erosion never eats in
/// from the frame border.
pub fn erode(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let prefix = row_prefix(mask, height, width);
    let runs = disc_runs(radius);
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = runs.iter().all(|&(dy, w)| {
                let sy = y as isize + dy;
                if sy < 0 || sy >= height as isize {
                    return true;
                }
                let p = &prefix[sy as usize * (width + 1)..];
                let lo = x.saturating_sub(w);
                let hi = (x + w + 1).min(width);
                (p[hi] - p[lo]) as usize == hi - lo
            });
        }
    }
    out
}

/// Dilation followed by erosion. Never removes a foreground pixel.
pub fn close(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    let dilated = dilate(mask, height, width, radius);
    erode(&dilated, height, width, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(mask: &[bool], h: usize, w: usize, r: usize, dilation: bool) -> Vec<bool> {
        let r2 = (r * r) as isize;
        let ri = r as isize;
        let mut out = vec![false; mask.len()];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut any = false;
                let mut all = true;
                for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        if dy * dy + dx * dx > r2 {
                            continue;
                        }
                        let (sy, sx) = (y + dy, x + dx);
                        let inside = sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize;
                        let v = if inside {
                            mask[(sy as usize) * w + sx as usize]
                        } else {
                            !dilation
                        };
                        any |= v;
                        all &= v;
                    }
                }
                out[y as usize * w + x as usize] = if dilation { any } else { all };
            }
        }
        out
    }

    #[test]
    fn closing_bridges_small_gap() {
        let (h, w) = (5, 11);
        let mut m = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                m[y * w + x] = x != 5;
            }
        }
        let c = close(&m, h, w, 1);
        assert!(c.iter().all(|&v| v));
    }

    proptest! {
        #[test]
        fn matches_naive_disc(h in 1usize..14, w in 1usize..14, r in 0usize..4,
                              bits in prop::collection::vec(any::<bool>(), 196)) {
            let m = &bits[..h * w];
            prop_assert_eq!(dilate(m, h, w, r), naive(m, h, w, r, true));
            prop_assert_eq!(erode(m, h, w, r), naive(m, h, w, r, false));
            let c = close(m, h, w, r);
            prop_assert!(m.iter().zip(&c).all(|(a, b)| !a || *b));
        }
    }
}
