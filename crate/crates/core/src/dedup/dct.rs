//! Orthonormal 2-D DCT-II, separable, restricted to the low-frequency corner.

use std::f64::consts::PI;

use crate::imaging::ImagePlane;

/// Rows of the orthonormal DCT-II matrix for a length-`n` signal, truncated
/// to the first `keep` frequencies: `basis[u][x] = a(u) cos(pi (2x + 1) u / 2n)`.
#[derive(Debug, Clone)]
pub struct DctBasis {
    n: usize,
    keep: usize,
    rows: Vec<f64>,
}

impl DctBasis {
    pub fn new(n: usize, keep: usize) -> Self {
        let keep = keep.min(n);
        let mut rows = Vec::with_capacity(keep * n);
        for u in 0..keep {
            let scale = if u == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for x in 0..n {
                rows.push(scale * (PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64).cos());
            }
        }
        Self { n, keep, rows }
    }

    #[inline]
    fn row(&self, u: usize) -> &[f64] {
        &self.rows[u * self.n..(u + 1) * self.n]
    }
}

/// Top-left `keep x keep` block of the orthonormal 2-D DCT-II of `plane`,
/// row-major with vertical frequency as the row.
pub fn dct2_low(plane: &ImagePlane, keep: usize) -> Vec<f64> {
    let rows = DctBasis::new(plane.height(), keep);
    let cols = DctBasis::new(plane.width(), keep);
    dct2_low_with(plane, &rows, &cols)
}

pub fn dct2_low_with(plane: &ImagePlane, rows: &DctBasis, cols: &DctBasis) -> Vec<f64> {
    let (h, w) = (plane.height(), plane.width());
    debug_assert_eq!(rows.n, h);
    debug_assert_eq!(cols.n, w);

    // Column transform of each image row: h x keep_w.
    let mut partial = vec![0.0; h * cols.keep];
    for y in 0..h {
        let src = &plane.data()[y * w..(y + 1) * w];
        for v in 0..cols.keep {
            partial[y * cols.keep + v] = src.iter().zip(cols.row(v)).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; rows.keep * cols.keep];
    for u in 0..rows.keep {
        let basis = rows.row(u);
        for v in 0..cols.keep {
            out[u * cols.keep + v] = (0..h).map(|y| basis[y] * partial[y * cols.keep + v]).sum();
        }
    }
    out
}
