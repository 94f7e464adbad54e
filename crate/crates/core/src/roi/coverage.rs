use crate::error::{Error, Result};
use crate::imaging::PatchGrid;

use super::RoiMask;

/// Per-patch coverage ratios `v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub grid: PatchGrid,
    /// Inside-pixel count per patch.
    pub inside: Vec<usize>,
    pub v: Vec<f64>,
}

impl CoverageGrid {
    /// Builds a grid straight from ratios, e.g. for synthetic priors or
    /// coverages read back from a plan file. Pixel counts are reconstructed
    /// by rounding.
    pub fn from_ratios(grid: PatchGrid, v: Vec<f64>) -> Result<Self> {
        if v.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} coverage values for {} patches",
                v.len(),
                grid.len()
            )));
        }
        if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidInput(format!("coverage {bad} outside [0, 1]")));
        }
        let inside = v
            .iter()
            .enumerate()
            .map(|(i, &r)| (r * grid.pixel_count(i) as f64).round() as usize)
            .collect();
        Ok(Self { grid, inside, v })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn grid_h(&self) -> usize {
        self.grid.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid.grid_w
    }

    pub fn inside_total(&self) -> usize {
        self.inside.iter().sum()
    }

    /// Mirror about the vertical axis of the patch grid. Exact only when
    /// the image width is a multiple of the patch size.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.grid.grid_w;
        let mirror = |src: &[f64]| -> Vec<f64> {
            src.chunks(w).flat_map(|row| row.iter().rev().copied()).collect()
        };
        let inside: Vec<usize> = self
            .inside
            .chunks(w)
            .flat_map(|row| row.iter().rev().copied())
            .collect();
        Self {
            grid: self.grid,
            inside,
            v: mirror(&self.v),
        }
    }
}

/// `v_i = |P_i ∩ ROI| / |P_i|`, counted in integers with one division.
pub fn patch_coverage(roi: &RoiMask, grid: &PatchGrid) -> Result<CoverageGrid> {
    if (roi.height(), roi.width()) != (grid.height, grid.width) {
        return Err(Error::InvalidInput(format!(
            "mask is {}x{} but grid covers {}x{}",
            roi.height(),
            roi.width(),
            grid.height,
            grid.width
        )));
    }
    let mut inside = vec![0usize; grid.len()];
    for y in 0..grid.height {
        for x in 0..grid.width {
            if roi.contains(y, x) {
                inside[grid.patch_of(y, x)] += 1;
            }
        }
    }
    let v = inside
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / grid.pixel_count(i) as f64)
        .collect();
    Ok(CoverageGrid {
        grid: *grid,
        inside,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_empty_and_half_patches() {
        let grid = PatchGrid::new(16, 48, 16).unwrap();
        let mask = (0..16 * 48)
            .map(|p| {
                let (y, x) = (p / 48, p % 48);
                x < 16 || (x >= 32 && y < 8)
            })
            .collect();
        let roi = RoiMask::from_bits(16, 48, mask).unwrap();
        let cov = patch_coverage(&roi, &grid).unwrap();
        assert_eq!(cov.v, vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn size_mismatch_rejected() {
        let grid = PatchGrid::new(16, 16, 8).unwrap();
        let roi = RoiMask::from_bits(8, 8, vec![true; 64]).unwrap();
        assert!(patch_coverage(&roi, &grid).is_err());
    }

    proptest! {
        #[test]
        fn coverage_conserves_pixel_count(h in 1usize..40, w in 1usize..40, p in 1usize..12,
                                          bits in prop::collection::vec(any::<bool>(), 1600)) {
            let roi = RoiMask::from_bits(h, w, bits[..h * w].to_vec()).unwrap();
            let grid = PatchGrid::new(h, w, p).unwrap();
            let cov = patch_coverage(&roi, &grid).unwrap();
            prop_assert_eq!(cov.inside_total(), roi.pixel_count());
            let weighted: f64 = cov.v.iter().enumerate().map(|(i, v)| v * grid.pixel_count(i) as f64).sum();
            prop_assert!((weighted - roi.pixel_count() as f64).abs() < 1e-6);
            for (i, &v) in cov.v.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v == 1.0, cov.inside[i] == grid.pixel_count(i));
                prop_assert_eq!(v == 0.0, cov.inside[i] == 0);
            }
        }
    }
}
