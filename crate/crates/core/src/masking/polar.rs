use crate::error::{Error, Result};
use crate::roi::{CenterlineMode, CoverageGrid, PolarGeometry};

use super::PtcmConfig;

/// Normalized depth `r` and lateral offset `theta` of a patch, measured from
/// the mean centerline.
pub fn polar_coords(geom: &PolarGeometry, patch_index: usize) -> (f64, f64) {
    polar_coords_with(geom, patch_index, CenterlineMode::Mean)
}

pub fn polar_coords_with(geom: &PolarGeometry, patch_index: usize, mode: CenterlineMode) -> (f64, f64) {
    let m = patch_index / geom.grid_w;
    let n = patch_index % geom.grid_w;
    let r = if geom.m_bottom == geom.m_apex {
        0.0
    } else {
        ((m as f64 - geom.m_apex as f64) / (geom.m_bottom - geom.m_apex) as f64).clamp(0.0, 1.0)
    };
    let theta = ((n as f64 - geom.center_at(m, mode)) / geom.half_width_at(m)).clamp(-1.0, 1.0);
    (r, theta)
}

/// Radial weight, angular weight and coverage gate of one patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarTerms {
    pub f_r: f64,
    pub g_theta: f64,
    pub q: f64,
}

impl PolarTerms {
    /// `q (f_r + g_theta)`.
    pub fn score(&self) -> f64 {
        self.q * (self.f_r + self.g_theta)
    }
}

pub fn polar_terms(r: f64, theta: f64, v: f64, cfg: &PtcmConfig) -> PolarTerms {
    let f_r = (-(r - cfg.mu).powi(2) / (2.0 * cfg.sigma * cfg.sigma)).exp();
    let g_theta = 1.0 - theta.abs().powf(cfg.k);
    let q = ((v - cfg.tau) / (1.0 - cfg.tau)).clamp(0.0, 1.0);
    PolarTerms { f_r, g_theta, q }
}

/// Polar coordinates, scores and the normalized prior for every patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPrior {
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub s_polar: Vec<f64>,
    pub p_polar: Vec<f64>,
}

impl PolarPrior {
    /// Used when every score is gated to zero: uniform over patches with
    /// `v >= tau`, or over all patches if there are none.
    pub fn uniform_fallback(geom: &PolarGeometry, coverage: &CoverageGrid, cfg: &PtcmConfig) -> Self {
        let (r, theta, s_polar) = polar_scores(geom, coverage, cfg);
        let support: Vec<bool> = coverage.v.iter().map(|&v| v >= cfg.tau).collect();
        let count = support.iter().filter(|&&b| b).count();
        let p_polar = if count == 0 {
            vec![1.0 / coverage.len() as f64; coverage.len()]
        } else {
            support
                .iter()
                .map(|&b| if b { 1.0 / count as f64 } else { 0.0 })
                .collect()
        };
        Self {
            r,
            theta,
            s_polar,
            p_polar,
        }
    }
}

/// `(r, theta, s_polar)` for every patch.
pub fn polar_scores(
    geom: &PolarGeometry,
    coverage: &CoverageGrid,
    cfg: &PtcmConfig,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = coverage.len();
    let mut r = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for (i, &v) in coverage.v.iter().enumerate() {
        let (ri, ti) = polar_coords(geom, i);
        r.push(ri);
        theta.push(ti);
        s.push(polar_terms(ri, ti, v, cfg).score());
    }
    (r, theta, s)
}

/// Polar prior `p_polar = s_polar / sum(s_polar)`.
///
/// Fails with [`Error::DegeneratePrior`] when every patch has `v <= tau`.
pub fn polar_distribution(
    geom: &PolarGeometry,
    coverage: &CoverageGrid,
    cfg: &PtcmConfig,
) -> Result<PolarPrior> {
    if (geom.grid_h, geom.grid_w) != (coverage.grid_h(), coverage.grid_w()) {
        return Err(Error::InvalidInput(format!(
            "geometry is {}x{} but coverage is {}x{}",
            geom.grid_h,
            geom.grid_w,
            coverage.grid_h(),
            coverage.grid_w()
        )));
    }
    let (r, theta, s_polar) = polar_scores(geom, coverage, cfg);
    let total: f64 = s_polar.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegeneratePrior);
    }
    let p_polar = s_polar.iter().map(|s| s / total).collect();
    Ok(PolarPrior {
        r,
        theta,
        s_polar,
        p_polar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::PatchGrid;
    use crate::roi::polar_landmarks;
    use proptest::prelude::*;

    fn full_geometry(n: usize) -> PolarGeometry {
        let grid = PatchGrid::new(n * 16, n * 16, 16).unwrap();
        let cov = CoverageGrid::from_ratios(grid, vec![1.0; n * n]).unwrap();
        polar_landmarks(&cov, 0.5).unwrap()
    }

    #[test]
    fn coords_examples() {
        let g = full_geometry(14);
        let apex_center = polar_coords(&g, 6);
        assert_eq!(apex_center.0, 0.0);
        assert!((apex_center.1 - (6.0 - 6.5) / 6.5).abs() < 1e-15);

        let (r, t) = polar_coords(&g, 7 * 14 + 3);
        assert!((r - 0.538462).abs() < 1e-6 && (r - 7.0 / 13.0).abs() < 1e-15);
        assert!((t + 0.538462).abs() < 1e-6);

        // apex row, exactly on a half-integer centerline
        let g = PolarGeometry {
            grid_h: 3,
            grid_w: 3,
            m_apex: 0,
            m_bottom: 2,
            n_center: 1.0,
            half_width: vec![0.5, 1.0, 1.0],
            row_midpoint: vec![Some(1.0), Some(1.0), Some(1.0)],
        };
        assert_eq!(polar_coords(&g, 1), (0.0, 0.0));
        assert_eq!(polar_coords(&g, 2 * 3 + 2), (1.0, 1.0));
        assert_eq!(polar_coords(&g, 2 * 3), (1.0, -1.0));
    }

    #[test]
    fn degenerate_depth_maps_to_zero() {
        let g = PolarGeometry {
            grid_h: 3,
            grid_w: 4,
            m_apex: 1,
            m_bottom: 1,
            n_center: 1.5,
            half_width: vec![0.5, 1.5, 0.5],
            row_midpoint: vec![None, Some(1.5), None],
        };
        for i in 0..12 {
            assert_eq!(polar_coords(&g, i).0, 0.0);
        }
        // rows outside the ROI use h_min
        assert_eq!(polar_coords(&g, 0).1, -1.0);
    }

    #[test]
    fn per_row_centerline_option() {
        let g = PolarGeometry {
            grid_h: 2,
            grid_w: 4,
            m_apex: 0,
            m_bottom: 1,
            n_center: 1.5,
            half_width: vec![1.0, 1.0],
            row_midpoint: vec![Some(1.0), Some(2.0)],
        };
        assert_eq!(polar_coords_with(&g, 1, CenterlineMode::PerRow).1, 0.0);
        assert_eq!(polar_coords_with(&g, 1, CenterlineMode::Mean).1, -0.5);
    }

    #[test]
    fn terms_examples() {
        let cfg = PtcmConfig::default();
        let t = polar_terms(0.5, 0.0, 1.0, &cfg);
        assert_eq!((t.f_r, t.g_theta, t.q), (1.0, 1.0, 1.0));
        let t = polar_terms(0.2, 1.0, 0.5, &cfg);
        assert_eq!((t.g_theta, t.q), (0.0, 0.0));
        let t = polar_terms(0.75, 0.5, 0.8, &cfg);
        assert!((t.f_r - (-0.5f64).exp()).abs() < 1e-15);
        assert!((t.f_r - 0.606531).abs() < 1e-6);
        assert!((t.g_theta - 0.75).abs() < 1e-15);
        assert!((t.q - 0.6).abs() < 1e-12);
    }

    #[test]
    fn distribution_examples() {
        let cfg = PtcmConfig::default();
        let grid = PatchGrid::new(16, 16, 16).unwrap();
        let cov = CoverageGrid::from_ratios(grid, vec![1.0]).unwrap();
        let g = polar_landmarks(&cov, 0.5).unwrap();
        assert_eq!(polar_distribution(&g, &cov, &cfg).unwrap().p_polar, vec![1.0]);

        // 2x2 all-covered grid with h = 1 in both rows
        let grid = PatchGrid::new(32, 32, 16).unwrap();
        let cov = CoverageGrid::from_ratios(grid, vec![1.0; 4]).unwrap();
        let g = PolarGeometry {
            grid_h: 2,
            grid_w: 2,
            m_apex: 0,
            m_bottom: 1,
            n_center: 0.5,
            half_width: vec![1.0, 1.0],
            row_midpoint: vec![Some(0.5), Some(0.5)],
        };
        let prior = polar_distribution(&g, &cov, &cfg).unwrap();
        assert_eq!(prior.r, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(prior.theta, vec![-0.5, 0.5, -0.5, 0.5]);
        for &s in &prior.s_polar {
            assert!((s - ((-2.0f64).exp() + 0.75)).abs() < 1e-15);
        }
        assert!(prior.p_polar.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn fully_gated_prior_is_degenerate() {
        let cfg = PtcmConfig::default();
        let grid = PatchGrid::new(16, 32, 16).unwrap();
        let cov = CoverageGrid::from_ratios(grid, vec![0.5, 0.25]).unwrap();
        let g = polar_landmarks(&cov, 0.5).unwrap();
        assert!(matches!(polar_distribution(&g, &cov, &cfg), Err(Error::DegeneratePrior)));
        let fb = PolarPrior::uniform_fallback(&g, &cov, &cfg);
        assert_eq!(fb.p_polar, vec![1.0, 0.0]);
        assert!(fb.s_polar.iter().all(|&s| s == 0.0));
    }

    proptest! {
        #[test]
        fn coords_are_clipped(gh in 1usize..10, gw in 1usize..10, apex in 0usize..10, depth in 0usize..10,
                              center in -5.0f64..15.0, hw in prop::collection::vec(0.5f64..8.0, 10), idx in 0usize..100) {
            let m_apex = apex.min(gh - 1);
            let m_bottom = (m_apex + depth).min(gh - 1);
            let g = PolarGeometry {
                grid_h: gh, grid_w: gw, m_apex, m_bottom, n_center: center,
                half_width: hw[..gh].to_vec(),
                row_midpoint: (0..gh).map(|m| (m >= m_apex && m <= m_bottom).then_some(center)).collect(),
            };
            let (r, t) = polar_coords(&g, idx % (gh * gw));
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((-1.0..=1.0).contains(&t));
        }

        #[test]
        fn term_monotonicity(v1 in 0.0f64..=1.0, v2 in 0.0f64..=1.0, tau in 0.0f64..0.99,
                             t in -1.0f64..=1.0, k in 0.1f64..6.0, r in 0.0f64..=1.0) {
            let cfg = PtcmConfig { tau, k, ..Default::default() };
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            prop_assert!(polar_terms(0.5, 0.0, lo, &cfg).q <= polar_terms(0.5, 0.0, hi, &cfg).q);
            prop_assert_eq!(polar_terms(r, t, 1.0, &cfg).g_theta, polar_terms(r, -t, 1.0, &cfg).g_theta);
            let t2 = (t.abs() + 0.1).min(1.0);
            prop_assert!(polar_terms(r, t2, 1.0, &cfg).g_theta <= polar_terms(r, t, 1.0, &cfg).g_theta);
            prop_assert!(polar_terms(r, t, 1.0, &cfg).f_r <= polar_terms(cfg.mu, t, 1.0, &cfg).f_r);
            if lo <= tau {
                prop_assert_eq!(polar_terms(r, t, lo, &cfg).score(), 0.0);
            }
        }

        #[test]
        fn prior_mirror_equivariance(bits in prop::collection::vec(0.0f64..=1.0, 35)) {
            let cfg = PtcmConfig::default();
            let grid = PatchGrid::new(5 * 8, 7 * 8, 8).unwrap();
            let cov = CoverageGrid::from_ratios(grid, bits).unwrap();
            let Ok(g) = polar_landmarks(&cov, cfg.tau) else { return Ok(()); };
            let flipped_cov = cov.flip_horizontal();
            let flipped_geom = g.flip_horizontal();
            let (Ok(a), Ok(b)) = (polar_distribution(&g, &cov, &cfg), polar_distribution(&flipped_geom, &flipped_cov, &cfg)) else {
                return Ok(());
            };
            for m in 0..5 {
                for n in 0..7 {
                    prop_assert!((a.p_polar[m * 7 + n] - b.p_polar[m * 7 + (6 - n)]).abs() < 1e-9);
                }
            }
        }
    }
}
