//! Patch-selection distribution and mask sampling.
//!
//! A polar prior built from the sector landmarks favours patches at a
//! preferred depth near the sector centerline, gated by how well each patch
//! sits inside the sector. A HOG texture score is turned into a softmax
//! distribution, and the two are blended linearly:
//!
//! ```text
//! p_i = (1 - lambda) p_hog_i + lambda p_polar_i
//! ```
//!
//! The blend drives both visible-token selection and reconstruction-target
//! sampling in [`sample_mask_plan`].

mod hog;
mod loss;
mod polar;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{PatchGrid, UltrasoundFrame};
use crate::roi::{CoverageGrid, PolarGeometry};

pub use hog::{hog_scores, HOG_BINS};
pub use loss::{reconstruction_loss, reconstruction_loss_with, LossFixture, LossNormalization};
pub use polar::{
    polar_coords, polar_coords_with, polar_distribution, polar_scores, polar_terms, PolarPrior,
    PolarTerms,
};
pub use sampling::{
    plan_rng, sample_mask_plan, sample_mask_plan_with, visible_count, weighted_sample,
    GumbelTopK, VisibleSelector,
};

/// Masking hyper-parameters. See [`PtcmConfig::default`] for the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtcmConfig {
    /// Depth of peak radial weight, in `[0, 1]`.
    pub mu: f64,
    /// Width of the radial weight, `> 0`.
    pub sigma: f64,
    /// Angular decay exponent, `> 0`.
    pub k: f64,
    /// Coverage threshold in `[0, 1)`.
    pub tau: f64,
    /// Weight of the polar prior against texture, in `[0, 1]`.
    pub lambda: f64,
    /// Fraction of patches hidden from the encoder, in `(0, 1)`.
    pub mask_ratio: f64,
    /// Fraction of the remaining ROI patches drawn as reconstruction targets.
    pub target_fraction: f64,
    pub seed: u64,
}

impl Default for PtcmConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            sigma: 0.25,
            k: 2.0,
            tau: 0.5,
            lambda: 0.5,
            mask_ratio: 0.75,
            target_fraction: 0.5,
            seed: 0,
        }
    }
}

impl PtcmConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64, bool); 7] = [
            ("mu", self.mu, (0.0..=1.0).contains(&self.mu)),
            ("sigma", self.sigma, self.sigma > 0.0 && self.sigma.is_finite()),
            ("k", self.k, self.k > 0.0 && self.k.is_finite()),
            ("tau", self.tau, (0.0..1.0).contains(&self.tau)),
            ("lambda", self.lambda, (0.0..=1.0).contains(&self.lambda)),
            (
                "mask_ratio",
                self.mask_ratio,
                self.mask_ratio > 0.0 && self.mask_ratio < 1.0,
            ),
            (
                "target_fraction",
                self.target_fraction,
                self.target_fraction > 0.0 && self.target_fraction <= 1.0,
            ),
        ];
        match checks.iter().find(|c| !c.2) {
            Some((name, value, _)) => Err(Error::Config(format!("{name} = {value} is out of range"))),
            None => Ok(()),
        }
    }
}

/// Softmax of the texture scores, shifted by the maximum for stability.
pub fn hog_distribution(s_hog: &[f64]) -> Result<Vec<f64>> {
    if s_hog.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty score vector".into()));
    }
    if s_hog.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("texture scores must be finite".into()));
    }
    let max = s_hog.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = s_hog.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

/// `(1 - lambda) p_hog + lambda p_polar`.
pub fn joint_distribution(p_hog: &[f64], p_polar: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if p_hog.len() != p_polar.len() {
        return Err(Error::InvalidInput(format!(
            "distribution lengths differ: {} vs {}",
            p_hog.len(),
            p_polar.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(p_hog
        .iter()
        .zip(p_polar)
        .map(|(&h, &p)| (1.0 - lambda) * h + lambda * p)
        .collect())
}

/// Every intermediate of the patch-selection distribution for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMaps {
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub s_polar: Vec<f64>,
    pub p_polar: Vec<f64>,
    pub s_hog: Vec<f64>,
    pub p_hog: Vec<f64>,
    pub p_joint: Vec<f64>,
    /// The polar prior was degenerate and replaced by a uniform one.
    pub prior_fallback: bool,
}

/// Builds all score maps, falling back to a uniform prior over the ROI
/// when every patch is gated to zero.
pub fn score_maps(
    frame: &UltrasoundFrame,
    grid: &PatchGrid,
    coverage: &CoverageGrid,
    geom: &PolarGeometry,
    cfg: &PtcmConfig,
) -> Result<ScoreMaps> {
    cfg.validate()?;
    let (prior, prior_fallback) = match polar_distribution(geom, coverage, cfg) {
        Ok(prior) => (prior, false),
        Err(Error::DegeneratePrior) => (PolarPrior::uniform_fallback(geom, coverage, cfg), true),
        Err(e) => return Err(e),
    };
    let s_hog = hog_scores(frame, grid)?;
    let p_hog = hog_distribution(&s_hog)?;
    let p_joint = joint_distribution(&p_hog, &prior.p_polar, cfg.lambda)?;
    Ok(ScoreMaps {
        r: prior.r,
        theta: prior.theta,
        s_polar: prior.s_polar,
        p_polar: prior.p_polar,
        s_hog,
        p_hog,
        p_joint,
        prior_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let p = hog_distribution(&[0.0, 1.0]).unwrap();
        assert!((p[0] - 0.268941).abs() < 1e-6 && (p[1] - 0.731059).abs() < 1e-6);
        assert!((p[0] - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
        let p = hog_distribution(&[0.0; 196]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 196.0).abs() < 1e-12));
        let p = hog_distribution(&[0.3; 5]).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
        // large scores do not overflow
        let p = hog_distribution(&[1000.0, 1000.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert!(hog_distribution(&[f64::NAN]).is_err());
    }

    #[test]
    fn fusion_examples() {
        let p = joint_distribution(&[0.2, 0.8], &[0.6, 0.4], 0.5).unwrap();
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        let h = [0.1, 0.2, 0.7];
        let q = [0.3, 0.3, 0.4];
        assert_eq!(joint_distribution(&h, &q, 0.0).unwrap(), h);
        assert_eq!(joint_distribution(&h, &q, 1.0).unwrap(), q);
        assert!(joint_distribution(&h, &q[..2], 0.5).is_err());
        assert!(joint_distribution(&h, &q, 1.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PtcmConfig::default().validate().is_ok());
        let bad = [
            PtcmConfig { sigma: 0.0, ..Default::default() },
            PtcmConfig { tau: 1.0, ..Default::default() },
            PtcmConfig { mask_ratio: 1.0, ..Default::default() },
            PtcmConfig { target_fraction: 0.0, ..Default::default() },
            PtcmConfig { lambda: -0.1, ..Default::default() },
            PtcmConfig { mu: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
