//! Weighted sampling without replacement and mask-plan construction.
//!
//! Sampling uses Gumbel-top-k: every item draws `ln w_i + G_i` with
//! `G_i ~ Gumbel(0, 1)` and the `k` largest keys win. That ordering has the
//! same law as drawing one item at a time proportionally to the remaining
//! weights, and it is unaffected by renormalizing the weights over any
//! candidate subset. Zero-weight items rank after every positive-weight item
//! and are ordered uniformly at random among themselves.

use std::cmp::Ordering;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plan::MaskPlan;
use crate::roi::CoverageGrid;

use super::PtcmConfig;

/// Tolerance on `|sum(p) - 1|` for distributions handed to the sampler.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// `round((1 - mask_ratio) N)`.
pub fn visible_count(total: usize, mask_ratio: f64) -> usize {
    ((1.0 - mask_ratio) * total as f64).round() as usize
}

/// Per-image random stream, derived from the global seed and the image id
/// with SHA-256 so it is identical on every platform and thread schedule.
pub fn plan_rng(seed: u64, image_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"sonomask/mask-plan/v1\0");
    hasher.update(seed.to_le_bytes());
    hasher.update(image_id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[derive(Clone, Copy)]
struct Key {
    positive: bool,
    value: f64,
    item: usize,
}

fn rank(a: &Key, b: &Key) -> Ordering {
    b.positive
        .cmp(&a.positive)
        .then_with(|| b.value.total_cmp(&a.value))
        .then_with(|| a.item.cmp(&b.item))
}

/// Draws `k` of `items` without replacement, item `i` weighted by
/// `weights[i]`. Returns the winners in draw order.
///
/// Consumes exactly one uniform variate per item.
pub fn weighted_sample(items: &[usize], weights: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let k = k.min(items.len());
    if k == 0 {
        return Vec::new();
    }
    let mut keys: Vec<Key> = items
        .iter()
        .map(|&item| {
            let u: f64 = rng.sample(Open01);
            let gumbel = -(-u.ln()).ln();
            let w = weights[item];
            if w > 0.0 {
                Key {
                    positive: true,
                    value: w.ln() + gumbel,
                    item,
                }
            } else {
                Key {
                    positive: false,
                    value: gumbel,
                    item,
                }
            }
        })
        .collect();
    if k < keys.len() {
        keys.select_nth_unstable_by(k - 1, rank);
        keys.truncate(k);
    }
    keys.sort_unstable_by(rank);
    keys.into_iter().map(|key| key.item).collect()
}

/// Strategy for choosing the encoder's visible tokens from the candidates.
pub trait VisibleSelector: Send + Sync {
    /// Returns `count` distinct members of `candidates`.
    fn select(&self, candidates: &[usize], p_joint: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize>;
}

/// Single-shot weighted draw of all visible tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct GumbelTopK;

impl VisibleSelector for GumbelTopK {
    fn select(&self, candidates: &[usize], p_joint: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        weighted_sample(candidates, p_joint, count, rng)
    }
}

fn check_distribution(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::InvalidInput(format!(
            "distribution has {} entries for {n} patches",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("distribution entries must be finite and >= 0".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidInput(format!("distribution sums to {total}, not 1")));
    }
    Ok(())
}

/// Samples visible tokens and reconstruction targets for one image using
/// [`GumbelTopK`] and the image's own random stream.
pub fn sample_mask_plan(
    image_id: &str,
    p_joint: &[f64],
    coverage: &CoverageGrid,
    cfg: &PtcmConfig,
) -> Result<MaskPlan> {
    let mut rng = plan_rng(cfg.seed, image_id);
    sample_mask_plan_with(&GumbelTopK, image_id, p_joint, coverage, cfg, &mut rng)
}

/// 1. Candidates are the patches with `v > tau`.
/// 2. Short of `N_vis`, the best-covered remaining patches are promoted
///    (ties to the lower index) and listed in `supplemented`.
/// 3. `N_vis` visible tokens are drawn from the candidates.
/// 4. Targets are drawn from the masked patches that are candidates or have
///    `v >= tau`, `max(1, round(target_fraction |R|))` of them.
pub fn sample_mask_plan_with(
    selector: &dyn VisibleSelector,
    image_id: &str,
    p_joint: &[f64],
    coverage: &CoverageGrid,
    cfg: &PtcmConfig,
    rng: &mut ChaCha8Rng,
) -> Result<MaskPlan> {
    cfg.validate()?;
    let n = coverage.len();
    check_distribution(p_joint, n)?;
    let n_vis = visible_count(n, cfg.mask_ratio);
    if n_vis == 0 || n_vis >= n {
        return Err(Error::InvalidMaskRatio {
            mask_ratio: cfg.mask_ratio,
            visible: n_vis,
            total: n,
        });
    }

    let v = &coverage.v;
    let mut in_candidates: Vec<bool> = v.iter().map(|&x| x > cfg.tau).collect();
    let mut candidates: Vec<usize> = (0..n).filter(|&i| in_candidates[i]).collect();

    let mut supplemented = Vec::new();
    if candidates.len() < n_vis {
        let mut rest: Vec<usize> = (0..n).filter(|&i| !in_candidates[i]).collect();
        rest.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        supplemented = rest[..n_vis - candidates.len()].to_vec();
        supplemented.sort_unstable();
        for &i in &supplemented {
            in_candidates[i] = true;
        }
        candidates = (0..n).filter(|&i| in_candidates[i]).collect();
    }

    let mut visible = selector.select(&candidates, p_joint, n_vis, rng);
    visible.sort_unstable();
    visible.dedup();
    if visible.len() != n_vis || visible.iter().any(|&i| !in_candidates[i]) {
        return Err(Error::InvalidInput(format!(
            "visible selector returned {} distinct candidates, expected {n_vis}",
            visible.len()
        )));
    }
    let mut is_visible = vec![false; n];
    for &i in &visible {
        is_visible[i] = true;
    }
    let masked: Vec<usize> = (0..n).filter(|&i| !is_visible[i]).collect();

    let remaining: Vec<usize> = masked
        .iter()
        .copied()
        .filter(|&i| in_candidates[i] || v[i] >= cfg.tau)
        .collect();
    let mut warnings = Vec::new();
    let mut targets = if remaining.is_empty() {
        warnings.push("no masked ROI patches left to sample reconstruction targets from".to_owned());
        Vec::new()
    } else {
        let count = ((cfg.target_fraction * remaining.len() as f64).round() as usize)
            .clamp(1, remaining.len());
        weighted_sample(&remaining, p_joint, count, rng)
    };
    targets.sort_unstable();

    Ok(MaskPlan {
        image_id: image_id.to_owned(),
        grid_h: coverage.grid_h(),
        grid_w: coverage.grid_w(),
        patch_size: coverage.grid.patch_size,
        visible,
        masked,
        targets,
        supplemented,
        coverage: coverage.v.clone(),
        p_joint: p_joint.to_vec(),
        config: *cfg,
        seed: cfg.seed,
        prior_fallback: false,
        warnings,
    })
}
