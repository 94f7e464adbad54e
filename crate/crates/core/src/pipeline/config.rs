use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dedup::{Threshold, DEFAULT_DCT_SIZE, LOW_FREQ_BLOCK};
use crate::error::{Error, Result};
use crate::masking::PtcmConfig;
use crate::roi::{DEFAULT_BG_THRESHOLD, DEFAULT_CLOSE_RADIUS};

pub const DEFAULT_PATCH_SIZE: usize = 16;

/// Config document as written by users: every key optional, unknown keys
/// rejected. Files and command-line flags are merged at this level and
/// then resolved into a [`PipelineConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_vis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_sem: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bg_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub close_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dct_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($field:ident),*) => {
        $( if $over.$field.is_some() { $base.$field = $over.$field.clone(); } )*
    };
}

impl PartialConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. A relative `embedding_file` is taken relative to
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(file), Some(dir)) = (&cfg.embedding_file, path.parent()) {
            if file.is_relative() {
                cfg.embedding_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    /// Values set in `over` replace those in `self`.
    pub fn merge(mut self, over: &PartialConfig) -> Self {
        overlay!(
            self, over, threshold_vis, threshold_sem, embedding_file, bg_threshold, close_radius, tau, mu,
            sigma, k, lambda, mask_ratio, target_fraction, patch_size, dct_size, workers, seed
        );
        self
    }

    /// Per-frame settings only; the screening thresholds are not needed.
    pub fn resolve_frame(&self) -> Result<FrameConfig> {
        let d = PtcmConfig::default();
        let ptcm = PtcmConfig {
            mu: self.mu.unwrap_or(d.mu),
            sigma: self.sigma.unwrap_or(d.sigma),
            k: self.k.unwrap_or(d.k),
            tau: self.tau.unwrap_or(d.tau),
            lambda: self.lambda.unwrap_or(d.lambda),
            mask_ratio: self.mask_ratio.unwrap_or(d.mask_ratio),
            target_fraction: self.target_fraction.unwrap_or(d.target_fraction),
            seed: self.seed.unwrap_or(d.seed),
        };
        let frame = FrameConfig {
            bg_threshold: self.bg_threshold.unwrap_or(DEFAULT_BG_THRESHOLD),
            close_radius: self.close_radius.unwrap_or(DEFAULT_CLOSE_RADIUS),
            patch_size: self.patch_size.unwrap_or(DEFAULT_PATCH_SIZE),
            ptcm,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// Full pipeline settings. Both screening thresholds must be present.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let threshold = |name: &str, v: Option<f64>| -> Result<f64> {
            let v = v.ok_or_else(|| Error::Config(format!("{name} is required")))?;
            Threshold::new(v).map_err(|_| Error::Config(format!("{name} = {v} must lie in (0, 1]")))?;
            Ok(v)
        };
        let cfg = PipelineConfig {
            threshold_vis: threshold("threshold_vis", self.threshold_vis)?,
            threshold_sem: threshold("threshold_sem", self.threshold_sem)?,
            embedding_file: self.embedding_file.clone(),
            dct_size: self.dct_size.unwrap_or(DEFAULT_DCT_SIZE),
            workers: self.workers.unwrap_or(0),
            frame: self.resolve_frame()?,
        };
        if cfg.dct_size < LOW_FREQ_BLOCK {
            return Err(Error::Config(format!(
                "dct_size = {} must be at least {LOW_FREQ_BLOCK}",
                cfg.dct_size
            )));
        }
        Ok(cfg)
    }
}

/// Settings for ROI detection and mask sampling of a single frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub bg_threshold: f64,
    pub close_radius: usize,
    pub patch_size: usize,
    pub ptcm: PtcmConfig,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            bg_threshold: DEFAULT_BG_THRESHOLD,
            close_radius: DEFAULT_CLOSE_RADIUS,
            patch_size: DEFAULT_PATCH_SIZE,
            ptcm: PtcmConfig::default(),
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bg_threshold > 0.0 && self.bg_threshold < 1.0) {
            return Err(Error::Config(format!(
                "bg_threshold = {} must lie in (0, 1)",
                self.bg_threshold
            )));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be positive".into()));
        }
        self.ptcm.validate()
    }
}

/// Resolved, validated pipeline settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub threshold_vis: f64,
    pub threshold_sem: f64,
    pub embedding_file: Option<PathBuf>,
    pub dct_size: usize,
    /// Worker threads for the per-frame stages; 0 picks the machine default.
    pub workers: usize,
    pub frame: FrameConfig,
}

impl PipelineConfig {
    /// Default settings with the given thresholds.
    pub fn with_thresholds(threshold_vis: f64, threshold_sem: f64) -> Result<Self> {
        PartialConfig {
            threshold_vis: Some(threshold_vis),
            threshold_sem: Some(threshold_sem),
            ..Default::default()
        }
        .resolve()
    }

    /// The flat document form, with every key filled in.
    pub fn to_partial(&self) -> PartialConfig {
        let p = &self.frame.ptcm;
        PartialConfig {
            threshold_vis: Some(self.threshold_vis),
            threshold_sem: Some(self.threshold_sem),
            embedding_file: self.embedding_file.clone(),
            bg_threshold: Some(self.frame.bg_threshold),
            close_radius: Some(self.frame.close_radius),
            tau: Some(p.tau),
            mu: Some(p.mu),
            sigma: Some(p.sigma),
            k: Some(p.k),
            lambda: Some(p.lambda),
            mask_ratio: Some(p.mask_ratio),
            target_fraction: Some(p.target_fraction),
            patch_size: Some(self.frame.patch_size),
            dct_size: Some(self.dct_size),
            workers: Some(self.workers),
            seed: Some(p.seed),
        }
    }
}
