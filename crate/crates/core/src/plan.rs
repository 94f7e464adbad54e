//! Serialized sampling outcome for one frame.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::masking::{visible_count, PtcmConfig};

/// File suffix of serialized plans.
pub const PLAN_SUFFIX: &str = ".maskplan.json";

/// Tolerance on `|sum(p_joint) - 1|` after 9-digit rounding.
pub const PLAN_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub image_id: String,
    pub grid_h: usize,
    pub grid_w: usize,
    pub patch_size: usize,
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
    pub targets: Vec<usize>,
    pub supplemented: Vec<usize>,
    #[serde(serialize_with = "sig9")]
    pub coverage: Vec<f64>,
    #[serde(serialize_with = "sig9")]
    pub p_joint: Vec<f64>,
    pub config: PtcmConfig,
    pub seed: u64,
    /// The polar prior was replaced by a uniform one over the ROI.
    #[serde(default)]
    pub prior_fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn sig9<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(values.iter().map(|&v| round_sig9(v)))
}

impl MaskPlan {
    pub fn len(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::json(&self.image_id, e))?;
        s.push('\n');
        Ok(s)
    }

    pub fn file_name(&self) -> String {
        plan_file_name(&self.image_id)
    }

    /// Writes `<dir>/<image_id>.maskplan.json` and returns its path.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// Every broken invariant, as readable messages; empty when the plan is
    /// consistent.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.len();
        if n == 0 {
            out.push("grid is empty".to_owned());
            return out;
        }
        if let Err(e) = self.config.validate() {
            out.push(e.to_string());
        }
        if self.seed != self.config.seed {
            out.push(format!("seed {} differs from config seed {}", self.seed, self.config.seed));
        }
        for (name, set) in [
            ("visible", &self.visible),
            ("masked", &self.masked),
            ("targets", &self.targets),
            ("supplemented", &self.supplemented),
        ] {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                out.push(format!("{name} is not strictly ascending"));
            }
            if let Some(bad) = set.iter().find(|&&i| i >= n) {
                out.push(format!("{name} contains {bad}, grid has {n} patches"));
            }
        }
        let mut owner = vec![0u8; n];
        for &i in self.visible.iter().filter(|&&i| i < n) {
            owner[i] |= 1;
        }
        for &i in self.masked.iter().filter(|&&i| i < n) {
            owner[i] |= 2;
        }
        if owner.contains(&3) {
            out.push("visible and masked overlap".to_owned());
        }
        if owner.contains(&0) {
            out.push("visible and masked do not cover the grid".to_owned());
        }
        if self.targets.iter().any(|&t| t < n && owner[t] & 2 == 0) {
            out.push("targets are not a subset of masked".to_owned());
        }
        if self.supplemented.iter().any(|&t| t < n && owner[t] & 1 == 0) {
            out.push("supplemented patches are not all visible".to_owned());
        }
        let expected_visible = visible_count(n, self.config.mask_ratio);
        if self.visible.len() != expected_visible {
            out.push(format!(
                "{} visible patches, mask ratio {} implies {expected_visible}",
                self.visible.len(),
                self.config.mask_ratio
            ));
        }
        if self.coverage.len() != n {
            out.push(format!("coverage has {} entries for {n} patches", self.coverage.len()));
        } else {
            if self.coverage.iter().any(|v| !(0.0..=1.0).contains(v)) {
                out.push("coverage outside [0, 1]".to_owned());
            }
            if self
                .supplemented
                .iter()
                .any(|&i| i < n && self.coverage[i] > self.config.tau)
            {
                out.push("supplemented patch already has coverage above tau".to_owned());
            }
        }
        if self.p_joint.len() != n {
            out.push(format!("p_joint has {} entries for {n} patches", self.p_joint.len()));
        } else {
            if self.p_joint.iter().any(|p| !p.is_finite() || *p < 0.0) {
                out.push("p_joint has negative or non-finite entries".to_owned());
            }
            let total: f64 = self.p_joint.iter().sum();
            if (total - 1.0).abs() > PLAN_SUM_TOL {
                out.push(format!("p_joint sums to {total}"));
            }
        }
        out
    }
}

pub fn plan_file_name(image_id: &str) -> String {
    format!("{image_id}{PLAN_SUFFIX}")
}

/// Reads a plan file and checks its invariants.
pub fn verify_plan_file(path: &Path) -> Result<Vec<String>> {
    Ok(MaskPlan::read(path)?.violations())
}
