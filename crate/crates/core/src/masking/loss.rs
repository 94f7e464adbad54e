use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target transform applied before the squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Compare raw pixel values.
    #[default]
    Raw,
    /// Standardize each original patch to zero mean, unit variance
    /// (`eps = 1e-6` added to the variance) before comparing.
    PatchStandardized,
}

const STANDARDIZE_EPS: f64 = 1e-6;

/// Mean over the masked patches of the summed squared pixel error.
pub fn reconstruction_loss<P: AsRef<[f64]>>(predicted: &[P], original: &[P], masked: &[usize]) -> Result<f64> {
    reconstruction_loss_with(predicted, original, masked, LossNormalization::Raw)
}

pub fn reconstruction_loss_with<P: AsRef<[f64]>>(
    predicted: &[P],
    original: &[P],
    masked: &[usize],
    normalization: LossNormalization,
) -> Result<f64> {
    if masked.is_empty() {
        return Err(Error::InvalidInput("masked set is empty".into()));
    }
    let mut seen = HashSet::with_capacity(masked.len());
    let mut total = 0.0;
    for &i in masked {
        if !seen.insert(i) {
            return Err(Error::InvalidInput(format!("patch {i} listed twice in the masked set")));
        }
        let (Some(pred), Some(orig)) = (predicted.get(i), original.get(i)) else {
            return Err(Error::InvalidInput(format!("patch {i} is missing from the inputs")));
        };
        let (pred, orig) = (pred.as_ref(), orig.as_ref());
        if pred.len() != orig.len() || orig.is_empty() {
            return Err(Error::InvalidInput(format!(
                "patch {i}: predicted has {} pixels, original has {}",
                pred.len(),
                orig.len()
            )));
        }
        total += match normalization {
            LossNormalization::Raw => pred.iter().zip(orig).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            LossNormalization::PatchStandardized => {
                let n = orig.len() as f64;
                let mean = orig.iter().sum::<f64>() / n;
                let var = orig.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let scale = (var + STANDARDIZE_EPS).sqrt();
                pred.iter()
                    .zip(orig)
                    .map(|(a, b)| (a - (b - mean) / scale).powi(2))
                    .sum::<f64>()
            }
        };
    }
    Ok(total / masked.len() as f64)
}

/// A hand-checked loss example shared with downstream training code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossFixture {
    pub name: String,
    pub predicted: Vec<Vec<f64>>,
    pub original: Vec<Vec<f64>>,
    pub masked: Vec<usize>,
    #[serde(default)]
    pub normalization: LossNormalization,
    pub expected: f64,
}

impl LossFixture {
    /// Reads a JSON array of fixtures.
    pub fn load_all(path: &Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn evaluate(&self) -> Result<f64> {
        reconstruction_loss_with(&self.predicted, &self.original, &self.masked, self.normalization)
    }
}
