use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropStage {
    None,
    Visual,
    Semantic,
}

impl DropStage {
    pub fn as_str(self) -> &'static str {
        match self {
            DropStage::None => "none",
            DropStage::Visual => "visual",
            DropStage::Semantic => "semantic",
        }
    }
}

/// Audit row for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupEntry {
    pub id: String,
    pub stage: DropStage,
    pub keeper_id: Option<String>,
    pub similarity: Option<f64>,
}

impl DedupEntry {
    pub fn retained(id: &str) -> Self {
        Self {
            id: id.to_owned(),
            stage: DropStage::None,
            keeper_id: None,
            similarity: None,
        }
    }

    pub fn is_retained(&self) -> bool {
        self.stage == DropStage::None
    }
}

/// Combined outcome of both screening stages.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupReport {
    pub threshold_vis: f64,
    pub threshold_sem: f64,
    /// One row per screened frame, in global (sequence, frame index) order.
    pub entries: Vec<DedupEntry>,
    pub degenerate_comparisons: usize,
}

impl DedupReport {
    /// Overlays semantic-stage rows onto the visual-stage rows. Every frame the
    /// visual stage kept must appear in `semantic`.
    pub fn assemble(
        threshold_vis: f64,
        threshold_sem: f64,
        visual: Vec<DedupEntry>,
        semantic: Vec<DedupEntry>,
        degenerate_comparisons: usize,
    ) -> Result<Self> {
        let mut by_id: HashMap<String, DedupEntry> =
            semantic.into_iter().map(|e| (e.id.clone(), e)).collect();
        let mut entries = Vec::with_capacity(visual.len());
        for e in visual {
            if e.is_retained() {
                let sem = by_id.remove(&e.id).ok_or_else(|| {
                    Error::InvalidInput(format!("no semantic outcome for visual survivor {}", e.id))
                })?;
                entries.push(sem);
            } else {
                entries.push(e);
            }
        }
        if let Some(extra) = by_id.keys().next() {
            return Err(Error::InvalidInput(format!(
                "semantic outcome for {extra} which was not a visual survivor"
            )));
        }
        Ok(Self {
            threshold_vis,
            threshold_sem,
            entries,
            degenerate_comparisons,
        })
    }

    pub fn input_count(&self) -> usize {
        self.entries.len()
    }

    pub fn retained_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|e| e.is_retained()).map(|e| e.id.as_str())
    }

    pub fn retained_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_retained()).count()
    }

    pub fn count_stage(&self, stage: DropStage) -> usize {
        self.entries.iter().filter(|e| e.stage == stage).count()
    }

    /// Retained / input; 0 for an empty report.
    pub fn retained_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.retained_count() as f64 / self.input_count() as f64
        }
    }

    /// CSV with header `id,stage_dropped,keeper_id,similarity`; retained rows
    /// leave the last two fields empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::InvalidInput(format!("csv encoding: {e}"));
        w.write_record(["id", "stage_dropped", "keeper_id", "similarity"])
            .map_err(to_err)?;
        for e in &self.entries {
            let sim = e.similarity.map(|s| format!("{s:.6}")).unwrap_or_default();
            w.write_record([
                e.id.as_str(),
                e.stage.as_str(),
                e.keeper_id.as_deref().unwrap_or(""),
                sim.as_str(),
            ])
            .map_err(to_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}
