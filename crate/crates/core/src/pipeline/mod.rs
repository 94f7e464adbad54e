//! Batch orchestration over a manifest of frames.
//!
//! Screening runs first and in a fixed global order (sequence id, then
//! frame index). Every surviving frame is then processed independently on a
//! worker pool: ROI detection, coverage, landmarks, score maps and mask
//! sampling, ending in `<id>.maskplan.json`. Frame-level failures are logged
//! and skipped; only config, manifest and output-directory problems abort.

pub mod config;
mod heatmap;
pub mod manifest;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dedup::embeddings::{read_embeddings, EmbeddingTable};
use crate::dedup::{
    semantic_screen, stub_from_feature, visual_screen, DedupEntry, DedupReport, FeatureExtractor,
    SemanticEmbedding, StructuralFeature, VisualMode,
};
use crate::error::{Error, Result};
use crate::imaging::{load_frame, PatchGrid, UltrasoundFrame};
use crate::masking::{sample_mask_plan, score_maps, ScoreMaps};
use crate::plan::{round_sig9, MaskPlan};
use crate::roi::{detect_roi, patch_coverage, polar_landmarks, CoverageGrid, PolarGeometry, RoiMask};

pub use config::{FrameConfig, PartialConfig, PipelineConfig, DEFAULT_PATCH_SIZE};
pub use heatmap::{emit_heatmap, heatmap_image, heatmap_pixels};
pub use manifest::{write_manifest, Manifest, ManifestEntry};

pub const REPORT_FILE: &str = "dedup_report.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RETAINED_MANIFEST_FILE: &str = "retained_manifest.jsonl";
pub const PLANS_DIR: &str = "plans";
pub const HEATMAPS_DIR: &str = "heatmaps";

/// Where a frame failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Semantic,
    Roi,
    Mask,
    Write,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Semantic => "semantic",
            Stage::Roi => "roi",
            Stage::Mask => "mask",
            Stage::Write => "write",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameError {
    pub id: String,
    pub stage: Stage,
    pub message: String,
}

impl FrameError {
    fn new(id: &str, stage: Stage, err: impl ToString) -> Self {
        Self {
            id: id.to_owned(),
            stage,
            message: err.to_string(),
        }
    }
}

pub fn write_errors(path: &Path, errors: &[FrameError]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::InvalidInput(format!("csv encoding: {e}"));
    w.write_record(["id", "stage", "message"]).map_err(to_err)?;
    for e in errors {
        w.write_record([e.id.as_str(), e.stage.as_str(), e.message.as_str()])
            .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Every intermediate of one frame's ROI and masking stages.
#[derive(Debug, Clone)]
pub struct FramePlan {
    pub roi: RoiMask,
    pub coverage: CoverageGrid,
    pub geometry: PolarGeometry,
    pub maps: ScoreMaps,
    pub plan: MaskPlan,
}

/// Detects the sector, then builds and samples the mask plan.
pub fn plan_frame(frame: &UltrasoundFrame, cfg: &FrameConfig) -> Result<FramePlan> {
    let roi = detect_roi(frame, cfg.bg_threshold, cfg.close_radius)?;
    plan_frame_with_roi(frame, roi, cfg)
}

/// Like [`plan_frame`] with a precomputed sector mask.
pub fn plan_frame_with_roi(frame: &UltrasoundFrame, roi: RoiMask, cfg: &FrameConfig) -> Result<FramePlan> {
    cfg.validate()?;
    let grid = PatchGrid::new(frame.height(), frame.width(), cfg.patch_size)?;
    let coverage = patch_coverage(&roi, &grid)?;
    let geometry = polar_landmarks(&coverage, cfg.ptcm.tau)?;
    let maps = score_maps(frame, &grid, &coverage, &geometry, &cfg.ptcm)?;
    let mut plan = sample_mask_plan(&frame.id, &maps.p_joint, &coverage, &cfg.ptcm)?;
    plan.prior_fallback = maps.prior_fallback;
    Ok(FramePlan {
        roi,
        coverage,
        geometry,
        maps,
        plan,
    })
}

/// Writes `<id>.<map>.png` for coverage, both priors and the joint
/// distribution.
pub fn write_heatmaps(fp: &FramePlan, dir: &Path) -> Result<Vec<PathBuf>> {
    let (h, w) = (fp.plan.grid_h, fp.plan.grid_w);
    let maps: [(&str, &[f64]); 4] = [
        ("coverage", &fp.coverage.v),
        ("p_polar", &fp.maps.p_polar),
        ("p_hog", &fp.maps.p_hog),
        ("p_joint", &fp.maps.p_joint),
    ];
    let mut out = Vec::new();
    for (name, values) in maps {
        let path = dir.join(format!("{}.{name}.png", fp.plan.image_id));
        emit_heatmap(values, h, w, &path)?;
        out.push(path);
    }
    Ok(out)
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Outcome of both screening stages over a manifest.
#[derive(Debug, Clone)]
pub struct Screening {
    pub report: DedupReport,
    /// Frames that survived both stages, in global order.
    pub retained: Vec<ManifestEntry>,
    pub errors: Vec<FrameError>,
    pub retained_after_visual: usize,
    pub elapsed: BTreeMap<String, f64>,
}

enum EmbeddingSource {
    Stub,
    File(EmbeddingTable),
}

/// Runs visual screening per sequence and semantic screening over the
/// survivors. Frames that fail to load, or lack an embedding in the
/// configured file, are reported as errors and left out of the report.
pub fn screen(manifest: &Manifest, cfg: &PipelineConfig) -> Result<Screening> {
    let extractor = FeatureExtractor::new(cfg.dct_size)?;
    let source = match &cfg.embedding_file {
        Some(path) => EmbeddingSource::File(read_embeddings(path)?),
        None => EmbeddingSource::Stub,
    };
    let mut elapsed = BTreeMap::new();
    let mut errors = Vec::new();
    let ordered = manifest.ordered();

    let t = Instant::now();
    let loaded: Vec<Result<StructuralFeature>> = ordered
        .par_iter()
        .map(|e| {
            let frame = load_frame(manifest.resolve(e), &e.id, &e.sequence_id, e.frame_index)?;
            Ok(extractor.extract(&frame.pixels))
        })
        .collect();
    let mut sequences: BTreeMap<&str, Vec<(&ManifestEntry, StructuralFeature)>> = BTreeMap::new();
    for (entry, result) in ordered.iter().zip(loaded) {
        match result {
            Ok(feature) => sequences.entry(&entry.sequence_id).or_default().push((entry, feature)),
            Err(e) => errors.push(FrameError::new(&entry.id, Stage::Load, e)),
        }
    }
    elapsed.insert("load".to_owned(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let groups: Vec<&Vec<(&ManifestEntry, StructuralFeature)>> = sequences.values().collect();
    let outcomes: Vec<_> = groups
        .par_iter()
        .map(|items| {
            let keyed: Vec<(&str, StructuralFeature)> =
                items.iter().map(|(e, f)| (e.id.as_str(), f.clone())).collect();
            visual_screen(&keyed, cfg.threshold_vis, VisualMode::LastKeeper)
        })
        .collect::<Result<_>>()?;
    elapsed.insert("visual".to_owned(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let mut visual_entries: Vec<DedupEntry> = Vec::new();
    let mut candidates: Vec<SemanticEmbedding> = Vec::new();
    let mut by_id: BTreeMap<&str, &ManifestEntry> = BTreeMap::new();
    let mut degenerate = 0;
    for (items, outcome) in groups.iter().zip(outcomes) {
        degenerate += outcome.degenerate_comparisons;
        let kept: HashSet<&str> = outcome.retained.iter().map(String::as_str).collect();
        for ((entry, feature), row) in items.iter().zip(outcome.entries) {
            if kept.contains(entry.id.as_str()) {
                let embedding = match &source {
                    EmbeddingSource::Stub => stub_from_feature(&entry.id, feature),
                    EmbeddingSource::File(table) => match table.get(&entry.id) {
                        Some(e) => e.clone(),
                        None => {
                            errors.push(FrameError::new(&entry.id, Stage::Semantic, "no embedding for this id"));
                            continue;
                        }
                    },
                };
                candidates.push(embedding);
                by_id.insert(&entry.id, entry);
            }
            visual_entries.push(row);
        }
    }
    let retained_after_visual = candidates.len();
    let sem = semantic_screen(&candidates, cfg.threshold_sem)?;
    degenerate += sem.degenerate_comparisons;
    let retained = sem.retained.iter().map(|id| by_id[id.as_str()].clone()).collect();
    let report = DedupReport::assemble(cfg.threshold_vis, cfg.threshold_sem, visual_entries, sem.entries, degenerate)?;
    elapsed.insert("semantic".to_owned(), t.elapsed().as_secs_f64());

    let order: BTreeMap<&str, usize> = ordered.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    errors.sort_by_key(|e| order[e.id.as_str()]);
    Ok(Screening {
        report,
        retained,
        errors,
        retained_after_visual,
        elapsed,
    })
}

/// Screening only: writes the report, the error log and a manifest of the
/// retained frames.
pub fn run_dedup(manifest: &Manifest, cfg: &PipelineConfig, out_dir: &Path) -> Result<Screening> {
    create_dir(out_dir)?;
    let pool = worker_pool(cfg.workers)?;
    let screening = pool.install(|| screen(manifest, cfg))?;
    screening.report.write_csv(&out_dir.join(REPORT_FILE))?;
    write_errors(&out_dir.join(ERRORS_FILE), &screening.errors)?;
    let retained: Vec<&ManifestEntry> = screening.retained.iter().collect();
    write_manifest(&out_dir.join(RETAINED_MANIFEST_FILE), &retained, &manifest.base_dir)?;
    Ok(screening)
}

/// Counts and timings of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub input_count: usize,
    pub retained_after_visual: usize,
    pub retained_after_semantic: usize,
    pub empty_roi_count: usize,
    pub plans_written: usize,
    pub error_count: usize,
    pub prior_fallback_count: usize,
    pub degenerate_comparisons: usize,
    /// `retained_after_semantic / input_count`.
    pub retained_fraction: f64,
    pub threshold_vis: f64,
    pub threshold_sem: f64,
    /// Wall-clock seconds per stage.
    pub elapsed_per_stage: BTreeMap<String, f64>,
}

impl PipelineSummary {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::json("summary", e))?;
        s.push('\n');
        Ok(s)
    }

    /// Copy with timings removed; everything left is reproducible.
    pub fn without_timings(&self) -> Self {
        Self {
            elapsed_per_stage: BTreeMap::new(),
            ..self.clone()
        }
    }
}

/// Optional outputs of [`run_pipeline_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also write per-frame heatmaps under `heatmaps/`.
    pub heatmaps: bool,
}

pub fn run_pipeline(manifest: &Manifest, cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineSummary> {
    run_pipeline_with(manifest, cfg, out_dir, &RunOptions::default())
}

enum Masked {
    Planned { fallback: bool },
    Failed(FrameError),
}

fn mask_entry(
    manifest: &Manifest,
    entry: &ManifestEntry,
    cfg: &FrameConfig,
    plans_dir: &Path,
    heatmaps_dir: Option<&Path>,
) -> Masked {
    let fail = |stage, e: Error| Masked::Failed(FrameError::new(&entry.id, stage, e));
    let frame = match load_frame(manifest.resolve(entry), &entry.id, &entry.sequence_id, entry.frame_index) {
        Ok(f) => f,
        Err(e) => return fail(Stage::Load, e),
    };
    let fp = match plan_frame(&frame, cfg) {
        Ok(fp) => fp,
        Err(e @ Error::EmptyRoi) => return fail(Stage::Roi, e),
        Err(e) => return fail(Stage::Mask, e),
    };
    if let Err(e) = fp.plan.write_to_dir(plans_dir) {
        return fail(Stage::Write, e);
    }
    if let Some(dir) = heatmaps_dir {
        if let Err(e) = write_heatmaps(&fp, dir) {
            return fail(Stage::Write, e);
        }
    }
    Masked::Planned {
        fallback: fp.maps.prior_fallback,
    }
}

/// Full run: screening, then one mask plan per retained frame, plus
/// `dedup_report.csv`, `errors.csv`, `retained_manifest.jsonl` and
/// `summary.json` in `out_dir`.
pub fn run_pipeline_with(
    manifest: &Manifest,
    cfg: &PipelineConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<PipelineSummary> {
    let started = Instant::now();
    let plans_dir = out_dir.join(PLANS_DIR);
    create_dir(&plans_dir)?;
    let heatmaps_dir = opts.heatmaps.then(|| out_dir.join(HEATMAPS_DIR));
    if let Some(dir) = &heatmaps_dir {
        create_dir(dir)?;
    }
    let pool = worker_pool(cfg.workers)?;

    let Screening {
        report,
        retained,
        mut errors,
        retained_after_visual,
        mut elapsed,
    } = pool.install(|| screen(manifest, cfg))?;

    let t = Instant::now();
    let outcomes: Vec<Masked> = pool.install(|| {
        retained
            .par_iter()
            .map(|e| mask_entry(manifest, e, &cfg.frame, &plans_dir, heatmaps_dir.as_deref()))
            .collect()
    });
    elapsed.insert("roi_and_mask".to_owned(), t.elapsed().as_secs_f64());

    let (mut plans_written, mut prior_fallback_count, mut empty_roi_count) = (0, 0, 0);
    for outcome in outcomes {
        match outcome {
            Masked::Planned { fallback } => {
                plans_written += 1;
                prior_fallback_count += fallback as usize;
            }
            Masked::Failed(err) => {
                empty_roi_count += (err.stage == Stage::Roi) as usize;
                errors.push(err);
            }
        }
    }

    report.write_csv(&out_dir.join(REPORT_FILE))?;
    write_errors(&out_dir.join(ERRORS_FILE), &errors)?;
    let kept: Vec<&ManifestEntry> = retained.iter().collect();
    write_manifest(&out_dir.join(RETAINED_MANIFEST_FILE), &kept, &manifest.base_dir)?;

    let input_count = manifest.len();
    let retained_after_semantic = retained.len();
    elapsed.insert("total".to_owned(), started.elapsed().as_secs_f64());
    let summary = PipelineSummary {
        input_count,
        retained_after_visual,
        retained_after_semantic,
        empty_roi_count,
        plans_written,
        error_count: errors.len(),
        prior_fallback_count,
        degenerate_comparisons: report.degenerate_comparisons,
        retained_fraction: if input_count == 0 {
            0.0
        } else {
            round_sig9(retained_after_semantic as f64 / input_count as f64)
        },
        threshold_vis: cfg.threshold_vis,
        threshold_sem: cfg.threshold_sem,
        elapsed_per_stage: elapsed,
    };
    let path = out_dir.join(SUMMARY_FILE);
    std::fs::write(&path, summary.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
