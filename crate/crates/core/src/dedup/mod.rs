//! Two-stage redundancy screening.
//!
//! The visual stage fingerprints each frame with its low-frequency DCT block
//! and drops frames that are too similar to the last frame kept in the same
//! sequence. The semantic stage then compares externally supplied embeddings
//! of the survivors against every embedding kept so far.
//!
//! Both stages retain a frame when its similarity is `<=` the threshold and
//! drop it when strictly greater, so ties keep data.

pub mod dct;
pub mod embeddings;
pub mod report;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{resize_area, ImagePlane, UltrasoundFrame};
use dct::DctBasis;

pub use report::{DedupEntry, DedupReport, DropStage};

/// Side of the low-frequency DCT block kept as the structural fingerprint.
pub const LOW_FREQ_BLOCK: usize = 8;
/// Fingerprint length: the 8x8 block minus its DC term.
pub const STRUCTURAL_DIM: usize = LOW_FREQ_BLOCK * LOW_FREQ_BLOCK - 1;
/// Side of the square every frame is area-resized to before the DCT.
pub const DEFAULT_DCT_SIZE: usize = 64;
pub const STUB_EMBEDDING_DIM: usize = 32;
/// Vectors with a smaller L2 norm are treated as having no direction.
pub const ZERO_NORM_EPS: f64 = 1e-12;

pub const DEFAULT_THRESHOLD_VIS: f64 = 0.95;
pub const DEFAULT_THRESHOLD_SEM: f64 = 0.90;

/// Low-frequency DCT fingerprint `f_i` of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralFeature(Vec<f64>);

impl StructuralFeature {
    /// Wraps precomputed coefficients, e.g. from another extractor.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature values must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Computes structural fingerprints at a fixed canonical resolution, caching
/// the DCT basis between frames.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    dct_size: usize,
    basis: DctBasis,
}

impl FeatureExtractor {
    pub fn new(dct_size: usize) -> Result<Self> {
        if dct_size < LOW_FREQ_BLOCK {
            return Err(Error::InvalidInput(format!(
                "dct_size must be at least {LOW_FREQ_BLOCK}, got {dct_size}"
            )));
        }
        Ok(Self {
            dct_size,
            basis: DctBasis::new(dct_size, LOW_FREQ_BLOCK),
        })
    }

    pub fn dct_size(&self) -> usize {
        self.dct_size
    }

    pub fn extract(&self, plane: &ImagePlane) -> StructuralFeature {
        let canonical = resize_area(plane, self.dct_size, self.dct_size)
            .expect("dct_size is positive")
            .plane;
        let block = dct::dct2_low_with(&canonical, &self.basis, &self.basis);
        StructuralFeature(block.into_iter().skip(1).collect())
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(DEFAULT_DCT_SIZE).expect("default dct size is valid")
    }
}

/// Structural fingerprint at the default 64x64 canonical size.
pub fn dct_feature(frame: &UltrasoundFrame) -> StructuralFeature {
    FeatureExtractor::default().extract(&frame.pixels)
}

/// Cosine similarity with its zero-norm flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    /// Either input had norm below [`ZERO_NORM_EPS`]; `value` is then 0.
    pub degenerate: bool,
}

/// `a.b / (|a| |b|)`, clamped to `[-1, 1]`. Zero-norm inputs yield 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<Similarity> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "cosine similarity of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return Ok(Similarity {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Similarity {
        value: (dot / (na * nb)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// A screening threshold in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!(
                "similarity threshold must lie in (0, 1], got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    fn is_redundant(self, similarity: f64) -> bool {
        similarity > self.0
    }
}

/// Which earlier frames a candidate is compared with in the visual stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VisualMode {
    /// Only the most recently retained frame of the sequence.
    #[default]
    LastKeeper,
    /// Every frame retained so far in the sequence.
    Pairwise,
}

/// Result of one screening stage, in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreenOutcome {
    pub retained: Vec<String>,
    pub entries: Vec<DedupEntry>,
    /// Comparisons where a zero-norm vector forced similarity to 0.
    pub degenerate_comparisons: usize,
}

impl ScreenOutcome {
    fn keep(&mut self, id: &str) {
        self.retained.push(id.to_owned());
        self.entries.push(DedupEntry::retained(id));
    }

    fn drop(&mut self, id: &str, stage: DropStage, keeper: &str, similarity: f64) {
        self.entries.push(DedupEntry {
            id: id.to_owned(),
            stage,
            keeper_id: Some(keeper.to_owned()),
            similarity: Some(similarity),
        });
    }

    pub fn dropped_count(&self) -> usize {
        self.entries.len() - self.retained.len()
    }
}

/// Greedy structural screening of one temporally ordered sequence.
///
/// The first item is always kept. In [`VisualMode::LastKeeper`] each later
/// item is compared with the most recent keeper only.
pub fn visual_screen<S: AsRef<str>>(
    items: &[(S, StructuralFeature)],
    threshold: f64,
    mode: VisualMode,
) -> Result<ScreenOutcome> {
    let threshold = Threshold::new(threshold)?;
    let mut out = ScreenOutcome::default();
    let mut keepers: Vec<usize> = Vec::new();
    for (i, (id, feature)) in items.iter().enumerate() {
        let id = id.as_ref();
        let against: &[usize] = match mode {
            VisualMode::LastKeeper => keepers.last().map(std::slice::from_ref).unwrap_or(&[]),
            VisualMode::Pairwise => &keepers,
        };
        let mut best: Option<(usize, f64)> = None;
        for &k in against {
            let sim = cosine_similarity(items[k].1.values(), feature.values())?;
            out.degenerate_comparisons += sim.degenerate as usize;
            if best.is_none_or(|(_, s)| sim.value > s) {
                best = Some((k, sim.value));
            }
        }
        match best {
            Some((k, sim)) if threshold.is_redundant(sim) => {
                out.drop(id, DropStage::Visual, items[k].0.as_ref(), sim);
            }
            _ => {
                keepers.push(i);
                out.keep(id);
            }
        }
    }
    Ok(out)
}

/// Visual screening straight from frames of a single sequence.
///
/// Frames must share a `sequence_id` and be sorted by `frame_index`.
pub fn visual_screen_frames(
    frames: &[UltrasoundFrame],
    threshold: f64,
    extractor: &FeatureExtractor,
) -> Result<ScreenOutcome> {
    if let Some(w) = frames.windows(2).find(|w| w[0].frame_index >= w[1].frame_index) {
        return Err(Error::InvalidInput(format!(
            "frames {} and {} are not in increasing frame_index order",
            w[0].id, w[1].id
        )));
    }
    if let Some(f) = frames.iter().find(|f| f.sequence_id != frames[0].sequence_id) {
        return Err(Error::InvalidInput(format!(
            "frame {} belongs to sequence {}, expected {}",
            f.id, f.sequence_id, frames[0].sequence_id
        )));
    }
    let items: Vec<(&str, StructuralFeature)> = frames
        .par_iter()
        .map(|f| (f.id.as_str(), extractor.extract(&f.pixels)))
        .collect();
    visual_screen(&items, threshold, VisualMode::LastKeeper)
}

/// External semantic vector `z_i` for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedding {
    pub source_id: String,
    pub values: Vec<f64>,
}

impl SemanticEmbedding {
    /// Validating constructor used for provider output: rejects empty,
    /// non-finite and zero-norm vectors.
    pub fn new(source_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let source_id = source_id.into();
        if values.is_empty() {
            return Err(Error::InvalidInput(format!("embedding for {source_id} is empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "embedding for {source_id} has non-finite values"
            )));
        }
        let emb = Self { source_id, values };
        if emb.is_degenerate() {
            return Err(Error::InvalidInput(format!(
                "embedding for {} has zero norm",
                emb.source_id
            )));
        }
        Ok(emb)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.norm() < ZERO_NORM_EPS
    }
}

/// Deterministic stand-in for a frozen image encoder: the structural
/// fingerprint truncated (or zero-padded) to 32 values and L2-normalized.
///
/// Frames with a zero fingerprint get an all-zero, degenerate embedding.
pub fn stub_embedding(frame: &UltrasoundFrame) -> SemanticEmbedding {
    stub_embedding_with(frame, &FeatureExtractor::default())
}

pub fn stub_embedding_with(frame: &UltrasoundFrame, extractor: &FeatureExtractor) -> SemanticEmbedding {
    stub_from_feature(&frame.id, &extractor.extract(&frame.pixels))
}

pub fn stub_from_feature(id: &str, feature: &StructuralFeature) -> SemanticEmbedding {
    let mut values = feature.values().to_vec();
    values.resize(STUB_EMBEDDING_DIM, 0.0);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm >= ZERO_NORM_EPS {
        values.iter_mut().for_each(|v| *v /= norm);
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    SemanticEmbedding {
        source_id: id.to_owned(),
        values,
    }
}

fn check_uniform_dim(candidates: &[SemanticEmbedding]) -> Result<()> {
    let Some(first) = candidates.first() else {
        return Ok(());
    };
    match candidates.iter().find(|c| c.values.len() != first.values.len()) {
        Some(other) => Err(Error::EmbeddingLengthMismatch {
            first_id: first.source_id.clone(),
            first_len: first.values.len(),
            other_id: other.source_id.clone(),
            other_len: other.values.len(),
        }),
        None => Ok(()),
    }
}

/// Greedy kept-set semantic screening.
///
/// A candidate is kept iff its largest similarity to every embedding kept so
/// far is `<= threshold`; otherwise it is dropped against the first keeper
/// attaining that maximum. Candidates must already be in the deterministic
/// global order.
pub fn semantic_screen(candidates: &[SemanticEmbedding], threshold: f64) -> Result<ScreenOutcome> {
    let groups = vec![0usize; candidates.len()];
    semantic_screen_grouped(candidates, &groups, threshold)
}

/// Like [`semantic_screen`] but with an independent kept-set per group key,
/// e.g. one per sequence.
pub fn semantic_screen_grouped<K: Ord + Clone>(
    candidates: &[SemanticEmbedding],
    groups: &[K],
    threshold: f64,
) -> Result<ScreenOutcome> {
    let threshold = Threshold::new(threshold)?;
    if groups.len() != candidates.len() {
        return Err(Error::InvalidInput(format!(
            "{} group keys for {} candidates",
            groups.len(),
            candidates.len()
        )));
    }
    check_uniform_dim(candidates)?;

    let mut kept: std::collections::BTreeMap<K, Vec<usize>> = Default::default();
    let mut out = ScreenOutcome::default();
    for (i, cand) in candidates.iter().enumerate() {
        let keepers = kept.entry(groups[i].clone()).or_default();
        let mut best: Option<(usize, f64)> = None;
        for &k in keepers.iter() {
            let sim = cosine_similarity(&candidates[k].values, &cand.values)?;
            out.degenerate_comparisons += sim.degenerate as usize;
            if best.is_none_or(|(_, s)| sim.value > s) {
                best = Some((k, sim.value));
            }
        }
        match best {
            Some((k, sim)) if threshold.is_redundant(sim) => {
                out.drop(&cand.source_id, DropStage::Semantic, &candidates[k].source_id, sim);
            }
            _ => {
                keepers.push(i);
                out.keep(&cand.source_id);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn frame(id: &str, plane: ImagePlane) -> UltrasoundFrame {
        UltrasoundFrame::new(id, "seq", 0, plane).unwrap()
    }

    fn textured(h: usize, w: usize, phase: f64) -> ImagePlane {
        ImagePlane::from_fn(h, w, |y, x| {
            0.5 + 0.25 * ((x as f64 * 0.1 + phase).sin() * (y as f64 * 0.07).cos())
        })
        .unwrap()
    }

    /// Feature vector with a single nonzero coefficient.
    fn axis(k: usize, scale: f64) -> StructuralFeature {
        let mut v = vec![0.0; STRUCTURAL_DIM];
        v[k] = scale;
        StructuralFeature(v)
    }

    /// Unit feature at a given angle in the plane of coefficients 0 and 1.
    fn angled(deg: f64) -> StructuralFeature {
        let mut v = vec![0.0; STRUCTURAL_DIM];
        v[0] = (deg * PI / 180.0).cos();
        v[1] = (deg * PI / 180.0).sin();
        StructuralFeature(v)
    }

    #[test]
    fn constant_image_has_zero_fingerprint() {
        for level in [0.0, 0.3, 1.0] {
            let f = dct_feature(&frame("c", ImagePlane::filled(50, 70, level).unwrap()));
            assert_eq!(f.values().len(), STRUCTURAL_DIM);
            assert!(f.values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn fingerprint_is_linear_in_intensity() {
        let plane = textured(64, 64, 0.3);
        let a = dct_feature(&frame("a", plane.clone()));
        let b = dct_feature(&frame("b", plane.map(|v| 0.5 * v)));
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((0.5 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn first_horizontal_cosine_concentrates_in_first_feature() {
        let n = 64;
        let plane = ImagePlane::from_fn(n, n, |_, x| {
            0.5 + 0.5 * (PI * (2 * x + 1) as f64 / (2 * n) as f64).cos()
        })
        .unwrap();
        let f = dct_feature(&frame("c", plane));
        let energy: f64 = f.values().iter().map(|v| v * v).sum();
        assert!(f.values()[0] * f.values()[0] / energy > 1.0 - 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let s = cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((s.value - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap().value, 0.0);
        let s = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s.value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let z = cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(z, Similarity { value: 0.0, degenerate: true });
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn threshold_range_enforced() {
        assert!(Threshold::new(0.0).is_err());
        assert!(Threshold::new(1.0).is_ok());
        assert!(Threshold::new(1.01).is_err());
        assert!(visual_screen::<&str>(&[], f64::NAN, VisualMode::LastKeeper).is_err());
    }

    #[test]
    fn exact_duplicate_dropped_against_first() {
        let f = axis(3, 2.0);
        let out = visual_screen(&[("a", f.clone()), ("b", f)], 0.95, VisualMode::LastKeeper).unwrap();
        assert_eq!(out.retained, vec!["a"]);
        let e = &out.entries[1];
        assert_eq!(e.stage, DropStage::Visual);
        assert_eq!(e.keeper_id.as_deref(), Some("a"));
        assert!((e.similarity.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_features_all_retained() {
        let items: Vec<_> = (0..5).map(|k| (format!("f{k}"), axis(k, 1.0))).collect();
        let out = visual_screen(&items, 0.01, VisualMode::LastKeeper).unwrap();
        assert_eq!(out.retained.len(), 5);
    }

    #[test]
    fn last_keeper_trace_a_a_prime_b_a() {
        // sim(A, A') = cos 8.1 deg ~ 0.99, sim(A, B) = cos 84.26 deg ~ 0.10
        let a = angled(0.0);
        let a_prime = angled(8.1);
        let b = angled(84.26);
        let sims = [
            cosine_similarity(a.values(), a_prime.values()).unwrap().value,
            cosine_similarity(a.values(), b.values()).unwrap().value,
        ];
        assert!((sims[0] - 0.99).abs() < 1e-3 && (sims[1] - 0.10).abs() < 1e-3);
        let items = [("A", a.clone()), ("A'", a_prime), ("B", b), ("A2", a)];
        let out = visual_screen(&items, 0.95, VisualMode::LastKeeper).unwrap();
        assert_eq!(out.retained, vec!["A", "B", "A2"]);
        // the pairwise option remembers A and drops the repeat
        let out = visual_screen(&items, 0.95, VisualMode::Pairwise).unwrap();
        assert_eq!(out.retained, vec!["A", "B"]);
        assert_eq!(out.entries[3].keeper_id.as_deref(), Some("A"));
    }

    #[test]
    fn ties_at_threshold_are_retained() {
        let items = [("a", axis(0, 1.0)), ("b", axis(0, 3.0))];
        let out = visual_screen(&items, 1.0, VisualMode::LastKeeper).unwrap();
        assert_eq!(out.retained.len(), 2);
    }

    #[test]
    fn empty_input_is_empty_output() {
        let out = visual_screen::<&str>(&[], 0.9, VisualMode::LastKeeper).unwrap();
        assert!(out.retained.is_empty() && out.entries.is_empty());
        let out = semantic_screen(&[], 0.9).unwrap();
        assert!(out.retained.is_empty());
    }

    #[test]
    fn frame_screen_requires_order() {
        let p = textured(16, 16, 0.0);
        let f1 = UltrasoundFrame::new("a", "s", 2, p.clone()).unwrap();
        let f2 = UltrasoundFrame::new("b", "s", 1, p.clone()).unwrap();
        let ex = FeatureExtractor::default();
        assert!(visual_screen_frames(&[f1.clone(), f2], 0.9, &ex).is_err());
        let f3 = UltrasoundFrame::new("c", "other", 3, p).unwrap();
        assert!(visual_screen_frames(&[f1, f3], 0.9, &ex).is_err());
    }

    fn emb(id: &str, v: &[f64]) -> SemanticEmbedding {
        SemanticEmbedding::new(id, v.to_vec()).unwrap()
    }

    #[test]
    fn semantic_duplicate_dropped() {
        let out = semantic_screen(&[emb("1", &[1.0, 2.0]), emb("2", &[1.0, 2.0])], 0.9).unwrap();
        assert_eq!(out.retained, vec!["1"]);
        assert_eq!(out.entries[1].stage, DropStage::Semantic);
    }

    #[test]
    fn semantic_kept_set_trace() {
        // unit vectors in 3-D with s12 = 0.92, s13 = 0.7, s23 = 0.92
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.92, (1.0f64 - 0.92 * 0.92).sqrt(), 0.0];
        let c = (0.92 - 0.92 * 0.7) / e2[1];
        let e3 = [0.7, c, (1.0 - 0.49 - c * c).sqrt()];
        let cands = [emb("1", &e1), emb("2", &e2), emb("3", &e3)];
        let s = |a: &[f64], b: &[f64]| cosine_similarity(a, b).unwrap().value;
        assert!((s(&e1, &e2) - 0.92).abs() < 1e-12);
        assert!((s(&e1, &e3) - 0.7).abs() < 1e-12);
        assert!((s(&e2, &e3) - 0.92).abs() < 1e-12);
        let out = semantic_screen(&cands, 0.9).unwrap();
        assert_eq!(out.retained, vec!["1", "3"]);
    }

    #[test]
    fn semantic_argmax_keeper_recorded() {
        let cands = [
            emb("a", &[1.0, 0.0]),
            emb("b", &[0.0, 1.0]),
            emb("c", &[0.1, 1.0]),
        ];
        let out = semantic_screen(&cands, 0.9).unwrap();
        assert_eq!(out.retained, vec!["a", "b"]);
        assert_eq!(out.entries[2].keeper_id.as_deref(), Some("b"));
    }

    #[test]
    fn semantic_length_mismatch_names_ids() {
        let err = semantic_screen(&[emb("x", &[1.0, 0.0]), emb("y", &[1.0])], 0.9).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('x') && msg.contains('y'), "{msg}");
    }

    #[test]
    fn grouped_semantic_keeps_per_sequence() {
        let cands = [emb("a", &[1.0, 0.0]), emb("b", &[1.0, 0.0])];
        let out = semantic_screen_grouped(&cands, &["s1", "s2"], 0.9).unwrap();
        assert_eq!(out.retained.len(), 2);
    }

    #[test]
    fn zero_norm_embeddings_rejected_by_constructor() {
        assert!(SemanticEmbedding::new("z", vec![0.0; 4]).is_err());
        assert!(SemanticEmbedding::new("e", vec![]).is_err());
        assert!(SemanticEmbedding::new("n", vec![f64::NAN]).is_err());
    }

    #[test]
    fn stub_embedding_properties() {
        let plane = textured(80, 60, 1.1);
        let a = stub_embedding(&frame("a", plane.clone()));
        let b = stub_embedding(&frame("b", plane.clone()));
        assert_eq!(a.values.len(), STUB_EMBEDDING_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.values, b.values);
        let half = stub_embedding(&frame("h", plane.map(|v| v * 0.5)));
        assert!((cosine_similarity(&a.values, &half.values).unwrap().value - 1.0).abs() < 1e-9);

        let flat = stub_embedding(&frame("flat", ImagePlane::filled(32, 32, 0.4).unwrap()));
        assert!(flat.is_degenerate());
        let sim = cosine_similarity(&flat.values, &a.values).unwrap();
        assert_eq!(sim, Similarity { value: 0.0, degenerate: true });
        // degenerate embeddings never collapse onto anything
        let out = semantic_screen(&[flat.clone(), flat], 0.5).unwrap();
        assert_eq!(out.retained.len(), 2);
        assert_eq!(out.degenerate_comparisons, 1);
    }
}
