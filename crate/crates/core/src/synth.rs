//! Synthetic convex-probe frames with a known sector mask.
//!
//! Scenes are a fan-shaped field of view over a black background, filled
//! with smooth tissue-like texture, a few elliptical structures and
//! multiplicative speckle. Used for tests, demos and controlled corpora
//! where the ground truth (mask, uniqueness) is known.
//!
//! Corpora also come with simulated encoder embeddings: each scene gets a
//! random unit direction and each re-render a slightly perturbed copy of it,
//! standing in for a frozen image encoder that recognizes the same anatomy
//! under new speckle.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dedup::embeddings::encode_binary;
use crate::dedup::SemanticEmbedding;
use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

/// Length of the simulated encoder embeddings written with a corpus.
pub const SIM_EMBEDDING_DIM: usize = 64;
/// Per-coordinate noise added to a scene's direction for each re-render.
pub const SIM_EMBEDDING_JITTER: f64 = 0.02;

/// A fan opening downward from its apex, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanGeometry {
    pub apex_y: f64,
    pub apex_x: f64,
    /// Full opening angle in degrees.
    pub opening_deg: f64,
    pub radius: f64,
    pub inner_radius: f64,
}

impl FanGeometry {
    /// Random fan for an `h x w` image with the given opening-angle range.
    pub fn random(h: usize, w: usize, opening_deg: (f64, f64), rng: &mut impl Rng) -> Self {
        let (h, w) = (h as f64, w as f64);
        Self {
            apex_y: rng.random_range(-0.05 * h..0.08 * h),
            apex_x: rng.random_range(0.4 * w..0.6 * w),
            opening_deg: rng.random_range(opening_deg.0..=opening_deg.1),
            radius: rng.random_range(0.8 * h..0.95 * h),
            inner_radius: rng.random_range(0.0..0.08 * h),
        }
    }

    /// Whether the pixel centered at `(y + 0.5, x + 0.5)` lies in the fan.
    pub fn contains(&self, y: usize, x: usize) -> bool {
        let dy = y as f64 + 0.5 - self.apex_y;
        let dx = x as f64 + 0.5 - self.apex_x;
        let dist = dy.hypot(dx);
        if dist > self.radius || dist < self.inner_radius || dy <= 0.0 {
            return false;
        }
        dx.atan2(dy).abs() <= self.opening_deg.to_radians() / 2.0
    }

    pub fn mask(&self, h: usize, w: usize) -> Vec<bool> {
        (0..h * w).map(|p| self.contains(p / w, p % w)).collect()
    }
}

/// An elliptical structure with its own echo level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub cy: f64,
    pub cx: f64,
    pub ry: f64,
    pub rx: f64,
    pub level: f64,
}

/// Low-frequency planar wave `amp * cos(2 pi (fy y/h + fx x/w) + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub fy: f64,
    pub fx: f64,
    pub phase: f64,
    pub amp: f64,
}

/// Everything needed to re-render a frame; speckle is drawn at render time.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub fan: FanGeometry,
    pub base: f64,
    pub waves: Vec<Wave>,
    pub blobs: Vec<Blob>,
}

impl Scene {
    pub fn random(height: usize, width: usize, rng: &mut impl Rng) -> Self {
        let fan = FanGeometry::random(height, width, (45.0, 90.0), rng);
        let (h, w) = (height as f64, width as f64);
        let waves = (0..4)
            .map(|_| Wave {
                fy: rng.random_range(-2.5..2.5),
                fx: rng.random_range(-2.5..2.5),
                phase: rng.random_range(0.0..2.0 * PI),
                amp: rng.random_range(0.05..0.15),
            })
            .collect();
        let blobs = (0..rng.random_range(2..5))
            .map(|_| Blob {
                cy: rng.random_range(0.2 * h..0.9 * h),
                cx: rng.random_range(0.15 * w..0.85 * w),
                ry: rng.random_range(0.06 * h..0.2 * h),
                rx: rng.random_range(0.06 * w..0.2 * w),
                level: if rng.random_bool(0.5) {
                    rng.random_range(0.22..0.3)
                } else {
                    rng.random_range(0.8..0.95)
                },
            })
            .collect();
        Self {
            height,
            width,
            fan,
            base: rng.random_range(0.4..0.65),
            waves,
            blobs,
        }
    }

    /// Echo level before speckle, within `[tissue_min, 1]`.
    fn tissue(&self, y: usize, x: usize, tissue_min: f64) -> f64 {
        let (fy, fx) = (y as f64 / self.height as f64, x as f64 / self.width as f64);
        let mut t = self.base
            + self
                .waves
                .iter()
                .map(|wv| wv.amp * (2.0 * PI * (wv.fy * fy + wv.fx * fx) + wv.phase).cos())
                .sum::<f64>();
        for b in &self.blobs {
            let d = ((y as f64 - b.cy) / b.ry).powi(2) + ((x as f64 - b.cx) / b.rx).powi(2);
            if d <= 1.0 {
                t = b.level;
            }
        }
        t.clamp(tissue_min, 1.0)
    }

    /// Same scene moved by whole pixels, fan included.
    pub fn shifted(&self, dy: f64, dx: f64) -> Self {
        let mut s = self.clone();
        s.fan.apex_y += dy;
        s.fan.apex_x += dx;
        for b in &mut s.blobs {
            b.cy += dy;
            b.cx += dx;
        }
        for wv in &mut s.waves {
            wv.phase -= 2.0 * PI * (wv.fy * dy / self.height as f64 + wv.fx * dx / self.width as f64);
        }
        s
    }
}

/// Renders scenes with multiplicative speckle `t (1 + sigma n)`, `n ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanRenderer {
    pub speckle_sigma: f64,
    /// Lowest tissue echo level inside the fan.
    pub tissue_min: f64,
}

impl Default for FanRenderer {
    fn default() -> Self {
        Self {
            speckle_sigma: 0.05,
            tissue_min: 0.2,
        }
    }
}

impl FanRenderer {
    pub fn render_scene(&self, scene: &Scene, rng: &mut impl Rng) -> (ImagePlane, Vec<bool>) {
        let (h, w) = (scene.height, scene.width);
        let noise = Normal::new(0.0, self.speckle_sigma).expect("finite sigma");
        let mask = scene.fan.mask(h, w);
        let data = (0..h * w)
            .map(|p| {
                if !mask[p] {
                    return 0.0;
                }
                let t = scene.tissue(p / w, p % w, self.tissue_min);
                (t * (1.0 + noise.sample(rng))).clamp(0.0, 1.0)
            })
            .collect();
        (ImagePlane::new(h, w, data).expect("positive size"), mask)
    }

    /// A fan with default texture parameters drawn from `rng`.
    pub fn render(
        &self,
        h: usize,
        w: usize,
        fan: &FanGeometry,
        rng: &mut impl Rng,
    ) -> (ImagePlane, Vec<bool>) {
        let mut scene = Scene::random(h, w, rng);
        scene.fan = *fan;
        self.render_scene(&scene, rng)
    }
}

/// One frame of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFrame {
    pub id: String,
    pub sequence_id: String,
    pub frame_index: u64,
    pub path: PathBuf,
    /// Index of the unique scene this frame renders.
    pub scene: usize,
    pub is_duplicate: bool,
}

/// Layout of a controlled redundancy corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub unique: usize,
    pub duplicates: usize,
    pub sequences: usize,
    pub height: usize,
    pub width: usize,
}

/// Files written by [`write_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: PathBuf,
    /// Simulated encoder embeddings in the binary embedding format.
    pub embeddings: PathBuf,
    pub frames: Vec<CorpusFrame>,
}

fn unit_vector(values: Vec<f64>) -> Vec<f64> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.into_iter().map(|v| v / norm).collect()
}

/// Writes PNG frames, a JSON Lines manifest and `embeddings.bin` into `dir`.
///
/// Each sequence holds a run of unique scenes; every near-duplicate is a
/// re-render of a scene with fresh speckle and a one-pixel jitter, placed
/// directly after its source so that it is temporally adjacent.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec, rng: &mut impl Rng) -> Result<Corpus> {
    if spec.sequences == 0 || spec.unique < spec.sequences {
        return Err(Error::InvalidInput(
            "corpus needs at least one unique frame per sequence".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let renderer = FanRenderer::default();
    let scenes: Vec<Scene> = (0..spec.unique)
        .map(|_| Scene::random(spec.height, spec.width, rng))
        .collect();
    let mut dup_count = vec![0usize; spec.unique];
    for _ in 0..spec.duplicates {
        dup_count[rng.random_range(0..spec.unique)] += 1;
    }

    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let jitter_noise = Normal::new(0.0, SIM_EMBEDDING_JITTER).expect("finite jitter");
    let directions: Vec<Vec<f64>> = (0..spec.unique)
        .map(|_| unit_vector((0..SIM_EMBEDDING_DIM).map(|_| gauss.sample(rng)).collect()))
        .collect();

    let mut frames = Vec::with_capacity(spec.unique + spec.duplicates);
    let mut embeddings = Vec::with_capacity(spec.unique + spec.duplicates);
    for (s, scene) in scenes.iter().enumerate() {
        let seq = s * spec.sequences / spec.unique;
        let sequence_id = format!("seq{seq:03}");
        let first_index = frames.iter().filter(|f: &&CorpusFrame| f.sequence_id == sequence_id).count() as u64;
        for copy in 0..=dup_count[s] {
            let rendered = if copy == 0 {
                scene.clone()
            } else {
                let jitter = [-1.0, 0.0, 1.0];
                scene.shifted(jitter[rng.random_range(0..3)], jitter[rng.random_range(0..3)])
            };
            let (plane, _) = renderer.render_scene(&rendered, rng);
            let id = format!("s{s:04}_c{copy}");
            let direction: Vec<f64> = directions[s].iter().map(|v| v + jitter_noise.sample(rng)).collect();
            embeddings.push(SemanticEmbedding::new(id.clone(), unit_vector(direction))?);
            let path = dir.join(format!("{id}.png"));
            let img = image::GrayImage::from_raw(spec.width as u32, spec.height as u32, plane.to_u8())
                .expect("buffer matches dimensions");
            img.save(&path)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            frames.push(CorpusFrame {
                id,
                sequence_id: sequence_id.clone(),
                frame_index: first_index + copy as u64,
                path,
                scene: s,
                is_duplicate: copy > 0,
            });
        }
    }

    let manifest = dir.join("manifest.jsonl");
    let mut lines = String::new();
    for f in &frames {
        let line = serde_json::json!({
            "id": f.id,
            "path": f.path.file_name().unwrap().to_string_lossy(),
            "sequence_id": f.sequence_id,
            "frame_index": f.frame_index,
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    std::fs::write(&manifest, lines).map_err(|e| Error::io(&manifest, e))?;
    let embeddings_path = dir.join("embeddings.bin");
    std::fs::write(&embeddings_path, encode_binary(&embeddings)?).map_err(|e| Error::io(&embeddings_path, e))?;
    Ok(Corpus {
        manifest,
        embeddings: embeddings_path,
        frames,
    })
}
