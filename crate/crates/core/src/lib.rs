//! Curation and mask generation for ultrasound pre-training data.
//!
//! Frames go through two redundancy screens ([`dedup`]), sector detection
//! ([`roi`]) and prior-guided mask sampling ([`masking`]), and come out as
//! one [`plan::MaskPlan`] file each. [`pipeline`] wires the stages together
//! for a manifest of frames.

pub mod dedup;
pub mod error;
pub mod imaging;
pub mod masking;
pub mod pipeline;
pub mod plan;
pub mod roi;
pub mod synth;

pub use error::{Error, Result};
pub use imaging::{load_frame, ImagePlane, PatchGrid, UltrasoundFrame};
pub use masking::{sample_mask_plan, score_maps, PtcmConfig, ScoreMaps};
pub use plan::MaskPlan;
pub use roi::{detect_roi, patch_coverage, polar_landmarks, CoverageGrid, PolarGeometry, RoiMask};
