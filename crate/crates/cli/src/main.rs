use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sonomask::pipeline::{
    plan_frame, plan_frame_with_roi, run_dedup, run_pipeline_with, write_heatmaps, FramePlan, Manifest,
    PartialConfig, RunOptions,
};
use sonomask::plan::{verify_plan_file, PLAN_SUFFIX};
use sonomask::synth::{write_corpus, CorpusSpec};
use sonomask::{detect_roi, load_frame, Error, RoiMask};

#[derive(Parser)]
#[command(name = "sonomask", version, about = "Ultrasound frame screening and mask planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Screen a manifest for redundant frames.
    Dedup {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Detect the imaging sector of one frame and write it as a PGM mask.
    Roi {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build the mask plan for one frame.
    Mask {
        #[arg(long)]
        input: PathBuf,
        /// Precomputed sector mask; detected from the frame when absent.
        #[arg(long)]
        roi: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Image id; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        /// Also write coverage and distribution heatmaps.
        #[arg(long)]
        viz: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Screen a manifest and write a mask plan for every retained frame.
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        viz: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-check the invariants of plan files or directories of plan files.
    Verify {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Generate a synthetic fan corpus with known near-duplicates.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        unique: usize,
        #[arg(long, default_value_t = 40)]
        duplicates: usize,
        #[arg(long, default_value_t = 4)]
        sequences: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Config file plus per-key overrides.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    threshold_vis: Option<f64>,
    #[arg(long)]
    threshold_sem: Option<f64>,
    #[arg(long)]
    embedding_file: Option<PathBuf>,
    #[arg(long)]
    bg_threshold: Option<f64>,
    #[arg(long)]
    close_radius: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    #[arg(long)]
    target_fraction: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    dct_size: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn merged(&self) -> sonomask::Result<PartialConfig> {
        let base = match &self.config {
            Some(path) => PartialConfig::load(path)?,
            None => PartialConfig::default(),
        };
        let flags = PartialConfig {
            threshold_vis: self.threshold_vis,
            threshold_sem: self.threshold_sem,
            embedding_file: self.embedding_file.clone(),
            bg_threshold: self.bg_threshold,
            close_radius: self.close_radius,
            tau: self.tau,
            mu: self.mu,
            sigma: self.sigma,
            k: self.k,
            lambda: self.lambda,
            mask_ratio: self.mask_ratio,
            target_fraction: self.target_fraction,
            patch_size: self.patch_size,
            dct_size: self.dct_size,
            workers: self.workers,
            seed: self.seed,
        };
        Ok(base.merge(&flags))
    }
}

/// Exit status 2 for bad configs or manifests, 1 for anything else.
enum Failure {
    Usage(anyhow::Error),
    Batch(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Manifest { .. } => Failure::Usage(e.into()),
            other => Failure::Batch(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Batch(e)
    }
}

/// Config or manifest files that cannot be read are usage errors too.
fn usage<T>(r: sonomask::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Io { .. } | Error::Json { .. } => Failure::Usage(e.into()),
        other => other.into(),
    })
}

fn load_manifest(path: &Path) -> Result<Manifest, Failure> {
    usage(Manifest::load(path))
}

fn dedup(manifest: &Path, out: &Path, config: &ConfigArgs) -> Result<(), Failure> {
    let cfg = usage(config.merged())?.resolve()?;
    let manifest = load_manifest(manifest)?;
    let screening = run_dedup(&manifest, &cfg, out)?;
    println!(
        "input {}, after visual {}, retained {}, errors {}",
        screening.report.input_count() + screening.errors.len(),
        screening.retained_after_visual,
        screening.retained.len(),
        screening.errors.len()
    );
    Ok(())
}

fn roi(input: &Path, out: &Path, config: &ConfigArgs) -> Result<(), Failure> {
    let cfg = usage(config.merged())?.resolve_frame()?;
    let frame = load_frame(input, &frame_id(input, None), "", 0)?;
    let mask = detect_roi(&frame, cfg.bg_threshold, cfg.close_radius)?;
    mask.write_pgm(out)?;
    println!(
        "{} of {} pixels inside the sector",
        mask.pixel_count(),
        mask.height() * mask.width()
    );
    Ok(())
}

fn frame_id(input: &Path, id: Option<&str>) -> String {
    id.map(str::to_owned).unwrap_or_else(|| {
        input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "frame".to_owned())
    })
}

fn mask(
    input: &Path,
    roi: Option<&Path>,
    out: &Path,
    id: Option<&str>,
    viz: bool,
    config: &ConfigArgs,
) -> Result<(), Failure> {
    let cfg = usage(config.merged())?.resolve_frame()?;
    let frame = load_frame(input, &frame_id(input, id), "", 0)?;
    let fp: FramePlan = match roi {
        Some(path) => plan_frame_with_roi(&frame, RoiMask::read_image(path)?, &cfg)?,
        None => plan_frame(&frame, &cfg)?,
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = fp.plan.write_to_dir(out)?;
    if viz {
        write_heatmaps(&fp, out)?;
    }
    for w in &fp.plan.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: {} visible, {} masked, {} targets",
        path.display(),
        fp.plan.visible.len(),
        fp.plan.masked.len(),
        fp.plan.targets.len()
    );
    Ok(())
}

fn pipeline(manifest: &Path, out: &Path, viz: bool, config: &ConfigArgs) -> Result<(), Failure> {
    let cfg = usage(config.merged())?.resolve()?;
    let manifest = load_manifest(manifest)?;
    let summary = run_pipeline_with(&manifest, &cfg, out, &RunOptions { heatmaps: viz })?;
    println!(
        "input {}, after visual {}, after semantic {}, plans {}, empty ROI {}, errors {}",
        summary.input_count,
        summary.retained_after_visual,
        summary.retained_after_semantic,
        summary.plans_written,
        summary.empty_roi_count,
        summary.error_count
    );
    Ok(())
}

fn plan_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(PLAN_SUFFIX))
        .collect();
    // a pipeline output directory keeps its plans one level down
    let nested = path.join(sonomask::pipeline::PLANS_DIR);
    if files.is_empty() && nested.is_dir() {
        return plan_files(&nested);
    }
    files.sort();
    Ok(files)
}

fn verify(paths: &[PathBuf]) -> Result<(), Failure> {
    let (mut checked, mut bad) = (0, 0);
    for p in paths {
        for file in plan_files(p)? {
            checked += 1;
            match verify_plan_file(&file) {
                Ok(v) if v.is_empty() => {}
                Ok(v) => {
                    bad += 1;
                    for msg in v {
                        println!("{}: {msg}", file.display());
                    }
                }
                Err(e) => {
                    bad += 1;
                    println!("{}: {e}", file.display());
                }
            }
        }
    }
    println!("{checked} plan files checked, {bad} invalid");
    if bad > 0 || checked == 0 {
        return Err(Failure::Batch(anyhow!("verification failed")));
    }
    Ok(())
}

fn synth(out: &Path, spec: CorpusSpec, seed: u64) -> Result<(), Failure> {
    let corpus = write_corpus(out, &spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    println!(
        "{} frames, manifest {}, embeddings {}",
        corpus.frames.len(),
        corpus.manifest.display(),
        corpus.embeddings.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Dedup { manifest, out, config } => dedup(manifest, out, config),
        Command::Roi { input, out, config } => roi(input, out, config),
        Command::Mask {
            input,
            roi,
            out,
            id,
            viz,
            config,
        } => mask(input, roi.as_deref(), out, id.as_deref(), *viz, config),
        Command::Pipeline {
            manifest,
            out,
            viz,
            config,
        } => pipeline(manifest, out, *viz, config),
        Command::Verify { paths } => verify(paths),
        Command::Synth {
            out,
            unique,
            duplicates,
            sequences,
            size,
            seed,
        } => synth(
            out,
            CorpusSpec {
                unique: *unique,
                duplicates: *duplicates,
                sequences: *sequences,
                height: *size,
                width: *size,
            },
            *seed,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Batch(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
