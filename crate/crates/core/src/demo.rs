//! End-to-end pipeline: builtin scene → spike dataset → three training runs
//! (spike loss and two reconstruction baselines) → test-view evaluation.
//!
//! Output directory layout:
//!
//! ```text
//! data/                      dataset (manifest, streams, ground truth)
//! <mode>/config.txt          training configuration
//! <mode>/checkpoint.nrf      coarse and fine networks
//! <mode>/train_log.csv
//! <mode>/eval.csv            per test view metrics
//! <mode>/view_###.png        test renders
//! summary.csv                mean test metrics per mode
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::field::checkpoint::save_checkpoint;
use crate::field::encoding::EncodingConfig;
use crate::field::mlp::FieldArch;
use crate::formats::save_png8;
use crate::scenegen::{build_dataset, DatasetSpec, ExposurePreset};
use crate::trainer::{eval_csv, evaluate, log_csv, train, EvalRow, LossMode, TrainConfig};

/// The three supervision modes compared by the demo.
pub const DEMO_MODES: [LossMode; 3] = [LossMode::SpikeRender, LossMode::IntensityMseTfi, LossMode::IntensityMseTfp(32)];

/// Training setup sized for a single CPU core: a narrow network, few
/// samples per ray and a short, fast-decaying schedule.
pub fn desk_config(mode: LossMode, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 1000,
        batch_rays: 128,
        n_coarse: 16,
        n_fine: 16,
        lr_start: 2e-3,
        lr_end: 2e-4,
        seed,
        loss_mode: mode,
        eval_every: 0,
        chunk_rays: 64,
        arch: FieldArch {
            encoding: EncodingConfig { m_pos: 6, m_dir: 2 },
            depth: 4,
            width: 32,
            skip: Some(2),
            dir_width: 16,
            channels: 1,
        },
        density_bias: -4.0,
        ..TrainConfig::default()
    }
}

/// A longer schedule on a wider network.
pub fn full_config(mode: LossMode, seed: u64) -> TrainConfig {
    let mut c = desk_config(mode, seed);
    c.iterations = 5000;
    c.batch_rays = 256;
    c.n_coarse = 32;
    c.n_fine = 32;
    c.arch.width = 64;
    c.arch.dir_width = 32;
    c.arch.encoding.m_pos = 8;
    c
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub preset: ExposurePreset,
    pub fast: bool,
    /// Overrides the iteration count of every run.
    pub iterations: Option<usize>,
}

impl DemoOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed: 0,
            preset: ExposurePreset::Medium,
            fast: true,
            iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: LossMode,
    pub psnr_full: f64,
    pub psnr_obj: f64,
    pub ssim_full: f64,
    pub ssim_obj: f64,
    pub rows: Vec<EvalRow>,
}

fn mean(rows: &[EvalRow], f: impl Fn(&EvalRow) -> f64) -> f64 {
    rows.iter().map(f).sum::<f64>() / rows.len().max(1) as f64
}

fn mode_dir_name(mode: LossMode) -> String {
    mode.name().replace(':', "_")
}

pub fn run(opts: &DemoOptions) -> Result<Vec<ModeSummary>> {
    fs::create_dir_all(&opts.out_dir)?;
    let spec = DatasetSpec::builtin(opts.preset, opts.seed);
    let ds = build_dataset(&spec, &opts.out_dir.join("data"))?;
    let mut out = Vec::with_capacity(DEMO_MODES.len());
    for mode in DEMO_MODES {
        let mut cfg = if opts.fast {
            desk_config(mode, opts.seed)
        } else {
            full_config(mode, opts.seed)
        };
        if let Some(n) = opts.iterations {
            cfg.iterations = n;
        }
        let dir = opts.out_dir.join(mode_dir_name(mode));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.txt"), cfg.to_kv().to_string())?;
        let trained = train(&ds, &cfg)?;
        save_checkpoint(dir.join("checkpoint.nrf"), &[&trained.coarse, &trained.fine])?;
        fs::write(dir.join("train_log.csv"), log_csv(&trained.log))?;
        let (rows, images) = evaluate(&trained.coarse, &trained.fine, &ds, &cfg)?;
        fs::write(dir.join("eval.csv"), eval_csv(&rows))?;
        for (row, img) in rows.iter().zip(&images) {
            save_png8(&dir.join(format!("view_{:03}.png", row.view)), img, 255.0 / spec.scene.exposure)?;
        }
        out.push(ModeSummary {
            mode,
            psnr_full: mean(&rows, |r| r.psnr_full),
            psnr_obj: mean(&rows, |r| r.psnr_obj),
            ssim_full: mean(&rows, |r| r.ssim_full),
            ssim_obj: mean(&rows, |r| r.ssim_obj),
            rows,
        });
    }
    fs::write(opts.out_dir.join("summary.csv"), summary_csv(&out))?;
    Ok(out)
}

pub fn summary_csv(summaries: &[ModeSummary]) -> String {
    let mut s = String::from("mode,psnr_full,psnr_obj,ssim_full,ssim_obj\n");
    for m in summaries {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{:.6}", m.mode.name(), m.psnr_full, m.psnr_obj, m.ssim_full, m.ssim_obj);
    }
    s
}

/// Fixed-width table, best PSNR first.
pub fn format_table(summaries: &[ModeSummary]) -> String {
    let mut sorted: Vec<&ModeSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| b.psnr_full.total_cmp(&a.psnr_full));
    let mut s = format!("{:<18} {:>10} {:>10} {:>10} {:>10}\n", "loss", "psnr_full", "psnr_obj", "ssim_full", "ssim_obj");
    for m in sorted {
        let _ = writeln!(
            s,
            "{:<18} {:>10.3} {:>10.3} {:>10.4} {:>10.4}",
            m.mode.name(),
            m.psnr_full,
            m.psnr_obj,
            m.ssim_full,
            m.ssim_obj
        );
    }
    s
}

/// Every regular file under `dir` with its contents, sorted by path.
pub fn collect_outputs(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap_or(&path).to_path_buf();
                out.push((rel, fs::read(&path)?));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
