//! `spikefield` command-line front end.
//!
//! [`run`] parses arguments and dispatches; exit codes are 0 on success,
//! 1 on a usage error and 2 on a runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use spikefield_core::config::KeyValues;
use spikefield_core::demo::{self, DemoOptions};
use spikefield_core::field::checkpoint::{load_checkpoint, save_checkpoint};
use spikefield_core::field::geometry::Camera;
use spikefield_core::field::RadianceFieldParams;
use spikefield_core::formats::{decode_pgm, read_intensity_map, read_nonuniformity, save_png8, write_intensity_map, write_nonuniformity};
use spikefield_core::recon::{long_term_rate, tfi, tfp};
use spikefield_core::scenegen::{load_dataset, parse_pose, render_image, DatasetSpec, ExposurePreset};
use spikefield_core::sim::{calibrate, simulate_stream, NonuniformityMap, ROrientation, ResetMode, SpikeCameraModel};
use spikefield_core::trainer::{eval_csv, evaluate, log_csv, render_view, train_with, TrainConfig};
use spikefield_core::{IntensityImage, SpikeStream};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spikefield_core::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "spikefield", version, about = "Spike camera simulation and spike-supervised radiance fields")]
struct Cli {
    /// Worker threads (default: logical cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a spike stream from a static scene.
    Simulate(SimulateArgs),
    /// Estimate dark current and nonuniformity from calibration captures.
    Calibrate(CalibrateArgs),
    /// Reconstruct an intensity image from a spike stream.
    Reconstruct(ReconstructArgs),
    /// Train coarse and fine fields on a dataset directory.
    Train(TrainArgs),
    /// Render one view from a checkpoint.
    Render(RenderArgs),
    /// Score a checkpoint on the test views of a dataset.
    Eval(EvalArgs),
    /// Run the whole pipeline on the builtin scene and print the PSNR table.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// `builtin`, `builtin:<low|medium|high>`, or a `.pgm`/`.spm` intensity image.
    #[arg(long, default_value = "builtin")]
    scene: String,
    /// View of the builtin pose ring to render.
    #[arg(long, default_value_t = 0)]
    view: usize,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Uniform dark current.
    #[arg(long, default_value_t = 0.0)]
    dark: f64,
    /// `.spm` map, or the standard deviation of a random map around 1.
    #[arg(long, default_value = "0")]
    nonuniformity: String,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    shot_noise: bool,
    #[arg(long, default_value_t = 1.0)]
    photon_scale: f64,
    #[arg(long, value_enum, default_value_t = Reset::Soft)]
    reset: Reset,
    #[arg(long, default_value_t = 256)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Reset {
    Soft,
    Hard,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    dark: PathBuf,
    #[arg(long)]
    lit1: PathBuf,
    #[arg(long)]
    l1: f64,
    #[arg(long)]
    lit2: PathBuf,
    #[arg(long)]
    l2: f64,
    #[arg(long)]
    out_ld: PathBuf,
    #[arg(long)]
    out_r: PathBuf,
    /// Take the nonuniformity ratio the other way round.
    #[arg(long)]
    literal_eq7: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    Tfi,
    Tfp,
    Rate,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Time step (default: middle of the stream).
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 32)]
    window: usize,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Pixel value = intensity × scale (default maps θ to 255).
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// `key = value` training configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// View index, or a file holding a 12-number `[R|t]` pose.
    #[arg(long)]
    view: String,
    /// Dataset supplying cameras and bounds (default: the builtin ring).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training configuration supplying sample counts.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// Small network and short schedule.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value = "spikefield_demo")]
    out: PathBuf,
    #[arg(long, default_value = "medium")]
    preset: String,
    /// Override the iteration count of every run.
    #[arg(long)]
    iterations: Option<usize>,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let _ = e.print();
                    1
                }
            };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Invalid(format!("thread pool: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed.unwrap_or(0)),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Demo(a) => demo_cmd(a, cli.seed.unwrap_or(0)),
    }
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read_stream(path: &Path) -> CliResult<SpikeStream> {
    Ok(SpikeStream::from_bytes(&read_file(path)?)?)
}

fn load_scene_image(scene: &str, view: usize) -> CliResult<IntensityImage> {
    if let Some(rest) = scene.strip_prefix("builtin") {
        let preset = match rest.strip_prefix(':') {
            Some(p) => ExposurePreset::parse(p)?,
            None if rest.is_empty() => ExposurePreset::Medium,
            None => return Err(CliError::Invalid(format!("unknown scene `{scene}`"))),
        };
        let spec = DatasetSpec::builtin(preset, 0);
        if view >= spec.ring.views {
            return Err(CliError::Invalid(format!("view {view} outside the {}-view ring", spec.ring.views)));
        }
        let cam = spec.ring.cameras().swap_remove(view);
        return Ok(render_image(&spec.scene, &cam)?);
    }
    let path = Path::new(scene);
    let bytes = read_file(path)?;
    if bytes.starts_with(b"P5") {
        Ok(decode_pgm(&bytes, 1.0)?)
    } else {
        Ok(read_intensity_map(path)?)
    }
}

fn simulate(a: &SimulateArgs, seed: u64) -> CliResult<()> {
    let frame = load_scene_image(&a.scene, a.view)?;
    let (w, h) = (frame.width(), frame.height());
    let mut model = SpikeCameraModel::ideal(w, h, a.theta);
    model.dark_current = IntensityImage::constant(w, h, a.dark)?;
    model.nonuniformity = match a.nonuniformity.parse::<f64>() {
        Ok(sigma) => NonuniformityMap::random_with_sigma(w, h, sigma, seed)?,
        Err(_) => read_nonuniformity(Path::new(&a.nonuniformity))?,
    };
    model.shot_noise = a.shot_noise;
    model.photon_scale = a.photon_scale;
    model.reset_mode = match a.reset {
        Reset::Soft => ResetMode::SubtractThreshold,
        Reset::Hard => ResetMode::ResetToZero,
    };
    let stream = simulate_stream(&[frame], &model, a.steps, seed)?;
    write_file(&a.out, stream.to_bytes())
}

fn calibrate_cmd(a: &CalibrateArgs) -> CliResult<()> {
    let dark = read_stream(&a.dark)?;
    let lit1 = read_stream(&a.lit1)?;
    let lit2 = read_stream(&a.lit2)?;
    let orientation = if a.literal_eq7 {
        ROrientation::Literal
    } else {
        ROrientation::ThresholdScale
    };
    let (record, map) = calibrate(&dark, &lit1, a.l1, &lit2, a.l2, orientation)?;
    write_intensity_map(&a.out_ld, &record.ld_map)?;
    write_nonuniformity(&a.out_r, &map)?;
    Ok(())
}

fn reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let stream = read_stream(&a.input)?;
    let t = a.t.unwrap_or(stream.steps() / 2);
    let image = match a.method {
        Method::Tfi => tfi(&stream, t, a.theta)?.image,
        Method::Tfp => tfp(&stream, t, a.window, a.theta)?,
        Method::Rate => long_term_rate(&stream, a.theta),
    };
    Ok(save_png8(&a.out, &image, a.scale.unwrap_or(255.0 / a.theta))?)
}

fn load_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    match path {
        Some(p) => {
            let text = String::from_utf8(read_file(p)?).map_err(|_| CliError::Invalid(format!("{}: not UTF-8", p.display())))?;
            Ok(TrainConfig::from_kv(&KeyValues::parse(&text)?)?)
        }
        None => Ok(TrainConfig::default()),
    }
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ds = load_dataset(&a.data)?;
    let stderr = std::io::stderr();
    let out = train_with(&ds, &cfg, |e| {
        let _ = writeln!(stderr.lock(), "iter {} lr {:.3e} loss {:.6e}", e.iteration, e.lr, e.loss);
    })?;
    save_checkpoint(&a.out, &[&out.coarse, &out.fine])?;
    if let Some(log) = &a.log {
        write_file(log, log_csv(&out.log))?;
    }
    Ok(())
}

fn load_pair(path: &Path) -> CliResult<(RadianceFieldParams, RadianceFieldParams)> {
    let mut nets = load_checkpoint(path)?;
    if nets.len() != 2 {
        return Err(CliError::Invalid(format!(
            "{}: expected coarse and fine networks, found {}",
            path.display(),
            nets.len()
        )));
    }
    let fine = nets.pop().expect("two networks");
    let coarse = nets.pop().expect("two networks");
    Ok((coarse, fine))
}

fn render(a: &RenderArgs) -> CliResult<()> {
    let (coarse, fine) = load_pair(&a.ckpt)?;
    let cfg = load_config(a.config.as_deref())?;
    let (cams, near, far, theta) = match &a.data {
        Some(d) => {
            let ds = load_dataset(d)?;
            (ds.cameras, ds.near, ds.far, ds.theta)
        }
        None => {
            let spec = DatasetSpec::builtin(ExposurePreset::Medium, 0);
            (spec.ring.cameras(), spec.near, spec.far, spec.noise.theta)
        }
    };
    let cam = match a.view.parse::<usize>() {
        Ok(i) => cams
            .get(i)
            .cloned()
            .ok_or_else(|| CliError::Invalid(format!("view {i} outside the {}-view set", cams.len())))?,
        Err(_) => {
            let text = String::from_utf8(read_file(Path::new(&a.view))?)
                .map_err(|_| CliError::Invalid(format!("{}: not UTF-8", a.view)))?;
            let template = cams.first().ok_or_else(|| CliError::Invalid("no cameras".into()))?;
            Camera {
                pose: parse_pose(text.trim())?,
                ..template.clone()
            }
        }
    };
    let img = render_view(&coarse, &fine, &cam, near, far, cfg.n_coarse, cfg.n_fine)?;
    Ok(save_png8(&a.out, &img, a.scale.unwrap_or(255.0 / theta))?)
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let (coarse, fine) = load_pair(&a.ckpt)?;
    let cfg = load_config(a.config.as_deref())?;
    let ds = load_dataset(&a.data)?;
    let (rows, _) = evaluate(&coarse, &fine, &ds, &cfg)?;
    write_file(&a.out, eval_csv(&rows))
}

fn demo_cmd(a: &DemoArgs, seed: u64) -> CliResult<()> {
    let opts = DemoOptions {
        out_dir: a.out.clone(),
        seed,
        preset: ExposurePreset::parse(&a.preset)?,
        fast: a.fast,
        iterations: a.iterations,
    };
    let summaries = demo::run(&opts)?;
    print!("{}", demo::format_table(&summaries));
    Ok(())
}
