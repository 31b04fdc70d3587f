//! Radiance-field optimization against spike streams.
//!
//! Each iteration draws a batch of (view, pixel) rays, renders them with a
//! coarse and a fine network, scores both renders with the selected loss,
//! and takes one Adam step on each network. Rays are processed in fixed-size
//! chunks whose random streams and gradient buffers depend only on the chunk
//! index, so results are identical for any worker count.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::field::geometry::{generate_ray, Camera, Ray};
use crate::field::mlp::{backward_batch, forward_batch, FieldArch, FieldOutput, RadianceFieldParams};
use crate::field::render::{volume_render, volume_render_backward, Sample};
use crate::field::sampling::{bin_edges, deltas, hierarchical_sample, merge, stratified_samples};
use crate::metrics::{psnr, psnr_masked, ssim_masked};
use crate::parallel;
use crate::recon::{tfi, tfp};
use crate::scenegen::{SceneDataset, Split};
use crate::sim::ResetMode;
use crate::snn::{pairwise_sum, spike_render_loss, IFLayerConfig};
use crate::spike::{IntensityImage, PixelCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Squared spike-count discrepancy through the integrate-and-fire layer.
    SpikeRender,
    /// Squared error against the interval reconstruction.
    IntensityMseTfi,
    /// As above with the reconstruction multiplied by the pixel's `R`.
    IntensityMseTfiCorrected,
    /// Squared error against the windowed playback reconstruction.
    IntensityMseTfp(usize),
}

impl LossMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spike_render" => Ok(Self::SpikeRender),
            "mse_tfi" => Ok(Self::IntensityMseTfi),
            "mse_tfi_corrected" => Ok(Self::IntensityMseTfiCorrected),
            _ => match s.strip_prefix("mse_tfp") {
                Some(rest) => {
                    let w = rest
                        .trim_start_matches([':', '('])
                        .trim_end_matches(')')
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad playback window in `{s}`")))?;
                    Ok(Self::IntensityMseTfp(w))
                }
                None => Err(Error::Parse(format!("unknown loss mode `{s}`"))),
            },
        }
    }

    pub fn name(self) -> String {
        match self {
            Self::SpikeRender => "spike_render".into(),
            Self::IntensityMseTfi => "mse_tfi".into(),
            Self::IntensityMseTfiCorrected => "mse_tfi_corrected".into(),
            Self::IntensityMseTfp(w) => format!("mse_tfp:{w}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub snn: IFLayerConfig,
    /// Test-view PSNR is logged every `eval_every` iterations; 0 disables it.
    pub eval_every: usize,
    /// Rays per work unit; fixes the reduction order.
    pub chunk_rays: usize,
    pub arch: FieldArch,
    pub density_bias: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_rays: 1024,
            n_coarse: 32,
            n_fine: 64,
            lr_start: 5e-4,
            lr_end: 5e-5,
            seed: 0,
            loss_mode: LossMode::SpikeRender,
            snn: IFLayerConfig::default(),
            eval_every: 0,
            chunk_rays: 64,
            arch: FieldArch::default(),
            density_bias: -1.0,
        }
    }
}

const KEYS: &[&str] = &[
    "iterations",
    "batch_rays",
    "n_coarse",
    "n_fine",
    "lr_start",
    "lr_end",
    "seed",
    "loss_mode",
    "eval_every",
    "chunk_rays",
    "field.m_pos",
    "field.m_dir",
    "field.depth",
    "field.width",
    "field.skip",
    "field.dir_width",
    "field.channels",
    "field.density_bias",
    "snn.v_th",
    "snn.steps",
    "snn.reset",
    "snn.detach_reset",
    "snn.literal_scale_output",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_start >= self.lr_end && self.lr_end > 0.0) {
            return Err(Error::Invalid(format!(
                "learning rates must satisfy lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.batch_rays == 0 || self.chunk_rays == 0 {
            return Err(Error::Invalid("batch_rays and chunk_rays must be at least 1".into()));
        }
        if self.n_coarse < 2 {
            return Err(Error::Invalid("n_coarse must be at least 2".into()));
        }
        if let LossMode::IntensityMseTfp(0) = self.loss_mode {
            return Err(Error::EmptyWindow);
        }
        self.snn.validate()?;
        self.arch.validate()
    }

    /// `lr_start·(lr_end/lr_start)^(iter/iterations)`, exact at both ends.
    pub fn learning_rate(&self, iter: usize) -> f64 {
        if iter == 0 || self.iterations == 0 {
            self.lr_start
        } else if iter >= self.iterations {
            self.lr_end
        } else {
            self.lr_start * (self.lr_end / self.lr_start).powf(iter as f64 / self.iterations as f64)
        }
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let mut c = Self::default();
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        take!("iterations", c.iterations);
        take!("batch_rays", c.batch_rays);
        take!("n_coarse", c.n_coarse);
        take!("n_fine", c.n_fine);
        take!("lr_start", c.lr_start);
        take!("lr_end", c.lr_end);
        take!("seed", c.seed);
        take!("eval_every", c.eval_every);
        take!("chunk_rays", c.chunk_rays);
        take!("field.m_pos", c.arch.encoding.m_pos);
        take!("field.m_dir", c.arch.encoding.m_dir);
        take!("field.depth", c.arch.depth);
        take!("field.width", c.arch.width);
        take!("field.dir_width", c.arch.dir_width);
        take!("field.channels", c.arch.channels);
        take!("field.density_bias", c.density_bias);
        take!("snn.v_th", c.snn.v_th);
        take!("snn.steps", c.snn.steps);
        take!("snn.detach_reset", c.snn.detach_reset);
        take!("snn.literal_scale_output", c.snn.literal_scale_output);
        if let Some(s) = kv.raw("field.skip") {
            c.arch.skip = match s {
                "none" => None,
                n => Some(n.parse().map_err(|_| Error::Parse(format!("`field.skip`: cannot parse `{n}`")))?),
            };
        }
        if let Some(s) = kv.raw("snn.reset") {
            c.snn.reset_mode = ResetMode::parse(s)?;
        }
        if let Some(s) = kv.raw("loss_mode") {
            c.loss_mode = LossMode::parse(s)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("iterations", self.iterations);
        kv.set("batch_rays", self.batch_rays);
        kv.set("n_coarse", self.n_coarse);
        kv.set("n_fine", self.n_fine);
        kv.set("lr_start", format!("{:?}", self.lr_start));
        kv.set("lr_end", format!("{:?}", self.lr_end));
        kv.set("seed", self.seed);
        kv.set("loss_mode", self.loss_mode.name());
        kv.set("eval_every", self.eval_every);
        kv.set("chunk_rays", self.chunk_rays);
        kv.set("field.m_pos", self.arch.encoding.m_pos);
        kv.set("field.m_dir", self.arch.encoding.m_dir);
        kv.set("field.depth", self.arch.depth);
        kv.set("field.width", self.arch.width);
        kv.set("field.skip", self.arch.skip.map_or("none".to_string(), |s| s.to_string()));
        kv.set("field.dir_width", self.arch.dir_width);
        kv.set("field.channels", self.arch.channels);
        kv.set("field.density_bias", format!("{:?}", self.density_bias));
        kv.set("snn.v_th", format!("{:?}", self.snn.v_th));
        kv.set("snn.steps", self.snn.steps);
        kv.set("snn.reset", self.snn.reset_mode.as_str());
        kv.set("snn.detach_reset", self.snn.detach_reset);
        kv.set("snn.literal_scale_output", self.snn.literal_scale_output);
        kv
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Per-pixel supervision precomputed from one view.
#[derive(Debug, Clone)]
struct ViewTargets {
    counts: Vec<usize>,
    intensity: Vec<f64>,
}

fn view_targets(ds: &SceneDataset, view: usize, cfg: &TrainConfig) -> Result<ViewTargets> {
    let stream = &ds.spikes[view];
    let steps = cfg.snn.steps;
    let counts = (0..stream.pixel_count()).map(|p| stream.count_index(p, 0, steps)).collect();
    let t_mid = stream.steps() / 2;
    let intensity = match cfg.loss_mode {
        LossMode::SpikeRender => Vec::new(),
        LossMode::IntensityMseTfi => tfi(stream, t_mid, ds.theta)?.image.values().to_vec(),
        LossMode::IntensityMseTfiCorrected => tfi(stream, t_mid, ds.theta)?
            .image
            .values()
            .iter()
            .zip(ds.nonuniformity.values())
            .map(|(v, r)| v * r)
            .collect(),
        LossMode::IntensityMseTfp(w) => tfp(stream, t_mid, w, ds.theta)?.values().to_vec(),
    };
    Ok(ViewTargets { counts, intensity })
}

#[derive(Debug, Clone, Copy)]
struct RayJob {
    view: usize,
    pixel: usize,
}

/// Scalar intensity of a rendered color and its pullback.
fn intensity_of(color: &[f64]) -> f64 {
    color.iter().sum::<f64>() / color.len() as f64
}

struct PassOutput {
    out: FieldOutput,
    rendered: Vec<(f64, crate::field::render::RenderCache, Vec<f64>)>,
}

/// Evaluates one network on `depths[r]` along each ray and composites.
fn render_pass(params: &RadianceFieldParams, rays: &[Ray], depths: &[Vec<f64>]) -> Result<PassOutput> {
    let total: usize = depths.iter().map(Vec::len).sum();
    let mut pos = Vec::with_capacity(total);
    let mut dirs = Vec::with_capacity(total);
    for (ray, d) in rays.iter().zip(depths) {
        for &t in d {
            pos.push(ray.at(t).to_array());
            dirs.push(ray.direction.to_array());
        }
    }
    let out = forward_batch(params, &pos, &dirs)?;
    let ch = params.arch.channels;
    let mut rendered = Vec::with_capacity(rays.len());
    let mut row = 0;
    for (ray, d) in rays.iter().zip(depths) {
        let dl = deltas(d, ray.far);
        let samples: Vec<Sample> = (0..d.len())
            .map(|k| Sample {
                sigma: out.sigma[row + k],
                color: (0..ch).map(|c| out.color[[row + k, c]]).collect(),
                delta: dl[k],
            })
            .collect();
        let r = volume_render(&samples)?;
        rendered.push((intensity_of(&r.color), r.cache, r.weights));
        row += d.len();
    }
    Ok(PassOutput { out, rendered })
}

fn pass_backward(params: &RadianceFieldParams, pass: &PassOutput, grad_intensity: &[f64], grads: &mut [f64]) -> Result<()> {
    let n = pass.out.sigma.len();
    let ch = params.arch.channels;
    let mut gs = Array1::zeros(n);
    let mut gc = Array2::zeros((n, ch));
    let mut row = 0;
    for ((_, cache, weights), &g) in pass.rendered.iter().zip(grad_intensity) {
        let per_channel = vec![g / ch as f64; ch];
        let rg = volume_render_backward(cache, &per_channel)?;
        for k in 0..weights.len() {
            gs[row + k] = rg.sigma[k];
            for c in 0..ch {
                gc[[row + k, c]] = rg.color[k][c];
            }
        }
        row += weights.len();
    }
    backward_batch(params, &pass.out.cache, gs.view(), gc.view(), grads, false)?;
    Ok(())
}

/// Coarse depths, then fine depths merged with them, for every ray.
fn sample_depths<R: Rng>(
    coarse: &PassOutput,
    rays: &[Ray],
    coarse_depths: &[Vec<f64>],
    n_fine: usize,
    mut rng: Option<&mut R>,
) -> Vec<Vec<f64>> {
    rays.iter()
        .zip(coarse_depths)
        .zip(&coarse.rendered)
        .map(|((ray, cd), (_, _, weights))| {
            let edges = bin_edges(ray.near, ray.far, cd.len());
            let fine = hierarchical_sample(weights, &edges, n_fine, rng.as_deref_mut());
            merge(cd, &fine)
        })
        .collect()
}

struct ChunkResult {
    losses: Vec<f64>,
    grads_coarse: Vec<f64>,
    grads_fine: Vec<f64>,
}

struct Context<'a> {
    ds: &'a SceneDataset,
    targets: &'a [Option<ViewTargets>],
    cfg: &'a TrainConfig,
}

fn ray_for(ds: &SceneDataset, job: RayJob) -> Result<Ray> {
    let w = ds.width();
    generate_ray(&ds.cameras[job.view], PixelCoord::new(job.pixel % w, job.pixel / w), ds.near, ds.far)
}

/// Loss and d(loss)/d(intensity) for one rendered intensity.
fn ray_loss(ctx: &Context, job: RayJob, intensity: f64) -> Result<(f64, f64)> {
    let t = ctx.targets[job.view].as_ref().expect("training view");
    match ctx.cfg.loss_mode {
        LossMode::SpikeRender => {
            let r = ctx.ds.nonuniformity.values()[job.pixel];
            let l = spike_render_loss(intensity + ctx.ds.dark_current, t.counts[job.pixel], r, &ctx.cfg.snn)?;
            Ok((l.loss, l.grad))
        }
        _ => {
            let d = intensity - t.intensity[job.pixel];
            Ok((d * d, 2.0 * d))
        }
    }
}

fn run_chunk(
    ctx: &Context,
    coarse: &RadianceFieldParams,
    fine: &RadianceFieldParams,
    jobs: &[RayJob],
    rng: &mut ChaCha8Rng,
    iteration: usize,
) -> Result<ChunkResult> {
    let cfg = ctx.cfg;
    let rays: Vec<Ray> = jobs.iter().map(|&j| ray_for(ctx.ds, j)).collect::<Result<_>>()?;
    let coarse_depths: Vec<Vec<f64>> = rays
        .iter()
        .map(|r| stratified_samples(r.near, r.far, cfg.n_coarse, Some(&mut *rng)))
        .collect();
    let pc = render_pass(coarse, &rays, &coarse_depths)?;
    let fine_depths = sample_depths(&pc, &rays, &coarse_depths, cfg.n_fine, Some(&mut *rng));
    let pf = render_pass(fine, &rays, &fine_depths)?;

    let mut losses = Vec::with_capacity(jobs.len());
    let mut gc = Vec::with_capacity(jobs.len());
    let mut gf = Vec::with_capacity(jobs.len());
    for (k, &job) in jobs.iter().enumerate() {
        let ic = pc.rendered[k].0;
        let ifine = pf.rendered[k].0;
        let (lc, dc) = ray_loss(ctx, job, ic)?;
        let (lf, df) = ray_loss(ctx, job, ifine)?;
        let loss = lc + lf;
        if !loss.is_finite() || !dc.is_finite() || !df.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                detail: format!(
                    "view {} pixel {}: coarse intensity {ic}, fine intensity {ifine}, loss {lc}+{lf}, grads {dc}/{df}",
                    job.view, job.pixel
                ),
            });
        }
        losses.push(loss);
        gc.push(dc);
        gf.push(df);
    }
    let mut grads_coarse = vec![0.0; coarse.len()];
    let mut grads_fine = vec![0.0; fine.len()];
    pass_backward(coarse, &pc, &gc, &mut grads_coarse)?;
    pass_backward(fine, &pf, &gf, &mut grads_fine)?;
    Ok(ChunkResult {
        losses,
        grads_coarse,
        grads_fine,
    })
}

fn chunk_rng(seed: u64, iteration: usize, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 24) ^ chunk as u64 ^ 0x5EED_0000_0000_0000);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub lr: f64,
    /// Mean over the batch of coarse + fine loss.
    pub loss: f64,
    pub test_psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub coarse: RadianceFieldParams,
    pub fine: RadianceFieldParams,
    pub log: Vec<LogEntry>,
}

pub fn init_networks(cfg: &TrainConfig) -> Result<(RadianceFieldParams, RadianceFieldParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let coarse = RadianceFieldParams::init(cfg.arch.clone(), cfg.density_bias, &mut rng)?;
    let fine = RadianceFieldParams::init(cfg.arch.clone(), cfg.density_bias, &mut rng)?;
    Ok((coarse, fine))
}

pub fn train(ds: &SceneDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(ds, cfg, |_| {})
}

/// [`train`] with a callback invoked after every logged iteration.
pub fn train_with(ds: &SceneDataset, cfg: &TrainConfig, mut on_log: impl FnMut(&LogEntry)) -> Result<TrainOutput> {
    cfg.validate()?;
    ds.validate()?;
    if cfg.snn.steps > ds.steps {
        return Err(Error::Invalid(format!(
            "snn.steps {} exceeds the {} recorded steps",
            cfg.snn.steps, ds.steps
        )));
    }
    let train_views = ds.indices(Split::Train);
    if train_views.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let targets: Vec<Option<ViewTargets>> = (0..ds.views())
        .map(|v| {
            if ds.split[v] == Split::Train {
                view_targets(ds, v, cfg).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let ctx = Context { ds, targets: &targets, cfg };
    let (mut coarse, mut fine) = init_networks(cfg)?;
    let mut adam_c = AdamState::new(coarse.len());
    let mut adam_f = AdamState::new(fine.len());
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xBA7C_4000_0000_0001);
    let pixels = ds.width() * ds.height();
    let mut log = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let jobs: Vec<RayJob> = (0..cfg.batch_rays)
            .map(|_| RayJob {
                view: train_views[batch_rng.random_range(0..train_views.len())],
                pixel: batch_rng.random_range(0..pixels),
            })
            .collect();
        let chunks: Vec<&[RayJob]> = jobs.chunks(cfg.chunk_rays).collect();
        let results = parallel::map_indexed(chunks.len(), |c| {
            let mut rng = chunk_rng(cfg.seed, it, c);
            run_chunk(&ctx, &coarse, &fine, chunks[c], &mut rng, it)
        });
        let mut grads_c = vec![0.0; coarse.len()];
        let mut grads_f = vec![0.0; fine.len()];
        let mut losses = Vec::with_capacity(cfg.batch_rays);
        for r in results {
            let r = r?;
            grads_c.iter_mut().zip(&r.grads_coarse).for_each(|(a, b)| *a += b);
            grads_f.iter_mut().zip(&r.grads_fine).for_each(|(a, b)| *a += b);
            losses.extend(r.losses);
        }
        let scale = 1.0 / cfg.batch_rays as f64;
        grads_c.iter_mut().for_each(|g| *g *= scale);
        grads_f.iter_mut().for_each(|g| *g *= scale);
        let lr = cfg.learning_rate(it);
        adam_step(&mut coarse.data, &grads_c, &mut adam_c, lr)?;
        adam_step(&mut fine.data, &grads_f, &mut adam_f, lr)?;

        let loss = pairwise_sum(&losses) * scale;
        let test_psnr = if cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0 {
            Some(mean_test_psnr(&coarse, &fine, ds, cfg)?)
        } else {
            None
        };
        let entry = LogEntry {
            iteration: it + 1,
            lr,
            loss,
            test_psnr,
        };
        on_log(&entry);
        log.push(entry);
    }
    Ok(TrainOutput { coarse, fine, log })
}

/// Fine-network render of a full view. Coarse depths sit at bin midpoints
/// and fine depths at fixed CDF quantiles, so no randomness is involved.
pub fn render_view(
    coarse: &RadianceFieldParams,
    fine: &RadianceFieldParams,
    cam: &Camera,
    near: f64,
    far: f64,
    n_coarse: usize,
    n_fine: usize,
) -> Result<IntensityImage> {
    cam.validate()?;
    let n = cam.width * cam.height;
    const CHUNK: usize = 128;
    let chunks = n.div_ceil(CHUNK);
    let parts = parallel::map_indexed(chunks, |c| -> Result<Vec<f64>> {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let rays: Vec<Ray> = (lo..hi)
            .map(|p| generate_ray(cam, PixelCoord::new(p % cam.width, p / cam.width), near, far))
            .collect::<Result<_>>()?;
        let cd: Vec<Vec<f64>> = rays
            .iter()
            .map(|r| stratified_samples::<ChaCha8Rng>(r.near, r.far, n_coarse, None))
            .collect();
        let pc = render_pass(coarse, &rays, &cd)?;
        let fd = sample_depths::<ChaCha8Rng>(&pc, &rays, &cd, n_fine, None);
        let pf = render_pass(fine, &rays, &fd)?;
        Ok(pf.rendered.iter().map(|(i, _, _)| i.max(0.0)).collect())
    });
    let mut values = Vec::with_capacity(n);
    for p in parts {
        values.extend(p?);
    }
    IntensityImage::new(cam.width, cam.height, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub view: usize,
    pub psnr_full: f64,
    pub psnr_obj: f64,
    pub ssim_full: f64,
    pub ssim_obj: f64,
}

/// Renders every test view and scores it against ground truth, peak `θ`.
pub fn evaluate(
    coarse: &RadianceFieldParams,
    fine: &RadianceFieldParams,
    ds: &SceneDataset,
    cfg: &TrainConfig,
) -> Result<(Vec<EvalRow>, Vec<IntensityImage>)> {
    let mut rows = Vec::new();
    let mut images = Vec::new();
    for v in ds.indices(Split::Test) {
        let img = render_view(coarse, fine, &ds.cameras[v], ds.near, ds.far, cfg.n_coarse, cfg.n_fine)?;
        let gt = &ds.gt_images[v];
        let mask: Vec<bool> = gt.values().iter().map(|&x| x > 0.0).collect();
        rows.push(EvalRow {
            view: v,
            psnr_full: psnr(&img, gt, ds.theta)?,
            psnr_obj: psnr_masked(&img, gt, ds.theta, Some(&mask))?,
            ssim_full: ssim_masked(&img, gt, ds.theta, None)?,
            ssim_obj: ssim_masked(&img, gt, ds.theta, Some(&mask))?,
        });
        images.push(img);
    }
    Ok((rows, images))
}

pub fn mean_test_psnr(coarse: &RadianceFieldParams, fine: &RadianceFieldParams, ds: &SceneDataset, cfg: &TrainConfig) -> Result<f64> {
    let (rows, _) = evaluate(coarse, fine, ds, cfg)?;
    if rows.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    Ok(rows.iter().map(|r| r.psnr_full).sum::<f64>() / rows.len() as f64)
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("view,psnr_full,psnr_obj,ssim_full,ssim_obj\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{:.6}", r.view, r.psnr_full, r.psnr_obj, r.ssim_full, r.ssim_obj);
    }
    s
}

pub fn log_csv(log: &[LogEntry]) -> String {
    let mut s = String::from("iteration,lr,loss,test_psnr\n");
    for e in log {
        let p = e.test_psnr.map_or(String::new(), |p| format!("{p:.6}"));
        let _ = writeln!(s, "{},{:.9e},{:.9e},{}", e.iteration, e.lr, e.loss, p);
    }
    s
}
