//! Analytic toy scenes, pose rings, and spike datasets on disk.
//!
//! A dataset directory holds `manifest.txt`, one `view_###.spk` stream and
//! one `view_###_gt.pgm` ground truth per view, and `nonuniformity.spm`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::field::geometry::{generate_ray, Camera, Pose, Ray, Vec3};
use crate::formats::{decode_pgm, encode_pgm16, read_nonuniformity};
use crate::parallel;
use crate::sim::{simulate_stream, NonuniformityMap, SpikeCameraModel};
use crate::spike::{IntensityImage, PixelCoord, SpikeStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64, albedo: f64 },
    /// Axis-aligned box.
    Cuboid { min: Vec3, max: Vec3, albedo: f64 },
}

impl Primitive {
    /// Nearest hit distance in `[t_min, ∞)` and the outward normal there.
    fn intersect(&self, ray: &Ray, t_min: f64) -> Option<(f64, Vec3)> {
        match *self {
            Primitive::Sphere { center, radius, .. } => {
                let oc = ray.origin - center;
                let b = oc.dot(ray.direction);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [-b - sq, -b + sq].into_iter().find(|&t| t >= t_min)?;
                Some((t, (ray.at(t) - center) * (1.0 / radius)))
            }
            Primitive::Cuboid { min, max, .. } => {
                let o = ray.origin.to_array();
                let d = ray.direction.to_array();
                let (lo, hi) = (min.to_array(), max.to_array());
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let mut axis0 = 0;
                let mut axis1 = 0;
                for a in 0..3 {
                    let inv = 1.0 / d[a];
                    let (mut n, mut f) = ((lo[a] - o[a]) * inv, (hi[a] - o[a]) * inv);
                    if n > f {
                        std::mem::swap(&mut n, &mut f);
                    }
                    if n > t0 {
                        t0 = n;
                        axis0 = a;
                    }
                    if f < t1 {
                        t1 = f;
                        axis1 = a;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (t, axis) = if t0 >= t_min {
                    (t0, axis0)
                } else if t1 >= t_min {
                    (t1, axis1)
                } else {
                    return None;
                };
                let p = ray.at(t).to_array();
                let mut n = [0.0; 3];
                let mid = (lo[axis] + hi[axis]) / 2.0;
                n[axis] = if p[axis] > mid { 1.0 } else { -1.0 };
                Some((t, Vec3::from_array(n)))
            }
        }
    }

    pub fn albedo(&self) -> f64 {
        match *self {
            Primitive::Sphere { albedo, .. } | Primitive::Cuboid { albedo, .. } => albedo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    /// Unit vector pointing from surfaces toward the light.
    pub direction: Vec3,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub light: DirectionalLight,
    pub exposure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposurePreset {
    Low,
    Medium,
    High,
}

impl ExposurePreset {
    pub const ALL: [ExposurePreset; 3] = [Self::Low, Self::Medium, Self::High];

    /// Exposures in the ratio 1:2:4; the brightest surface stays below the
    /// lowest threshold the noisy sensor presets draw.
    pub fn exposure(self) -> f64 {
        match self {
            Self::Low => 0.07,
            Self::Medium => 0.14,
            Self::High => 0.28,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            _ => Err(Error::Parse(format!("unknown exposure preset `{s}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::Invalid("scene has no primitives".into()));
        }
        if let Some(p) = self.primitives.iter().find(|p| !(p.albedo() > 0.0 && p.albedo() <= 1.0)) {
            return Err(Error::Invalid(format!("albedo {} outside (0, 1]", p.albedo())));
        }
        if !(self.light.intensity > 0.0) || !(self.exposure > 0.0) {
            return Err(Error::Invalid("light intensity and exposure must be positive".into()));
        }
        if ((self.light.direction.norm()) - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid("light direction must be a unit vector".into()));
        }
        Ok(())
    }

    /// Two spheres of different size and albedo lit from above.
    pub fn builtin(preset: ExposurePreset) -> Self {
        Self {
            primitives: vec![
                Primitive::Sphere {
                    center: Vec3::new(-0.35, -0.2, 0.0),
                    radius: 0.6,
                    albedo: 0.9,
                },
                Primitive::Sphere {
                    center: Vec3::new(0.55, 0.45, 0.1),
                    radius: 0.4,
                    albedo: 0.6,
                },
            ],
            light: DirectionalLight {
                direction: Vec3::new(0.3, -0.4, 0.866).normalized(),
                intensity: 1.0,
            },
            exposure: preset.exposure(),
        }
    }

    /// Shaded intensity seen along `ray`; 0 for a miss.
    pub fn shade(&self, ray: &Ray) -> f64 {
        let mut best: Option<(f64, Vec3, f64)> = None;
        for p in &self.primitives {
            if let Some((t, n)) = p.intersect(ray, 0.0) {
                if best.is_none_or(|(bt, _, _)| t < bt) {
                    best = Some((t, n, p.albedo()));
                }
            }
        }
        match best {
            Some((_, n, albedo)) => n.dot(self.light.direction).max(0.0) * albedo * self.light.intensity * self.exposure,
            None => 0.0,
        }
    }

    /// Nearest hit distance along `ray`.
    pub fn hit_distance(&self, ray: &Ray) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(ray, 0.0).map(|(t, _)| t))
            .min_by(f64::total_cmp)
    }
}

/// Cameras evenly spaced in azimuth on a circle around `target`, z up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRing {
    pub target: Vec3,
    pub radius: f64,
    /// Radians above the horizontal plane.
    pub elevation: f64,
    pub views: usize,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl PoseRing {
    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.views as f64
    }

    pub fn camera_at(&self, azimuth: f64) -> Camera {
        let (ce, se) = (self.elevation.cos(), self.elevation.sin());
        let offset = Vec3::new(ce * azimuth.cos(), ce * azimuth.sin(), se) * self.radius;
        Camera::look_at(self.target + offset, self.target, Vec3::new(0.0, 0.0, 1.0), self.focal, self.width, self.height)
    }

    pub fn cameras(&self) -> Vec<Camera> {
        (0..self.views).map(|i| self.camera_at(i as f64 * self.azimuth_step())).collect()
    }
}

pub fn make_pose_ring(ring: &PoseRing) -> Result<Vec<Camera>> {
    if ring.views == 0 {
        return Err(Error::ZeroDimension);
    }
    if !(ring.radius > 0.0) {
        return Err(Error::Invalid(format!("ring radius {} must be positive", ring.radius)));
    }
    Ok(ring.cameras())
}

/// Renders one image; all rays start at the camera centre.
pub fn render_image(scene: &SceneSpec, cam: &Camera) -> Result<IntensityImage> {
    cam.validate()?;
    let values = parallel::map_indexed(cam.width * cam.height, |i| {
        let ray = generate_ray(cam, PixelCoord::new(i % cam.width, i / cam.width), 0.0, f64::INFINITY).expect("in bounds");
        scene.shade(&ray)
    });
    IntensityImage::new(cam.width, cam.height, values)
}

/// Ground truth for view `view` of `ring`. With `subframes > 1` the camera
/// advances along the ring arc toward the next view, one image per subframe.
pub fn render_ground_truth(scene: &SceneSpec, ring: &PoseRing, view: usize, subframes: usize) -> Result<Vec<IntensityImage>> {
    scene.validate()?;
    if subframes == 0 {
        return Err(Error::ZeroDimension);
    }
    let base = view as f64 * ring.azimuth_step();
    (0..subframes)
        .map(|j| render_image(scene, &ring.camera_at(base + ring.azimuth_step() * j as f64 / subframes as f64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Round-robin 7:1.
    pub fn for_view(i: usize) -> Self {
        if i % 8 == 7 {
            Split::Test
        } else {
            Split::Train
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Sensor noise settings for generated datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub theta: f64,
    pub dark_current: f64,
    /// Half-width of the uniform spread of `R` around 1.
    pub r_spread: f64,
    pub shot_noise: bool,
    pub photon_scale: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            theta: 1.0,
            dark_current: 0.0,
            r_spread: 0.0,
            shot_noise: false,
            photon_scale: 1.0,
        }
    }

    /// The benchmark sensor: Poisson photons, `R ~ U[0.8, 1.2]`, faint dark current.
    pub fn medium() -> Self {
        Self {
            theta: 1.0,
            dark_current: 0.002,
            r_spread: 0.2,
            shot_noise: true,
            photon_scale: 4.0,
        }
    }

    pub fn model(&self, width: usize, height: usize, seed: u64) -> Result<SpikeCameraModel> {
        let mut m = SpikeCameraModel::ideal(width, height, self.theta);
        m.dark_current = IntensityImage::constant(width, height, self.dark_current)?;
        if self.r_spread > 0.0 {
            let r = NonuniformityMap::random_uniform(width, height, 1.0 - self.r_spread, 1.0 + self.r_spread, seed)?;
            // stored as f32 on disk; simulate with exactly what gets saved
            let rounded = r.values().iter().map(|v| *v as f32 as f64).collect();
            m.nonuniformity = NonuniformityMap::new(width, height, rounded)?;
        }
        m.shot_noise = self.shot_noise;
        m.photon_scale = self.photon_scale;
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct SceneDataset {
    pub cameras: Vec<Camera>,
    pub spikes: Vec<SpikeStream>,
    pub gt_images: Vec<IntensityImage>,
    pub nonuniformity: NonuniformityMap,
    pub split: Vec<Split>,
    pub near: f64,
    pub far: f64,
    pub theta: f64,
    /// Per-tick dark charge known from calibration.
    pub dark_current: f64,
    pub steps: usize,
}

impl SceneDataset {
    pub fn views(&self) -> usize {
        self.cameras.len()
    }

    pub fn width(&self) -> usize {
        self.nonuniformity.width()
    }

    pub fn height(&self) -> usize {
        self.nonuniformity.height()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.views()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.views();
        if n == 0 {
            return Err(Error::DatasetEmpty);
        }
        if self.spikes.len() != n || self.gt_images.len() != n || self.split.len() != n {
            return Err(Error::DimensionMismatch("per-view lists differ in length".into()));
        }
        let (w, h) = (self.width(), self.height());
        for i in 0..n {
            let c = &self.cameras[i];
            let s = &self.spikes[i];
            let g = &self.gt_images[i];
            if c.width != w || c.height != h || s.width() != w || s.height() != h || g.width() != w || g.height() != h {
                return Err(Error::DimensionMismatch(format!("view {i} disagrees with the {w}x{h} sensor")));
            }
            if s.steps() != self.steps {
                return Err(Error::DimensionMismatch(format!("view {i} has {} steps, expected {}", s.steps(), self.steps)));
            }
        }
        if !(self.near < self.far) {
            return Err(Error::Invalid(format!("near {} must be below far {}", self.near, self.far)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub scene: SceneSpec,
    pub ring: PoseRing,
    pub noise: NoiseSpec,
    pub steps: usize,
    pub subframes: usize,
    pub near: f64,
    pub far: f64,
    pub seed: u64,
}

impl DatasetSpec {
    /// The builtin benchmark: 48×48, 16 views, 256 steps, medium noise.
    pub fn builtin(preset: ExposurePreset, seed: u64) -> Self {
        Self {
            scene: SceneSpec::builtin(preset),
            ring: PoseRing {
                target: Vec3::new(0.0, 0.0, 0.0),
                radius: 4.0,
                elevation: 0.45,
                views: 16,
                focal: 80.0,
                width: 48,
                height: 48,
            },
            noise: NoiseSpec::medium(),
            steps: 256,
            subframes: 1,
            near: 2.0,
            far: 6.0,
            seed,
        }
    }
}

fn view_seed(seed: u64, view: usize) -> u64 {
    seed ^ (view as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Twelve numbers, row-major `[R|t]`.
pub fn pose_string(cam: &Camera) -> String {
    let r = &cam.pose.rotation;
    let t = cam.pose.translation;
    let vals = [
        r[0][0], r[0][1], r[0][2], t.x, r[1][0], r[1][1], r[1][2], t.y, r[2][0], r[2][1], r[2][2], t.z,
    ];
    vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn parse_pose(s: &str) -> Result<Pose> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| Error::Parse(format!("bad pose value `{x}`"))))
        .collect::<Result<_>>()?;
    if v.len() != 12 {
        return Err(Error::Parse(format!("pose needs 12 values, got {}", v.len())));
    }
    Ok(Pose {
        rotation: [[v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]],
        translation: Vec3::new(v[3], v[7], v[11]),
    })
}

/// Renders, simulates and writes a dataset, then loads it back.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<SceneDataset> {
    if spec.subframes == 0 || spec.steps % spec.subframes != 0 {
        return Err(Error::IndivisibleSteps {
            steps: spec.steps,
            subframes: spec.subframes,
        });
    }
    spec.scene.validate()?;
    let cams = make_pose_ring(&spec.ring)?;
    let (w, h) = (spec.ring.width, spec.ring.height);
    let model = spec.noise.model(w, h, spec.seed)?;
    fs::create_dir_all(out_dir)?;

    let mut kv = KeyValues::new();
    kv.set("width", w);
    kv.set("height", h);
    kv.set("views", cams.len());
    kv.set("steps", spec.steps);
    kv.set("subframes", spec.subframes);
    kv.set("theta", format!("{:?}", spec.noise.theta));
    kv.set("dark_current", format!("{:?}", spec.noise.dark_current));
    kv.set("near", format!("{:?}", spec.near));
    kv.set("far", format!("{:?}", spec.far));
    kv.set("focal", format!("{:?}", spec.ring.focal));

    let nu_bytes = crate::formats::encode_map(w, h, model.nonuniformity.values());
    fs::write(out_dir.join("nonuniformity.spm"), &nu_bytes)?;
    kv.set("nonuniformity", "nonuniformity.spm");
    kv.set("nonuniformity.sha256", sha256_hex(&nu_bytes));

    for (i, cam) in cams.iter().enumerate() {
        let frames = render_ground_truth(&spec.scene, &spec.ring, i, spec.subframes)?;
        let stream = simulate_stream(&frames, &model, spec.steps / spec.subframes, view_seed(spec.seed, i))?;
        let spk = stream.to_bytes();
        let gt = encode_pgm16(&frames[0], 1.0);
        let spk_name = format!("view_{i:03}.spk");
        let gt_name = format!("view_{i:03}_gt.pgm");
        fs::write(out_dir.join(&spk_name), &spk)?;
        fs::write(out_dir.join(&gt_name), &gt)?;
        let key = format!("view.{i:03}");
        kv.set(&format!("{key}.spikes"), &spk_name);
        kv.set(&format!("{key}.spikes.sha256"), sha256_hex(&spk));
        kv.set(&format!("{key}.gt"), &gt_name);
        kv.set(&format!("{key}.gt.sha256"), sha256_hex(&gt));
        kv.set(&format!("{key}.split"), Split::for_view(i).as_str());
        kv.set(&format!("{key}.pose"), pose_string(cam));
    }
    fs::write(out_dir.join("manifest.txt"), kv.to_string())?;
    load_dataset(out_dir)
}

fn read_checked(dir: &Path, name: &str, hash: &str) -> Result<Vec<u8>> {
    let bytes = fs::read(dir.join(name))?;
    let actual = sha256_hex(&bytes);
    if actual != hash {
        return Err(Error::Invalid(format!("{name}: hash {actual} does not match manifest {hash}")));
    }
    Ok(bytes)
}

/// Loads a dataset directory, verifying every file hash in the manifest.
pub fn load_dataset(dir: &Path) -> Result<SceneDataset> {
    let kv = KeyValues::load(dir.join("manifest.txt"))?;
    let width: usize = kv.require("width")?;
    let height: usize = kv.require("height")?;
    let views: usize = kv.require("views")?;
    let focal: f64 = kv.require("focal")?;
    let nu_name: String = kv.require("nonuniformity")?;
    read_checked(dir, &nu_name, &kv.require::<String>("nonuniformity.sha256")?)?;
    let nonuniformity = read_nonuniformity(&dir.join(&nu_name))?;
    let mut cameras = Vec::with_capacity(views);
    let mut spikes = Vec::with_capacity(views);
    let mut gt_images = Vec::with_capacity(views);
    let mut split = Vec::with_capacity(views);
    for i in 0..views {
        let key = format!("view.{i:03}");
        let spk = read_checked(dir, &kv.require::<String>(&format!("{key}.spikes"))?, &kv.require::<String>(&format!("{key}.spikes.sha256"))?)?;
        spikes.push(SpikeStream::from_bytes(&spk)?);
        let gt = read_checked(dir, &kv.require::<String>(&format!("{key}.gt"))?, &kv.require::<String>(&format!("{key}.gt.sha256"))?)?;
        gt_images.push(decode_pgm(&gt, 1.0)?);
        split.push(match kv.require::<String>(&format!("{key}.split"))?.as_str() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(Error::Parse(format!("unknown split `{other}`"))),
        });
        cameras.push(Camera {
            pose: parse_pose(&kv.require::<String>(&format!("{key}.pose"))?)?,
            focal,
            width,
            height,
        });
    }
    let ds = SceneDataset {
        cameras,
        spikes,
        gt_images,
        nonuniformity,
        split,
        near: kv.require("near")?,
        far: kv.require("far")?,
        theta: kv.require("theta")?,
        dark_current: kv.require("dark_current")?,
        steps: kv.require("steps")?,
    };
    ds.validate()?;
    Ok(ds)
}

/// File names and hashes recorded in a manifest, in key order.
pub fn manifest_hashes(dir: &Path) -> Result<Vec<(String, String)>> {
    let kv = KeyValues::load(dir.join("manifest.txt"))?;
    Ok(kv
        .keys()
        .filter(|k| k.ends_with(".sha256"))
        .map(|k| (k.to_string(), kv.raw(k).unwrap_or_default().to_string()))
        .collect())
}
