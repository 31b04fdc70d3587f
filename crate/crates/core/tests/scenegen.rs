use std::fs;

use proptest::prelude::*;
use spikefield_core::field::geometry::{generate_ray, Camera, Pose, Vec3};
use spikefield_core::scenegen::{
    build_dataset, load_dataset, manifest_hashes, render_image, DatasetSpec, DirectionalLight, ExposurePreset, NoiseSpec,
    PoseRing, Primitive, SceneSpec, Split,
};
use spikefield_core::PixelCoord;

type Mat = [[f64; 3]; 3];

fn mul(a: &Mat, b: &Mat) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn apply(m: &Mat, v: Vec3) -> Vec3 {
    let a = v.to_array();
    Vec3::new(
        m[0][0] * a[0] + m[0][1] * a[1] + m[0][2] * a[2],
        m[1][0] * a[0] + m[1][1] * a[1] + m[1][2] * a[2],
        m[2][0] * a[0] + m[2][1] * a[1] + m[2][2] * a[2],
    )
}

fn quaternion_rotation(q: [f64; 4]) -> Mat {
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Signed axis permutation: keeps boxes axis aligned.
fn axis_rotation(perm: [usize; 3], flips: [bool; 3]) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        m[i][perm[i]] = if flips[i] { -1.0 } else { 1.0 };
    }
    m
}

fn transform_scene(scene: &SceneSpec, m: &Mat, t: Vec3) -> SceneSpec {
    let primitives = scene
        .primitives
        .iter()
        .map(|p| match *p {
            Primitive::Sphere { center, radius, albedo } => Primitive::Sphere {
                center: apply(m, center) + t,
                radius,
                albedo,
            },
            Primitive::Cuboid { min, max, albedo } => {
                let (a, b) = (apply(m, min) + t, apply(m, max) + t);
                Primitive::Cuboid {
                    min: a.min(b),
                    max: a.max(b),
                    albedo,
                }
            }
        })
        .collect();
    SceneSpec {
        primitives,
        light: DirectionalLight {
            direction: apply(m, scene.light.direction),
            intensity: scene.light.intensity,
        },
        exposure: scene.exposure,
    }
}

fn transform_camera(cam: &Camera, m: &Mat, t: Vec3) -> Camera {
    Camera {
        pose: Pose {
            rotation: mul(m, &cam.pose.rotation),
            translation: apply(m, cam.pose.translation) + t,
        },
        ..cam.clone()
    }
}

fn assert_invariant(scene: &SceneSpec, cam: &Camera, m: &Mat, t: Vec3) {
    let moved_scene = transform_scene(scene, m, t);
    let moved_cam = transform_camera(cam, m, t);
    let mut hits = 0;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let px = PixelCoord::new(x, y);
            let a = generate_ray(cam, px, 0.0, 100.0).unwrap();
            let b = generate_ray(&moved_cam, px, 0.0, 100.0).unwrap();
            match (scene.hit_distance(&a), moved_scene.hit_distance(&b)) {
                (Some(da), Some(db)) => {
                    hits += 1;
                    assert!((da - db).abs() < 1e-9, "hit {da} vs {db} at {x},{y}");
                }
                (None, None) => {}
                other => panic!("hit mismatch {other:?} at {x},{y}"),
            }
            assert!((scene.shade(&a) - moved_scene.shade(&b)).abs() < 1e-9);
        }
    }
    assert!(hits > 0);
}

fn box_scene() -> SceneSpec {
    SceneSpec {
        primitives: vec![
            Primitive::Cuboid {
                min: Vec3::new(-0.6, -0.4, -0.5),
                max: Vec3::new(0.2, 0.5, 0.3),
                albedo: 0.8,
            },
            Primitive::Sphere {
                center: Vec3::new(0.6, 0.2, 0.4),
                radius: 0.35,
                albedo: 0.5,
            },
        ],
        light: DirectionalLight {
            direction: Vec3::new(0.2, -0.5, 0.8).normalized(),
            intensity: 1.0,
        },
        exposure: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sphere_scene_is_invariant_under_rigid_motion(
        q in prop::array::uniform4(-1.0f64..1.0),
        t in prop::array::uniform3(-5.0f64..5.0),
        view in 0usize..16,
    ) {
        prop_assume!(q.iter().map(|x| x * x).sum::<f64>() > 0.05);
        let spec = DatasetSpec::builtin(ExposurePreset::Medium, 0);
        let ring = PoseRing { width: 24, height: 24, focal: 40.0, ..spec.ring };
        let cam = ring.cameras().swap_remove(view);
        assert_invariant(&spec.scene, &cam, &quaternion_rotation(q), Vec3::from_array(t));
    }

    #[test]
    fn box_scene_is_invariant_under_axis_rotations(
        perm in Just([0usize, 1, 2]).prop_shuffle(),
        flips in prop::array::uniform3(any::<bool>()),
        t in prop::array::uniform3(-5.0f64..5.0),
        view in 0usize..16,
    ) {
        let ring = PoseRing {
            target: Vec3::new(0.0, 0.0, 0.0),
            radius: 4.0,
            elevation: 0.4,
            views: 16,
            focal: 40.0,
            width: 24,
            height: 24,
        };
        let cam = ring.cameras().swap_remove(view);
        let perm: [usize; 3] = perm.try_into().unwrap();
        assert_invariant(&box_scene(), &cam, &axis_rotation(perm, flips), Vec3::from_array(t));
    }
}

#[test]
fn rendering_is_deterministic() {
    let spec = DatasetSpec::builtin(ExposurePreset::High, 0);
    let cam = spec.ring.cameras().swap_remove(3);
    assert_eq!(render_image(&spec.scene, &cam).unwrap(), render_image(&spec.scene, &cam).unwrap());
}

fn small_spec(seed: u64) -> DatasetSpec {
    let mut spec = DatasetSpec::builtin(ExposurePreset::Medium, seed);
    spec.ring.width = 16;
    spec.ring.height = 12;
    spec.ring.focal = 26.0;
    spec.steps = 64;
    spec.subframes = 4;
    spec
}

#[test]
fn manifest_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(5);
    let built = build_dataset(&spec, dir.path()).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!((loaded.width(), loaded.height(), loaded.views()), (16, 12, 16));
    assert_eq!(loaded.steps, 64);
    assert_eq!(loaded.split, built.split);
    assert_eq!(loaded.split.iter().filter(|s| **s == Split::Test).count(), 2);
    assert_eq!(loaded.spikes, built.spikes);
    assert_eq!(loaded.nonuniformity.values(), built.nonuniformity.values());
    for (a, b) in loaded.cameras.iter().zip(&spec.ring.cameras()) {
        assert!((a.pose.translation - b.pose.translation).norm() < 1e-12);
    }
    for name in ["manifest.txt", "nonuniformity.spm", "view_000.spk", "view_015_gt.pgm"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }

    let again = tempfile::tempdir().unwrap();
    build_dataset(&spec, again.path()).unwrap();
    assert_eq!(manifest_hashes(dir.path()).unwrap(), manifest_hashes(again.path()).unwrap());
    assert_eq!(
        fs::read(dir.path().join("manifest.txt")).unwrap(),
        fs::read(again.path().join("manifest.txt")).unwrap()
    );
}

#[test]
fn tampered_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&small_spec(1), dir.path()).unwrap();
    let path = dir.path().join("view_004.spk");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&path, bytes).unwrap();
    assert!(load_dataset(dir.path()).is_err());
}

#[test]
fn noiseless_streams_follow_the_rendered_image() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(2);
    spec.noise = NoiseSpec::noiseless();
    spec.subframes = 1;
    let ds = build_dataset(&spec, dir.path()).unwrap();
    let frame = render_image(&spec.scene, &ds.cameras[0]).unwrap();
    for (count, l) in ds.spikes[0].counts().iter().zip(frame.values()) {
        assert_eq!(*count, (l * 64.0 / ds.theta).floor() as usize);
    }
}
