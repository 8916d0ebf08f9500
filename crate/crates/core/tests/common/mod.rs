#![allow(dead_code)]

use cppf::geometry::{random_rotation, Pose9D};
use cppf::voting::circle_frame;
use nalgebra::Matrix3;
use cppf::scenegen::{build_scene, builtin_library, MeshLibrary, Scene, SceneObject, SceneSpec};
use cppf::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builtins whose axes keep a visible sign in every tabletop view. The cube
/// is left out: seen from inside the slab between its two side faces normal
/// to `e2`, no visible normal has an `e2` component.
pub const TABLETOP_OBJECTS: [&str; 4] = ["cone", "cylinder", "house", "sphere"];

pub const ALL_OBJECTS: [&str; 5] = ["cone", "cube", "cylinder", "house", "sphere"];

pub struct RandomScene {
    pub scene: Scene<f64>,
    pub pose: Pose9D<f64>,
    pub mean_scale: Vec3<f64>,
    pub mesh: String,
}

/// Random pose in front of a camera at the origin and a category mean scale
/// within ±30% of the true extents. The rotation is uniform.
pub fn random_pose(rng: &mut ChaCha8Rng) -> (Pose9D<f64>, Vec3<f64>) {
    let rotation = random_rotation(rng);
    finish_pose(rng, |_| rotation)
}

/// Like [`random_pose`], but the object rests upright on a support plane:
/// `e1` is the plane normal, the camera looks down on the plane at an
/// elevation uniform in 15°..75°, heading and camera roll are uniform.
pub fn tabletop_pose(rng: &mut ChaCha8Rng) -> (Pose9D<f64>, Vec3<f64>) {
    let elevation = rng.random_range(15f64..75.0).to_radians();
    let roll = rng.random_range(0.0..std::f64::consts::TAU);
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    finish_pose(rng, |t| {
        let view = t.normalize();
        let (u, v) = circle_frame(&view);
        let w = u * roll.cos() + v * roll.sin();
        let e1 = -view * elevation.sin() + w * elevation.cos();
        let (a, b) = circle_frame(&e1);
        let e2 = a * heading.cos() + b * heading.sin();
        Matrix3::from_columns(&[e2, e1, e2.cross(&e1)])
    })
}

fn finish_pose<F: FnOnce(&Vec3<f64>) -> Matrix3<f64>>(rng: &mut ChaCha8Rng, rotation: F) -> (Pose9D<f64>, Vec3<f64>) {
    let s = Vec3::from_fn(|_, _| rng.random_range(0.08..0.25));
    let t = Vec3::new(
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.15..0.15),
        rng.random_range(0.7..1.0),
    );
    let pose = Pose9D::from_rotation(&rotation(&t), t, s);
    let mean = s.component_mul(&Vec3::from_fn(|_, _| rng.random_range(0.7..1.3)));
    (pose, mean)
}

pub fn random_scene(seed: u64, mesh: &str, samples: usize) -> RandomScene {
    random_scene_in(&builtin_library(), seed, mesh, samples)
}

pub fn random_scene_in(lib: &MeshLibrary<f64>, seed: u64, mesh: &str, samples: usize) -> RandomScene {
    scene_with(lib, seed, mesh, samples, random_pose)
}

pub fn tabletop_scene_in(lib: &MeshLibrary<f64>, seed: u64, mesh: &str, samples: usize) -> RandomScene {
    scene_with(lib, seed, mesh, samples, tabletop_pose)
}

fn scene_with(
    lib: &MeshLibrary<f64>,
    seed: u64,
    mesh: &str,
    samples: usize,
    draw: fn(&mut ChaCha8Rng) -> (Pose9D<f64>, Vec3<f64>),
) -> RandomScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pose, mean_scale) = draw(&mut rng);
    let spec = SceneSpec {
        objects: vec![SceneObject {
            mesh: mesh.to_string(),
            pose,
        }],
        viewpoint: Vec3::zeros(),
        samples_per_object: samples,
        outlier_count: 0,
        outlier_box_scale: 1.0,
        seed,
    };
    RandomScene {
        scene: build_scene(&spec, lib).expect("scene"),
        pose,
        mean_scale,
        mesh: mesh.to_string(),
    }
}
