//! Deterministic synthetic street scene used as the test fixture and by the
//! `fixture` command.
//!
//! The ego vehicle drives along +x at 1 m per frame with a slight yaw drift.
//! The scene holds a ground plane (with mask), a building wall, a pole, a
//! parked car, a moving car, a crossing cyclist, a slow and a standing
//! pedestrian, an obstruction pile, and a few unlabeled returns. The
//! supervised motion stream has planted mistakes so every discrepancy
//! category shows up.

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CalibrationSet, ImageSize};
use crate::cloud::{FlowField, PointCloud};
use crate::config::Config;
use crate::error::{IngestError, PipelineError};
use crate::geometry::RigidTransform;
use crate::io::{
    self, frame_file_name, AnomalyBox, AnomalyBoxSet, PixelBox, SemanticLabels, Superclass,
};
use crate::labels::Motion;
use crate::preprocess::{preprocess, PreprocessParams};

/// KITTI odometry sequence 00 camera-2 calibration (already rectified).
pub fn kitti_calibration() -> CalibrationSet {
    let projection = Matrix3x4::new(
        7.188560e+02, 0.0, 6.071928e+02, 4.538225e+01, //
        0.0, 7.188560e+02, 1.852157e+02, -1.130887e-01, //
        0.0, 0.0, 1.0, 3.779761e-03,
    );
    let rotation = Matrix3::new(
        4.276802385584e-04, -9.999672484946e-01, -8.084491683471e-03, //
        -7.210626507497e-03, 8.081198471645e-03, -9.999413164504e-01, //
        9.999738645903e-01, 4.859485810390e-04, -7.206933692422e-03,
    );
    let translation = Vector3::new(-1.198459927713e-02, -5.403984729748e-02, -2.921968648686e-01);
    let lidar_to_cam = RigidTransform::new_orthonormalized(rotation, translation, io::FILE_ROTATION_TOLERANCE)
        .expect("KITTI extrinsics are a rotation");
    CalibrationSet::new(projection, Matrix3::identity(), lidar_to_cam).expect("KITTI calibration")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub frames: usize,
    pub seed: u64,
    /// Uniform flow noise on static points, meters per axis.
    pub static_noise_m: f64,
    /// Relative flow noise on moving objects.
    pub mover_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            frames: 5,
            seed: 7,
            static_noise_m: 0.05,
            mover_noise: 0.01,
        }
    }
}

/// One generated frame, in sensor coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub cloud: PointCloud,
    pub semantic: SemanticLabels,
    /// Supervised motion stream, mistakes included.
    pub motion: Vec<Option<Motion>>,
    /// Motion actually present in the scene.
    pub true_motion: Vec<Motion>,
    pub ground: Vec<bool>,
    /// Flow on the preprocessed points; absent for the last frame.
    pub flow: Option<FlowField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub frames: Vec<SynthFrame>,
    pub poses: Vec<RigidTransform>,
    pub calib: CalibrationSet,
    pub boxes: AnomalyBoxSet,
}

const GROUND_Z: f64 = -1.73;

/// How the supervised stream labels an object in a given frame.
#[derive(Debug, Clone, Copy)]
enum SvMotion {
    Truth,
    Always(Motion),
    /// Truth except in the given frame, where it is flipped.
    FlipAt(usize),
}

struct Object {
    class_id: u16,
    instance_id: u16,
    /// Box center at frame 0, world frame.
    center: [f64; 3],
    size: [f64; 3],
    spacing: f64,
    /// World displacement per frame.
    velocity: [f64; 3],
    sv: SvMotion,
    anomaly: Option<Superclass>,
}

fn objects() -> Vec<Object> {
    let z = |h: f64| GROUND_Z + h / 2.0 + 0.05;
    vec![
        Object {
            class_id: 80,
            instance_id: 0,
            center: [10.0, -6.0, z(3.0)],
            size: [0.2, 0.2, 3.0],
            spacing: 0.1,
            velocity: [0.0; 3],
            sv: SvMotion::Truth,
            anomaly: None,
        },
        Object {
            class_id: 10,
            instance_id: 1,
            center: [27.0, -4.0, z(1.5)],
            size: [4.0, 1.8, 1.5],
            spacing: 0.25,
            velocity: [0.0; 3],
            sv: SvMotion::FlipAt(2),
            anomaly: None,
        },
        Object {
            class_id: 10,
            instance_id: 2,
            center: [14.0, 3.5, z(1.5)],
            size: [4.0, 1.8, 1.5],
            spacing: 0.25,
            velocity: [1.6, 0.0, 0.0],
            sv: SvMotion::Truth,
            anomaly: None,
        },
        Object {
            class_id: 31,
            instance_id: 3,
            center: [16.0, -5.5, z(1.6)],
            size: [1.7, 0.6, 1.6],
            spacing: 0.15,
            velocity: [0.0, 0.35, 0.0],
            sv: SvMotion::Always(Motion::Static),
            anomaly: Some(Superclass::Cyclist),
        },
        Object {
            class_id: 30,
            instance_id: 4,
            center: [12.0, 6.0, z(1.7)],
            size: [0.5, 0.5, 1.7],
            spacing: 0.12,
            velocity: [0.1, 0.0, 0.0],
            sv: SvMotion::Truth,
            anomaly: None,
        },
        Object {
            class_id: 30,
            instance_id: 5,
            center: [20.0, 1.5, z(1.7)],
            size: [0.5, 0.5, 1.7],
            spacing: 0.12,
            velocity: [0.0; 3],
            sv: SvMotion::Truth,
            anomaly: None,
        },
        Object {
            class_id: 99,
            instance_id: 6,
            center: [24.0, -1.0, z(0.6)],
            size: [1.0, 1.0, 0.6],
            spacing: 0.12,
            velocity: [0.0; 3],
            sv: SvMotion::Truth,
            anomaly: Some(Superclass::Obstruction),
        },
    ]
}

/// Points on the surface of an axis-aligned box, relative to its center.
fn box_shell(size: [f64; 3], spacing: f64) -> Vec<[f64; 3]> {
    let steps = size.map(|s| (s / spacing).round().max(1.0) as i64);
    let mut out = Vec::new();
    for i in 0..=steps[0] {
        for j in 0..=steps[1] {
            for k in 0..=steps[2] {
                let on_face = i == 0 || i == steps[0] || j == 0 || j == steps[1] || k == 0 || k == steps[2];
                if !on_face {
                    continue;
                }
                out.push([
                    size[0] * (i as f64 / steps[0] as f64 - 0.5),
                    size[1] * (j as f64 / steps[1] as f64 - 0.5),
                    size[2] * (k as f64 / steps[2] as f64 - 0.5),
                ]);
            }
        }
    }
    out
}

/// A world point tracked across frames.
struct WorldPoint {
    position: [f64; 3],
    velocity: [f64; 3],
    class_id: u16,
    instance_id: u16,
    sv: SvMotion,
    ground: bool,
    object: Option<usize>,
}

fn ego_pose(t: usize) -> RigidTransform {
    let yaw = 0.01 * t as f64;
    let x: f64 = (0..t).map(|k| (0.01 * k as f64).cos()).sum();
    let y: f64 = (0..t).map(|k| (0.01 * k as f64).sin()).sum();
    RigidTransform::rot_z(yaw).with_translation(Vector3::new(x, y, 0.0))
}

fn world_points(rng: &mut ChaCha8Rng) -> (Vec<WorldPoint>, Vec<Object>) {
    let mut pts = Vec::new();
    let stat = |position, class_id, ground| WorldPoint {
        position,
        velocity: [0.0; 3],
        class_id,
        instance_id: 0,
        sv: SvMotion::Truth,
        ground,
        object: None,
    };
    for i in 0..=68 {
        for j in 0..=25 {
            let x = -10.0 + 0.8 * i as f64;
            let y = -10.0 + 0.8 * j as f64;
            pts.push(stat([x, y, GROUND_Z], 40, true));
        }
    }
    for i in 0..=200 {
        for k in 0..=13 {
            let mut p = stat([-5.0 + 0.25 * i as f64, 8.0, GROUND_Z + 0.05 + 0.25 * k as f64], 50, false);
            // a few wall points carry a wrong dynamic label; fusion overrides it
            if i % 37 == 0 && k == 4 {
                p.sv = SvMotion::Always(Motion::Dynamic);
            }
            pts.push(p);
        }
    }
    for _ in 0..25 {
        let p = [rng.random_range(5.0..30.0), rng.random_range(-6.0..6.0), rng.random_range(1.5..4.0)];
        pts.push(stat(p, 0, false));
    }
    let objs = objects();
    for (o, obj) in objs.iter().enumerate() {
        for local in box_shell(obj.size, obj.spacing) {
            pts.push(WorldPoint {
                position: [0, 1, 2].map(|k| obj.center[k] + local[k]),
                velocity: obj.velocity,
                class_id: obj.class_id,
                instance_id: obj.instance_id,
                sv: obj.sv,
                ground: false,
                object: Some(o),
            });
        }
    }
    (pts, objs)
}

fn sv_label(sv: SvMotion, truth: Motion, frame: usize) -> Motion {
    let flip = |m: Motion| if m.is_dynamic() { Motion::Static } else { Motion::Dynamic };
    match sv {
        SvMotion::Truth => truth,
        SvMotion::Always(m) => m,
        SvMotion::FlipAt(f) if f == frame => flip(truth),
        SvMotion::FlipAt(_) => truth,
    }
}

fn to_f32(p: [f64; 3]) -> [f32; 3] {
    p.map(|v| v as f32)
}

/// Generates the sequence; flows are computed on the points that survive
/// `preprocess` with `pre`, matching what the pipeline will read.
pub fn generate(params: &SynthParams, pre: &PreprocessParams, image: ImageSize) -> Result<SynthSequence, crate::error::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let calib = kitti_calibration();
    let (world, objs) = world_points(&mut rng);
    let poses: Vec<RigidTransform> = (0..params.frames).map(ego_pose).collect();
    let mut boxes = AnomalyBoxSet::default();
    let mut frames = Vec::with_capacity(params.frames);

    for t in 0..params.frames {
        let to_sensor = poses[t].inverse();
        let at = |w: &WorldPoint, k: usize| [0, 1, 2].map(|a| w.position[a] + w.velocity[a] * k as f64);
        let sensor: Vec<[f64; 3]> = world.iter().map(|w| to_sensor.apply_array(at(w, t))).collect();
        let intensity: Vec<f32> = world
            .iter()
            .map(|w| 0.1 + (w.class_id % 50) as f32 / 100.0)
            .collect();
        let mut cloud = PointCloud::with_intensity(sensor.iter().map(|&p| to_f32(p)).collect(), intensity)?;
        cloud.frame_id = t as u32;
        cloud.timestamp = Some(0.1 * t as f64);

        let true_motion: Vec<Motion> = world
            .iter()
            .map(|w| if w.velocity != [0.0; 3] { Motion::Dynamic } else { Motion::Static })
            .collect();
        let motion: Vec<Option<Motion>> = world
            .iter()
            .zip(&true_motion)
            .map(|(w, &m)| (w.class_id != 0).then(|| sv_label(w.sv, m, t)))
            .collect();
        let semantic = SemanticLabels {
            class_ids: world.iter().map(|w| w.class_id).collect(),
            instance_ids: world.iter().map(|w| w.instance_id).collect(),
        };
        let ground: Vec<bool> = world.iter().map(|w| w.ground).collect();

        for (o, obj) in objs.iter().enumerate() {
            let Some(superclass) = obj.anomaly else { continue };
            let pixels: Vec<_> = world
                .iter()
                .zip(&sensor)
                .filter(|(w, _)| w.object == Some(o))
                .filter_map(|(_, &p)| calib.project(p))
                .filter(|px| image.contains(px.u, px.v))
                .collect();
            if pixels.is_empty() {
                continue;
            }
            let pad = 2.0;
            let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&crate::camera::Pixel) -> f64| {
                pixels.iter().map(g).fold(init, f)
            };
            let rect = PixelBox {
                x1: (fold(f64::min, f64::INFINITY, |p| p.u) - pad).floor().max(0.0),
                y1: (fold(f64::min, f64::INFINITY, |p| p.v) - pad).floor().max(0.0),
                x2: (fold(f64::max, f64::NEG_INFINITY, |p| p.u) + pad).ceil().min(image.width as f64),
                y2: (fold(f64::max, f64::NEG_INFINITY, |p| p.v) + pad).ceil().min(image.height as f64),
            };
            boxes.push(
                t as u32,
                AnomalyBox {
                    rect,
                    superclass,
                    instance_id: obj.instance_id as u32,
                },
            );
        }

        let flow = if t + 1 < params.frames {
            let pre_out = preprocess(&cloud, &calib, image, Some(&ground), pre)?;
            let next_sensor = poses[t + 1].inverse();
            let vectors = pre_out
                .kept_indices
                .iter()
                .map(|&i| {
                    let w = &world[i];
                    let next = next_sensor.apply_array(at(w, t + 1));
                    let mut f = [0, 1, 2].map(|a| next[a] - sensor[i][a]);
                    if w.velocity == [0.0; 3] {
                        for v in &mut f {
                            *v += rng.random_range(-params.static_noise_m..=params.static_noise_m);
                        }
                    } else {
                        // relative noise on the object's own motion
                        let own = to_sensor.rotation() * Vector3::from(w.velocity);
                        for a in 0..3 {
                            f[a] += own[a] * rng.random_range(-params.mover_noise..=params.mover_noise);
                        }
                    }
                    to_f32(f)
                })
                .collect();
            let mut flow = FlowField::new(vectors);
            flow.source_frame = t as u32;
            flow.target_frame = t as u32 + 1;
            Some(flow)
        } else {
            None
        };

        frames.push(SynthFrame {
            cloud,
            semantic,
            motion,
            true_motion,
            ground,
            flow,
        });
    }
    Ok(SynthSequence {
        frames,
        poses,
        calib,
        boxes,
    })
}

/// Writes the sequence in the dataset layout the pipeline reads, plus a
/// `contra.toml` pointing at it.
pub fn write_dataset(root: &Path, seq: &SynthSequence, name: &str) -> Result<(), PipelineError> {
    let ingest = |r: Result<(), IngestError>| r.map_err(PipelineError::from);
    for (t, f) in seq.frames.iter().enumerate() {
        let id = t as u32;
        ingest(io::write_scan(&root.join("velodyne").join(frame_file_name(id, "bin")), &f.cloud))?;
        ingest(io::write_labels(&root.join("labels").join(frame_file_name(id, "label")), &f.semantic))?;
        ingest(io::write_motion_labels(&root.join("motion").join(frame_file_name(id, "label")), &f.motion))?;
        ingest(io::write_ground_mask(&root.join("ground").join(frame_file_name(id, "ground")), &f.ground))?;
        if let Some(flow) = &f.flow {
            ingest(io::write_flow(&root.join("flow").join(frame_file_name(id, "flow")), flow))?;
        }
    }
    ingest(io::write_poses(&root.join("poses.txt"), &seq.poses))?;
    ingest(io::write_calibration(&root.join("calib.txt"), &seq.calib))?;
    ingest(io::write_anomaly_boxes(&root.join("anomalies.txt"), &seq.boxes))?;
    let mut cfg = Config::default();
    cfg.dataset.name = name.into();
    ingest(io::write_atomic(&root.join("contra.toml"), cfg.to_toml().as_bytes()))?;
    Ok(())
}
