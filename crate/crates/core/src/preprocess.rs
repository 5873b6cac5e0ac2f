//! Scan preprocessing ahead of scene-flow labeling: camera field-of-view
//! filter, range cutoff and ground removal, followed by optional uniform
//! downsampling. Every step keeps an index map back to the raw scan.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CalibrationSet, ImageSize};
use crate::cloud::PointCloud;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMetric {
    /// Euclidean norm in 3D.
    Euclidean,
    /// Distance in the sensor xy plane.
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMode {
    Mask,
    Ransac,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMaskSource {
    ExternalMask,
    PlaneFit,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub inlier_threshold_m: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_threshold_m: 0.2,
            iterations: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessParams {
    pub fov: bool,
    pub max_range_m: f64,
    pub range_metric: RangeMetric,
    pub ground: GroundMode,
    pub ransac: RansacParams,
    /// Uniform random downsampling budget; `None` keeps every point.
    pub downsample: Option<usize>,
    pub seed: u64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            fov: true,
            max_range_m: 35.0,
            range_metric: RangeMetric::Euclidean,
            ground: GroundMode::Mask,
            ransac: RansacParams::default(),
            downsample: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessResult {
    /// Strictly increasing raw-scan indices of the kept points.
    pub kept_indices: Vec<usize>,
    pub cloud: PointCloud,
    pub ground_mask_source: GroundMaskSource,
}

/// Indices of points in front of the camera whose projection lands inside
/// the image.
pub fn fov_filter(cloud: &PointCloud, calib: &CalibrationSet, image: ImageSize) -> Vec<usize> {
    (0..cloud.len())
        .filter(|&i| in_fov(cloud.point_f64(i), calib, image))
        .collect()
}

pub(crate) fn in_fov(p: [f64; 3], calib: &CalibrationSet, image: ImageSize) -> bool {
    calib.project(p).is_some_and(|px| image.contains(px.u, px.v))
}

/// Indices of points no farther than `max_range_m` (boundary kept).
pub fn range_filter(cloud: &PointCloud, max_range_m: f64) -> Vec<usize> {
    range_filter_with(cloud, max_range_m, RangeMetric::Euclidean)
}

pub fn range_filter_with(cloud: &PointCloud, max_range_m: f64, metric: RangeMetric) -> Vec<usize> {
    (0..cloud.len())
        .filter(|&i| within_range(cloud.point_f64(i), max_range_m, metric))
        .collect()
}

fn within_range(p: [f64; 3], max_range_m: f64, metric: RangeMetric) -> bool {
    let r2 = match metric {
        RangeMetric::Euclidean => p[0] * p[0] + p[1] * p[1] + p[2] * p[2],
        RangeMetric::Planar => p[0] * p[0] + p[1] * p[1],
    };
    r2.sqrt() <= max_range_m
}

/// Indices of non-ground points. With a mask the masked points are dropped;
/// without one a single plane is fitted by RANSAC and every point on or below
/// `plane + threshold` is dropped.
pub fn remove_ground(
    cloud: &PointCloud,
    ground_mask: Option<&[bool]>,
    ransac: &RansacParams,
) -> Result<(Vec<usize>, GroundMaskSource), Error> {
    if let Some(mask) = ground_mask {
        if mask.len() != cloud.len() {
            return Err(Error::MaskLengthMismatch {
                expected: cloud.len(),
                actual: mask.len(),
            });
        }
        let kept = (0..cloud.len()).filter(|&i| !mask[i]).collect();
        return Ok((kept, GroundMaskSource::ExternalMask));
    }
    let pts = cloud.positions_f64();
    let kept = match fit_plane(&pts, ransac) {
        Some(plane) => (0..pts.len())
            .filter(|&i| plane.signed_distance(&pts[i]) > ransac.inlier_threshold_m)
            .collect(),
        None => (0..pts.len()).collect(),
    };
    Ok((kept, GroundMaskSource::PlaneFit))
}

/// Plane `normal·p + offset = 0` with unit normal oriented towards +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    fn through(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<Plane> {
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let mut n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len < 1e-9 {
            return None;
        }
        let sign = if n[2] < 0.0 { -1.0 } else { 1.0 };
        n.iter_mut().for_each(|x| *x *= sign / len);
        let offset = -(n[0] * a[0] + n[1] * a[1] + n[2] * a[2]);
        Some(Plane { normal: n, offset })
    }

    pub fn signed_distance(&self, p: &[f64; 3]) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] + self.offset
    }
}

/// Best single plane by inlier count (`|distance| ≤ threshold`).
pub fn fit_plane(points: &[[f64; 3]], params: &RansacParams) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..params.iterations {
        let pick = sample(&mut rng, points.len(), 3);
        let Some(plane) = Plane::through(&points[pick.index(0)], &points[pick.index(1)], &points[pick.index(2)]) else {
            continue;
        };
        let inliers = points
            .iter()
            .filter(|p| plane.signed_distance(p).abs() <= params.inlier_threshold_m)
            .count();
        if best.is_none_or(|(n, _)| inliers > n) {
            best = Some((inliers, plane));
        }
    }
    best.map(|(_, p)| p)
}

/// FOV → range → ground, then optional downsampling.
pub fn preprocess(
    cloud: &PointCloud,
    calib: &CalibrationSet,
    image: ImageSize,
    ground_mask: Option<&[bool]>,
    params: &PreprocessParams,
) -> Result<PreprocessResult, Error> {
    if !(params.max_range_m > 0.0) {
        return Err(Error::InvalidParameter {
            name: "max_range_m",
            reason: format!("must be positive, got {}", params.max_range_m),
        });
    }
    if let Some(mask) = ground_mask {
        if mask.len() != cloud.len() {
            return Err(Error::MaskLengthMismatch {
                expected: cloud.len(),
                actual: mask.len(),
            });
        }
    }
    let mut kept: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            let p = cloud.point_f64(i);
            (!params.fov || in_fov(p, calib, image)) && within_range(p, params.max_range_m, params.range_metric)
        })
        .collect();

    let source = match params.ground {
        GroundMode::Off => GroundMaskSource::None,
        mode => {
            if mode == GroundMode::Mask && ground_mask.is_none() {
                return Err(Error::InvalidParameter {
                    name: "ground",
                    reason: "mask mode requires a ground mask".into(),
                });
            }
            let subset = cloud.select(&kept);
            let sub_mask: Option<Vec<bool>> = match (mode, ground_mask) {
                (GroundMode::Mask, Some(m)) => Some(gather(&kept, m)),
                _ => None,
            };
            let (local, source) = remove_ground(&subset, sub_mask.as_deref(), &params.ransac)?;
            kept = local.into_iter().map(|j| kept[j]).collect();
            source
        }
    };

    if let Some(budget) = params.downsample {
        if kept.len() > budget {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let mut pick = sample(&mut rng, kept.len(), budget).into_vec();
            pick.sort_unstable();
            kept = pick.into_iter().map(|j| kept[j]).collect();
        }
    }

    Ok(PreprocessResult {
        cloud: cloud.select(&kept),
        kept_indices: kept,
        ground_mask_source: source,
    })
}

/// Spreads a layer defined on kept points back onto the raw index space.
pub fn scatter<T: Clone>(kept: &[usize], values: &[T], n_raw: usize, fill: T) -> Vec<T> {
    assert_eq!(kept.len(), values.len(), "scatter: layer does not match index map");
    let mut out = vec![fill; n_raw];
    for (&i, v) in kept.iter().zip(values) {
        out[i] = v.clone();
    }
    out
}

pub fn gather<T: Clone>(kept: &[usize], raw: &[T]) -> Vec<T> {
    kept.iter().map(|&i| raw[i].clone()).collect()
}

/// Uniformly random points in a box, used by tests and benches.
pub fn random_cloud(n: usize, half_extent: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = half_extent as f32;
    PointCloud::new(
        (0..n)
            .map(|_| [rng.random_range(-h..h), rng.random_range(-h..h), rng.random_range(-h..h) * 0.1])
            .collect(),
    )
}
