//! Point clouds and scene-flow fields.

use crate::error::{check_len, Error};

/// One lidar scan in the sensor frame. Coordinates are stored in `f32`, the
/// on-disk precision; algorithms widen to `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub intensity: Option<Vec<f32>>,
    pub frame_id: u32,
    pub timestamp: Option<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    pub fn with_intensity(points: Vec<[f32; 3]>, intensity: Vec<f32>) -> Result<Self, Error> {
        check_len("intensity", points.len(), intensity.len())?;
        Ok(Self {
            points,
            intensity: Some(intensity),
            ..Default::default()
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point_f64(&self, i: usize) -> [f64; 3] {
        widen(self.points[i])
    }

    pub fn positions_f64(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|&p| widen(p)).collect()
    }

    /// Sub-cloud at `indices`, keeping intensity and frame metadata.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            intensity: self
                .intensity
                .as_ref()
                .map(|v| indices.iter().map(|&i| v[i]).collect()),
            frame_id: self.frame_id,
            timestamp: self.timestamp,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn widen(p: [f32; 3]) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

/// Per-point displacement from scan `source_frame` to `target_frame`, in the
/// sensor frame of the source scan.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowField {
    pub vectors: Vec<[f32; 3]>,
    pub source_frame: u32,
    pub target_frame: u32,
}

impl FlowField {
    pub fn new(vectors: Vec<[f32; 3]>) -> Self {
        Self {
            vectors,
            source_frame: 0,
            target_frame: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub(crate) fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}
