//! 2D→3D anomaly label transfer and nearest-neighbor label recovery.
//!
//! Boxes are lifted to point sets with a frustum filter, the frustum is
//! clustered, and the cluster closest to the sensor is taken as the object.

use serde::{Deserialize, Serialize};

use crate::camera::{CalibrationSet, ImageSize};
use crate::cloud::{norm, PointCloud};
use crate::cluster::{dbscan, DbscanParams};
use crate::error::{check_len, Error};
use crate::io::{AnomalyBox, PixelBox, Superclass, INVALID_BYTE};
use crate::labels::DiscrepancyCategory;
use crate::preprocess::in_fov;
use crate::spatial::KdTree;

/// Anomaly ground truth for one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyPoint {
    /// Outside the camera view, so no box could have covered it.
    Unlabeled,
    Normal,
    Anomaly(Superclass),
}

impl AnomalyPoint {
    pub fn code(self) -> u8 {
        match self {
            AnomalyPoint::Unlabeled => INVALID_BYTE,
            AnomalyPoint::Normal => 0,
            AnomalyPoint::Anomaly(s) => s.code(),
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            INVALID_BYTE => Some(AnomalyPoint::Unlabeled),
            0 => Some(AnomalyPoint::Normal),
            c => Superclass::from_code(c).map(AnomalyPoint::Anomaly),
        }
    }

    pub fn is_anomaly(self) -> bool {
        matches!(self, AnomalyPoint::Anomaly(_))
    }

    pub fn is_labeled(self) -> bool {
        self != AnomalyPoint::Unlabeled
    }

    pub fn superclass(self) -> Option<Superclass> {
        match self {
            AnomalyPoint::Anomaly(s) => Some(s),
            _ => None,
        }
    }
}

/// Points in front of the camera whose projection falls inside `rect`
/// (corners inclusive).
pub fn frustum_select(cloud: &PointCloud, rect: &PixelBox, calib: &CalibrationSet) -> Vec<usize> {
    (0..cloud.len())
        .filter(|&i| {
            calib
                .project(cloud.point_f64(i))
                .is_some_and(|px| rect.contains(px.u, px.v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub eps_m: f64,
    pub min_pts: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self { eps_m: 0.5, min_pts: 5 }
    }
}

/// Clusters the frustum points and keeps the cluster whose centroid is
/// closest to the sensor. Noise is dropped; an all-noise frustum yields an
/// empty set.
pub fn refine_frustum(cloud: &PointCloud, frustum: &[usize], params: &RefineParams) -> Result<Vec<usize>, Error> {
    if frustum.is_empty() {
        return Err(Error::EmptyFrustum);
    }
    let pts: Vec<[f64; 3]> = frustum.iter().map(|&i| cloud.point_f64(i)).collect();
    let clustering = dbscan(&pts, DbscanParams::new(params.eps_m, params.min_pts)?);
    let best = clustering
        .members()
        .into_iter()
        .map(|local| {
            let mut c = [0.0; 3];
            for &j in &local {
                (0..3).for_each(|k| c[k] += pts[j][k]);
            }
            let range = norm(&c.map(|v| v / local.len() as f64));
            (range, local)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));
    Ok(best.map_or_else(Vec::new, |(_, local)| local.iter().map(|&j| frustum[j]).collect()))
}

/// Point-wise anomaly labels for one frame: points outside the camera view
/// are unlabeled, refined box members get the box superclass, the rest are
/// normal. Boxes whose frustum is empty are skipped.
pub fn transfer_boxes(
    cloud: &PointCloud,
    boxes: &[AnomalyBox],
    calib: &CalibrationSet,
    image: ImageSize,
    params: &RefineParams,
) -> Result<Vec<AnomalyPoint>, Error> {
    let mut labels: Vec<AnomalyPoint> = (0..cloud.len())
        .map(|i| {
            if in_fov(cloud.point_f64(i), calib, image) {
                AnomalyPoint::Normal
            } else {
                AnomalyPoint::Unlabeled
            }
        })
        .collect();
    for b in boxes {
        let frustum = frustum_select(cloud, &b.rect, calib);
        match refine_frustum(cloud, &frustum, params) {
            Ok(members) => {
                for i in members {
                    labels[i] = AnomalyPoint::Anomaly(b.superclass);
                }
            }
            Err(Error::EmptyFrustum) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredLabels<T> {
    pub labels: Vec<Option<T>>,
    pub unmatched: Vec<bool>,
}

/// Gives each raw point the label of its nearest accumulated point when that
/// neighbor is within `max_dist_m`. Equidistant neighbors resolve to the
/// lowest accumulated index.
pub fn recover_labels<T: Clone + Send + Sync>(
    accumulated: &PointCloud,
    accumulated_labels: &[T],
    raw: &PointCloud,
    max_dist_m: f64,
) -> Result<RecoveredLabels<T>, Error> {
    check_len("accumulated labels", accumulated.len(), accumulated_labels.len())?;
    if accumulated.is_empty() {
        return Err(Error::InvalidParameter {
            name: "accumulated",
            reason: "accumulated cloud is empty".into(),
        });
    }
    use rayon::prelude::*;
    let acc = accumulated.positions_f64();
    let tree = KdTree::new(&acc);
    let max2 = max_dist_m * max_dist_m;
    let labels: Vec<Option<T>> = (0..raw.len())
        .into_par_iter()
        .map(|i| {
            let (j, d2) = tree.nearest(&raw.point_f64(i)).expect("non-empty tree");
            (d2 <= max2).then(|| accumulated_labels[j].clone())
        })
        .collect();
    let unmatched = labels.iter().map(Option::is_none).collect();
    Ok(RecoveredLabels { labels, unmatched })
}

/// Prediction and ground-truth masks for anomaly evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensitivityMasks {
    /// Contradiction (red or yellow); unlabeled points predict negative.
    pub pred: Vec<bool>,
    pub gt: Vec<bool>,
    /// Labeled by the pipeline and by the ground truth.
    pub both_labeled: Vec<bool>,
}

pub fn sensitivity_masks(
    anomaly: &[AnomalyPoint],
    discrepancy: &[Option<DiscrepancyCategory>],
) -> Result<SensitivityMasks, Error> {
    check_len("discrepancy", anomaly.len(), discrepancy.len())?;
    Ok(SensitivityMasks {
        pred: discrepancy.iter().map(|d| d.is_some_and(|c| c.is_contradiction())).collect(),
        gt: anomaly.iter().map(|a| a.is_anomaly()).collect(),
        both_labeled: anomaly
            .iter()
            .zip(discrepancy)
            .map(|(a, d)| a.is_labeled() && d.is_some())
            .collect(),
    })
}
