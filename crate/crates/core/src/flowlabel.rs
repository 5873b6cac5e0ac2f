//! Self-supervised stream: ego-motion compensation of predicted scene flow
//! and two-stage clustering into predictive motion labels.
//!
//! Stage 1 clusters positions; a cluster whose residual speeds have a
//! normalized standard deviation below `nstd_threshold` is *potentially
//! dynamic*. Stage 2 re-clusters only potentially dynamic points by their
//! residual flow vectors; a stage-2 cluster whose mean speed exceeds
//! `speed_threshold_kmh` is dynamic. Everything else, including noise in
//! either stage, is static.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::{norm, PointCloud, FlowField};
use crate::cluster::{dbscan, normalized_std, Clustering, DbscanParams};
use crate::error::{check_len, Error};
use crate::geometry::RigidTransform;
use crate::labels::Motion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowLabelParams {
    pub spatial_eps_m: f64,
    pub spatial_min_pts: usize,
    /// Stage-2 radius in flow space, meters per frame.
    pub flow_eps: f64,
    pub flow_min_pts: usize,
    pub nstd_threshold: f64,
    pub speed_threshold_kmh: f64,
    pub frame_interval_s: f64,
}

impl Default for FlowLabelParams {
    fn default() -> Self {
        Self {
            spatial_eps_m: 0.5,
            spatial_min_pts: 10,
            flow_eps: 0.1,
            flow_min_pts: 10,
            nstd_threshold: 0.12,
            speed_threshold_kmh: 4.0,
            frame_interval_s: 0.1,
        }
    }
}

impl FlowLabelParams {
    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("spatial_eps_m", self.spatial_eps_m),
            ("flow_eps", self.flow_eps),
            ("nstd_threshold", self.nstd_threshold),
            ("speed_threshold_kmh", self.speed_threshold_kmh),
            ("frame_interval_s", self.frame_interval_s),
            ("spatial_min_pts", self.spatial_min_pts as f64),
            ("flow_min_pts", self.flow_min_pts as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    fn spatial(&self) -> DbscanParams {
        DbscanParams {
            eps: self.spatial_eps_m,
            min_pts: self.spatial_min_pts,
        }
    }

    fn flow(&self) -> DbscanParams {
        DbscanParams {
            eps: self.flow_eps,
            min_pts: self.flow_min_pts,
        }
    }
}

/// Residual motion after removing ego-motion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompensatedFlow {
    /// Per point: compensated predicted position minus current position,
    /// meters per frame.
    pub residual: Vec<[f64; 3]>,
    pub speed_mps: Vec<f64>,
}

impl CompensatedFlow {
    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }
}

/// Moves each point by its predicted flow, maps the result back into the
/// current scan's frame with `next_to_current`, and returns the residual
/// displacement and speed per point.
pub fn compensate(
    cloud: &PointCloud,
    flow: &FlowField,
    next_to_current: &RigidTransform,
    frame_interval_s: f64,
) -> Result<CompensatedFlow, Error> {
    check_len("flow", cloud.len(), flow.len())?;
    let mut residual = Vec::with_capacity(cloud.len());
    let mut speed_mps = Vec::with_capacity(cloud.len());
    for (p, f) in cloud.points.iter().zip(&flow.vectors) {
        let x = [p[0] as f64, p[1] as f64, p[2] as f64];
        let moved = [x[0] + f[0] as f64, x[1] + f[1] as f64, x[2] + f[2] as f64];
        let back = next_to_current.apply_array(moved);
        let r = [back[0] - x[0], back[1] - x[1], back[2] - x[2]];
        speed_mps.push(norm(&r) / frame_interval_s);
        residual.push(r);
    }
    Ok(CompensatedFlow { residual, speed_mps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub members: Vec<usize>,
    pub mean_speed_mps: f64,
    pub normalized_std: f64,
}

/// Clusters with speed statistics; member indices refer to the preprocessed
/// cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterSet {
    pub assignment: Vec<Option<usize>>,
    pub clusters: Vec<ClusterStats>,
}

impl ClusterSet {
    /// Builds stats for a clustering of `subset` (indices into `speeds`).
    fn from_clustering(clustering: &Clustering, subset: &[usize], speeds: &[f64], n_total: usize) -> Self {
        let mut assignment = vec![None; n_total];
        for (local, a) in clustering.assignment.iter().enumerate() {
            assignment[subset[local]] = *a;
        }
        let clusters = clustering
            .members()
            .into_iter()
            .map(|local| {
                let members: Vec<usize> = local.iter().map(|&j| subset[j]).collect();
                let s: Vec<f64> = members.iter().map(|&i| speeds[i]).collect();
                ClusterStats {
                    mean_speed_mps: s.iter().sum::<f64>() / s.len() as f64,
                    normalized_std: normalized_std(&s),
                    members,
                }
            })
            .collect();
        Self { assignment, clusters }
    }
}

pub fn is_potentially_dynamic(nstd: f64, params: &FlowLabelParams) -> bool {
    nstd < params.nstd_threshold
}

pub fn is_fast(mean_speed_mps: f64, params: &FlowLabelParams) -> bool {
    mean_speed_mps * 3.6 > params.speed_threshold_kmh
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotionLabeling {
    pub labels: Vec<Motion>,
    pub spatial: ClusterSet,
    /// Stage-1 decision per spatial cluster.
    pub potentially_dynamic: Vec<bool>,
    pub flow: ClusterSet,
    /// Stage-2 decision per flow cluster.
    pub dynamic: Vec<bool>,
}

impl MotionLabeling {
    /// Plain-text cluster provenance, one line per cluster.
    pub fn provenance(&self, frame_id: u32) -> String {
        let mut out = String::from("# frame stage cluster members mean_speed_mps normalized_std decision\n");
        let rows = self
            .spatial
            .clusters
            .iter()
            .zip(&self.potentially_dynamic)
            .map(|(c, &pd)| ("spatial", c, if pd { "potentially_dynamic" } else { "static" }))
            .chain(
                self.flow
                    .clusters
                    .iter()
                    .zip(&self.dynamic)
                    .map(|(c, &d)| ("flow", c, if d { "dynamic" } else { "static" })),
            );
        let mut counters = [0usize; 2];
        for (stage, c, decision) in rows {
            let k = (stage == "flow") as usize;
            let _ = writeln!(
                out,
                "{frame_id} {stage} {} {} {:.6} {} {}",
                counters[k],
                c.members.len(),
                c.mean_speed_mps,
                fmt_nstd(c.normalized_std),
                decision
            );
            counters[k] += 1;
        }
        out
    }
}

fn fmt_nstd(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".into()
    }
}

pub fn label_motion(
    cloud: &PointCloud,
    comp: &CompensatedFlow,
    params: &FlowLabelParams,
) -> Result<MotionLabeling, Error> {
    params.validate()?;
    check_len("compensated flow", cloud.len(), comp.len())?;
    let n = cloud.len();
    if n == 0 {
        return Ok(MotionLabeling::default());
    }

    let positions = cloud.positions_f64();
    let all: Vec<usize> = (0..n).collect();
    let spatial_clusters = dbscan(&positions, params.spatial());
    let spatial = ClusterSet::from_clustering(&spatial_clusters, &all, &comp.speed_mps, n);
    let potentially_dynamic: Vec<bool> = spatial
        .clusters
        .iter()
        .map(|c| is_potentially_dynamic(c.normalized_std, params))
        .collect();

    let candidates: Vec<usize> = (0..n)
        .filter(|&i| spatial.assignment[i].is_some_and(|c| potentially_dynamic[c]))
        .collect();
    let flow_vectors: Vec<[f64; 3]> = candidates.iter().map(|&i| comp.residual[i]).collect();
    let flow_clusters = dbscan(&flow_vectors, params.flow());
    let flow = ClusterSet::from_clustering(&flow_clusters, &candidates, &comp.speed_mps, n);
    let dynamic: Vec<bool> = flow
        .clusters
        .iter()
        .map(|c| is_fast(c.mean_speed_mps, params))
        .collect();

    let labels = flow
        .assignment
        .iter()
        .map(|a| match a {
            Some(c) if dynamic[*c] => Motion::Dynamic,
            _ => Motion::Static,
        })
        .collect();

    Ok(MotionLabeling {
        labels,
        spatial,
        potentially_dynamic,
        flow,
        dynamic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn params() -> FlowLabelParams {
        FlowLabelParams::default()
    }

    #[test]
    fn identity_and_zero_flow() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let flow = FlowField::new(vec![[0.0; 3]; 2]);
        let c = compensate(&cloud, &flow, &RigidTransform::identity(), 0.1).unwrap();
        assert_eq!(c.residual, vec![[0.0; 3]; 2]);
        assert_eq!(c.speed_mps, vec![0.0; 2]);
    }

    #[test]
    fn hand_computed_residual() {
        let cloud = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
        let flow = FlowField::new(vec![[0.0, 1.0, 0.0]]);
        let t = RigidTransform::from_translation(0.0, 0.0, 1.0);
        let c = compensate(&cloud, &flow, &t, 0.1).unwrap();
        assert_eq!(c.residual[0], [0.0, 1.0, 1.0]);
        assert!((c.speed_mps[0] - 2f64.sqrt() / 0.1).abs() < 1e-9);
        assert!((c.speed_mps[0] - 14.142135623730951).abs() < 1e-9);
    }

    #[test]
    fn static_world_under_translation_lines_up() {
        // ego moves forward d; a static point p appears at p - d in the next
        // frame, so the scene flow is -d and T(next→current) translates by +d
        let d = Vector3::new(1.2, -0.3, 0.0);
        let cloud = PointCloud::new(vec![[10.0, 2.0, 0.5], [5.0, -3.0, 1.0]]);
        let flow = FlowField::new(vec![[-1.2, 0.3, 0.0]; 2]);
        let t = RigidTransform::identity().with_translation(d);
        let c = compensate(&cloud, &flow, &t, 0.1).unwrap();
        assert!(c.speed_mps.iter().all(|&s| s < 1e-5));
    }

    #[test]
    fn length_mismatch() {
        let cloud = PointCloud::new(vec![[0.0; 3]; 2]);
        assert!(compensate(&cloud, &FlowField::new(vec![[0.0; 3]]), &RigidTransform::identity(), 0.1).is_err());
    }

    #[test]
    fn empty_cloud_gives_empty_labels() {
        let l = label_motion(&PointCloud::default(), &CompensatedFlow::default(), &params()).unwrap();
        assert!(l.labels.is_empty());
    }

    #[test]
    fn thresholds_are_strict() {
        let p = params();
        assert!(!is_potentially_dynamic(0.12, &p));
        assert!(is_potentially_dynamic(0.1199999, &p));
        // 4 km/h is exactly 10/9 m/s
        assert!(!is_fast(1.0, &p));
        assert!(is_fast(1.2, &p));
    }

    /// A compact blob of `n` points around `center` with fixed residuals.
    fn blob(center: [f32; 3], n: usize) -> Vec<[f32; 3]> {
        (0..n)
            .map(|k| {
                let (i, j, l) = (k % 5, (k / 5) % 5, k / 25);
                [center[0] + 0.1 * i as f32, center[1] + 0.1 * j as f32, center[2] + 0.1 * l as f32]
            })
            .collect()
    }

    #[test]
    fn boundary_nstd_cluster_is_static() {
        // speeds alternate 22 and 28 m/s: mean 25, std 3, nstd == 0.12
        let pts = blob([5.0, 0.0, 0.0], 40);
        let residual: Vec<[f64; 3]> = (0..40).map(|k| [if k % 2 == 0 { 11.0 } else { 14.0 }, 0.0, 0.0]).collect();
        let speed: Vec<f64> = residual.iter().map(|r| r[0] / 0.5).collect();
        let comp = CompensatedFlow { residual, speed_mps: speed };
        let p = FlowLabelParams {
            frame_interval_s: 0.5,
            flow_eps: 5.0,
            ..params()
        };
        let l = label_motion(&PointCloud::new(pts), &comp, &p).unwrap();
        assert_eq!(l.spatial.clusters.len(), 1);
        assert_eq!(l.spatial.clusters[0].normalized_std, 0.12);
        assert_eq!(l.potentially_dynamic, vec![false]);
        assert!(l.labels.iter().all(|m| *m == Motion::Static));
    }

    proptest! {
        #[test]
        fn scaling_residuals_never_demotes(speeds in prop::collection::vec(0.0..5.0f64, 1..40), c in 1.0..10.0f64) {
            let p = params();
            let base_nstd = normalized_std(&speeds);
            let scaled: Vec<f64> = speeds.iter().map(|s| s * c).collect();
            let scaled_nstd = normalized_std(&scaled);
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let dyn_before = is_potentially_dynamic(base_nstd, &p) && is_fast(mean(&speeds), &p);
            let dyn_after = is_potentially_dynamic(scaled_nstd, &p) && is_fast(mean(&scaled), &p);
            prop_assert!(!dyn_before || dyn_after);
        }
    }
}
