//! Point-wise comparison of the two motion streams and extraction of
//! contradiction clusters for review.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::cluster::{dbscan, DbscanParams};
use crate::error::{check_len, Error};
use crate::labels::{DiscrepancyCategory, Motion};

/// Per-frame category counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameDiscrepancyStats {
    pub frame_id: u32,
    /// Indexed by [`DiscrepancyCategory::code`]: green, blue, red, yellow.
    pub counts: [u64; 4],
    pub n_both_valid: u64,
    pub n_total: u64,
}

impl FrameDiscrepancyStats {
    pub fn count(&self, c: DiscrepancyCategory) -> u64 {
        self.counts[c.code() as usize]
    }

    pub fn contradictions(&self) -> u64 {
        self.count(DiscrepancyCategory::SvStaticSsvDynamic) + self.count(DiscrepancyCategory::SvDynamicSsvStatic)
    }

    pub fn merge(&self, other: &FrameDiscrepancyStats) -> FrameDiscrepancyStats {
        let mut counts = self.counts;
        for (a, b) in counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        FrameDiscrepancyStats {
            frame_id: self.frame_id.min(other.frame_id),
            counts,
            n_both_valid: self.n_both_valid + other.n_both_valid,
            n_total: self.n_total + other.n_total,
        }
    }

    pub fn from_categories(frame_id: u32, categories: &[Option<DiscrepancyCategory>]) -> Self {
        let mut stats = FrameDiscrepancyStats {
            frame_id,
            n_total: categories.len() as u64,
            ..Default::default()
        };
        for c in categories.iter().flatten() {
            stats.counts[c.code() as usize] += 1;
            stats.n_both_valid += 1;
        }
        stats
    }
}

/// Category per point, `None` unless both streams labeled the point.
pub fn classify(
    sv: &[Option<Motion>],
    ssv: &[Option<Motion>],
) -> Result<(Vec<Option<DiscrepancyCategory>>, FrameDiscrepancyStats), Error> {
    check_len("ssv motion", sv.len(), ssv.len())?;
    let cats: Vec<Option<DiscrepancyCategory>> = sv
        .iter()
        .zip(ssv)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => Some(DiscrepancyCategory::from_motions(*a, *b)),
            _ => None,
        })
        .collect();
    let stats = FrameDiscrepancyStats::from_categories(0, &cats);
    Ok((cats, stats))
}

/// Corpus-level category fractions (green, blue, red, yellow).
pub fn aggregate(stats: &[FrameDiscrepancyStats]) -> Result<[f64; 4], Error> {
    let total = stats
        .iter()
        .fold(FrameDiscrepancyStats::default(), |acc, s| acc.merge(s));
    if total.n_both_valid == 0 {
        return Err(Error::EmptyCorpus);
    }
    let n = total.n_both_valid as f64;
    Ok(total.counts.map(|c| c as f64 / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContradictionParams {
    pub eps_m: f64,
    /// DBSCAN density; 1 links every point within `eps_m` (single linkage).
    pub min_pts: usize,
    /// Clusters smaller than this are dropped.
    pub min_size: usize,
}

impl Default for ContradictionParams {
    fn default() -> Self {
        Self {
            eps_m: 0.5,
            min_pts: 1,
            min_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContradictionCluster {
    pub frame_id: u32,
    pub cluster_id: u32,
    pub category: DiscrepancyCategory,
    /// Raw scan indices, ascending.
    pub member_indices: Vec<usize>,
    pub centroid: [f64; 3],
    /// Most frequent fused class among members; ties go to the lower id.
    pub semantic_mode: Option<u16>,
}

impl ContradictionCluster {
    pub fn point_count(&self) -> usize {
        self.member_indices.len()
    }
}

/// Clusters red and yellow points separately; red clusters get the lower
/// ids. `classes` (fused class id per point) feeds `semantic_mode`.
pub fn extract_clusters(
    cloud: &PointCloud,
    categories: &[Option<DiscrepancyCategory>],
    classes: Option<&[u16]>,
    params: &ContradictionParams,
) -> Result<Vec<ContradictionCluster>, Error> {
    check_len("categories", cloud.len(), categories.len())?;
    if let Some(c) = classes {
        check_len("classes", cloud.len(), c.len())?;
    }
    let dbscan_params = DbscanParams::new(params.eps_m, params.min_pts)?;
    let mut out = Vec::new();
    for category in [DiscrepancyCategory::SvStaticSsvDynamic, DiscrepancyCategory::SvDynamicSsvStatic] {
        let idx: Vec<usize> = (0..categories.len())
            .filter(|&i| categories[i] == Some(category))
            .collect();
        let pts: Vec<[f64; 3]> = idx.iter().map(|&i| cloud.point_f64(i)).collect();
        let clustering = dbscan(&pts, dbscan_params);
        for local in clustering.members() {
            if local.len() < params.min_size {
                continue;
            }
            let members: Vec<usize> = local.iter().map(|&j| idx[j]).collect();
            let mut centroid = [0.0; 3];
            for &j in &local {
                for k in 0..3 {
                    centroid[k] += pts[j][k];
                }
            }
            centroid.iter_mut().for_each(|v| *v /= local.len() as f64);
            let semantic_mode = classes.and_then(|c| mode(members.iter().map(|&i| c[i])));
            out.push(ContradictionCluster {
                frame_id: cloud.frame_id,
                cluster_id: out.len() as u32,
                category,
                member_indices: members,
                centroid,
                semantic_mode,
            });
        }
    }
    Ok(out)
}

fn mode(values: impl Iterator<Item = u16>) -> Option<u16> {
    let mut counts: BTreeMap<u16, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // max_by_key returns the last maximum; iterate descending so ties pick the lowest id
    counts.into_iter().rev().max_by_key(|&(_, n)| n).map(|(v, _)| v)
}

/// One line of the contradiction-cluster manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub frame_id: u32,
    pub cluster_id: u32,
    pub category: DiscrepancyCategory,
    pub point_count: usize,
    pub centroid: [f64; 3],
    pub semantic_mode: Option<u16>,
}

impl From<&ContradictionCluster> for ManifestRecord {
    fn from(c: &ContradictionCluster) -> Self {
        Self {
            frame_id: c.frame_id,
            cluster_id: c.cluster_id,
            category: c.category,
            point_count: c.point_count(),
            centroid: c.centroid,
            semantic_mode: c.semantic_mode,
        }
    }
}

pub const MANIFEST_HEADER: &str =
    "# frame_id cluster_id category point_count centroid_x centroid_y centroid_z semantic_mode";

pub fn format_manifest<'a>(records: impl IntoIterator<Item = &'a ManifestRecord>) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{} {} {} {} {:.4} {:.4} {:.4} {}",
            r.frame_id,
            r.cluster_id,
            r.category,
            r.point_count,
            r.centroid[0],
            r.centroid[1],
            r.centroid[2],
            r.semantic_mode.map_or("-".to_string(), |m| m.to_string())
        );
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| format!("line {}: bad {what}", n + 1);
        if f.len() != 8 {
            return Err(bad("field count"));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad("centroid"));
        out.push(ManifestRecord {
            frame_id: f[0].parse().map_err(|_| bad("frame_id"))?,
            cluster_id: f[1].parse().map_err(|_| bad("cluster_id"))?,
            category: f[2].parse().map_err(|_| bad("category"))?,
            point_count: f[3].parse().map_err(|_| bad("point_count"))?,
            centroid: [num(4)?, num(5)?, num(6)?],
            semantic_mode: match f[7] {
                "-" => None,
                s => Some(s.parse().map_err(|_| bad("semantic_mode"))?),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use DiscrepancyCategory::*;

    const S: Option<Motion> = Some(Motion::Static);
    const D: Option<Motion> = Some(Motion::Dynamic);

    #[test]
    fn truth_table() {
        let (cats, stats) = classify(&[S, D, S, D, S, None], &[S, D, D, S, None, D]).unwrap();
        assert_eq!(
            cats,
            vec![
                Some(AgreeStatic),
                Some(AgreeDynamic),
                Some(SvStaticSsvDynamic),
                Some(SvDynamicSsvStatic),
                None,
                None
            ]
        );
        assert_eq!(stats.counts, [1, 1, 1, 1]);
        assert_eq!(stats.n_both_valid, 4);
        assert_eq!(stats.n_total, 6);
        assert_eq!(SvStaticSsvDynamic.color(), "red");
        assert_eq!(AgreeDynamic.color(), "blue");
    }

    #[test]
    fn aggregate_cases() {
        let one = FrameDiscrepancyStats::from_categories(0, &[Some(AgreeStatic); 5]);
        assert_eq!(aggregate(&[one]).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        let empty = FrameDiscrepancyStats::from_categories(0, &[None; 5]);
        assert_eq!(aggregate(&[empty]), Err(Error::EmptyCorpus));
        assert_eq!(aggregate(&[]), Err(Error::EmptyCorpus));
        let a = FrameDiscrepancyStats { counts: [6, 2, 1, 1], n_both_valid: 10, ..Default::default() };
        let b = FrameDiscrepancyStats { counts: [24, 3, 2, 1], n_both_valid: 30, ..Default::default() };
        // (6+24)/40, (2+3)/40, (1+2)/40, (1+1)/40
        assert_eq!(aggregate(&[a, b]).unwrap(), [0.75, 0.125, 0.075, 0.05]);
    }

    fn ball(center: [f32; 3], n: usize, radius: f32) -> Vec<[f32; 3]> {
        // deterministic spiral inside a ball
        (0..n)
            .map(|k| {
                let t = k as f32 / n as f32;
                let r = radius * t.cbrt();
                let a = k as f32 * 2.399_963;
                let z = 1.0 - 2.0 * t;
                let s = (1.0 - z * z).sqrt();
                [center[0] + r * s * a.cos(), center[1] + r * s * a.sin(), center[2] + r * z]
            })
            .collect()
    }

    #[test]
    fn one_red_ball() {
        let cloud = PointCloud::new(ball([10.0, 0.0, 0.0], 50, 0.5));
        let cats = vec![Some(SvStaticSsvDynamic); 50];
        let c = extract_clusters(&cloud, &cats, None, &ContradictionParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].point_count(), 50);
        assert_eq!(c[0].category, SvStaticSsvDynamic);
    }

    #[test]
    fn scattered_yellow_dropped() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 5.0, 0.0]]);
        let cats = vec![Some(SvDynamicSsvStatic); 3];
        assert!(extract_clusters(&cloud, &cats, None, &ContradictionParams::default()).unwrap().is_empty());
    }

    #[test]
    fn mixed_blob_splits_by_category() {
        let pts = ball([8.0, 1.0, 0.0], 60, 0.5);
        let cats: Vec<_> = (0..60).map(|i| Some(if i % 2 == 0 { SvStaticSsvDynamic } else { SvDynamicSsvStatic })).collect();
        let classes: Vec<u16> = (0..60).map(|i| if i < 40 { 10 } else { 30 }).collect();
        let c = extract_clusters(&PointCloud::new(pts), &cats, Some(&classes), &ContradictionParams::default()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].category, SvStaticSsvDynamic);
        assert_eq!(c[1].category, SvDynamicSsvStatic);
        assert_eq!(c[0].cluster_id, 0);
        assert_eq!(c[1].cluster_id, 1);
        assert_eq!(c[0].point_count() + c[1].point_count(), 60);
        assert_eq!(c[0].semantic_mode, Some(10));
    }

    #[test]
    fn mode_ties_pick_lowest() {
        assert_eq!(mode([5u16, 3, 5, 3].into_iter()), Some(3));
        assert_eq!(mode([7u16, 3, 7].into_iter()), Some(7));
        assert_eq!(mode(std::iter::empty()), None);
    }

    #[test]
    fn manifest_round_trip() {
        let r = ManifestRecord {
            frame_id: 3,
            cluster_id: 1,
            category: SvDynamicSsvStatic,
            point_count: 12,
            centroid: [1.25, -2.5, 0.125],
            semantic_mode: Some(31),
        };
        let r2 = ManifestRecord { semantic_mode: None, ..r.clone() };
        let text = format_manifest([&r, &r2]);
        assert_eq!(parse_manifest(&text).unwrap(), vec![r, r2]);
        assert!(parse_manifest("1 2 purple 3 0 0 0 -").is_err());
    }

    fn arb_motion() -> impl Strategy<Value = Option<Motion>> {
        prop_oneof![Just(None), Just(S), Just(D)]
    }

    proptest! {
        #[test]
        fn stream_swap_and_fractions(pairs in prop::collection::vec((arb_motion(), arb_motion()), 1..200)) {
            let sv: Vec<_> = pairs.iter().map(|p| p.0).collect();
            let ssv: Vec<_> = pairs.iter().map(|p| p.1).collect();
            let (a, sa) = classify(&sv, &ssv).unwrap();
            let (b, _) = classify(&ssv, &sv).unwrap();
            for (x, y) in a.iter().zip(&b) {
                let swapped = x.map(|c| match c {
                    SvStaticSsvDynamic => SvDynamicSsvStatic,
                    SvDynamicSsvStatic => SvStaticSsvDynamic,
                    other => other,
                });
                prop_assert_eq!(swapped, *y);
            }
            prop_assert_eq!(sa.counts.iter().sum::<u64>(), sa.n_both_valid);
            prop_assert!(sa.n_both_valid <= sa.n_total);
            if sa.n_both_valid > 0 {
                let f = aggregate(&[sa]).unwrap();
                prop_assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn clusters_are_disjoint(seed in any::<u64>()) {
            let cloud = crate::preprocess::random_cloud(300, 3.0, seed);
            let cats: Vec<_> = (0..300).map(|i| DiscrepancyCategory::from_code(((i as u64 ^ seed) % 5) as u8)).collect();
            let clusters = extract_clusters(&cloud, &cats, None, &ContradictionParams::default()).unwrap();
            let mut seen = std::collections::HashSet::new();
            for c in &clusters {
                prop_assert!(c.point_count() >= 5);
                for &m in &c.member_indices {
                    prop_assert!(seen.insert(m));
                    prop_assert_eq!(cats[m], Some(c.category));
                }
            }
        }
    }
}
