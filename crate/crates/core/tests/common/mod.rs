//! Independent reference implementations and fixture helpers shared by the
//! integration tests. The oracles are deliberately naive.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use contra_core::pipeline::{output_digests, Pipeline};
use contra_core::Config;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/seq00")
}

pub fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/seq00.sha256")
}

/// Fixture config with the output redirected.
pub fn fixture_config(out: &Path) -> Config {
    let mut cfg = Config::load(&fixture_dir().join("contra.toml")).expect("fixture config");
    cfg.output.dir = out.to_path_buf();
    cfg
}

pub fn run_fixture(out: &Path) -> BTreeMap<String, String> {
    let pipeline = Pipeline::new(fixture_config(out)).expect("pipeline");
    pipeline.run_all().expect("run_all");
    output_digests(out).expect("digests")
}

pub fn format_digests(d: &BTreeMap<String, String>) -> String {
    d.iter().map(|(k, v)| format!("{v}  {k}\n")).collect()
}

pub fn parse_digests(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once("  "))
        .map(|(h, p)| (p.to_string(), h.to_string()))
        .collect()
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// O(n²) DBSCAN: core points have at least `min_pts` points (themselves
/// included) within `eps`; clusters are connected components of core points
/// numbered by their lowest core index; a border point joins the cluster of
/// its lowest-index core neighbor.
pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let eps2 = eps * eps;
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| d2(&points[i], &points[j]) <= eps2).collect())
        .collect();
    let core: Vec<bool> = adj.iter().map(|a| a.len() >= min_pts).collect();
    let mut label = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || label[start].is_some() {
            continue;
        }
        let mut stack = vec![start];
        label[start] = Some(next);
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if core[j] && label[j].is_none() {
                    label[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    (0..n)
        .map(|i| {
            if core[i] {
                label[i]
            } else {
                adj[i].iter().copied().filter(|&j| core[j]).min().and_then(|j| label[j])
            }
        })
        .collect()
}

/// Renumbers cluster ids by first appearance so partitions can be compared.
pub fn canonical(assignment: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut map = BTreeMap::new();
    assignment
        .iter()
        .map(|a| {
            a.map(|c| {
                let k = map.len();
                *map.entry(c).or_insert(k)
            })
        })
        .collect()
}

/// Nearest point by linear scan; ties go to the lowest index.
pub fn nearest_oracle(points: &[[f64; 3]], q: [f64; 3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = d2(p, &q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// y = R x + t with R given row-major, written out by hand.
pub fn apply_rt(r: &[[f64; 3]; 3], t: &[f64; 3], x: [f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2] + t[i];
    }
    y
}

/// x = Rᵀ (y - t).
pub fn invert_rt(r: &[[f64; 3]; 3], t: &[f64; 3], y: [f64; 3]) -> [f64; 3] {
    let d = [y[0] - t[0], y[1] - t[1], y[2] - t[2]];
    let mut x = [0.0; 3];
    for i in 0..3 {
        x[i] = r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2];
    }
    x
}

/// Rodrigues rotation about a unit axis.
pub fn rodrigues(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|v| v / n);
    let (s, c) = angle.sin_cos();
    let v = 1.0 - c;
    [
        [c + x * x * v, x * y * v - z * s, x * z * v + y * s],
        [y * x * v + z * s, c + y * y * v, y * z * v - x * s],
        [z * x * v - y * s, z * y * v + x * s, c + z * z * v],
    ]
}

/// IoU, precision, recall, F1 from counts, 0 when a denominator is 0.
pub fn metrics_oracle(tp: u64, fp: u64, fn_: u64) -> [f64; 4] {
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = div(tp, tp + fp);
    let r = div(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    [div(tp, tp + fp + fn_), p, r, f1]
}
