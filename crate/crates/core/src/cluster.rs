//! Density-based clustering (DBSCAN) over `D`-dimensional vectors.
//!
//! A point is *core* when at least `min_pts` points (itself included) lie
//! within `eps` of it, distance inclusive. Clusters are the connected
//! components of core points under the `eps` relation; a non-core point
//! within `eps` of a core point is a *border* point and joins the cluster of
//! its lowest-index core neighbor. Everything else is noise.
//!
//! Cluster ids are assigned in order of each cluster's lowest-index core
//! point, so output is a pure function of the input sequence.

use rayon::prelude::*;

use crate::error::Error;
use crate::spatial::KdTree;

/// Result of a clustering run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    /// Cluster id per point, `None` for noise.
    pub assignment: Vec<Option<usize>>,
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

impl Clustering {
    /// Member indices per cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, a) in self.assignment.iter().enumerate() {
            if let Some(c) = a {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn noise_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self, Error> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must be positive and finite, got {eps}"),
            });
        }
        if min_pts == 0 {
            return Err(Error::InvalidParameter {
                name: "min_pts",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self { eps, min_pts })
    }
}

pub fn dbscan<const D: usize>(points: &[[f64; D]], params: DbscanParams) -> Clustering {
    let n = points.len();
    if n == 0 {
        return Clustering::default();
    }
    let DbscanParams { eps, min_pts } = params;
    let tree = KdTree::new(points);

    let core: Vec<bool> = points
        .par_iter()
        .map(|p| tree.count_within(p, eps) >= min_pts)
        .collect();

    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut n_clusters = 0;
    let mut stack = Vec::new();
    let mut neighbors = Vec::new();
    for seed in 0..n {
        if !core[seed] || assignment[seed].is_some() {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        assignment[seed] = Some(id);
        stack.push(seed);
        while let Some(j) = stack.pop() {
            neighbors.clear();
            tree.within_radius(&points[j], eps, &mut neighbors);
            for &k in &neighbors {
                if core[k] && assignment[k].is_none() {
                    assignment[k] = Some(id);
                    stack.push(k);
                }
            }
        }
    }

    let border: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .filter(|&i| !core[i])
        .filter_map(|i| {
            let mut nb = Vec::new();
            tree.within_radius(&points[i], eps, &mut nb);
            nb.into_iter().filter(|&k| core[k]).min().map(|k| (i, k))
        })
        .collect();
    for (i, k) in border {
        assignment[i] = assignment[k];
    }

    Clustering {
        assignment,
        core,
        n_clusters,
    }
}

/// Coefficient of variation of `speeds`: population standard deviation over
/// mean. Returns `+∞` when the mean is below 1e-9 (degenerate cluster, which
/// callers treat as static).
pub fn normalized_std(speeds: &[f64]) -> f64 {
    assert!(!speeds.is_empty(), "normalized_std of an empty cluster");
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    if mean < 1e-9 {
        return f64::INFINITY;
    }
    let var = speeds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}
