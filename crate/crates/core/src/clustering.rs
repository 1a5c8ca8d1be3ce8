//! Binarization of a contrast field by 1-D k-means over its roi values.
//!
//! In one dimension the optimal k-means clusters are contiguous runs of the
//! sorted values, so the global optimum is found exactly by dynamic
//! programming over split points (prefix sums give each run's squared error
//! in O(1); the monotone split structure lets each layer be solved by divide
//! and conquer). The result is the fixed point Lloyd's iteration converges to
//! from the best initialization.

use crate::error::{Error, Result};
use crate::potential::ContrastField;
use crate::raster::{BitMask, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster means, strictly ascending.
    pub centers: Vec<f64>,
    /// Cluster index per roi pixel, row-major over the roi.
    pub assignment: Vec<u8>,
    /// Pixels of the cluster with the largest center.
    pub selected: BitMask,
    /// All roi values were equal; `selected` is the whole roi.
    pub degenerate: bool,
    pub roi: Rect,
}

impl ClusterResult {
    /// Cluster index of pixel `(x, y)`, `None` outside the roi.
    pub fn cluster_at(&self, x: usize, y: usize) -> Option<usize> {
        let r = self.roi;
        r.contains(x, y)
            .then(|| self.assignment[(y - r.y0) * r.width() + (x - r.x0)] as usize)
    }

    pub fn top(&self) -> usize {
        self.centers.len() - 1
    }
}

pub fn kmeans_binarize(field: &ContrastField, k: usize) -> Result<ClusterResult> {
    if !(2..=3).contains(&k) {
        return Err(Error::InvalidK(k));
    }
    let roi = field.roi();
    let (w, h) = field.dims();
    let values = field.roi_values();
    let clusters = optimal_1d(&values, k);

    let mut selected = BitMask::empty(w, h);
    let top = clusters.centers.len() - 1;
    for (i, c) in clusters.assignment.iter().enumerate() {
        if *c as usize == top {
            selected.set(roi.x0 + i % roi.width(), roi.y0 + i / roi.width(), true);
        }
    }
    Ok(ClusterResult {
        degenerate: clusters.centers.len() == 1,
        centers: clusters.centers,
        assignment: clusters.assignment,
        selected,
        roi,
    })
}

pub(crate) struct Clusters {
    pub centers: Vec<f64>,
    pub assignment: Vec<u8>,
}

/// Globally optimal 1-D k-means. Equal values always share a cluster; with
/// fewer than `k` distinct values each distinct value is its own cluster.
pub(crate) fn optimal_1d(values: &[f32], k: usize) -> Clusters {
    if values.is_empty() {
        return Clusters {
            centers: vec![0.0],
            assignment: Vec::new(),
        };
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| *v as f64).collect();
    sorted.sort_by(f64::total_cmp);
    // distinct values with multiplicities
    let mut distinct: Vec<f64> = Vec::new();
    let mut weight: Vec<f64> = Vec::new();
    for v in sorted {
        if distinct.last() == Some(&v) {
            *weight.last_mut().unwrap() += 1.0;
        } else {
            distinct.push(v);
            weight.push(1.0);
        }
    }
    let d = distinct.len();
    let k = k.min(d);

    let mut pw = vec![0.0; d + 1];
    let mut pv = vec![0.0; d + 1];
    let mut pv2 = vec![0.0; d + 1];
    for i in 0..d {
        pw[i + 1] = pw[i] + weight[i];
        pv[i + 1] = pv[i] + weight[i] * distinct[i];
        pv2[i + 1] = pv2[i] + weight[i] * distinct[i] * distinct[i];
    }
    let cost = |a: usize, b: usize| -> f64 {
        let n = pw[b] - pw[a];
        let s = pv[b] - pv[a];
        (pv2[b] - pv2[a] - s * s / n).max(0.0)
    };

    // best[j][t]: optimal cost of the first t distinct values in j+1 groups
    let mut best = vec![vec![f64::INFINITY; d + 1]; k];
    let mut arg = vec![vec![0usize; d + 1]; k];
    for t in 1..=d {
        best[0][t] = cost(0, t);
    }
    for j in 1..k {
        let (prev, cur) = best.split_at_mut(j);
        solve_layer(
            &prev[j - 1],
            &mut cur[0],
            &mut arg[j],
            (j + 1, d),
            (j, d - 1),
            &cost,
        );
    }

    // recover split points
    let mut bounds = vec![d];
    let mut t = d;
    for j in (1..k).rev() {
        t = arg[j][t];
        bounds.push(t);
    }
    bounds.push(0);
    bounds.reverse();

    let centers: Vec<f64> = bounds
        .windows(2)
        .map(|b| (pv[b[1]] - pv[b[0]]) / (pw[b[1]] - pw[b[0]]))
        .collect();
    // first distinct value of each cluster after the first
    let thresholds: Vec<f64> = bounds[1..k].iter().map(|b| distinct[*b]).collect();
    let assignment = values
        .iter()
        .map(|v| thresholds.partition_point(|t| *t <= *v as f64) as u8)
        .collect();
    Clusters {
        centers,
        assignment,
    }
}

/// Divide-and-conquer layer: for `t` in `[t_lo, t_hi]` find the split `s` in
/// `[s_lo, min(s_hi, t-1)]` minimizing `prev[s] + cost(s, t)`; the optimal
/// split is non-decreasing in `t`. Ties go to the smallest split.
fn solve_layer(
    prev: &[f64],
    cur: &mut [f64],
    arg: &mut [usize],
    (t_lo, t_hi): (usize, usize),
    (s_lo, s_hi): (usize, usize),
    cost: &impl Fn(usize, usize) -> f64,
) {
    if t_lo > t_hi {
        return;
    }
    let t = (t_lo + t_hi) / 2;
    let mut best = f64::INFINITY;
    let mut best_s = s_lo;
    for s in s_lo..=s_hi.min(t - 1) {
        let v = prev[s] + cost(s, t);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    cur[t] = best;
    arg[t] = best_s;
    if t > t_lo {
        solve_layer(prev, cur, arg, (t_lo, t - 1), (s_lo, best_s), cost);
    }
    solve_layer(prev, cur, arg, (t + 1, t_hi), (best_s, s_hi), cost);
}
