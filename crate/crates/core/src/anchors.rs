//! Anchor selection by k-means.
//!
//! Seeding is D²-weighted (k-means++), iterations are plain Lloyd steps on
//! squared Euclidean distance. A cluster that empties out is re-seeded with the
//! point that sits farthest from its current center.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SglError};
use crate::matrix::{sq_dist, DenseMatrix};
use crate::rng::{child_seed, stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centers: DenseMatrix,
    pub assignments: Vec<usize>,
    pub sse: f64,
    /// SSE after every Lloyd iteration, nonincreasing.
    pub sse_trace: Vec<f64>,
    pub iterations: usize,
}

/// The anchor dictionary: `m` centers in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub centers: DenseMatrix,
    pub within_cluster_sse: f64,
    pub iterations_used: usize,
    /// Which anchor each training sample was assigned to during selection.
    pub assignments: Vec<usize>,
}

impl AnchorSet {
    pub fn m(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    /// Reorders anchors so that new anchor `j` is old anchor `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> AnchorSet {
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        AnchorSet {
            centers: self.centers.select_rows(order),
            within_cluster_sse: self.within_cluster_sse,
            iterations_used: self.iterations_used,
            assignments: self.assignments.iter().map(|&a| inverse[a]).collect(),
        }
    }
}

/// Lloyd's k-means with D² seeding, deterministic in `seed`.
pub fn kmeans(data: &DenseMatrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = data.rows();
    if k == 0 {
        return Err(SglError::config("k-means needs k >= 1"));
    }
    if k > n {
        return Err(SglError::config(format!(
            "k-means needs k <= n (k = {k}, n = {n})"
        )));
    }
    if max_iter == 0 {
        return Err(SglError::config("k-means needs max_iter >= 1"));
    }

    let mut rng = stream_rng(seed, Stream::Anchors);
    let mut centers = seed_plus_plus(data, k, &mut rng)?;
    let mut assignments = vec![usize::MAX; n];
    let mut sse_trace = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let nearest = assign(data, &centers);
        let changed = nearest
            .iter()
            .zip(&assignments)
            .any(|((c, _), &old)| *c != old);
        let mut dists: Vec<f64> = nearest.iter().map(|&(_, d)| d).collect();
        assignments = nearest.into_iter().map(|(c, _)| c).collect();
        if !changed {
            break;
        }
        repair_empty(data, &mut centers, &mut assignments, &mut dists, k);
        centers = means(data, &assignments, k, &centers);
        sse_trace.push(sse(data, &centers, &assignments));
    }

    let sse = sse(data, &centers, &assignments);
    if sse_trace.last() != Some(&sse) {
        sse_trace.push(sse);
    }
    Ok(KMeansResult {
        centers,
        assignments,
        sse,
        sse_trace,
        iterations,
    })
}

/// Best-SSE result over `restarts` seeded runs.
pub fn kmeans_restarts(
    data: &DenseMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans(data, k, child_seed(seed, Stream::Restart(r as u32)), max_iter)?;
        if best.as_ref().map_or(true, |b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Picks `m` anchors from the data by k-means.
pub fn select_anchors(data: &Dataset, m: usize, seed: u64, max_iter: usize) -> Result<AnchorSet> {
    if m == 0 {
        return Err(SglError::config("anchor count m must be >= 1"));
    }
    let km = kmeans(data.features(), m, child_seed(seed, Stream::Anchors), max_iter)?;
    Ok(AnchorSet {
        centers: km.centers,
        within_cluster_sse: km.sse,
        iterations_used: km.iterations,
        assignments: km.assignments,
    })
}

fn seed_plus_plus(data: &DenseMatrix, k: usize, rng: &mut impl Rng) -> Result<DenseMatrix> {
    let n = data.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut best: Vec<f64> = data
        .row_iter()
        .map(|r| sq_dist(r, data.row(chosen[0])))
        .collect();

    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(SglError::Degenerate(format!(
                "fewer than {k} distinct points"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &w) in best.iter().enumerate() {
            acc += w;
            if acc > target && w > 0.0 {
                pick = i;
                break;
            }
        }
        // float round-off can leave `pick` on a zero-weight point
        if best[pick] == 0.0 {
            pick = best
                .iter()
                .rposition(|&w| w > 0.0)
                .expect("total > 0 implies a positive weight");
        }
        chosen.push(pick);
        let c = data.row(pick);
        best.par_iter_mut()
            .zip(data.values().par_chunks(data.cols()))
            .for_each(|(b, r)| *b = b.min(sq_dist(r, c)));
    }
    Ok(data.select_rows(&chosen))
}

/// Nearest center and its squared distance for every row; ties go to the
/// lower center index.
fn assign(data: &DenseMatrix, centers: &DenseMatrix) -> Vec<(usize, f64)> {
    data.values()
        .par_chunks(data.cols())
        .map(|r| nearest(r, centers))
        .collect()
}

pub(crate) fn nearest(point: &[f64], centers: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.row_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn repair_empty(
    data: &DenseMatrix,
    centers: &mut DenseMatrix,
    assignments: &mut [usize],
    dists: &mut [f64],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // farthest point among clusters that can spare one
        let mut far: Option<(usize, f64)> = None;
        for (i, (&a, &d)) in assignments.iter().zip(dists.iter()).enumerate() {
            if counts[a] > 1 && far.map_or(true, |(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let Some((p, _)) = far else { return };
        assignments[p] = empty;
        dists[p] = 0.0;
        centers.row_mut(empty).copy_from_slice(data.row(p));
    }
}

fn means(data: &DenseMatrix, assignments: &[usize], k: usize, old: &DenseMatrix) -> DenseMatrix {
    let d = data.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (r, &a) in data.row_iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(r) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            sums[c * d..(c + 1) * d].copy_from_slice(old.row(c));
        } else {
            let inv = counts[c] as f64;
            sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= inv);
        }
    }
    DenseMatrix::from_vec_unchecked(k, d, sums)
}

fn sse(data: &DenseMatrix, centers: &DenseMatrix, assignments: &[usize]) -> f64 {
    data.row_iter()
        .zip(assignments)
        .map(|(r, &a)| sq_dist(r, centers.row(a)))
        .sum()
}
