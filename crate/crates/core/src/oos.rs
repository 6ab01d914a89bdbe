//! Out-of-sample labeling: a new point takes the majority label of its nearest
//! anchors, so prediction never touches the training samples.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Result, SglError};
use crate::matrix::{sq_dist, DenseMatrix};
use crate::model::ClusterModel;

/// k-nearest-anchor classifier. With several views the distance is the
/// view-weighted sum of squared distances.
#[derive(Debug)]
pub struct OosPredictor {
    anchor_coords: Vec<DenseMatrix>,
    view_weights: Vec<f64>,
    anchor_labels: Vec<usize>,
    k_neighbors: usize,
    distance_evals: AtomicU64,
}

impl Clone for OosPredictor {
    fn clone(&self) -> Self {
        Self {
            anchor_coords: self.anchor_coords.clone(),
            view_weights: self.view_weights.clone(),
            anchor_labels: self.anchor_labels.clone(),
            k_neighbors: self.k_neighbors,
            distance_evals: AtomicU64::new(0),
        }
    }
}

impl OosPredictor {
    pub fn new(anchors: DenseMatrix, anchor_labels: Vec<usize>, k_neighbors: usize) -> Result<Self> {
        Self::multi_view(vec![anchors], vec![1.0], anchor_labels, k_neighbors)
    }

    pub fn multi_view(
        anchor_coords: Vec<DenseMatrix>,
        view_weights: Vec<f64>,
        anchor_labels: Vec<usize>,
        k_neighbors: usize,
    ) -> Result<Self> {
        if anchor_coords.is_empty() || anchor_coords.len() != view_weights.len() {
            return Err(SglError::shape(format!(
                "{} anchor sets with {} view weights",
                anchor_coords.len(),
                view_weights.len()
            )));
        }
        let m = anchor_labels.len();
        if let Some(v) = anchor_coords.iter().position(|a| a.rows() != m) {
            return Err(SglError::shape(format!(
                "view {v} has {} anchors but {m} anchor labels were given",
                anchor_coords[v].rows()
            )));
        }
        if let Some(w) = view_weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(SglError::config(format!("invalid view weight {w}")));
        }
        if k_neighbors == 0 || k_neighbors > m {
            return Err(SglError::config(format!(
                "k_neighbors must be in 1..={m}, got {k_neighbors}"
            )));
        }
        Ok(Self {
            anchor_coords,
            view_weights,
            anchor_labels,
            k_neighbors,
            distance_evals: AtomicU64::new(0),
        })
    }

    /// Anchors, anchor labels and view weights of a fitted model.
    pub fn from_model(model: &ClusterModel, k_neighbors: usize) -> Result<Self> {
        Self::multi_view(
            model.anchors.iter().map(|a| a.centers.clone()).collect(),
            model.view_weights.clone(),
            model.anchor_labels.clone(),
            k_neighbors,
        )
    }

    /// Baseline that votes among the training samples themselves instead of
    /// the anchors.
    pub fn in_sample(
        training_views: Vec<DenseMatrix>,
        view_weights: Vec<f64>,
        sample_labels: Vec<usize>,
        k_neighbors: usize,
    ) -> Result<Self> {
        Self::multi_view(training_views, view_weights, sample_labels, k_neighbors)
    }

    pub fn n_anchors(&self) -> usize {
        self.anchor_labels.len()
    }

    pub fn n_views(&self) -> usize {
        self.anchor_coords.len()
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    /// Point–anchor distance evaluations performed so far.
    pub fn distance_evaluations(&self) -> u64 {
        self.distance_evals.load(Ordering::Relaxed)
    }

    pub fn predict(&self, new_points: &DenseMatrix) -> Result<Vec<usize>> {
        self.predict_views(std::slice::from_ref(new_points))
    }

    /// One matrix per view, all with the same number of rows.
    pub fn predict_views(&self, new_points: &[DenseMatrix]) -> Result<Vec<usize>> {
        if new_points.len() != self.n_views() {
            return Err(SglError::shape(format!(
                "predictor has {} views, got {}",
                self.n_views(),
                new_points.len()
            )));
        }
        for (v, (x, a)) in new_points.iter().zip(&self.anchor_coords).enumerate() {
            if x.cols() != a.cols() {
                return Err(SglError::shape(format!(
                    "view {v}: points have {} features, anchors have {}",
                    x.cols(),
                    a.cols()
                )));
            }
        }
        let n = new_points[0].rows();
        if let Some(v) = new_points.iter().position(|x| x.rows() != n) {
            return Err(SglError::shape(format!(
                "view length mismatch: view {v} has {} rows, view 0 has {n}",
                new_points[v].rows()
            )));
        }
        let labels = (0..n)
            .into_par_iter()
            .map(|i| self.predict_one(new_points, i))
            .collect();
        Ok(labels)
    }

    fn predict_one(&self, points: &[DenseMatrix], i: usize) -> usize {
        let m = self.n_anchors();
        let mut scored: Vec<(f64, usize)> = (0..m)
            .map(|j| {
                let d = points
                    .iter()
                    .zip(&self.anchor_coords)
                    .zip(&self.view_weights)
                    .map(|((x, a), w)| w * sq_dist(x.row(i), a.row(j)))
                    .sum::<f64>();
                (d, self.anchor_labels[j])
            })
            .collect();
        self.distance_evals.fetch_add(m as u64, Ordering::Relaxed);
        // (distance, label) order makes the result independent of anchor order
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neighbors = &scored[..self.k_neighbors];
        vote(neighbors)
    }
}

/// Majority label; ties go to the tied label whose nearest member comes
/// first in `neighbors` (sorted by distance, then label).
fn vote(neighbors: &[(f64, usize)]) -> usize {
    let mut tally: Vec<(usize, usize, usize)> = Vec::new(); // (label, count, first position)
    for (pos, &(_, label)) in neighbors.iter().enumerate() {
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => t.1 += 1,
            None => tally.push((label, 1, pos)),
        }
    }
    tally
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|t| t.0)
        .expect("at least one neighbor")
}
