use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::config::SolverConfig;
use crate::spectral::{BipartiteAffinity, SpectralEmbedding};

/// A fitted clustering: enough to label the training data and to predict
/// unseen points from the anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// One anchor set per view.
    pub anchors: Vec<AnchorSet>,
    pub affinity: BipartiteAffinity,
    pub embedding: SpectralEmbedding,
    pub sample_labels: Vec<usize>,
    pub anchor_labels: Vec<usize>,
    /// All ones for a single view.
    pub view_weights: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub config: SolverConfig,
}

impl ClusterModel {
    pub fn n_views(&self) -> usize {
        self.anchors.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_labels.len()
    }

    pub fn n_anchors(&self) -> usize {
        self.anchor_labels.len()
    }

    pub fn iterations(&self) -> usize {
        self.objective_trace.len()
    }
}

/// Snapshot handed to fit observers after every outer iteration.
#[derive(Debug, Clone)]
pub struct SglState<'a> {
    pub affinity: &'a BipartiteAffinity,
    pub embedding: &'a SpectralEmbedding,
    pub objective: f64,
    /// 1-based.
    pub iteration: usize,
    pub view_weights: &'a [f64],
    pub elapsed: Duration,
    /// Largest KKT residual among this iteration's row QPs.
    pub max_qp_residual: f64,
}
