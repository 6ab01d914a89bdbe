use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ViewCollection};
use crate::error::{Result, SglError};

/// Hyperparameters and solver controls for a single fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of clusters.
    pub k: usize,
    /// Number of anchors.
    pub m: usize,
    /// Frobenius regularizer weight on the affinity.
    pub alpha: f64,
    /// Weight of the connectivity (spectral) penalty.
    pub beta: f64,
    /// View-weight exponent; only used for multi-view fits and must be negative.
    pub gamma: f64,
    /// Cap on outer alternating iterations.
    pub max_iter: usize,
    /// Cap on Lloyd iterations for every k-means call.
    pub kmeans_max_iter: usize,
    /// Relative objective change below which the outer loop stops.
    pub tol: f64,
    /// KKT residual tolerance of the per-row simplex QPs.
    pub qp_tol: f64,
    /// Lower clamp for anchor degrees.
    pub degree_eps: f64,
    pub seed: u64,
    /// Ignore `tol` and always run `max_iter` outer iterations (timing runs).
    #[serde(default)]
    pub fixed_iterations: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 2,
            m: 10,
            alpha: 1.0,
            beta: 1.0,
            gamma: -1.0,
            max_iter: 50,
            kmeans_max_iter: 100,
            tol: 1e-6,
            qp_tol: 1e-8,
            degree_eps: 1e-12,
            seed: 0,
            fixed_iterations: false,
        }
    }
}

impl SolverConfig {
    pub fn new(k: usize, m: usize) -> Self {
        Self {
            k,
            m,
            ..Self::default()
        }
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn check_common(&self, n: usize) -> Result<()> {
        let c = &self;
        if c.k < 2 {
            return Err(SglError::config(format!("k must be >= 2, got {}", c.k)));
        }
        if c.m < c.k {
            return Err(SglError::config(format!(
                "m must be ≥ k (m = {}, k = {})",
                c.m, c.k
            )));
        }
        if c.m > n {
            return Err(SglError::config(format!(
                "m must be ≤ n (m = {}, n = {n})",
                c.m
            )));
        }
        if !(c.alpha.is_finite() && c.alpha >= 0.0) {
            return Err(SglError::config(format!("alpha must be >= 0, got {}", c.alpha)));
        }
        if !(c.beta.is_finite() && c.beta >= 0.0) {
            return Err(SglError::config(format!("beta must be >= 0, got {}", c.beta)));
        }
        if !(c.tol.is_finite() && c.tol > 0.0) {
            return Err(SglError::config(format!("tol must be > 0, got {}", c.tol)));
        }
        if !(c.qp_tol.is_finite() && c.qp_tol > 0.0) {
            return Err(SglError::config(format!("qp_tol must be > 0, got {}", c.qp_tol)));
        }
        if !(c.degree_eps.is_finite() && c.degree_eps > 0.0) {
            return Err(SglError::config(format!(
                "degree_eps must be > 0, got {}",
                c.degree_eps
            )));
        }
        if c.max_iter == 0 {
            return Err(SglError::config("max_iter must be >= 1"));
        }
        if c.kmeans_max_iter == 0 {
            return Err(SglError::config("kmeans_max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// What a config is validated against.
#[derive(Debug, Clone, Copy)]
pub enum DataRef<'a> {
    Single(&'a Dataset),
    Multi(&'a ViewCollection),
}

impl<'a> From<&'a Dataset> for DataRef<'a> {
    fn from(d: &'a Dataset) -> Self {
        DataRef::Single(d)
    }
}

impl<'a> From<&'a ViewCollection> for DataRef<'a> {
    fn from(v: &'a ViewCollection) -> Self {
        DataRef::Multi(v)
    }
}

pub fn validate_config<'a>(config: &SolverConfig, data: impl Into<DataRef<'a>>) -> Result<()> {
    match data.into() {
        DataRef::Single(d) => config.check_common(d.n_samples()),
        DataRef::Multi(v) => {
            config.check_common(v.n_samples())?;
            check_gamma(config.gamma)
        }
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma < 0.0) {
        return Err(SglError::config(format!(
            "gamma must be negative, got {gamma}"
        )));
    }
    Ok(())
}
