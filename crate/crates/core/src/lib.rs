//! Anchor-graph subspace clustering with a structured bipartite graph.
//!
//! Samples are reconstructed from a small set of anchors through a
//! row-stochastic affinity `Z` (n×m). A spectral penalty on the bipartite
//! graph pushes `Z` toward exactly `k` connected components, so the clusters
//! can be read directly from the learned graph. [`fit_sgl`] handles one view;
//! [`fit_msgl`] shares a single affinity across several views with learned
//! view weights. New points are labeled from the anchors alone by
//! [`OosPredictor`].
//!
//! ```
//! use sgl_core::{fit_sgl, gaussian_blobs, accuracy, BlobSpec, SolverConfig};
//!
//! let data = gaussian_blobs(&BlobSpec {
//!     n_per_cluster: 40,
//!     k: 3,
//!     dim: 2,
//!     separation: 12.0,
//!     std_dev: 1.0,
//!     seed: 7,
//! });
//! let model = fit_sgl(&data, &SolverConfig::new(3, 15)).unwrap();
//! let acc = accuracy(data.labels().unwrap(), &model.sample_labels).unwrap();
//! assert_eq!(acc, 1.0);
//! ```

pub mod anchors;
pub mod config;
pub mod data;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod msgl;
pub mod oos;
pub mod rng;
pub mod sgl;
pub mod simplex_qp;
pub mod spectral;
pub mod synth;

pub use anchors::{kmeans, kmeans_restarts, select_anchors, AnchorSet, KMeansResult};
pub use config::{validate_config, DataRef, SolverConfig};
pub use data::{Dataset, ViewCollection};
pub use error::{Result, SglError};
pub use matrix::DenseMatrix;
pub use metrics::{accuracy, evaluate, nmi, purity, ContingencyTable, MetricSummary};
pub use model::{ClusterModel, SglState};
pub use msgl::{fit_msgl, fit_msgl_observed, fit_views, update_weights, view_loss, ViewWeights};
pub use oos::OosPredictor;
pub use sgl::{
    fit_sgl, fit_sgl_observed, fit_sgl_with_anchors, objective, refit_sgl, Observer, RowQpBuilder,
};
pub use simplex_qp::{project_simplex, solve, solve_from, QpHessian, QpSolution, SimplexQP};
pub use spectral::{
    component_count, degrees, pairwise_w, scaled_affinity, top_k_embedding, BipartiteAffinity,
    DegreeInfo, SpectralEmbedding,
};
pub use synth::{gaussian_blobs, noise_view, union_of_subspaces, BlobSpec, SubspaceSpec};
