//! Multi-view structured graph learning: one affinity shared by every view,
//! per-view anchor dictionaries, and adaptive view weights
//! `λᵥ = (−hᵥ/γ)^{1/(γ−1)}` where `hᵥ` is the view's reconstruction error.

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::anchors::{select_anchors, AnchorSet};
use crate::config::{check_gamma, validate_config, SolverConfig};
use crate::data::{check_same_length, Dataset, ViewCollection};
use crate::error::{Result, SglError};
use crate::matrix::DenseMatrix;
use crate::model::ClusterModel;
use crate::sgl::{extract_labels, reconstruction_error, Engine, Observer, RowQpBuilder, WeightMode};
use crate::simplex_qp::SimplexQP;
use crate::spectral::BipartiteAffinity;

/// Losses are clamped to this before the weight update, so a perfectly
/// reconstructed view gets a large but finite weight.
pub const MIN_VIEW_LOSS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewWeights {
    pub lambdas: Vec<f64>,
    pub gamma: f64,
}

/// `hᵥ = ‖Xᵥ − Z Aᵥ‖_F²`.
pub fn view_loss(xv: &DenseMatrix, av: &DenseMatrix, zg: &BipartiteAffinity) -> Result<f64> {
    reconstruction_error(xv, av, zg)
}

/// Closed-form minimizer of `Σ λᵥhᵥ + Σ λᵥ^γ` over `λ ≥ 0`.
pub fn update_weights(losses: &[f64], gamma: f64) -> Result<ViewWeights> {
    check_gamma(gamma)?;
    if let Some(v) = losses.iter().position(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(SglError::Data(format!("view {v} has invalid loss {}", losses[v])));
    }
    let lambdas = losses
        .iter()
        .map(|&h| (h.max(MIN_VIEW_LOSS) / -gamma).powf(1.0 / (gamma - 1.0)))
        .collect();
    Ok(ViewWeights { lambdas, gamma })
}

/// The shared-affinity row QP with view weights applied.
#[allow(clippy::too_many_arguments)]
pub fn build_multiview_row_qp(
    views: &[&DenseMatrix],
    anchors: &[&DenseMatrix],
    w: &DenseMatrix,
    weights: &[f64],
    alpha: f64,
    beta: f64,
    row_index: usize,
) -> Result<SimplexQP> {
    RowQpBuilder::weighted(views, anchors, weights, alpha)?.row(Some(w), beta, row_index)
}

/// Fits the multi-view model.
pub fn fit_msgl(views: &ViewCollection, config: &SolverConfig) -> Result<ClusterModel> {
    fit_msgl_observed(views, config, None)
}

pub fn fit_msgl_observed(
    views: &ViewCollection,
    config: &SolverConfig,
    observer: Option<Observer<'_>>,
) -> Result<ClusterModel> {
    validate_config(config, views)?;
    fit_views(views.views(), config, observer)
}

/// Multi-view fit over any nonempty list of equally long views; a single view
/// is allowed here and behaves as the weighted single-view problem.
pub fn fit_views(
    views: &[Dataset],
    config: &SolverConfig,
    observer: Option<Observer<'_>>,
) -> Result<ClusterModel> {
    if views.is_empty() {
        return Err(SglError::Data("no views".into()));
    }
    check_same_length(views)?;
    validate_config(config, &views[0])?;
    check_gamma(config.gamma)?;

    let anchors = select_view_anchors(views, config)?;
    let xs: Vec<&DenseMatrix> = views.iter().map(|v| v.features()).collect();
    let anchor_refs: Vec<&DenseMatrix> = anchors.iter().map(|a| &a.centers).collect();
    let engine = Engine::new(
        xs,
        anchor_refs,
        WeightMode::Adaptive {
            gamma: config.gamma,
        },
        config,
    )?;
    let c = views.len();
    let out = engine.run(vec![1.0 / c as f64; c], None, observer)?;
    let (sample_labels, anchor_labels) = extract_labels(
        &out.embedding,
        &out.degrees,
        config.k,
        config.seed,
        config.kmeans_max_iter,
    )?;
    Ok(ClusterModel {
        anchors,
        affinity: out.affinity,
        embedding: out.embedding,
        sample_labels,
        anchor_labels,
        view_weights: out.weights,
        objective_trace: out.trace,
        converged: out.converged,
        config: config.clone(),
    })
}

/// k-means anchors for every view (same seed), with each view's anchors
/// reordered to best match view 0 by shared sample membership. The affinity
/// is shared, so anchor `j` has to mean the same region in every view.
pub fn select_view_anchors(views: &[Dataset], config: &SolverConfig) -> Result<Vec<AnchorSet>> {
    let mut out: Vec<AnchorSet> = Vec::with_capacity(views.len());
    for view in views {
        let a = select_anchors(view, config.m, config.seed, config.kmeans_max_iter)?;
        let a = match out.first() {
            Some(reference) => {
                let order = align_anchors(&reference.assignments, &a.assignments, config.m);
                a.permuted(&order)
            }
            None => a,
        };
        out.push(a);
    }
    Ok(out)
}

/// `order[j]` is the anchor of the other view matched to reference anchor `j`,
/// maximizing the number of samples assigned to both.
fn align_anchors(reference: &[usize], other: &[usize], m: usize) -> Vec<usize> {
    let mut overlap = vec![vec![0i64; m]; m];
    for (&r, &o) in reference.iter().zip(other) {
        overlap[r][o] += 1;
    }
    let weights = Matrix::from_rows(overlap).expect("square overlap table");
    kuhn_munkres(&weights).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::accuracy;
    use crate::sgl::{fit_sgl, RowQpBuilder};
    use crate::synth::{gaussian_blobs, noise_view, BlobSpec};

    fn blobs(seed: u64) -> Dataset {
        gaussian_blobs(&BlobSpec {
            n_per_cluster: 100,
            k: 3,
            dim: 2,
            separation: 10.0,
            std_dev: 1.0,
            seed,
        })
    }

    #[test]
    fn weight_formula_examples() {
        assert!((update_weights(&[1.0], -1.0).unwrap().lambdas[0] - 1.0).abs() < 1e-15);
        assert!((update_weights(&[4.0], -1.0).unwrap().lambdas[0] - 0.5).abs() < 1e-15);
        assert!(update_weights(&[1.0], 0.0).is_err());
        assert!(update_weights(&[-1.0], -1.0).is_err());
    }

    #[test]
    fn weights_minimize_the_weight_subproblem() {
        // grid minimization of λh + λ^γ for each view
        let h = [1.0, 4.0];
        let gamma = -1.0;
        let w = update_weights(&h, gamma).unwrap();
        for (hv, lv) in h.iter().zip(&w.lambdas) {
            let grid_best = (1..=20_000)
                .map(|i| i as f64 * 1e-4)
                .min_by(|a, b| {
                    (a * hv + a.powf(gamma)).total_cmp(&(b * hv + b.powf(gamma)))
                })
                .unwrap();
            assert!((grid_best - lv).abs() <= 1e-4);
        }
        assert!(w.lambdas[0] > w.lambdas[1]);
    }

    #[test]
    fn zero_loss_gets_finite_weight() {
        let w = update_weights(&[0.0, 1.0], -2.0).unwrap();
        assert!(w.lambdas[0].is_finite());
        assert!(w.lambdas[0] > w.lambdas[1]);
    }

    #[test]
    fn stationarity_residual() {
        for &gamma in &[-1.0, -2.5, -5.0] {
            let h = [0.3, 2.0, 17.0];
            let w = update_weights(&h, gamma).unwrap();
            for (hv, lv) in h.iter().zip(&w.lambdas) {
                let r: f64 = hv + gamma * lv.powf(gamma - 1.0);
                assert!(r.abs() < 1e-8, "residual {r}");
            }
        }
    }

    #[test]
    fn multiview_qp_reduces_to_single_view() {
        let d = blobs(1);
        let x = d.features();
        let a = select_anchors(&d, 5, 0, 50).unwrap().centers;
        let w = DenseMatrix::new(x.rows(), 5, (0..x.rows() * 5).map(|i| (i % 7) as f64 * 0.1).collect()).unwrap();
        let single = RowQpBuilder::single(x, &a, 0.3).unwrap();
        let s = single.row(Some(&w), 2.0, 4).unwrap();
        let one = build_multiview_row_qp(&[x], &[&a], &w, &[1.0], 0.3, 2.0, 4).unwrap();
        assert_eq!(one.linear, s.linear);
        assert!(one.hessian.matrix().max_abs_diff(s.hessian.matrix()) < 1e-12);
        let two = build_multiview_row_qp(&[x, x], &[&a, &a], &w, &[0.5, 0.5], 0.3, 2.0, 4).unwrap();
        assert!(two.hessian.matrix().max_abs_diff(s.hessian.matrix()) < 1e-12);
        for (p, q) in two.linear.iter().zip(&s.linear) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn multiview_hessian_matches_naive_sum() {
        let d1 = blobs(2);
        let d2 = noise_view(d1.n_samples(), 3, 2.0, 5);
        let a1 = select_anchors(&d1, 4, 0, 50).unwrap().centers;
        let a2 = select_anchors(&d2, 4, 0, 50).unwrap().centers;
        let lam = [0.8, 0.3];
        let b = RowQpBuilder::weighted(&[d1.features(), d2.features()], &[&a1, &a2], &lam, 0.7).unwrap();
        let h = b.hessian().matrix();
        for i in 0..4 {
            for j in 0..4 {
                let mut naive = if i == j { 0.7 } else { 0.0 };
                for (a, l) in [(&a1, lam[0]), (&a2, lam[1])] {
                    for c in 0..a.cols() {
                        naive += l * a.get(i, c) * a.get(j, c);
                    }
                }
                assert!((h.get(i, j) - naive).abs() < 1e-12);
            }
        }
        let a_bad = select_anchors(&d2, 3, 0, 50).unwrap().centers;
        assert!(RowQpBuilder::weighted(&[d1.features(), d2.features()], &[&a1, &a_bad], &lam, 0.7).is_err());
    }

    #[test]
    fn view_loss_matches_naive() {
        let d = blobs(3);
        let a = select_anchors(&d, 4, 0, 50).unwrap().centers;
        let z = BipartiteAffinity::uniform(d.n_samples(), 4);
        let x = d.features();
        let mut naive = 0.0;
        for i in 0..x.rows() {
            for c in 0..x.cols() {
                let recon: f64 = (0..4).map(|j| 0.25 * a.get(j, c)).sum();
                naive += (x.get(i, c) - recon).powi(2);
            }
        }
        let h = view_loss(x, &a, &z).unwrap();
        assert!((h - naive).abs() < 1e-10 * naive);
        let zero = DenseMatrix::zeros(x.rows(), 2);
        assert_eq!(view_loss(&zero, &DenseMatrix::zeros(4, 2), &z).unwrap(), 0.0);
    }

    #[test]
    fn duplicated_views_get_equal_weights() {
        let d = blobs(4);
        let views = ViewCollection::new(vec![d.clone(), d.clone()]).unwrap();
        let model = fit_msgl(&views, &SolverConfig::new(3, 9).seed(4)).unwrap();
        assert_eq!(accuracy(d.labels().unwrap(), &model.sample_labels).unwrap(), 1.0);
        assert!((model.view_weights[0] - model.view_weights[1]).abs() < 1e-6);
        for w in model.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn noise_view_is_down_weighted() {
        let d = blobs(5);
        let noise = noise_view(d.n_samples(), 10, 1.0, 99);
        let views = ViewCollection::new(vec![d.clone(), noise]).unwrap();
        let model = fit_msgl(&views, &SolverConfig::new(3, 9).seed(5)).unwrap();
        assert!(model.view_weights[0] > model.view_weights[1], "{:?}", model.view_weights);
    }

    #[test]
    fn single_view_matches_sgl_partition() {
        let d = blobs(6);
        let cfg = SolverConfig::new(3, 9).seed(6);
        let sgl = fit_sgl(&d, &cfg).unwrap();
        let one = fit_views(std::slice::from_ref(&d), &cfg, None).unwrap();
        assert_eq!(accuracy(&sgl.sample_labels, &one.sample_labels).unwrap(), 1.0);
        assert_eq!(sgl.anchors[0], one.anchors[0]);
    }

    #[test]
    fn anchor_alignment_undoes_permutation() {
        let reference = vec![0, 1, 2, 2, 1, 0, 3];
        let other: Vec<usize> = reference.iter().map(|&a| [2, 3, 0, 1][a]).collect();
        let order = align_anchors(&reference, &other, 4);
        assert_eq!(order, vec![2, 3, 0, 1]);
    }
}
