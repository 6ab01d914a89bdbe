//! Single-view structured graph learning, and the alternating engine it
//! shares with the multi-view solver.
//!
//! Each outer iteration:
//! 1. updates every affinity row by a simplex QP against the current
//!    embedding (rows are independent and solved in parallel),
//! 2. replaces the embedding by the scaled top-k singular vectors of the
//!    degree-normalized affinity,
//! 3. (multi-view only) re-weights the views in closed form,
//!
//! and records the full objective. The QP step minimizes a surrogate whose
//! spectral term uses the previous anchor degrees; if the true objective
//! rises, the step is backtracked along the segment to the previous affinity,
//! which keeps the recorded trace nonincreasing.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;

use crate::anchors::{kmeans_restarts, nearest, select_anchors, AnchorSet};
use crate::config::{validate_config, SolverConfig};
use crate::data::Dataset;
use crate::error::{Result, SglError};
use crate::matrix::{dot, sq_dist, DenseMatrix};
use crate::model::{ClusterModel, SglState};
use crate::rng::{child_seed, stream_rng, Stream};
use crate::simplex_qp::{solve_from, QpHessian, SimplexQP};
use crate::spectral::{
    degrees, pairwise_w, scaled_affinity, top_k_embedding, BipartiteAffinity, DegreeInfo,
    SpectralEmbedding, DEFAULT_DEGREE_EPS,
};

/// Restarts of the final k-means on the embedding.
pub const LABEL_KMEANS_RESTARTS: usize = 10;
const MAX_BACKTRACKS: usize = 40;
/// Anchors whose degree is at or below this are treated as detached when
/// extracting labels.
const DETACHED_DEGREE: f64 = 1e-9;

pub type Observer<'o> = &'o mut dyn FnMut(&SglState<'_>);

/// `‖X − Z A‖_F²` with samples and anchors stored as rows.
pub fn reconstruction_error(
    x: &DenseMatrix,
    a: &DenseMatrix,
    zg: &BipartiteAffinity,
) -> Result<f64> {
    check_shapes(x, a, zg)?;
    let z = zg.matrix();
    let d = x.cols();
    let total = x
        .values()
        .par_chunks(d)
        .zip(z.values().par_chunks(z.cols()))
        .map(|(xi, zi)| {
            let mut r = xi.to_vec();
            for (j, &w) in zi.iter().enumerate() {
                if w != 0.0 {
                    r.iter_mut().zip(a.row(j)).for_each(|(v, aj)| *v -= w * aj);
                }
            }
            dot(&r, &r)
        })
        .collect::<Vec<f64>>();
    Ok(total.iter().sum())
}

/// `Σᵢⱼ zᵢⱼ Wᵢⱼ` for the degrees of `zg` itself.
pub fn spectral_penalty(
    zg: &BipartiteAffinity,
    emb: &SpectralEmbedding,
    degree_eps: f64,
) -> Result<f64> {
    let w = pairwise_w(emb, &degrees(zg, degree_eps))?;
    Ok(zg
        .matrix()
        .values()
        .iter()
        .zip(w.values())
        .map(|(z, w)| z * w)
        .sum())
}

/// Single-view objective `‖X − ZA‖² + α‖Z‖² + β Σ zᵢⱼ Wᵢⱼ`.
pub fn objective(
    x: &DenseMatrix,
    a: &DenseMatrix,
    zg: &BipartiteAffinity,
    emb: &SpectralEmbedding,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    objective_with_eps(x, a, zg, emb, alpha, beta, DEFAULT_DEGREE_EPS)
}

pub fn objective_with_eps(
    x: &DenseMatrix,
    a: &DenseMatrix,
    zg: &BipartiteAffinity,
    emb: &SpectralEmbedding,
    alpha: f64,
    beta: f64,
    degree_eps: f64,
) -> Result<f64> {
    check_embedding(zg, emb)?;
    let rec = reconstruction_error(x, a, zg)?;
    let reg = alpha * zg.matrix().frobenius_sq();
    let spec = if beta == 0.0 {
        0.0
    } else {
        beta * spectral_penalty(zg, emb, degree_eps)?
    };
    Ok(rec + reg + spec)
}

fn check_shapes(x: &DenseMatrix, a: &DenseMatrix, zg: &BipartiteAffinity) -> Result<()> {
    if x.rows() != zg.n() || a.rows() != zg.m() || x.cols() != a.cols() {
        return Err(SglError::shape(format!(
            "data {}x{}, anchors {}x{}, affinity {}x{}",
            x.rows(),
            x.cols(),
            a.rows(),
            a.cols(),
            zg.n(),
            zg.m()
        )));
    }
    Ok(())
}

fn check_embedding(zg: &BipartiteAffinity, emb: &SpectralEmbedding) -> Result<()> {
    if emb.u_block.rows() != zg.n() || emb.v_block.rows() != zg.m() {
        return Err(SglError::shape(format!(
            "embedding has {}+{} rows, affinity is {}x{}",
            emb.u_block.rows(),
            emb.v_block.rows(),
            zg.n(),
            zg.m()
        )));
    }
    Ok(())
}

/// Per-view products reused by every outer iteration.
#[derive(Debug, Clone)]
pub(crate) struct ViewCache {
    /// `A Aᵀ` (m×m, anchors as rows).
    pub gram: DenseMatrix,
    /// `X Aᵀ` (n×m): inner products of samples with anchors.
    pub cross: DenseMatrix,
}

impl ViewCache {
    pub(crate) fn new(x: &DenseMatrix, a: &DenseMatrix) -> Result<Self> {
        if x.cols() != a.cols() {
            return Err(SglError::shape(format!(
                "data has {} features, anchors have {}",
                x.cols(),
                a.cols()
            )));
        }
        let at = a.transpose();
        Ok(Self {
            gram: at.gram(),
            cross: x.matmul(&at)?,
        })
    }
}

/// Shared Hessian plus per-row linear terms for the affinity update.
///
/// Hessian `Σ_v λ_v A_v A_vᵀ + αI`; linear term of row `i` is
/// `−2 Σ_v λ_v A_v x_iᵛ + β W_{i,:}`.
#[derive(Debug, Clone)]
pub struct RowQpBuilder {
    hessian: Arc<QpHessian>,
    cross: DenseMatrix,
}

impl RowQpBuilder {
    pub fn single(x: &DenseMatrix, a: &DenseMatrix, alpha: f64) -> Result<Self> {
        let cache = ViewCache::new(x, a)?;
        Self::from_caches(&[cache], &[1.0], alpha)
    }

    pub fn weighted(
        views: &[&DenseMatrix],
        anchors: &[&DenseMatrix],
        weights: &[f64],
        alpha: f64,
    ) -> Result<Self> {
        if views.len() != anchors.len() || views.len() != weights.len() || views.is_empty() {
            return Err(SglError::shape(format!(
                "{} views, {} anchor sets, {} weights",
                views.len(),
                anchors.len(),
                weights.len()
            )));
        }
        let m = anchors[0].rows();
        if let Some(v) = anchors.iter().position(|a| a.rows() != m) {
            return Err(SglError::shape(format!(
                "view {v} has {} anchors, view 0 has {m}",
                anchors[v].rows()
            )));
        }
        let caches = views
            .iter()
            .zip(anchors)
            .map(|(x, a)| ViewCache::new(x, a))
            .collect::<Result<Vec<_>>>()?;
        Self::from_caches(&caches, weights, alpha)
    }

    pub(crate) fn from_caches(caches: &[ViewCache], weights: &[f64], alpha: f64) -> Result<Self> {
        let m = caches[0].gram.rows();
        let n = caches[0].cross.rows();
        let mut h = vec![0.0; m * m];
        let mut cross = vec![0.0; n * m];
        for (c, &w) in caches.iter().zip(weights) {
            h.iter_mut().zip(c.gram.values()).for_each(|(a, b)| *a += w * b);
            cross
                .iter_mut()
                .zip(c.cross.values())
                .for_each(|(a, b)| *a += w * b);
        }
        for j in 0..m {
            h[j * m + j] += alpha;
        }
        Ok(Self {
            hessian: Arc::new(QpHessian::new(DenseMatrix::new(m, m, h)?)?),
            cross: DenseMatrix::new(n, m, cross)?,
        })
    }

    pub fn hessian(&self) -> &QpHessian {
        &self.hessian
    }

    /// The QP for row `row_index`; `w = None` drops the spectral term.
    pub fn row(&self, w: Option<&DenseMatrix>, beta: f64, row_index: usize) -> Result<SimplexQP> {
        if row_index >= self.cross.rows() {
            return Err(SglError::shape(format!(
                "row {row_index} out of range for {} samples",
                self.cross.rows()
            )));
        }
        let mut linear: Vec<f64> = self.cross.row(row_index).iter().map(|c| -2.0 * c).collect();
        if let Some(w) = w {
            if beta != 0.0 {
                linear
                    .iter_mut()
                    .zip(w.row(row_index))
                    .for_each(|(l, wij)| *l += beta * wij);
            }
        }
        SimplexQP::new(Arc::clone(&self.hessian), linear)
    }
}

/// The affinity-row QP of the single-view problem.
pub fn build_row_qp(
    x: &DenseMatrix,
    a: &DenseMatrix,
    w: &DenseMatrix,
    alpha: f64,
    beta: f64,
    row_index: usize,
) -> Result<SimplexQP> {
    RowQpBuilder::single(x, a, alpha)?.row(Some(w), beta, row_index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum WeightMode {
    /// Views keep unit weight and the objective has no weight penalty.
    Fixed,
    Adaptive { gamma: f64 },
}

pub(crate) struct EngineOutput {
    pub affinity: BipartiteAffinity,
    pub embedding: SpectralEmbedding,
    pub degrees: DegreeInfo,
    pub weights: Vec<f64>,
    pub trace: Vec<f64>,
    pub converged: bool,
}

pub(crate) struct Engine<'a> {
    xs: Vec<&'a DenseMatrix>,
    anchors: Vec<&'a DenseMatrix>,
    caches: Vec<ViewCache>,
    mode: WeightMode,
    config: &'a SolverConfig,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        xs: Vec<&'a DenseMatrix>,
        anchors: Vec<&'a DenseMatrix>,
        mode: WeightMode,
        config: &'a SolverConfig,
    ) -> Result<Self> {
        let m = anchors[0].rows();
        if anchors.iter().any(|a| a.rows() != m) {
            return Err(SglError::shape("every view needs the same anchor count"));
        }
        let caches = xs
            .iter()
            .zip(&anchors)
            .map(|(x, a)| ViewCache::new(x, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            xs,
            anchors,
            caches,
            mode,
            config,
        })
    }

    fn n(&self) -> usize {
        self.xs[0].rows()
    }

    fn m(&self) -> usize {
        self.anchors[0].rows()
    }

    pub(crate) fn view_losses(&self, z: &BipartiteAffinity) -> Result<Vec<f64>> {
        self.xs
            .iter()
            .zip(&self.anchors)
            .map(|(x, a)| reconstruction_error(x, a, z))
            .collect()
    }

    pub(crate) fn evaluate(
        &self,
        z: &BipartiteAffinity,
        emb: &SpectralEmbedding,
        weights: &[f64],
    ) -> Result<f64> {
        let cfg = self.config;
        let losses = self.view_losses(z)?;
        let mut f: f64 = losses.iter().zip(weights).map(|(h, w)| h * w).sum();
        f += cfg.alpha * z.matrix().frobenius_sq();
        if cfg.beta != 0.0 {
            f += cfg.beta * spectral_penalty(z, emb, cfg.degree_eps)?;
        }
        if let WeightMode::Adaptive { gamma } = self.mode {
            f += weights.iter().map(|w| w.powf(gamma)).sum::<f64>();
        }
        Ok(f)
    }

    fn z_step(
        &self,
        emb: &SpectralEmbedding,
        deg: &DegreeInfo,
        weights: &[f64],
        warm: Option<&BipartiteAffinity>,
    ) -> Result<(BipartiteAffinity, f64)> {
        let cfg = self.config;
        let builder = RowQpBuilder::from_caches(&self.caches, weights, cfg.alpha)?;
        let w = if cfg.beta != 0.0 {
            Some(pairwise_w(emb, deg)?)
        } else {
            None
        };
        let m = self.m();
        let rows: Vec<(Vec<f64>, f64)> = (0..self.n())
            .into_par_iter()
            .map(|i| {
                let qp = builder.row(w.as_ref(), cfg.beta, i)?;
                let start = warm.map(|z| z.matrix().row(i));
                let sol = solve_from(&qp, cfg.qp_tol, start);
                Ok((sol.z, sol.residual))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(self.n() * m);
        let mut max_res: f64 = 0.0;
        for (z, r) in rows {
            values.extend_from_slice(&z);
            max_res = max_res.max(r);
        }
        let z = BipartiteAffinity::new(DenseMatrix::new(self.n(), m, values)?)?;
        Ok((z, max_res))
    }

    /// Alternates from a random embedding, or from `warm` (affinity and
    /// embedding of an earlier fit) when given.
    pub(crate) fn run(
        &self,
        initial_weights: Vec<f64>,
        warm: Option<(&BipartiteAffinity, &SpectralEmbedding)>,
        observer: Option<Observer<'_>>,
    ) -> Result<EngineOutput> {
        let cfg = self.config;
        let (n, m, k) = (self.n(), self.m(), cfg.k);
        let start = Instant::now();
        let mut weights = initial_weights;
        let (mut emb, mut deg, mut z) = match warm {
            Some((z0, emb0)) => {
                if z0.n() != n || z0.m() != m || emb0.k() != k || emb0.u_block.rows() != n {
                    return Err(SglError::shape("warm start does not match the problem"));
                }
                (emb0.clone(), degrees(z0, cfg.degree_eps), Some(z0.clone()))
            }
            None => {
                let mut rng = stream_rng(cfg.seed, Stream::EmbeddingInit);
                // before any affinity exists, degrees are those of the uniform graph
                let deg = DegreeInfo {
                    d_u: vec![1.0; n],
                    d_v: vec![n as f64 / m as f64; m],
                };
                (SpectralEmbedding::random(n, m, k, &mut rng)?, deg, None)
            }
        };
        let mut trace: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut observer = observer;

        for iteration in 1..=cfg.max_iter {
            // affinity update
            let (candidate, max_res) = self.z_step(&emb, &deg, &weights, z.as_ref())?;
            if max_res > cfg.qp_tol {
                warn!("iteration {iteration}: row QP residual {max_res:e} above tolerance");
            }
            let next_z = match (&z, trace.last()) {
                (Some(prev), Some(&f_prev)) => self.safeguard(prev, candidate, &emb, &weights, f_prev)?,
                _ => candidate,
            };
            deg = degrees(&next_z, cfg.degree_eps);

            // embedding update
            let z_hat = scaled_affinity(&next_z, &deg);
            let proposal = top_k_embedding(&z_hat, k)?;
            let keep_old = cfg.beta != 0.0 && {
                let with_new = self.evaluate(&next_z, &proposal, &weights)?;
                let with_old = self.evaluate(&next_z, &emb, &weights)?;
                with_new > with_old
            };
            if keep_old {
                debug!("iteration {iteration}: kept previous embedding");
            } else {
                emb = proposal;
            }

            // view weights
            if let WeightMode::Adaptive { gamma } = self.mode {
                let losses = self.view_losses(&next_z)?;
                weights = crate::msgl::update_weights(&losses, gamma)?.lambdas;
            }

            let f = self.evaluate(&next_z, &emb, &weights)?;
            let prev = trace.last().copied();
            trace.push(f);
            z = Some(next_z);
            if let Some(obs) = observer.as_mut() {
                obs(&SglState {
                    affinity: z.as_ref().expect("just set"),
                    embedding: &emb,
                    objective: f,
                    iteration,
                    view_weights: &weights,
                    elapsed: start.elapsed(),
                    max_qp_residual: max_res,
                });
            }
            if let Some(p) = prev {
                let rel = (p - f).abs() / p.abs().max(f64::MIN_POSITIVE);
                if rel < cfg.tol {
                    converged = true;
                    if !cfg.fixed_iterations {
                        break;
                    }
                }
            }
        }

        Ok(EngineOutput {
            affinity: z.expect("max_iter >= 1"),
            embedding: emb,
            degrees: deg,
            weights,
            trace,
            converged,
        })
    }

    /// Backtracks from `candidate` toward `prev` until the true objective does
    /// not exceed `f_prev`.
    fn safeguard(
        &self,
        prev: &BipartiteAffinity,
        candidate: BipartiteAffinity,
        emb: &SpectralEmbedding,
        weights: &[f64],
        f_prev: f64,
    ) -> Result<BipartiteAffinity> {
        if self.evaluate(&candidate, emb, weights)? <= f_prev {
            return Ok(candidate);
        }
        let mut step = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            step *= 0.5;
            let values: Vec<f64> = prev
                .matrix()
                .values()
                .iter()
                .zip(candidate.matrix().values())
                .map(|(p, c)| (1.0 - step) * p + step * c)
                .collect();
            let mixed = BipartiteAffinity::new(DenseMatrix::new(prev.n(), prev.m(), values)?)?;
            if self.evaluate(&mixed, emb, weights)? <= f_prev {
                debug!("affinity step backtracked to {step}");
                return Ok(mixed);
            }
        }
        Ok(prev.clone())
    }
}

/// Cluster labels from k-means on the degree-normalized stacked embedding
/// `[D_U^{-1/2} U; D_V^{-1/2} V]`.
///
/// In that normalization a sample and an anchor in the same connected
/// component map to the same point. Anchors with (near) zero degree carry no
/// embedding information; they are left out of the k-means fit and take the
/// label of the nearest center.
pub fn extract_labels(
    emb: &SpectralEmbedding,
    deg: &DegreeInfo,
    k: usize,
    seed: u64,
    kmeans_max_iter: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = emb.u_block.rows();
    let m = emb.v_block.rows();
    if deg.d_u.len() != n || deg.d_v.len() != m {
        return Err(SglError::shape("degrees do not match embedding"));
    }
    let scale = |row: &[f64], d: f64| -> Vec<f64> {
        let s = 1.0 / d.sqrt();
        row.iter().map(|x| x * s).collect()
    };
    let mut fit_rows: Vec<Vec<f64>> = Vec::with_capacity(n + m);
    for (r, &d) in emb.u_block.row_iter().zip(&deg.d_u) {
        fit_rows.push(scale(r, d));
    }
    let detached: Vec<bool> = deg.d_v.iter().map(|&d| d <= DETACHED_DEGREE).collect();
    for ((r, &d), &off) in emb.v_block.row_iter().zip(&deg.d_v).zip(&detached) {
        if !off {
            fit_rows.push(scale(r, d));
        }
    }
    let points = DenseMatrix::from_rows(&fit_rows)?;
    let km = kmeans_restarts(
        &points,
        k,
        child_seed(seed, Stream::Labels),
        kmeans_max_iter,
        LABEL_KMEANS_RESTARTS,
    )?;
    let sample_labels = km.assignments[..n].to_vec();
    let mut attached = km.assignments[n..].iter();
    let anchor_labels = (0..m)
        .map(|j| {
            if detached[j] {
                // nearest center by the raw anchor row
                nearest(emb.v_block.row(j), &km.centers).0
            } else {
                *attached.next().expect("one assignment per attached anchor")
            }
        })
        .collect();
    Ok((sample_labels, anchor_labels))
}

/// Fits the single-view model: k-means anchors, alternating updates, labels.
pub fn fit_sgl(data: &Dataset, config: &SolverConfig) -> Result<ClusterModel> {
    fit_sgl_observed(data, config, None)
}

pub fn fit_sgl_observed(
    data: &Dataset,
    config: &SolverConfig,
    observer: Option<Observer<'_>>,
) -> Result<ClusterModel> {
    validate_config(config, data)?;
    let anchors = select_anchors(data, config.m, config.seed, config.kmeans_max_iter)?;
    fit_sgl_with_anchors(data, anchors, config, observer)
}

/// Fits against a caller-supplied anchor dictionary.
pub fn fit_sgl_with_anchors(
    data: &Dataset,
    anchors: AnchorSet,
    config: &SolverConfig,
    observer: Option<Observer<'_>>,
) -> Result<ClusterModel> {
    validate_config(config, data)?;
    if anchors.m() != config.m || anchors.dim() != data.n_features() {
        return Err(SglError::shape(format!(
            "anchors are {}x{}, expected {}x{}",
            anchors.m(),
            anchors.dim(),
            config.m,
            data.n_features()
        )));
    }
    let engine = Engine::new(
        vec![data.features()],
        vec![&anchors.centers],
        WeightMode::Fixed,
        config,
    )?;
    let out = engine.run(vec![1.0], None, observer)?;
    finish_single(out, anchors, config)
}

/// Fits again from the affinity and embedding of `previous`, keeping its
/// anchors. Useful for continuation in `alpha` or `beta`: each stage starts
/// where the last one stopped instead of from a random embedding.
pub fn refit_sgl(data: &Dataset, previous: &ClusterModel, config: &SolverConfig) -> Result<ClusterModel> {
    validate_config(config, data)?;
    if previous.n_views() != 1 || previous.n_samples() != data.n_samples() {
        return Err(SglError::shape("previous model does not belong to this dataset"));
    }
    if previous.config.k != config.k || previous.config.m != config.m {
        return Err(SglError::config("warm start needs the same k and m"));
    }
    let anchors = previous.anchors[0].clone();
    let engine = Engine::new(
        vec![data.features()],
        vec![&anchors.centers],
        WeightMode::Fixed,
        config,
    )?;
    let out = engine.run(vec![1.0], Some((&previous.affinity, &previous.embedding)), None)?;
    finish_single(out, anchors, config)
}

fn finish_single(out: EngineOutput, anchors: AnchorSet, config: &SolverConfig) -> Result<ClusterModel> {
    let (sample_labels, anchor_labels) = extract_labels(
        &out.embedding,
        &out.degrees,
        config.k,
        config.seed,
        config.kmeans_max_iter,
    )?;
    Ok(ClusterModel {
        anchors: vec![anchors],
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

/// Squared distance from each anchor to each sample; handy for diagnostics.
pub fn anchor_sample_distances(x: &DenseMatrix, a: &DenseMatrix) -> DenseMatrix {
    let mut values = Vec::with_capacity(a.rows() * x.rows());
    for aj in a.row_iter() {
        values.extend(x.row_iter().map(|xi| sq_dist(aj, xi)));
    }
    DenseMatrix::from_vec_unchecked(a.rows(), x.rows(), values)
}
