//! Spectral machinery for the sample–anchor bipartite graph.
//!
//! The full `(n+m)×(n+m)` adjacency `[[0, Z], [Zᵀ, 0]]` and its normalized
//! Laplacian are never formed. Everything goes through the `n×m` degree-scaled
//! affinity `Ẑ = D_U^{-1/2} Z D_V^{-1/2}`, whose singular triplets are the
//! eigenpairs of the normalized bipartite adjacency.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};
use crate::matrix::{dot, DenseMatrix};

/// Row sums must be this close to one.
pub const ROW_SUM_TOL: f64 = 1e-8;
/// Singular values below this are treated as zero when recovering left vectors.
const SIGMA_FLOOR: f64 = 1e-10;

/// Row-stochastic, nonnegative `n×m` sample-to-anchor affinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseMatrix", into = "DenseMatrix")]
pub struct BipartiteAffinity {
    z: DenseMatrix,
}

impl TryFrom<DenseMatrix> for BipartiteAffinity {
    type Error = SglError;
    fn try_from(z: DenseMatrix) -> Result<Self> {
        BipartiteAffinity::new(z)
    }
}

impl From<BipartiteAffinity> for DenseMatrix {
    fn from(a: BipartiteAffinity) -> Self {
        a.z
    }
}

impl BipartiteAffinity {
    pub fn new(z: DenseMatrix) -> Result<Self> {
        for (i, row) in z.row_iter().enumerate() {
            if let Some(j) = row.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(SglError::Data(format!(
                    "affinity entry ({i}, {j}) = {} outside [0, 1]",
                    row[j]
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(SglError::Data(format!("affinity row {i} sums to {s}")));
            }
        }
        Ok(Self { z })
    }

    /// Every sample linked to every anchor with weight `1/m`.
    pub fn uniform(n: usize, m: usize) -> Self {
        let values = vec![1.0 / m as f64; n * m];
        Self {
            z: DenseMatrix::from_vec_unchecked(n, m, values),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.rows()
    }

    pub fn m(&self) -> usize {
        self.z.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeInfo {
    pub d_u: Vec<f64>,
    pub d_v: Vec<f64>,
}

/// Sample degrees are the row sums of `Z` (all one), anchor degrees the column
/// sums clamped below at `degree_eps`.
pub fn degrees(zg: &BipartiteAffinity, degree_eps: f64) -> DegreeInfo {
    let z = zg.matrix();
    let d_u: Vec<f64> = z.row_iter().map(|r| r.iter().sum()).collect();
    debug_assert!(d_u.iter().all(|d| (d - 1.0).abs() <= ROW_SUM_TOL));
    let mut d_v = vec![0.0; z.cols()];
    for r in z.row_iter() {
        for (d, v) in d_v.iter_mut().zip(r) {
            *d += v;
        }
    }
    d_v.iter_mut().for_each(|d| *d = d.max(degree_eps));
    DegreeInfo { d_u, d_v }
}

/// `Ẑᵢⱼ = zᵢⱼ / √(d_u[i]·d_v[j])`.
pub fn scaled_affinity(zg: &BipartiteAffinity, deg: &DegreeInfo) -> DenseMatrix {
    let z = zg.matrix();
    let inv_v: Vec<f64> = deg.d_v.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut values = Vec::with_capacity(z.rows() * z.cols());
    for (r, du) in z.row_iter().zip(&deg.d_u) {
        let inv_u = 1.0 / du.sqrt();
        values.extend(r.iter().zip(&inv_v).map(|(v, iv)| v * inv_u * iv));
    }
    DenseMatrix::from_vec_unchecked(z.rows(), z.cols(), values)
}

/// The stacked embedding `F = [U; V]` with `FᵀF = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEmbedding {
    pub u_block: DenseMatrix,
    pub v_block: DenseMatrix,
    pub singular_values: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn k(&self) -> usize {
        self.u_block.cols()
    }

    pub fn stacked(&self) -> DenseMatrix {
        self.u_block
            .vstack(&self.v_block)
            .expect("u and v blocks share k columns")
    }

    /// Max deviation of `FᵀF` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.stacked().gram();
        let k = g.rows();
        let mut err: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((g.get(i, j) - target).abs());
            }
        }
        err
    }

    /// A seeded Gaussian `(n+m)×k` matrix with orthonormalized columns.
    pub fn random(n: usize, m: usize, k: usize, rng: &mut impl Rng) -> Result<Self> {
        if k > n + m {
            return Err(SglError::shape(format!("cannot embed {} nodes in {k} dims", n + m)));
        }
        let rows = n + m;
        let mut cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..rows).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        orthonormalize(&mut cols);
        let f = columns_to_matrix(&cols, rows);
        Ok(Self {
            u_block: f.select_rows(&(0..n).collect::<Vec<_>>()),
            v_block: f.select_rows(&(n..rows).collect::<Vec<_>>()),
            singular_values: vec![0.0; k],
        })
    }
}

/// Top-`k` singular triplets of `Ẑ` scaled by `√2/2`, which maximize
/// `Tr(Uᵀ Ẑ V)` subject to `UᵀU + VᵀV = I`.
///
/// Computed from the eigendecomposition of the `m×m` Gram matrix `ẐᵀẐ`; left
/// vectors are recovered as `Ẑvⱼ/σⱼ`. Each right vector is signed so that its
/// largest-magnitude entry is positive.
pub fn top_k_embedding(z_hat: &DenseMatrix, k: usize) -> Result<SpectralEmbedding> {
    let (n, m) = z_hat.shape();
    if k == 0 || k > m || k > n {
        return Err(SglError::config(format!(
            "embedding dimension k = {k} must be in 1..=min(n, m) = {}",
            n.min(m)
        )));
    }
    let eig = SymmetricEigen::new(z_hat.gram().to_nalgebra());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut right: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut sigmas = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        fix_sign(&mut v);
        sigmas.push(eig.eigenvalues[c].max(0.0).sqrt());
        right.push(v);
    }

    let mut left: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (v, &s) in right.iter().zip(&sigmas) {
        if s >= SIGMA_FLOOR {
            let u: Vec<f64> = z_hat.row_iter().map(|r| dot(r, v) / s).collect();
            left.push(u);
        } else {
            left.push(completion_vector(&left, n));
        }
    }
    orthonormalize(&mut left);

    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = columns_to_matrix(&left, n);
    let mut v = columns_to_matrix(&right, m);
    scale_in_place(&mut u, scale);
    scale_in_place(&mut v, scale);
    Ok(SpectralEmbedding {
        u_block: u,
        v_block: v,
        singular_values: sigmas,
    })
}

/// `Tr(Uᵀ Ẑ V)`.
pub fn trace_objective(z_hat: &DenseMatrix, emb: &SpectralEmbedding) -> f64 {
    let k = emb.k();
    let mut total = 0.0;
    for (i, r) in z_hat.row_iter().enumerate() {
        let ui = emb.u_block.row(i);
        for (j, &zij) in r.iter().enumerate() {
            if zij != 0.0 {
                let vj = emb.v_block.row(j);
                total += zij * (0..k).map(|c| ui[c] * vj[c]).sum::<f64>();
            }
        }
    }
    total
}

/// `Wᵢⱼ = ‖U_{i,:}/√d_u[i] − V_{j,:}/√d_v[j]‖²`.
pub fn pairwise_w(emb: &SpectralEmbedding, deg: &DegreeInfo) -> Result<DenseMatrix> {
    let (n, k) = emb.u_block.shape();
    let m = emb.v_block.rows();
    if deg.d_u.len() != n || deg.d_v.len() != m {
        return Err(SglError::shape(format!(
            "embedding is {n}+{m} rows, degrees are {}+{}",
            deg.d_u.len(),
            deg.d_v.len()
        )));
    }
    let scaled_v: Vec<Vec<f64>> = emb
        .v_block
        .row_iter()
        .zip(&deg.d_v)
        .map(|(r, d)| r.iter().map(|x| x / d.sqrt()).collect())
        .collect();
    let v_norms: Vec<f64> = scaled_v.iter().map(|v| dot(v, v)).collect();
    let mut values = Vec::with_capacity(n * m);
    let mut ui = vec![0.0; k];
    for (r, du) in emb.u_block.row_iter().zip(&deg.d_u) {
        let s = 1.0 / du.sqrt();
        ui.iter_mut().zip(r).for_each(|(a, b)| *a = b * s);
        let un = dot(&ui, &ui);
        for (v, vn) in scaled_v.iter().zip(&v_norms) {
            values.push((un + vn - 2.0 * dot(&ui, v)).max(0.0));
        }
    }
    Ok(DenseMatrix::from_vec_unchecked(n, m, values))
}

/// All singular values of `Ẑ`, descending.
pub fn singular_values(z_hat: &DenseMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(z_hat.gram().to_nalgebra());
    let mut s: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of connected components of the bipartite graph, read off as the
/// multiplicity of singular value one in `Ẑ` (equivalently, of eigenvalue zero
/// in the normalized Laplacian).
pub fn component_count(zg: &BipartiteAffinity, tol: f64) -> usize {
    let deg = degrees(zg, DEFAULT_DEGREE_EPS);
    let z_hat = scaled_affinity(zg, &deg);
    singular_values(&z_hat)
        .into_iter()
        .filter(|&s| s >= 1.0 - tol)
        .count()
}

pub(crate) const DEFAULT_DEGREE_EPS: f64 = 1e-12;

fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// A unit vector orthogonal to `basis`, built from the first standard basis
/// vector that is not already in its span.
fn completion_vector(basis: &[Vec<f64>], n: usize) -> Vec<f64> {
    for e in 0..n {
        let mut cand = vec![0.0; n];
        cand[e] = 1.0;
        for b in basis {
            let bn = dot(b, b);
            if bn > 0.0 {
                let c = dot(&cand, b) / bn;
                cand.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if norm > 1e-6 {
            cand.iter_mut().for_each(|x| *x /= norm);
            return cand;
        }
    }
    unreachable!("k <= n guarantees a completion vector")
}

/// Modified Gram–Schmidt, two passes.
fn orthonormalize(cols: &mut [Vec<f64>]) {
    for i in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = cols.split_at_mut(i);
                let c = dot(&tail[0], &head[j]);
                tail[0].iter_mut().zip(&head[j]).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&cols[i], &cols[i]).sqrt();
        if norm < 1e-12 {
            let n = cols[i].len();
            cols[i] = completion_vector(&cols[..i], n);
        } else {
            cols[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> DenseMatrix {
    let k = cols.len();
    let mut values = vec![0.0; rows * k];
    for (c, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            values[r * k + c] = v;
        }
    }
    DenseMatrix::from_vec_unchecked(rows, k, values)
}

fn scale_in_place(m: &mut DenseMatrix, s: f64) {
    for i in 0..m.rows() {
        m.row_mut(i).iter_mut().for_each(|x| *x *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn aff(rows: &[&[f64]]) -> BipartiteAffinity {
        BipartiteAffinity::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    fn random_stochastic(n: usize, m: usize, rng: &mut impl Rng) -> BipartiteAffinity {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let r: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let s: f64 = r.iter().sum();
            rows.push(r.into_iter().map(|v| v / s).collect::<Vec<_>>());
        }
        BipartiteAffinity::new(DenseMatrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn rejects_invalid_affinity() {
        assert!(BipartiteAffinity::new(DenseMatrix::from_rows(&[[0.5, 0.4]]).unwrap()).is_err());
        assert!(BipartiteAffinity::new(DenseMatrix::from_rows(&[[1.5, -0.5]]).unwrap()).is_err());
    }

    #[test]
    fn degree_examples() {
        let d = degrees(&aff(&[&[1.0, 0.0], &[0.0, 1.0]]), 1e-12);
        assert_eq!((d.d_u.clone(), d.d_v.clone()), (vec![1.0, 1.0], vec![1.0, 1.0]));
        let d = degrees(&aff(&[&[0.5, 0.5], &[0.5, 0.5]]), 1e-12);
        assert_eq!(d.d_v, vec![1.0, 1.0]);
        let d = degrees(&aff(&[&[1.0, 0.0], &[1.0, 0.0]]), 1e-9);
        assert_eq!(d.d_v, vec![2.0, 1e-9]);
    }

    #[test]
    fn scaled_affinity_examples() {
        let z = aff(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let zh = scaled_affinity(&z, &degrees(&z, 1e-12));
        assert_eq!(zh, DenseMatrix::identity(2));

        let z = aff(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let zh = scaled_affinity(&z, &degrees(&z, 1e-12));
        let s = 1.0 / 2f64.sqrt();
        assert!((zh.get(0, 0) - s).abs() < 1e-15 && (zh.get(1, 0) - s).abs() < 1e-15);
        assert_eq!(zh.get(0, 1), 0.0);

        let z = BipartiteAffinity::uniform(3, 3);
        let zh = scaled_affinity(&z, &degrees(&z, 1e-12));
        assert!(zh.max_abs_diff(z.matrix()) < 1e-15);
    }

    #[test]
    fn identity_embedding() {
        let e = top_k_embedding(&DenseMatrix::identity(2), 2).unwrap();
        assert!((e.singular_values[0] - 1.0).abs() < 1e-12);
        assert!((e.singular_values[1] - 1.0).abs() < 1e-12);
        assert!(e.orthonormality_error() < 1e-12);
        assert!(top_k_embedding(&DenseMatrix::identity(2), 3).is_err());
    }

    #[test]
    fn block_diagonal_has_two_unit_singular_values() {
        let z = aff(&[&[0.5, 0.5, 0.0], &[0.3, 0.7, 0.0], &[0.0, 0.0, 1.0]]);
        let e = top_k_embedding(&scaled_affinity(&z, &degrees(&z, 1e-12)), 2).unwrap();
        assert!((e.singular_values[0] - 1.0).abs() < 1e-10);
        assert!((e.singular_values[1] - 1.0).abs() < 1e-10);
        assert_eq!(component_count(&z, 1e-8), 2);
    }

    #[test]
    fn w_examples() {
        let mk = |u: &[f64], v: &[f64]| SpectralEmbedding {
            u_block: DenseMatrix::from_rows(&[u]).unwrap(),
            v_block: DenseMatrix::from_rows(&[v]).unwrap(),
            singular_values: vec![0.0; u.len()],
        };
        let deg = DegreeInfo { d_u: vec![1.0], d_v: vec![1.0] };
        assert_eq!(pairwise_w(&mk(&[0.3, 0.4], &[0.3, 0.4]), &deg).unwrap().get(0, 0), 0.0);
        assert!((pairwise_w(&mk(&[1.0, 0.0], &[0.0, 1.0]), &deg).unwrap().get(0, 0) - 2.0).abs() < 1e-15);
        let bad = DegreeInfo { d_u: vec![1.0, 1.0], d_v: vec![1.0] };
        assert!(pairwise_w(&mk(&[1.0], &[1.0]), &bad).is_err());
    }

    #[test]
    fn w_matches_naive_loop() {
        let mut rng = stream_rng(3, Stream::Synthetic);
        let z = random_stochastic(12, 5, &mut rng);
        let deg = degrees(&z, 1e-12);
        let emb = SpectralEmbedding::random(12, 5, 3, &mut rng).unwrap();
        let w = pairwise_w(&emb, &deg).unwrap();
        for i in 0..12 {
            for j in 0..5 {
                let mut naive = 0.0;
                for c in 0..3 {
                    let a = emb.u_block.get(i, c) / deg.d_u[i].sqrt();
                    let b = emb.v_block.get(j, c) / deg.d_v[j].sqrt();
                    naive += (a - b) * (a - b);
                }
                assert!((w.get(i, j) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn component_count_examples() {
        assert_eq!(component_count(&aff(&[&[1.0, 0.0], &[0.0, 1.0]]), 1e-8), 2);
        assert_eq!(component_count(&BipartiteAffinity::uniform(5, 3), 1e-8), 1);
    }

    #[test]
    fn sum_of_w_is_laplacian_trace() {
        // Σ zᵢⱼ Wᵢⱼ = Tr(FᵀF) − 2 Tr(UᵀẐV) when no anchor degree is clamped
        let mut rng = stream_rng(8, Stream::Synthetic);
        let z = random_stochastic(9, 4, &mut rng);
        let deg = degrees(&z, 1e-12);
        let emb = SpectralEmbedding::random(9, 4, 2, &mut rng).unwrap();
        let w = pairwise_w(&emb, &deg).unwrap();
        let zw: f64 = z.matrix().values().iter().zip(w.values()).map(|(a, b)| a * b).sum();
        let zh = scaled_affinity(&z, &deg);
        assert!((zw - (2.0 - 2.0 * trace_objective(&zh, &emb))).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn embedding_invariants(seed in any::<u64>(), n in 4usize..30, m in 2usize..8, k in 1usize..4) {
            prop_assume!(k <= m && k <= n);
            let mut rng = stream_rng(seed, Stream::Synthetic);
            let z = random_stochastic(n, m, &mut rng);
            let zh = scaled_affinity(&z, &degrees(&z, 1e-12));
            let e = top_k_embedding(&zh, k).unwrap();
            prop_assert!(e.orthonormality_error() < 1e-8);
            for s in &e.singular_values {
                prop_assert!(*s >= 0.0 && *s <= 1.0 + 1e-8);
            }
            for w in e.singular_values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let half: f64 = 0.5 * e.singular_values.iter().sum::<f64>();
            prop_assert!((trace_objective(&zh, &e) - half).abs() < 1e-10);
        }
    }
}
