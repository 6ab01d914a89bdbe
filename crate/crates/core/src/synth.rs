//! Seeded synthetic datasets: isotropic Gaussian blobs and a union of linear
//! subspaces.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::matrix::DenseMatrix;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_per_cluster: usize,
    pub k: usize,
    pub dim: usize,
    /// Distance between neighbouring blob centers.
    pub separation: f64,
    pub std_dev: f64,
    pub seed: u64,
}

/// Blob centers for `spec`: a regular polygon in the first two coordinates
/// (a line when `dim == 1`) with adjacent centers `separation` apart.
pub fn blob_centers(spec: &BlobSpec) -> DenseMatrix {
    let k = spec.k;
    let mut centers = DenseMatrix::zeros(k, spec.dim);
    for c in 0..k {
        let row = centers.row_mut(c);
        if spec.dim == 1 || k <= 2 {
            row[0] = c as f64 * spec.separation;
        } else {
            let radius = spec.separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
            let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
            row[0] = radius * angle.cos();
            row[1] = radius * angle.sin();
        }
    }
    centers
}

/// Gaussian blobs in shuffled order, labeled by blob.
pub fn gaussian_blobs(spec: &BlobSpec) -> Dataset {
    let mut rng = stream_rng(spec.seed, Stream::Synthetic);
    let centers = blob_centers(spec);
    let n = spec.n_per_cluster * spec.k;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut rows = vec![0.0; n * spec.dim];
    let mut labels = vec![0; n];
    for (i, &slot) in order.iter().enumerate() {
        let c = i / spec.n_per_cluster;
        labels[slot] = c;
        for (j, v) in rows[slot * spec.dim..(slot + 1) * spec.dim].iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = centers.get(c, j) + spec.std_dev * z;
        }
    }
    Dataset::new(DenseMatrix::from_vec_unchecked(n, spec.dim, rows), Some(labels))
        .expect("blob generator produces a valid dataset")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub n_per_cluster: usize,
    pub k: usize,
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Samples from `k` random `subspace_dim`-dimensional linear subspaces with
/// additive isotropic noise, in shuffled order.
pub fn union_of_subspaces(spec: &SubspaceSpec) -> Dataset {
    let mut rng = stream_rng(spec.seed, Stream::Synthetic);
    let d = spec.ambient_dim;
    let r = spec.subspace_dim.min(d).max(1);
    let bases: Vec<DMatrix<f64>> = (0..spec.k)
        .map(|_| {
            let g = DMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
            g.qr().q()
        })
        .collect();
    let n = spec.n_per_cluster * spec.k;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut rows = vec![0.0; n * d];
    let mut labels = vec![0; n];
    for (i, &slot) in order.iter().enumerate() {
        let c = i / spec.n_per_cluster;
        labels[slot] = c;
        let coeff: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (j, v) in rows[slot * d..(slot + 1) * d].iter_mut().enumerate() {
            let signal: f64 = (0..r).map(|t| bases[c][(j, t)] * coeff[t]).sum();
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = signal + spec.noise * z;
        }
    }
    Dataset::new(DenseMatrix::from_vec_unchecked(n, d, rows), Some(labels))
        .expect("subspace generator produces a valid dataset")
}

/// Pure Gaussian noise with the given shape, for uninformative views.
pub fn noise_view(n: usize, dim: usize, std_dev: f64, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, Stream::Synthetic);
    let values = (0..n * dim)
        .map(|_| std_dev * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Dataset::unlabeled(DenseMatrix::from_vec_unchecked(n, dim, values))
        .expect("noise generator produces a valid dataset")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::sq_dist;

    #[test]
    fn blob_centers_are_separated() {
        let spec = BlobSpec {
            n_per_cluster: 1,
            k: 5,
            dim: 3,
            separation: 10.0,
            std_dev: 1.0,
            seed: 0,
        };
        let c = blob_centers(&spec);
        for a in 0..5 {
            for b in 0..a {
                assert!(sq_dist(c.row(a), c.row(b)).sqrt() >= 10.0 - 1e-9);
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = SubspaceSpec {
            n_per_cluster: 20,
            k: 3,
            ambient_dim: 8,
            subspace_dim: 2,
            noise: 0.01,
            seed: 4,
        };
        let a = union_of_subspaces(&spec);
        assert_eq!(a, union_of_subspaces(&spec));
        assert_eq!(a.n_samples(), 60);
        let counts = (0..3)
            .map(|c| a.labels().unwrap().iter().filter(|&&l| l == c).count())
            .collect::<Vec<_>>();
        assert_eq!(counts, vec![20, 20, 20]);
    }
}
