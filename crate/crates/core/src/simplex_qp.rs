//! Convex quadratic programs over the probability simplex:
//!
//! ```text
//!     minimize    zᵀ H z + fᵀ z
//!     subject to  z ≥ 0,  Σ z = 1
//! ```
//!
//! Every affinity row update is one of these. The Hessian is shared by all rows
//! of an outer iteration, so its spectral bounds are computed once in
//! [`QpHessian::new`] and borrowed by each [`SimplexQP`].
//!
//! The solver runs accelerated projected gradient (FISTA with function-value
//! restart) and periodically tries to jump to the exact optimum by solving the
//! equality-constrained KKT system on the current support.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SglError};
use crate::matrix::{dot, DenseMatrix};

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_APG_ITERS: usize = 200_000;
const POLISH_EVERY: usize = 25;

/// Symmetric positive (semi)definite Hessian with cached spectral bounds.
#[derive(Debug, Clone)]
pub struct QpHessian {
    matrix: DenseMatrix,
    lambda_max: f64,
    lambda_min: f64,
}

impl QpHessian {
    /// Validates symmetry and definiteness. A singular but positive
    /// semidefinite matrix is accepted; anything with a clearly negative
    /// eigenvalue is rejected.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r == 0 {
            return Err(SglError::shape(format!("hessian must be square, got {r}x{c}")));
        }
        let mut asym: f64 = 0.0;
        for i in 0..r {
            for j in 0..i {
                let scale = 1.0f64.max(matrix.get(i, j).abs());
                asym = asym.max((matrix.get(i, j) - matrix.get(j, i)).abs() / scale);
            }
        }
        if asym > SYMMETRY_TOL {
            return Err(SglError::NotSymmetric(asym));
        }
        let eig = SymmetricEigen::new(matrix.to_nalgebra());
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min();
        if lambda_min < -1e-10 * lambda_max.abs().max(1.0) {
            return Err(SglError::NotPositiveDefinite {
                min_eigenvalue: lambda_min,
            });
        }
        Ok(Self {
            matrix,
            lambda_max: lambda_max.max(0.0),
            lambda_min,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.matrix.row_iter()) {
            *o = dot(row, z);
        }
    }
}

/// One simplex-constrained QP: a shared Hessian plus its own linear term.
#[derive(Debug, Clone)]
pub struct SimplexQP {
    pub hessian: Arc<QpHessian>,
    pub linear: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    /// `‖z − P(z − ∇q(z))‖₂`, zero exactly at a KKT point.
    pub residual: f64,
    pub iterations: usize,
}

impl SimplexQP {
    pub fn new(hessian: Arc<QpHessian>, linear: Vec<f64>) -> Result<Self> {
        if linear.len() != hessian.dim() {
            return Err(SglError::shape(format!(
                "linear term has {} entries, hessian is {}x{}",
                linear.len(),
                hessian.dim(),
                hessian.dim()
            )));
        }
        if linear.iter().any(|v| !v.is_finite()) {
            return Err(SglError::Data("non-finite linear term".into()));
        }
        Ok(Self { hessian, linear })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut hz = vec![0.0; z.len()];
        self.hessian.apply(z, &mut hz);
        dot(z, &hz) + dot(&self.linear, z)
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        self.hessian.apply(z, out);
        for (g, f) in out.iter_mut().zip(&self.linear) {
            *g = 2.0 * *g + f;
        }
    }

    /// Natural KKT residual `‖z − P(z − ∇q(z))‖₂`.
    pub fn kkt_residual(&self, z: &[f64]) -> f64 {
        let mut g = vec![0.0; z.len()];
        self.gradient(z, &mut g);
        let step: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - b).collect();
        let p = project_simplex(&step);
        z.iter()
            .zip(&p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Euclidean projection onto `{z ≥ 0, Σ z = 1}` (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let m = v.len();
    if m == 0 {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    normalize_in_place(&mut out);
    out
}

fn normalize_in_place(z: &mut [f64]) {
    let s: f64 = z.iter().sum();
    if s > 0.0 {
        z.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / z.len() as f64;
        z.iter_mut().for_each(|x| *x = u);
    }
}

/// Solves from the uniform starting point.
pub fn solve(qp: &SimplexQP, qp_tol: f64) -> QpSolution {
    solve_from(qp, qp_tol, None)
}

/// Solves, starting from `start` when given (projected onto the simplex first).
pub fn solve_from(qp: &SimplexQP, qp_tol: f64, start: Option<&[f64]>) -> QpSolution {
    let m = qp.dim();
    if m == 1 {
        return finish(qp, vec![1.0], 0);
    }
    let mut x = match start {
        Some(s) if s.len() == m && s.iter().all(|v| v.is_finite()) => project_simplex(s),
        _ => vec![1.0 / m as f64; m],
    };

    let lipschitz = 2.0 * qp.hessian.lambda_max();
    if lipschitz <= 0.0 {
        // H = 0: linear objective, any minimizing vertex is optimal
        let j = argmin(&qp.linear);
        let mut z = vec![0.0; m];
        z[j] = 1.0;
        return finish(qp, z, 0);
    }

    if qp.kkt_residual(&x) <= qp_tol {
        return finish(qp, x, 0);
    }
    if let Some(z) = polish(qp, &x, qp_tol) {
        return finish(qp, z, 0);
    }

    let mut fx = qp.objective(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut g = vec![0.0; m];
    let mut buf = vec![0.0; m];
    let mut iters = 0;
    while iters < MAX_APG_ITERS {
        iters += 1;
        qp.gradient(&y, &mut g);
        for ((b, yv), gv) in buf.iter_mut().zip(&y).zip(&g) {
            *b = yv - gv / lipschitz;
        }
        let x_new = project_simplex(&buf);
        let f_new = qp.objective(&x_new);
        if f_new > fx {
            // restart momentum; the next step is a plain projected gradient step
            y.copy_from_slice(&x);
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / t_new;
        for ((yv, xn), xo) in y.iter_mut().zip(&x_new).zip(&x) {
            *yv = xn + w * (xn - xo);
        }
        x = x_new;
        fx = f_new;
        t = t_new;

        if iters % POLISH_EVERY == 0 {
            if qp.kkt_residual(&x) <= qp_tol {
                break;
            }
            if let Some(z) = polish(qp, &x, qp_tol) {
                return finish(qp, z, iters);
            }
        }
    }
    finish(qp, x, iters)
}

fn finish(qp: &SimplexQP, mut z: Vec<f64>, iterations: usize) -> QpSolution {
    z.iter_mut().for_each(|v| *v = v.max(0.0));
    normalize_in_place(&mut z);
    let objective = qp.objective(&z);
    let residual = qp.kkt_residual(&z);
    QpSolution {
        z,
        objective,
        residual,
        iterations,
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Primal-dual active-set refinement from the support of `x`. Returns a point
/// meeting the KKT tolerance, or `None` if the guessed support does not settle.
fn polish(qp: &SimplexQP, x: &[f64], qp_tol: f64) -> Option<Vec<f64>> {
    let m = qp.dim();
    let h = qp.hessian.matrix();
    let mut support: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let mut g = vec![0.0; m];
    for _ in 0..(m + 4) {
        let idx: Vec<usize> = (0..m).filter(|&j| support[j]).collect();
        if idx.is_empty() {
            return None;
        }
        let s = idx.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = 2.0 * h.get(i, j);
            }
            kkt[(a, s)] = -1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = -qp.linear[i];
        }
        rhs[s] = 1.0;
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mu = sol[s];

        let mut z = vec![0.0; m];
        let mut negative = false;
        for (a, &i) in idx.iter().enumerate() {
            z[i] = sol[a];
            if sol[a] < 0.0 {
                negative = true;
                support[i] = false;
            }
        }
        if negative {
            continue;
        }
        qp.gradient(&z, &mut g);
        let scale = 1.0 + mu.abs();
        let mut added = false;
        for j in 0..m {
            if !support[j] && g[j] - mu < -1e-12 * scale {
                support[j] = true;
                added = true;
            }
        }
        if added {
            continue;
        }
        normalize_in_place(&mut z);
        return (qp.kkt_residual(&z) <= qp_tol).then_some(z);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn hess(rows: &[&[f64]]) -> Arc<QpHessian> {
        Arc::new(QpHessian::new(DenseMatrix::from_rows(rows).unwrap()).unwrap())
    }

    fn diag(d: &[f64]) -> Arc<QpHessian> {
        let mut m = DenseMatrix::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m.row_mut(i)[i] = v;
        }
        Arc::new(QpHessian::new(m).unwrap())
    }

    fn random_pd(m: usize, rng: &mut impl Rng) -> Arc<QpHessian> {
        let b: Vec<f64> = (0..m * m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let b = DenseMatrix::new(m, m, b).unwrap();
        let mut h = b.gram();
        for i in 0..m {
            h.row_mut(i)[i] += 0.1;
        }
        Arc::new(QpHessian::new(h).unwrap())
    }

    /// Long-horizon projected gradient with a slowly diminishing step.
    pub(crate) fn projected_gradient_oracle(qp: &SimplexQP, steps: usize) -> f64 {
        let m = qp.dim();
        let l = 2.0 * qp.hessian.lambda_max();
        let mut z = vec![1.0 / m as f64; m];
        let mut g = vec![0.0; m];
        for t in 0..steps {
            qp.gradient(&z, &mut g);
            let eta = 1.0 / (l * (1.0 + t as f64 / 1e5));
            let v: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
            z = project_simplex(&v);
        }
        qp.objective(&z)
    }

    #[test]
    fn identity_gives_uniform() {
        let h = diag(&[1.0, 1.0, 1.0]);
        let qp = SimplexQP::new(h.clone(), vec![0.0; 3]).unwrap();
        let s = solve(&qp, 1e-8);
        for v in &s.z {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_anchor_forced() {
        let h = hess(&[&[5.0]]);
        let qp = SimplexQP::new(h.clone(), vec![-3.0]).unwrap();
        assert_eq!(solve(&qp, 1e-8).z, vec![1.0]);
    }

    #[test]
    fn weighted_diagonal_matches_lagrangian_and_grid() {
        let h = diag(&[1.0, 2.0]);
        let qp = SimplexQP::new(h.clone(), vec![0.0, 0.0]).unwrap();
        let s = solve(&qp, 1e-8);
        assert!((s.z[0] - 2.0 / 3.0).abs() < 1e-10);
        assert!((s.z[1] - 1.0 / 3.0).abs() < 1e-10);
        // grid search at step 1e-4
        let best = (0..=10_000)
            .map(|i| {
                let a = i as f64 * 1e-4;
                (a, qp.objective(&[a, 1.0 - a]))
            })
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        assert!((best.0 - s.z[0]).abs() <= 1e-4);
        assert!(s.objective <= best.1 + 1e-12);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.6, 0.4, -1.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.4).abs() < 1e-15 && p[2] == 0.0);
        // optimality: v − p is constant on the support and no larger off it
        let v = [0.6, 0.4, -1.0];
        let tau = v[0] - p[0];
        assert!((v[1] - p[1] - tau).abs() < 1e-15);
        assert!(v[2] - p[2] <= tau);
        let on = [0.2, 0.3, 0.5];
        let q = project_simplex(&on);
        for (a, b) in on.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn indefinite_hessian_rejected() {
        let err = QpHessian::new(DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap())
            .unwrap_err();
        assert!(err.to_string().contains("hessian not positive definite"));
        assert!(QpHessian::new(DenseMatrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap()).is_err());
    }

    #[test]
    fn rank_deficient_hessian_still_reaches_kkt() {
        // duplicate anchors with alpha = 0: AᵀA is singular
        let a = DenseMatrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let h = Arc::new(QpHessian::new(a.gram()).unwrap());
        assert!(h.lambda_min().abs() < 1e-12);
        let x = [0.3, 0.7];
        let f: Vec<f64> = (0..3).map(|j| -2.0 * dot(&x, &a.column(j))).collect();
        let qp = SimplexQP::new(h.clone(), f).unwrap();
        let s = solve(&qp, 1e-8);
        assert!(s.residual <= 1e-8, "residual {}", s.residual);
        assert!((s.z[0] + s.z[1] - 0.3).abs() < 1e-6);
        assert!((s.z[2] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        let mut rng = stream_rng(17, Stream::Synthetic);
        for _ in 0..20 {
            let m = rng.random_range(2..=4);
            let h = random_pd(m, &mut rng);
            let f: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let qp = SimplexQP::new(h.clone(), f).unwrap();
            let s = solve(&qp, 1e-8);
            let oracle = projected_gradient_oracle(&qp, 200_000);
            assert!((s.objective - oracle).abs() < 1e-6, "{} vs {oracle}", s.objective);
            assert!(s.residual <= 1e-8);
        }
    }

    #[test]
    fn warm_start_at_optimum_is_kept() {
        let h = diag(&[1.0, 2.0, 3.0]);
        let qp = SimplexQP::new(h.clone(), vec![0.1, -0.2, 0.3]).unwrap();
        let s = solve(&qp, 1e-10);
        let again = solve_from(&qp, 1e-10, Some(&s.z));
        assert_eq!(again.z, s.z);
        assert_eq!(again.iterations, 0);
    }

    proptest! {
        #[test]
        fn solve_feasible_and_beats_uniform(seed in any::<u64>(), m in 2usize..8) {
            let mut rng = stream_rng(seed, Stream::Synthetic);
            let h = random_pd(m, &mut rng);
            let f: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let qp = SimplexQP::new(h.clone(), f).unwrap();
            let s = solve(&qp, 1e-8);
            prop_assert!(s.z.iter().all(|&v| v >= 0.0));
            prop_assert!((s.z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.residual <= 1e-8);
            let uniform = vec![1.0 / m as f64; m];
            prop_assert!(s.objective <= qp.objective(&uniform) + 1e-12);
        }

        #[test]
        fn projection_idempotent_and_nonexpansive(
            a in proptest::collection::vec(-5.0f64..5.0, 1..8),
            shift in proptest::collection::vec(-5.0f64..5.0, 8),
        ) {
            let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
            let pa = project_simplex(&a);
            let pb = project_simplex(&b);
            let ppa = project_simplex(&pa);
            for (x, y) in pa.iter().zip(&ppa) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((pa.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let dp: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(dp <= d + 1e-12);
        }
    }
}
