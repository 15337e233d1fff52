use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::weighted::WeightedGraph;
use crate::diffmath::{SparseMatrix, Tensor};
use crate::error::{Error, Result};

pub const LAMBDA_TOL: f64 = 1e-6;
pub const LAMBDA_MAX_ITER: usize = 10_000;

/// `L = I − D^{−1/2} W D^{−1/2}` as a dense `n × n` tensor.
pub fn normalized_laplacian(g: &WeightedGraph) -> Result<Tensor> {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = g.degree(i);
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::Graph(format!("node {i} has zero degree")))
            }
        })
        .collect::<Result<_>>()?;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j) * inv_sqrt[i] * inv_sqrt[j];
            l[i * n + j] = if i == j { 1.0 - w } else { -w };
        }
    }
    Tensor::matrix(n, n, l)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, stopping once the residual `‖Lv − λv‖` drops below `tol·λ`.
pub fn estimate_lambda_max(l: &Tensor, tol: f64, max_iter: usize) -> Result<f64> {
    let n = match l.shape() {
        &[r, c] if r == c => r,
        s => return Err(Error::Input(format!("expected a square matrix, got {s:?}"))),
    };
    let a = l.data();
    // fixed pseudo-random start; structured starts can be orthogonal to the
    // top eigenvector on symmetric graphs
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = matvec(a, n, &v);
        lambda = dot(&v, &w);
        let residual: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if lambda.abs() > 0.0 && residual <= tol * lambda.abs() {
            return Ok(lambda);
        }
        if lambda == 0.0 && residual == 0.0 {
            return Ok(0.0);
        }
        v = w;
        if normalize(&mut v) == 0.0 {
            return Ok(0.0);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate: lambda,
    })
}

fn matvec(a: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    a.chunks_exact(n).map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// The normalized Laplacian together with its rescaling
/// `L̃ = 2L/λ_max − I` used by the Chebyshev recursion.
#[derive(Debug, Clone)]
pub struct ScaledLaplacian {
    laplacian: Tensor,
    lambda_max: f64,
    scaled: Tensor,
    scaled_sparse: Arc<SparseMatrix>,
}

impl ScaledLaplacian {
    pub fn new(g: &WeightedGraph) -> Result<Self> {
        let laplacian = normalized_laplacian(g)?;
        let lambda_max = estimate_lambda_max(&laplacian, LAMBDA_TOL, LAMBDA_MAX_ITER)?;
        Self::from_laplacian(laplacian, lambda_max)
    }

    pub fn from_laplacian(laplacian: Tensor, lambda_max: f64) -> Result<Self> {
        if !(lambda_max > 0.0) {
            return Err(Error::Domain(format!("lambda_max must be positive, got {lambda_max}")));
        }
        let n = laplacian.shape()[0];
        let mut scaled = laplacian.data().to_vec();
        for i in 0..n {
            for j in 0..n {
                scaled[i * n + j] *= 2.0 / lambda_max;
            }
            scaled[i * n + i] -= 1.0;
        }
        let scaled_sparse = Arc::new(SparseMatrix::from_dense(n, n, &scaled));
        Ok(Self {
            laplacian,
            lambda_max,
            scaled: Tensor::matrix(n, n, scaled)?,
            scaled_sparse,
        })
    }

    pub fn node_count(&self) -> usize {
        self.laplacian.shape()[0]
    }

    pub fn laplacian(&self) -> &Tensor {
        &self.laplacian
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Dense `L̃`.
    pub fn scaled(&self) -> &Tensor {
        &self.scaled
    }

    /// `L̃` in edge-list (CSR) form.
    pub fn scaled_sparse(&self) -> &Arc<SparseMatrix> {
        &self.scaled_sparse
    }
}
