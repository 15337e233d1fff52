//! Dense spectral filtering through a full eigendecomposition. Only meant
//! for small graphs, where it serves as a reference for the Chebyshev path.

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const MAX_ORACLE_NODES: usize = 64;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) and column eigenvectors of a symmetric matrix by
/// cyclic Jacobi rotations.
pub fn symmetric_eigen(a: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = match a.shape() {
        &[r, c] if r == c => r,
        s => return Err(Error::Input(format!("expected a square matrix, got {s:?}"))),
    };
    let mut m = a.data().to_vec();
    let mut v = Tensor::identity(n).into_vec();

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&m) > OFF_DIAGONAL_TOL {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                estimate: off_norm(&m),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + new_col] = v[k * n + old_col];
        }
    }
    Ok((values, Tensor::matrix(n, n, vecs)?))
}

/// `U g(Λ) Uᵀ x` with `g(λ) = Σ_k ω_k λ^k`; `x` is `(n, C)` or a vector.
pub fn spectral_oracle(l: &Tensor, coefficients: &[f64], x: &Tensor) -> Result<Tensor> {
    let n = l.shape()[0];
    if n > MAX_ORACLE_NODES {
        return Err(Error::Input(format!(
            "spectral oracle refuses {n} nodes (limit {MAX_ORACLE_NODES})"
        )));
    }
    if x.shape()[0] != n {
        return Err(crate::error::shape_err("spectral_oracle", l.shape(), x.shape()));
    }
    let width = x.len() / n;
    let (lambda, u) = symmetric_eigen(l)?;
    let gain: Vec<f64> = lambda
        .iter()
        .map(|&lam| coefficients.iter().rev().fold(0.0, |acc, &w| acc * lam + w))
        .collect();
    let ud = u.data();
    let xd = x.data();
    // x̂ = Uᵀ x, scaled by g(λ), then mapped back
    let mut xhat = vec![0.0; n * width];
    for k in 0..n {
        for i in 0..n {
            let uik = ud[i * n + k];
            for c in 0..width {
                xhat[k * width + c] += uik * xd[i * width + c];
            }
        }
        for c in 0..width {
            xhat[k * width + c] *= gain[k];
        }
    }
    let mut y = vec![0.0; n * width];
    for i in 0..n {
        for k in 0..n {
            let uik = ud[i * n + k];
            for c in 0..width {
                y[i * width + c] += uik * xhat[k * width + c];
            }
        }
    }
    Tensor::new(x.shape().to_vec(), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalized_laplacian, WeightedGraph};

    #[test]
    fn identity_gain_returns_input() {
        let g = WeightedGraph::grid(3, 3).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let x = Tensor::matrix(9, 1, (0..9).map(|i| i as f64 - 4.0).collect()).unwrap();
        let y = spectral_oracle(&l, &[1.0], &x).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn first_power_is_laplacian_product() {
        let g = WeightedGraph::grid(2, 3).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let x = Tensor::vector(vec![0.3, -1.0, 2.0, 0.0, 1.5, -0.7]);
        let y = spectral_oracle(&l, &[0.0, 1.0], &x).unwrap();
        assert!(y.max_abs_diff(&l.matmul(&x).unwrap()) < 1e-10);
    }

    #[test]
    fn refuses_large_graphs() {
        let g = WeightedGraph::grid(9, 8).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        assert!(spectral_oracle(&l, &[1.0], &Tensor::zeros(&[72])).is_err());
    }

    #[test]
    fn eigenpairs_reconstruct_matrix() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 0, 1.0)])
            .unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let (vals, u) = symmetric_eigen(&l).unwrap();
        let n = 4;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| u.data()[i * n + k] * vals[k] * u.data()[j * n + k]).sum();
                assert!((r - l.data()[i * n + j]).abs() < 1e-12);
            }
        }
        assert!(vals[0].abs() < 1e-12);
        assert!(vals.iter().all(|&v| (-1e-12..=2.0 + 1e-12).contains(&v)));
    }
}
