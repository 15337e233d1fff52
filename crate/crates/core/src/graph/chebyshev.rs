use super::laplacian::ScaledLaplacian;
use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};

/// K-localized spectral filter `y = Σ_k T_k(L̃) x ω̃_k`, with one
/// `C_in × C_out` coefficient block per polynomial order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevFilter {
    coefficients: Tensor,
}

impl ChebyshevFilter {
    /// `coefficients` has shape `(K, C_in, C_out)`.
    pub fn new(coefficients: Tensor) -> Result<Self> {
        if coefficients.shape().len() != 3 {
            return Err(Error::Input(format!(
                "filter coefficients must be (K, C_in, C_out), got {:?}",
                coefficients.shape()
            )));
        }
        if !coefficients.all_finite() {
            return Err(Error::Domain("non-finite filter coefficient".into()));
        }
        Ok(Self { coefficients })
    }

    /// Single-channel filter from scalar coefficients `ω̃_0..ω̃_{K−1}`.
    pub fn scalar(coefficients: &[f64]) -> Result<Self> {
        Self::new(Tensor::new(vec![coefficients.len(), 1, 1], coefficients.to_vec())?)
    }

    pub fn order(&self) -> usize {
        self.coefficients.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.coefficients.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.coefficients.shape()[2]
    }

    pub fn coefficients(&self) -> &Tensor {
        &self.coefficients
    }

    /// Applies the filter to an `n × C_in` signal.
    pub fn apply(&self, sl: &ScaledLaplacian, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let coef = tape.leaf(self.coefficients.clone());
        let xv = tape.leaf(x.clone());
        Ok(chebyshev_apply_var(coef, sl, xv)?.value())
    }
}

/// Taped Chebyshev filtering; `coef` is `(K, C_in, C_out)` and `x` is
/// `(n, C_in)`. Each order costs one sparse product with `L̃`.
pub fn chebyshev_apply_var<'t>(coef: Var<'t>, sl: &ScaledLaplacian, x: Var<'t>) -> Result<Var<'t>> {
    let cshape = coef.shape();
    let &[k_order, c_in, c_out] = cshape.as_slice() else {
        return Err(Error::Input(format!("filter coefficients must be 3-d, got {cshape:?}")));
    };
    let xshape = x.shape();
    if xshape.len() != 2 || xshape[0] != sl.node_count() || xshape[1] != c_in {
        return Err(shape_err("chebyshev_apply", &[sl.node_count(), c_in], &xshape));
    }
    let block = c_in * c_out;
    let weight = |k: usize| -> Result<Var<'t>> { coef.slice(k * block, block)?.reshape(vec![c_in, c_out]) };

    let lt = sl.scaled_sparse();
    let mut y = x.matmul(weight(0)?)?;
    if k_order == 1 {
        return Ok(y);
    }
    let mut prev = x;
    let mut cur = x.sparse_lmul(lt)?;
    y = y.add(cur.matmul(weight(1)?)?)?;
    for k in 2..k_order {
        let next = cur.sparse_lmul(lt)?.scale(2.0).sub(prev)?;
        y = y.add(next.matmul(weight(k)?)?)?;
        prev = cur;
        cur = next;
    }
    Ok(y)
}

/// Chebyshev coefficients `c` such that `Σ_k a_k L^k = Σ_k c_k T_k(L̃)` with
/// `L̃ = 2L/λ_max − I`.
pub fn monomial_to_chebyshev(monomial: &[f64], lambda_max: f64) -> Vec<f64> {
    let k = monomial.len();
    let s = lambda_max / 2.0;
    // L = s(L̃ + I): expand each power binomially in L̃
    let mut in_scaled = vec![0.0; k];
    for (p, &a) in monomial.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=p {
            in_scaled[j] += a * s.powi(p as i32) * binom;
            binom = binom * (p - j) as f64 / (j + 1) as f64;
        }
    }
    // t^j in the Chebyshev basis via t·T_m = (T_{m+1} + T_{|m−1|}) / 2
    let mut out = vec![0.0; k];
    let mut power = vec![0.0; k];
    power[0] = 1.0;
    for (j, &b) in in_scaled.iter().enumerate() {
        if j > 0 {
            let mut next = vec![0.0; k];
            for m in 0..k {
                let c = power[m];
                if c == 0.0 {
                    continue;
                }
                if m == 0 {
                    next[1] += c;
                } else {
                    if m + 1 < k {
                        next[m + 1] += c / 2.0;
                    }
                    next[m - 1] += c / 2.0;
                }
            }
            power = next;
        }
        for m in 0..k {
            out[m] += b * power[m];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;

    #[test]
    fn zeroth_order_scales_signal() {
        let g = WeightedGraph::grid(2, 3).unwrap();
        let sl = ScaledLaplacian::new(&g).unwrap();
        let x = Tensor::matrix(6, 1, vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap();
        let y = ChebyshevFilter::scalar(&[2.5]).unwrap().apply(&sl, &x).unwrap();
        assert_eq!(y.data(), x.map(|v| 2.5 * v).data());
    }

    #[test]
    fn two_node_first_order() {
        let g = WeightedGraph::grid(1, 2).unwrap();
        let sl = ScaledLaplacian::from_laplacian(
            crate::graph::normalized_laplacian(&g).unwrap(),
            2.0,
        )
        .unwrap();
        let x = Tensor::matrix(2, 1, vec![3.0, 7.0]).unwrap();
        let y = ChebyshevFilter::scalar(&[0.0, 1.0]).unwrap().apply(&sl, &x).unwrap();
        assert_eq!(y.data(), &[-7.0, -3.0]);
    }

    #[test]
    fn channel_mismatch() {
        let g = WeightedGraph::grid(2, 2).unwrap();
        let sl = ScaledLaplacian::new(&g).unwrap();
        let f = ChebyshevFilter::new(Tensor::zeros(&[2, 3, 1])).unwrap();
        assert!(f.apply(&sl, &Tensor::zeros(&[4, 2])).is_err());
    }

    #[test]
    fn change_of_basis_low_orders() {
        // L = L̃ + I when λ_max = 2, so L² = T_2/2 + 2T_1 + 3T_0/2
        let c = monomial_to_chebyshev(&[0.0, 0.0, 1.0], 2.0);
        for (a, b) in c.iter().zip([1.5, 2.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(monomial_to_chebyshev(&[1.0], 1.3), vec![1.0]);
    }
}
