//! Weighted graphs, the normalized Laplacian and K-localized Chebyshev
//! filtering of graph signals.

mod chebyshev;
mod laplacian;
mod spectral;
mod weighted;

pub use chebyshev::{chebyshev_apply_var, monomial_to_chebyshev, ChebyshevFilter};
pub use laplacian::{
    estimate_lambda_max, normalized_laplacian, ScaledLaplacian, LAMBDA_MAX_ITER, LAMBDA_TOL,
};
pub use spectral::{spectral_oracle, symmetric_eigen, MAX_ORACLE_NODES};
pub use weighted::WeightedGraph;
