//! Dense float64 tensors, reverse-mode differentiation, Gaussian utilities
//! and the ADAM optimizer.

mod adam;
mod gaussian;
mod sparse;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gaussian::{
    gaussian_log_density, kl_diag_gaussians, log_normal_pdf, reparameterize, GaussianParams,
    GaussianVars, HALF_LN_2PI,
};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::{sigmoid, softplus};
