use crate::error::{Error, Result};

use super::features::EXTERNAL_DIM;

/// Dimensions of the recurrent graph model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub nodes: usize,
    pub channels: usize,
    /// Chebyshev order `K` (number of polynomial terms).
    pub cheb_order: usize,
    /// Output channels `F` of the graph filter.
    pub graph_features: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub external_dim: usize,
    pub sigma_floor: f64,
}

impl ModelConfig {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            channels: 2,
            cheb_order: 3,
            graph_features: 8,
            latent_dim: 16,
            hidden_dim: 64,
            external_dim: EXTERNAL_DIM,
            sigma_floor: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("nodes", self.nodes),
            ("channels", self.channels),
            ("cheb_order", self.cheb_order),
            ("graph_features", self.graph_features),
            ("latent_dim", self.latent_dim),
            ("hidden_dim", self.hidden_dim),
            ("external_dim", self.external_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Config(format!(
                "sigma floor must be positive, got {}",
                self.sigma_floor
            )));
        }
        Ok(())
    }

    /// Length of a flattened snapshot, `n·C`.
    pub fn signal_len(&self) -> usize {
        self.nodes * self.channels
    }
}
