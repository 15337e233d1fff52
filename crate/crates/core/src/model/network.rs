//! Taped forward pass of the recurrent latent-variable graph model.

use super::params::{Dense, GaussianNet, ParamVars};
use super::Model;
use crate::diffmath::{GaussianVars, Tape, Tensor, Var};
use crate::error::Result;
use crate::graph::chebyshev_apply_var;

/// LSTM hidden and cell vectors on a tape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StateVars<'t> {
    pub hidden: Var<'t>,
    pub cell: Var<'t>,
}

/// Parameters of a [`Model`] attached to one tape.
pub(crate) struct Net<'m, 't> {
    pub model: &'m Model,
    pub tape: &'t Tape,
    pub p: ParamVars<'t>,
}

/// Intermediate values of one ELBO step.
pub(crate) struct StepTerms<'t> {
    pub elbo: Var<'t>,
    pub next: StateVars<'t>,
}

fn dense<'t>(d: &Dense<Var<'t>>, x: Var<'t>) -> Result<Var<'t>> {
    d.weight.matmul(x)?.add(d.bias)
}

impl<'m, 't> Net<'m, 't> {
    pub fn new(model: &'m Model, tape: &'t Tape) -> Self {
        Self {
            model,
            tape,
            p: model.params.attach(tape),
        }
    }

    pub fn constant(&self, t: &Tensor) -> Var<'t> {
        self.tape.leaf(t.clone())
    }

    pub fn state(&self, h: &Tensor, c: &Tensor) -> StateVars<'t> {
        StateVars {
            hidden: self.constant(h),
            cell: self.constant(c),
        }
    }

    fn gaussian_head(&self, g: &GaussianNet<Var<'t>>, input: Var<'t>) -> Result<GaussianVars<'t>> {
        let hidden = dense(&g.hidden, input)?.tanh();
        let mean = dense(&g.mean, hidden)?;
        let stddev = dense(&g.stddev, hidden)?
            .softplus()
            .offset(self.model.config.sigma_floor);
        Ok(GaussianVars { mean, stddev })
    }

    /// Graph-filtered snapshot, flattened node-major. `x` is `(n, C)`.
    pub fn extract_x(&self, x: Var<'t>) -> Result<Var<'t>> {
        let y = chebyshev_apply_var(self.p.graph_filter, &self.model.laplacian, x)?;
        let len = y.len();
        y.reshape(vec![len])
    }

    pub fn extract_z(&self, z: Var<'t>) -> Result<Var<'t>> {
        Ok(dense(&self.p.latent_features, z)?.tanh())
    }

    pub fn extract_ext(&self, e: Var<'t>) -> Result<Var<'t>> {
        let hidden = dense(&self.p.external_hidden, e)?.tanh();
        dense(&self.p.external_out, hidden)
    }

    pub fn prior(&self, h: Var<'t>) -> Result<GaussianVars<'t>> {
        self.gaussian_head(&self.p.prior, h)
    }

    /// Posterior from graph features and the previous hidden state; the
    /// external shift moves only the mean.
    pub fn encode(&self, x_feat: Var<'t>, e: Var<'t>, h: Var<'t>) -> Result<GaussianVars<'t>> {
        let q = self.gaussian_head(&self.p.encoder, Var::concat(&[x_feat, h]))?;
        Ok(GaussianVars {
            mean: q.mean.add(self.extract_ext(e)?)?,
            stddev: q.stddev,
        })
    }

    pub fn decode(&self, z_feat: Var<'t>, h: Var<'t>) -> Result<GaussianVars<'t>> {
        self.gaussian_head(&self.p.decoder, Var::concat(&[z_feat, h]))
    }

    pub fn recur(&self, x_feat: Var<'t>, z_feat: Var<'t>, s: StateVars<'t>) -> Result<StateVars<'t>> {
        let dh = self.model.config.hidden_dim;
        let gates = dense(&self.p.lstm, Var::concat(&[x_feat, z_feat, s.hidden]))?;
        let input = gates.slice(0, dh)?.sigmoid();
        let forget = gates.slice(dh, dh)?.sigmoid();
        let candidate = gates.slice(2 * dh, dh)?.tanh();
        let output = gates.slice(3 * dh, dh)?.sigmoid();
        let cell = forget.mul(s.cell)?.add(input.mul(candidate)?)?;
        let hidden = output.mul(cell.tanh())?;
        Ok(StateVars { hidden, cell })
    }

    /// `−KL(q‖p) + log p(x | z, h)` with `z = μ_q + σ_q ε`, then the state
    /// update on `(x, z)`.
    pub fn step(
        &self,
        x: Var<'t>,
        e: Var<'t>,
        s: StateVars<'t>,
        noise: Var<'t>,
    ) -> Result<StepTerms<'t>> {
        let x_feat = self.extract_x(x)?;
        let posterior = self.encode(x_feat, e, s.hidden)?;
        let prior = self.prior(s.hidden)?;
        let z = posterior.reparameterize(noise)?;
        let z_feat = self.extract_z(z)?;
        let decoded = self.decode(z_feat, s.hidden)?;
        let flat_x = x.reshape(vec![x.len()])?;
        let elbo = decoded.log_density(flat_x)?.sub(posterior.kl(&prior)?)?;
        let next = self.recur(x_feat, z_feat, s)?;
        Ok(StepTerms { elbo, next })
    }
}
