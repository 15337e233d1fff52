use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};

/// Affine layer `W x + b` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

/// One tanh hidden layer feeding a mean head and a stddev head.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNet<T> {
    pub hidden: Dense<T>,
    pub mean: Dense<T>,
    pub stddev: Dense<T>,
}

/// All learnable weights, generic over the storage so the same layout
/// serves plain tensors and taped variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// Chebyshev coefficients `(K, C, F)`.
    pub graph_filter: T,
    pub latent_features: Dense<T>,
    pub external_hidden: Dense<T>,
    pub external_out: Dense<T>,
    pub prior: GaussianNet<T>,
    pub encoder: GaussianNet<T>,
    pub decoder: GaussianNet<T>,
    /// Gates stacked as input, forget, cell, output.
    pub lstm: Dense<T>,
}

pub type ModelParams = Params<Tensor>;
pub type ParamVars<'t> = Params<Var<'t>>;

impl<T> Dense<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Dense<U> {
        Dense {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }
}

impl<T> GaussianNet<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> GaussianNet<U> {
        GaussianNet {
            hidden: self.hidden.map(f),
            mean: self.mean.map(f),
            stddev: self.stddev.map(f),
        }
    }
}

impl<T> Params<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Params<U> {
        Params {
            graph_filter: f(&self.graph_filter),
            latent_features: self.latent_features.map(&mut f),
            external_hidden: self.external_hidden.map(&mut f),
            external_out: self.external_out.map(&mut f),
            prior: self.prior.map(&mut f),
            encoder: self.encoder.map(&mut f),
            decoder: self.decoder.map(&mut f),
            lstm: self.lstm.map(&mut f),
        }
    }

    /// Every entry in canonical order (the order of [`PARAM_NAMES`]).
    pub fn fields(&self) -> Vec<&T> {
        let mut out = vec![&self.graph_filter];
        for d in [&self.latent_features, &self.external_hidden, &self.external_out] {
            out.extend([&d.weight, &d.bias]);
        }
        for g in [&self.prior, &self.encoder, &self.decoder] {
            for d in [&g.hidden, &g.mean, &g.stddev] {
                out.extend([&d.weight, &d.bias]);
            }
        }
        out.extend([&self.lstm.weight, &self.lstm.bias]);
        out
    }

    pub fn fields_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.graph_filter];
        for d in [
            &mut self.latent_features,
            &mut self.external_hidden,
            &mut self.external_out,
        ] {
            out.extend([&mut d.weight, &mut d.bias]);
        }
        for g in [&mut self.prior, &mut self.encoder, &mut self.decoder] {
            for d in [&mut g.hidden, &mut g.mean, &mut g.stddev] {
                out.extend([&mut d.weight, &mut d.bias]);
            }
        }
        out.extend([&mut self.lstm.weight, &mut self.lstm.bias]);
        out
    }
}

pub const PARAM_NAMES: [&str; 27] = [
    "graph_filter",
    "latent_features.weight",
    "latent_features.bias",
    "external_hidden.weight",
    "external_hidden.bias",
    "external_out.weight",
    "external_out.bias",
    "prior.hidden.weight",
    "prior.hidden.bias",
    "prior.mean.weight",
    "prior.mean.bias",
    "prior.stddev.weight",
    "prior.stddev.bias",
    "encoder.hidden.weight",
    "encoder.hidden.bias",
    "encoder.mean.weight",
    "encoder.mean.bias",
    "encoder.stddev.weight",
    "encoder.stddev.bias",
    "decoder.hidden.weight",
    "decoder.hidden.bias",
    "decoder.mean.weight",
    "decoder.mean.bias",
    "decoder.stddev.weight",
    "decoder.stddev.bias",
    "lstm.weight",
    "lstm.bias",
];

impl ModelParams {
    /// Shapes implied by `config`, in canonical order.
    pub fn expected_shapes(config: &ModelConfig) -> Params<Vec<usize>> {
        let ModelConfig {
            channels: c,
            cheb_order: k,
            graph_features: f,
            latent_dim: dz,
            hidden_dim: dh,
            external_dim: de,
            ..
        } = *config;
        let nf = config.nodes * f;
        let nc = config.nodes * c;
        let dense = |out: usize, inp: usize| Dense {
            weight: vec![out, inp],
            bias: vec![out],
        };
        let gnet = |inp: usize, out: usize| GaussianNet {
            hidden: dense(dh, inp),
            mean: dense(out, dh),
            stddev: dense(out, dh),
        };
        Params {
            graph_filter: vec![k, c, f],
            latent_features: dense(dh, dz),
            external_hidden: dense(dh, de),
            external_out: dense(dz, dh),
            prior: gnet(dh, dz),
            encoder: gnet(nf + dh, dz),
            decoder: gnet(dh + dh, nc),
            lstm: dense(4 * dh, nf + dh + dh),
        }
    }

    /// Glorot-uniform weights, zero biases except a unit forget-gate bias,
    /// and filter coefficients shrunk by `1/K`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = Self::expected_shapes(config);
        let mut params = shapes.map(|s| Tensor::zeros(s));
        let names = PARAM_NAMES;
        for (name, t) in names.iter().zip(params.fields_mut()) {
            let shape = t.shape().to_vec();
            if name.ends_with(".bias") {
                continue;
            }
            let (fan_in, fan_out, scale) = match shape.as_slice() {
                &[k, cin, cout] => (cin, cout, 1.0 / k as f64),
                &[out, inp] => (inp, out, 1.0),
                _ => unreachable!("weights are 2-d or 3-d"),
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = scale * rng.random_range(-bound..=bound);
            }
        }
        let dh = config.hidden_dim;
        params.lstm.bias.data_mut()[dh..2 * dh].fill(1.0);
        Ok(params)
    }

    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::expected_shapes(config);
        for ((t, e), name) in self.fields().into_iter().zip(expected.fields()).zip(PARAM_NAMES) {
            if t.shape() != e.as_slice() {
                return Err(Error::Input(format!(
                    "{name}: expected shape {e:?}, found {:?}",
                    t.shape()
                )));
            }
            if !t.all_finite() {
                return Err(Error::Domain(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn attach<'t>(&self, tape: &'t Tape) -> ParamVars<'t> {
        self.map(|t| tape.leaf(t.clone()))
    }

    pub fn parameter_count(&self) -> usize {
        self.fields().iter().map(|t| t.len()).sum()
    }

    /// Flattened copy of every weight, canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        self.fields().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(shape_err("unflatten", &[self.parameter_count()], &[flat.len()]));
        }
        let mut offset = 0;
        for t in self.fields_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}
