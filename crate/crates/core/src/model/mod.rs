//! The recurrent latent-variable model over graph signals.
//!
//! At each step the previous LSTM hidden state parameterizes a Gaussian prior
//! over a global latent vector `z_t`. The posterior sees the graph-filtered
//! snapshot and the hidden state, and is shifted by an embedding of the
//! external conditions. The decoder maps `(φ^z(z_t), h_{t−1})` to a diagonal
//! Gaussian over all `n·C` entries, and the LSTM consumes `(φ^x(x_t), φ^z(z_t))`.

mod config;
mod features;
pub(crate) mod network;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use config::ModelConfig;
pub use features::{
    Conditions, ExternalFeatures, EXTERNAL_DIM, TEMPERATURE_RANGE, WEATHER_KINDS, WEEKDAYS,
    WINDSPEED_RANGE,
};
pub use params::{Dense, GaussianNet, ModelParams, ParamVars, Params, PARAM_NAMES};

pub use crate::diffmath::GaussianParams;
use crate::diffmath::{Tape, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::graph::{ScaledLaplacian, WeightedGraph};
use crate::series::GraphSeries;
use network::{Net, StateVars};

/// LSTM hidden and cell memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl RnnState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            hidden: Tensor::zeros(&[hidden_dim]),
            cell: Tensor::zeros(&[hidden_dim]),
        }
    }

    fn from_vars(s: &StateVars<'_>) -> Self {
        Self {
            hidden: s.hidden.value(),
            cell: s.cell.value(),
        }
    }
}

/// Configuration, graph operator and weights of one model.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    graph: WeightedGraph,
    laplacian: ScaledLaplacian,
    pub params: ModelParams,
}

#[doc(hidden)]
pub fn standard_normal(rng: &mut ChaCha8Rng, dim: usize) -> Tensor {
    Tensor::vector((0..dim).map(|_| StandardNormal.sample(rng)).collect())
}

impl Model {
    pub fn new(config: ModelConfig, graph: WeightedGraph, params: ModelParams) -> Result<Self> {
        config.validate()?;
        if graph.node_count() != config.nodes {
            return Err(Error::Config(format!(
                "graph has {} nodes but the model expects {}",
                graph.node_count(),
                config.nodes
            )));
        }
        params.check_shapes(&config)?;
        let laplacian = ScaledLaplacian::new(&graph)?;
        Ok(Self {
            config,
            graph,
            laplacian,
            params,
        })
    }

    pub fn init(config: ModelConfig, graph: WeightedGraph, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Self::new(config, graph, params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn laplacian(&self) -> &ScaledLaplacian {
        &self.laplacian
    }

    pub fn initial_state(&self) -> RnnState {
        RnnState::zeros(self.config.hidden_dim)
    }

    /// Accepts a snapshot as `(n, C)` or flat `n·C` and returns `(n, C)`.
    pub(crate) fn as_signal(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c) = (self.config.nodes, self.config.channels);
        match x.shape() {
            &[a, b] if a == n && b == c => Ok(x.clone()),
            &[l] if l == n * c => x.reshape(vec![n, c]),
            s => Err(shape_err("snapshot", &[n, c], s)),
        }
    }

    fn check_vec(&self, op: &'static str, t: &Tensor, dim: usize) -> Result<()> {
        if t.shape() != [dim] {
            return Err(shape_err(op, &[dim], t.shape()));
        }
        Ok(())
    }

    fn check_state(&self, s: &RnnState) -> Result<()> {
        self.check_vec("state.hidden", &s.hidden, self.config.hidden_dim)?;
        self.check_vec("state.cell", &s.cell, self.config.hidden_dim)
    }

    /// `φ^x(x_t)`: Chebyshev-filtered snapshot, flattened node-major.
    pub fn extract_x(&self, x: &Tensor) -> Result<Tensor> {
        let x = self.as_signal(x)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        Ok(net.extract_x(net.constant(&x))?.value())
    }

    /// `φ^z(z_t)`.
    pub fn extract_z(&self, z: &Tensor) -> Result<Tensor> {
        self.check_vec("extract_z", z, self.config.latent_dim)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        Ok(net.extract_z(net.constant(z))?.value())
    }

    /// `φ^ext(e_t)`, the posterior mean shift.
    pub fn extract_ext(&self, e: &ExternalFeatures) -> Result<Tensor> {
        self.check_vec("extract_ext", e.tensor(), self.config.external_dim)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        Ok(net.extract_ext(net.constant(e.tensor()))?.value())
    }

    pub fn prior_step(&self, state: &RnnState) -> Result<GaussianParams> {
        self.check_state(state)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        Ok(net.prior(net.constant(&state.hidden))?.value())
    }

    pub fn encode_step(
        &self,
        x: &Tensor,
        e: &ExternalFeatures,
        state: &RnnState,
    ) -> Result<GaussianParams> {
        let x = self.as_signal(x)?;
        self.check_vec("encode_step", e.tensor(), self.config.external_dim)?;
        self.check_state(state)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        let xf = net.extract_x(net.constant(&x))?;
        Ok(net
            .encode(xf, net.constant(e.tensor()), net.constant(&state.hidden))?
            .value())
    }

    pub fn decode_step(&self, z: &Tensor, state: &RnnState) -> Result<GaussianParams> {
        self.check_vec("decode_step", z, self.config.latent_dim)?;
        self.check_state(state)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        let zf = net.extract_z(net.constant(z))?;
        Ok(net.decode(zf, net.constant(&state.hidden))?.value())
    }

    pub fn recurrence_step(&self, x: &Tensor, z: &Tensor, state: &RnnState) -> Result<RnnState> {
        let x = self.as_signal(x)?;
        self.check_vec("recurrence_step", z, self.config.latent_dim)?;
        self.check_state(state)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        let xf = net.extract_x(net.constant(&x))?;
        let zf = net.extract_z(net.constant(z))?;
        let next = net.recur(xf, zf, net.state(&state.hidden, &state.cell))?;
        Ok(RnnState::from_vars(&next))
    }

    /// One summand of the accumulated ELBO and the advanced state.
    pub fn step_elbo(
        &self,
        x: &Tensor,
        e: &ExternalFeatures,
        state: &RnnState,
        noise: &Tensor,
    ) -> Result<(f64, RnnState)> {
        let x = self.as_signal(x)?;
        self.check_vec("step_elbo", e.tensor(), self.config.external_dim)?;
        self.check_vec("step_elbo noise", noise, self.config.latent_dim)?;
        self.check_state(state)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        let terms = net.step(
            net.constant(&x),
            net.constant(e.tensor()),
            net.state(&state.hidden, &state.cell),
            net.constant(noise),
        )?;
        Ok((terms.elbo.item(), RnnState::from_vars(&terms.next)))
    }

    fn check_sequence(&self, xs: &[Tensor], es: &[ExternalFeatures]) -> Result<Vec<Tensor>> {
        if xs.is_empty() {
            return Err(Error::Input("sequence ELBO of an empty sequence".into()));
        }
        if xs.len() != es.len() {
            return Err(Error::Input(format!(
                "{} snapshots but {} external feature vectors",
                xs.len(),
                es.len()
            )));
        }
        for e in es {
            self.check_vec("sequence_elbo", e.tensor(), self.config.external_dim)?;
        }
        xs.iter().map(|x| self.as_signal(x)).collect()
    }

    fn sequence_on_tape<'t>(
        &self,
        net: &Net<'_, 't>,
        xs: &[Tensor],
        es: &[ExternalFeatures],
        seed: u64,
    ) -> Result<crate::diffmath::Var<'t>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = self.initial_state();
        let mut state = net.state(&init.hidden, &init.cell);
        let mut total = None;
        for (x, e) in xs.iter().zip(es) {
            let noise = standard_normal(&mut rng, self.config.latent_dim);
            let terms = net.step(
                net.constant(x),
                net.constant(e.tensor()),
                state,
                net.constant(&noise),
            )?;
            total = Some(match total {
                None => terms.elbo,
                Some(acc) => terms.elbo.add(acc)?,
            });
            state = terms.next;
        }
        Ok(total.expect("nonempty sequence"))
    }

    /// Single-sample estimate of `Σ_t [−KL(q_t‖p_t) + log p(x_t|z_t, h_{t−1})]`
    /// from a zero initial state, with latent noise drawn from `seed`.
    pub fn sequence_elbo(&self, xs: &[Tensor], es: &[ExternalFeatures], seed: u64) -> Result<f64> {
        let xs = self.check_sequence(xs, es)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        Ok(self.sequence_on_tape(&net, &xs, es, seed)?.item())
    }

    /// [`Model::sequence_elbo`] and its gradient with respect to every
    /// parameter, in canonical parameter order.
    pub fn sequence_elbo_gradient(
        &self,
        xs: &[Tensor],
        es: &[ExternalFeatures],
        seed: u64,
    ) -> Result<(f64, Vec<Tensor>)> {
        let xs = self.check_sequence(xs, es)?;
        let tape = Tape::new();
        let net = Net::new(self, &tape);
        let elbo = self.sequence_on_tape(&net, &xs, es, seed)?;
        let grads = tape.gradient(elbo)?;
        let out = net
            .p
            .fields()
            .into_iter()
            .zip(self.params.fields())
            .map(|(v, t)| Tensor::new(t.shape().to_vec(), grads.get_or_zero(*v)))
            .collect::<Result<Vec<_>>>()?;
        Ok((elbo.item(), out))
    }

    /// Ancestral sampling: `z_t` from the prior, `x_t` from the decoder.
    pub fn generate(&self, steps: usize, seed: u64) -> Result<GraphSeries> {
        if steps == 0 {
            return Err(Error::Input("generate needs at least one step".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let tape = Tape::new();
            let net = Net::new(self, &tape);
            let s = net.state(&state.hidden, &state.cell);
            let prior = net.prior(s.hidden)?;
            let z = prior.reparameterize(net.constant(&standard_normal(&mut rng, self.config.latent_dim)))?;
            let zf = net.extract_z(z)?;
            let dec = net.decode(zf, s.hidden)?;
            let x = dec.reparameterize(net.constant(&standard_normal(&mut rng, self.config.signal_len())))?;
            let x = x.reshape(vec![self.config.nodes, self.config.channels])?;
            let xf = net.extract_x(x)?;
            state = RnnState::from_vars(&net.recur(xf, zf, s)?);
            out.push(x.value());
        }
        GraphSeries::from_snapshots(self.config.nodes, self.config.channels, &out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        let cfg = ModelConfig {
            channels: 1,
            cheb_order: 2,
            graph_features: 2,
            latent_dim: 2,
            hidden_dim: 8,
            ..ModelConfig::new(4)
        };
        Model::init(cfg, WeightedGraph::grid(2, 2).unwrap(), 7).unwrap()
    }

    fn zeroed(mut m: Model) -> Model {
        for t in m.params.fields_mut() {
            t.data_mut().fill(0.0);
        }
        m
    }

    fn conditions(holiday: bool) -> ExternalFeatures {
        ExternalFeatures::encode(&Conditions {
            weekday: 2,
            holiday,
            weather: 1,
            temperature: 12.0,
            windspeed: 5.0,
        })
        .unwrap()
    }

    #[test]
    fn zero_network_prior() {
        let m = zeroed(tiny());
        let p = m.prior_step(&m.initial_state()).unwrap();
        assert!(p.mean.data().iter().all(|&v| v == 0.0));
        let expected = std::f64::consts::LN_2 + 1e-4;
        assert!(p.stddev.data().iter().all(|&s| (s - expected).abs() < 1e-15));
    }

    #[test]
    fn zero_network_decoder_returns_biases() {
        let mut m = zeroed(tiny());
        let nc = m.config().signal_len();
        let bias: Vec<f64> = (0..nc).map(|i| 0.1 * i as f64 - 0.2).collect();
        m.params.decoder.mean.bias = Tensor::vector(bias.clone());
        m.params.decoder.stddev.bias = Tensor::vector(bias.clone());
        let d = m.decode_step(&Tensor::vector(vec![0.5, -1.0]), &m.initial_state()).unwrap();
        assert_eq!(d.mean.data(), bias.as_slice());
        for (s, b) in d.stddev.data().iter().zip(&bias) {
            assert!((s - (crate::diffmath::softplus(*b) + 1e-4)).abs() < 1e-15);
        }
        assert_eq!(d.mean.len(), nc);
    }

    #[test]
    fn zero_weights_extractors() {
        let m = zeroed(tiny());
        assert!(m.extract_z(&Tensor::vector(vec![1.0, 2.0])).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(m.extract_ext(&conditions(true)).unwrap().data().iter().all(|&v| v == 0.0));
        let s = m
            .recurrence_step(&Tensor::zeros(&[4, 1]), &Tensor::zeros(&[2]), &m.initial_state())
            .unwrap();
        assert!(s.hidden.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_filter_extracts_raw_signal() {
        let mut m = tiny();
        // K=2, C=1, F=2: ω̃_0 = [1, 1], ω̃_1 = 0
        m.params.graph_filter = Tensor::new(vec![2, 1, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let x = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]);
        let f = m.extract_x(&x).unwrap();
        assert_eq!(f.data(), &[0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4]);
        assert!(m.extract_x(&Tensor::zeros(&[4])).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn external_shift_moves_only_the_mean() {
        let m = tiny();
        let x = Tensor::vector(vec![0.3, 0.1, 0.7, 0.2]);
        let s = RnnState {
            hidden: Tensor::vector(vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2, 0.05]),
            cell: Tensor::zeros(&[8]),
        };
        let (e1, e2) = (conditions(true), conditions(false));
        let q1 = m.encode_step(&x, &e1, &s).unwrap();
        let q2 = m.encode_step(&x, &e2, &s).unwrap();
        assert_eq!(q1.stddev, q2.stddev);
        let d1 = m.extract_ext(&e1).unwrap();
        let d2 = m.extract_ext(&e2).unwrap();
        assert_ne!(d1, d2);
        for i in 0..2 {
            let lhs = q1.mean.data()[i] - q2.mean.data()[i];
            let rhs = d1.data()[i] - d2.data()[i];
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_hidden_is_bounded() {
        let m = tiny();
        let mut s = m.initial_state();
        for k in 0..20 {
            let x = Tensor::vector(vec![10.0 * k as f64, -5.0, 3.0, 100.0]);
            s = m.recurrence_step(&x, &Tensor::vector(vec![50.0, -50.0]), &s).unwrap();
            assert!(s.hidden.data().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn elbo_bounded_by_reconstruction_when_kl_positive() {
        let m = tiny();
        let x = Tensor::vector(vec![0.3, 0.1, 0.7, 0.2]);
        let e = conditions(false);
        let s = m.initial_state();
        let noise = Tensor::vector(vec![0.4, -0.3]);
        let (elbo, _) = m.step_elbo(&x, &e, &s, &noise).unwrap();
        let q = m.encode_step(&x, &e, &s).unwrap();
        let z = crate::diffmath::reparameterize(&q, &noise).unwrap();
        let d = m.decode_step(&z, &s).unwrap();
        let recon = crate::diffmath::gaussian_log_density(&x, &d.mean, &d.stddev).unwrap();
        assert!(elbo <= recon && elbo.is_finite());
    }

    #[test]
    fn sequence_of_one_equals_step() {
        let m = tiny();
        let x = Tensor::vector(vec![0.3, 0.1, 0.7, 0.2]);
        let e = conditions(false);
        let seq = m.sequence_elbo(&[x.clone()], &[e.clone()], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = standard_normal(&mut rng, 2);
        let (step, _) = m.step_elbo(&x, &e, &m.initial_state(), &noise).unwrap();
        assert_eq!(seq.to_bits(), step.to_bits());
        assert!(m.sequence_elbo(&[], &[], 5).is_err());
        assert!(m.sequence_elbo(&[x], &[], 5).is_err());
    }

    #[test]
    fn generation_is_seeded_and_shaped() {
        let m = tiny();
        let a = m.generate(6, 3).unwrap();
        assert_eq!(a, m.generate(6, 3).unwrap());
        assert_eq!((a.len(), a.nodes(), a.channels()), (6, 4, 1));
    }

    #[test]
    fn degenerate_generator_is_constant() {
        let mut m = zeroed(tiny());
        m.params.decoder.mean.bias = Tensor::vector(vec![0.2, 0.4, 0.6, 0.8]);
        m.params.decoder.stddev.bias = Tensor::filled(&[4], -60.0);
        let s = m.generate(5, 1).unwrap();
        for t in 0..5 {
            for (v, b) in s.snapshot(t).iter().zip([0.2, 0.4, 0.6, 0.8]) {
                assert!((v - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn mismatched_graph_rejected() {
        let cfg = ModelConfig::new(5);
        assert!(Model::init(cfg, WeightedGraph::grid(2, 2).unwrap(), 0).is_err());
    }
}
