//! Windowed ELBO maximization with ADAM.

mod checkpoint;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::diffmath::{AdamConfig, AdamState, Tensor};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::model::{ExternalFeatures, Model, ModelConfig, ModelParams};
use crate::series::GraphSeries;

/// Seed offset for the fixed validation noise, so validation draws never
/// coincide with training draws.
const VALIDATION_SEED: u64 = 0x7a11_da7e;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub window: usize,
    /// Windows per ADAM update.
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Tail of the training span held out for model selection.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 30,
            window: 96,
            batch_size: 8,
            clip_norm: 5.0,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config(format!("window length {} < 2", self.window)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        for (name, v) in [("learning rate", self.learning_rate), ("clip norm", self.clip_norm)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// One training sequence with its aligned external features.
#[derive(Debug, Clone)]
pub struct Window {
    pub start: usize,
    pub x: Vec<Tensor>,
    pub e: Vec<ExternalFeatures>,
}

/// Cuts consecutive non-overlapping windows; the remainder is dropped.
pub fn make_windows(
    series: &GraphSeries,
    externals: &[ExternalFeatures],
    window: usize,
) -> Result<Vec<Window>> {
    if externals.len() != series.len() {
        return Err(Error::Input(format!(
            "{} snapshots but {} external feature vectors",
            series.len(),
            externals.len()
        )));
    }
    if window == 0 || series.len() < window {
        return Err(Error::Input(format!(
            "series of length {} is shorter than one window of {window}",
            series.len()
        )));
    }
    Ok((0..series.len() / window)
        .map(|w| {
            let start = w * window;
            Window {
                start,
                x: (start..start + window).map(|t| series.snapshot_tensor(t)).collect(),
                e: externals[start..start + window].to_vec(),
            }
        })
        .collect())
}

/// Per-epoch ELBO values, normalized per time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub train_elbo: Vec<f64>,
    pub val_elbo: Vec<f64>,
    pub seconds: Vec<f64>,
    /// Epoch (1-based) whose parameters were returned; 0 for none.
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.train_elbo.len()
    }

    /// `epoch,train_elbo,val_elbo,seconds`. Wall-clock times are excluded
    /// when `with_times` is false so the file is reproducible.
    pub fn write_csv<W: Write>(&self, out: W, with_times: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_elbo", "val_elbo", "seconds"])?;
        for i in 0..self.epochs() {
            let secs = if with_times { self.seconds[i].to_string() } else { "0".into() };
            w.write_record([
                (i + 1).to_string(),
                self.train_elbo[i].to_string(),
                self.val_elbo[i].to_string(),
                secs,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Scales `grads` in place so their global norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Splits the training span into the fitting part and the held-out tail.
pub fn validation_split(len: usize, fraction: f64) -> Result<usize> {
    let val = ((len as f64) * fraction).floor() as usize;
    if val < 2 || len - val < 2 {
        return Err(Error::Input(format!(
            "validation fraction {fraction} leaves no usable split of {len} steps"
        )));
    }
    Ok(len - val)
}

/// Per-step validation ELBO of the held-out tail, with fixed latent noise.
pub fn validation_elbo(model: &Model, x: &[Tensor], e: &[ExternalFeatures], seed: u64) -> Result<f64> {
    Ok(model.sequence_elbo(x, e, seed ^ VALIDATION_SEED)? / x.len() as f64)
}

/// Fits `params` to the clean series.
///
/// Each epoch visits the windows in a seeded random order; a batch gradient
/// is the mean over its windows of `−∇ sequence_elbo`, computed in parallel
/// and summed in window order. The parameters with the best validation
/// ELBO are returned.
pub fn train_model(
    series: &GraphSeries,
    externals: &[ExternalFeatures],
    graph: &WeightedGraph,
    model_config: ModelConfig,
    train_config: &TrainConfig,
    init: ModelParams,
) -> Result<(ModelParams, TrainReport)> {
    train_config.validate()?;
    if series.nodes() != model_config.nodes || series.channels() != model_config.channels {
        return Err(Error::Input(format!(
            "series is {}×{} but the model expects {}×{}",
            series.nodes(),
            series.channels(),
            model_config.nodes,
            model_config.channels
        )));
    }
    if externals.len() != series.len() {
        return Err(Error::Input("series and externals differ in length".into()));
    }
    let mut model = Model::new(model_config, graph.clone(), init)?;
    if train_config.epochs == 0 {
        return Ok((model.params, TrainReport::default()));
    }
    let fit_len = validation_split(series.len(), train_config.validation_fraction)?;
    let windows = make_windows(&series.slice(0..fit_len)?, &externals[..fit_len], train_config.window)?;
    let val_x: Vec<Tensor> = (fit_len..series.len()).map(|t| series.snapshot_tensor(t)).collect();
    let val_e = &externals[fit_len..];

    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: train_config.learning_rate,
            ..AdamConfig::default()
        },
        model.params.fields(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut report = TrainReport::default();
    let mut best = (f64::NEG_INFINITY, model.params.clone());
    let mut draw = 0u64;

    for epoch in 1..=train_config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_elbo = 0.0;
        for (batch_no, batch) in order.chunks(train_config.batch_size).enumerate() {
            let seeds: Vec<u64> = batch
                .iter()
                .map(|_| {
                    draw += 1;
                    train_config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(draw)
                })
                .collect();
            let results = batch
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(&w, &s)| model.sequence_elbo_gradient(&windows[w].x, &windows[w].e, s))
                .collect::<Result<Vec<_>>>()?;
            let scale = -1.0 / batch.len() as f64;
            let mut grads: Vec<Tensor> = model.params.fields().iter().map(|t| Tensor::zeros(t.shape())).collect();
            let mut loss = 0.0;
            for (elbo, g) in &results {
                loss -= elbo;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, b)| *a += scale * b);
                }
            }
            loss /= batch.len() as f64;
            if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                    loss,
                });
            }
            epoch_elbo += results.iter().map(|(e, _)| e).sum::<f64>();
            clip_global_norm(&mut grads, train_config.clip_norm);
            adam.update(&mut model.params.fields_mut(), &grads)?;
        }
        let train_elbo = epoch_elbo / (windows.len() * train_config.window) as f64;
        let val = validation_elbo(&model, &val_x, val_e, train_config.seed)?;
        if !val.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(train_config.batch_size),
                loss: -val,
            });
        }
        report.train_elbo.push(train_elbo);
        report.val_elbo.push(val);
        report.seconds.push(started.elapsed().as_secs_f64());
        if val > best.0 {
            best = (val, model.params.clone());
            report.best_epoch = epoch;
        }
    }
    Ok((best.1, report))
}
