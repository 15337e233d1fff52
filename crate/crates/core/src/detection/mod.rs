//! Per-step ELBO scoring, threshold calibration and likelihood-ratio
//! localization.

mod lrt;

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use lrt::{
    alternative_variance, anomalous_degrees, chi_square_cdf, ln_gamma, localize, lrt_statistic,
    regularized_gamma_p, Localized, EPS_RATIO, EPS_VAR,
};

use crate::diffmath::{GaussianParams, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::network::Net;
use crate::model::{standard_normal, ExternalFeatures, Model, RnnState};
use crate::series::GraphSeries;

pub const DEFAULT_SAMPLES: usize = 16;
pub const DEFAULT_QUANTILE: f64 = 0.01;
pub const DEFAULT_OD_THRESHOLD: f64 = 0.95;

/// Output of [`score_step`].
#[derive(Debug, Clone)]
pub struct StepScore {
    /// Monte-Carlo detection bound `b_t`.
    pub score: f64,
    pub next: RnnState,
    /// Prior-predictive Gaussian over the `n·C` entries of `x_t`.
    pub predictive: GaussianParams,
}

/// Scores one snapshot against the model state.
///
/// `b_t = −KL(q_t‖p_t) + (1/S) Σ_s log p(x_t | z_s, h_{t−1})` with
/// `z_s ~ q_t`. The predictive pools `S` decoder outputs driven by prior
/// draws (mean of means, law of total variance). The state advances on the
/// observed snapshot and the posterior mean of `z_t`.
pub fn score_step(
    model: &Model,
    state: &RnnState,
    x: &Tensor,
    e: &ExternalFeatures,
    samples: usize,
    seed: u64,
) -> Result<StepScore> {
    if samples == 0 {
        return Err(Error::Input("score_step needs at least one sample".into()));
    }
    let config = model.config();
    let x = model.as_signal(x)?;
    if e.dim() != config.external_dim {
        return Err(Error::Input(format!(
            "external features of length {}, expected {}",
            e.dim(),
            config.external_dim
        )));
    }
    if state.hidden.shape() != [config.hidden_dim] || state.cell.shape() != [config.hidden_dim] {
        return Err(Error::Input("state does not match the model hidden size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tape = Tape::new();
    let net = Net::new(model, &tape);
    let s = net.state(&state.hidden, &state.cell);
    let xv = net.constant(&x);
    let flat = xv.reshape(vec![config.signal_len()])?;
    let x_feat = net.extract_x(xv)?;
    let q = net.encode(x_feat, net.constant(e.tensor()), s.hidden)?;
    let p = net.prior(s.hidden)?;
    let kl = q.kl(&p)?.item();

    let mut recon = 0.0;
    for _ in 0..samples {
        let z = q.reparameterize(net.constant(&standard_normal(&mut rng, config.latent_dim)))?;
        let dec = net.decode(net.extract_z(z)?, s.hidden)?;
        recon += dec.log_density(flat)?.item();
    }

    let n = config.signal_len();
    let mut mean = vec![0.0; n];
    let mut second = vec![0.0; n];
    for _ in 0..samples {
        let z = p.reparameterize(net.constant(&standard_normal(&mut rng, config.latent_dim)))?;
        let dec = net.decode(net.extract_z(z)?, s.hidden)?.value();
        for i in 0..n {
            let (m, sd) = (dec.mean.data()[i], dec.stddev.data()[i]);
            mean[i] += m;
            second[i] += sd * sd + m * m;
        }
    }
    let k = samples as f64;
    let stddev = mean
        .iter_mut()
        .zip(&second)
        .map(|(m, s2)| {
            *m /= k;
            // clamp guards round-off when all draws coincide
            (s2 / k - *m * *m).max(0.0).sqrt().max(config.sigma_floor)
        })
        .collect();
    let predictive = GaussianParams::new(Tensor::vector(mean), Tensor::vector(stddev))?;

    let next = net.recur(x_feat, net.extract_z(q.mean)?, s)?;
    Ok(StepScore {
        score: recon / k - kl,
        next: RnnState {
            hidden: next.hidden.value(),
            cell: next.cell.value(),
        },
        predictive,
    })
}

/// Seed used by [`detect_series`] for step `t`.
pub fn step_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (t as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Linearly interpolated empirical quantile.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("quantile of no values".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("quantile of NaN values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Score threshold and localization cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCalibration {
    /// Steps with `b_t < threshold` are flagged.
    pub threshold: f64,
    pub quantile: f64,
    pub od_threshold: f64,
}

pub const MIN_CALIBRATION_SCORES: usize = 100;

impl ThresholdCalibration {
    pub fn new(threshold: f64, quantile: f64, od_threshold: f64) -> Result<Self> {
        if !(quantile >= 0.0 && quantile < 1.0) {
            return Err(Error::Config(format!("quantile {quantile} outside [0, 1)")));
        }
        if !(od_threshold > 0.0 && od_threshold < 1.0) {
            return Err(Error::Config(format!("od threshold {od_threshold} outside (0, 1)")));
        }
        if threshold.is_nan() {
            return Err(Error::Config("threshold is NaN".into()));
        }
        Ok(Self {
            threshold,
            quantile,
            od_threshold,
        })
    }

    /// Threshold at the `q`-quantile of clean scores (`q = 0` flags nothing).
    pub fn calibrate(clean_scores: &[f64], q: f64, od_threshold: f64) -> Result<Self> {
        if clean_scores.len() < MIN_CALIBRATION_SCORES {
            return Err(Error::Input(format!(
                "calibration needs at least {MIN_CALIBRATION_SCORES} clean scores, got {}",
                clean_scores.len()
            )));
        }
        let threshold = if q == 0.0 {
            f64::NEG_INFINITY
        } else {
            empirical_quantile(clean_scores, q)?
        };
        Self::new(threshold, q, od_threshold)
    }

    pub fn flags(&self, score: f64) -> bool {
        score < self.threshold
    }
}

/// Scores of a whole series plus localization at flagged steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    /// Empty at unflagged steps.
    pub localized: Vec<Vec<Localized>>,
    pub predictive: Vec<GaussianParams>,
}

impl DetectionReport {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn flag_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// `t,score,flagged,top_nodes` with `top_nodes` as `node:channel:od`
    /// separated by semicolons.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "score", "flagged", "top_nodes"])?;
        for t in 0..self.len() {
            let nodes = self.localized[t]
                .iter()
                .map(|l| format!("{}:{}:{:.4}", l.node, l.channel, l.od))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                t.to_string(),
                self.scores[t].to_string(),
                (self.flags[t] as u8).to_string(),
                nodes,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses [`DetectionReport::write_csv`] output; the predictive
    /// distributions are not stored and come back empty.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut report = DetectionReport {
            scores: Vec::new(),
            flags: Vec::new(),
            localized: Vec::new(),
            predictive: Vec::new(),
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Format(format!("row {row}: missing column {i}")));
            let bad = |what: &str| Error::Format(format!("row {row}: bad {what}"));
            if field(0)?.parse::<usize>().map_err(|_| bad("t"))? != row {
                return Err(bad("step index"));
            }
            report.scores.push(field(1)?.parse().map_err(|_| bad("score"))?);
            report.flags.push(match field(2)? {
                "0" => false,
                "1" => true,
                _ => return Err(bad("flag")),
            });
            let mut hits = Vec::new();
            for item in field(3)?.split(';').filter(|s| !s.is_empty()) {
                let parts: Vec<&str> = item.split(':').collect();
                if parts.len() != 3 {
                    return Err(bad("top_nodes entry"));
                }
                hits.push(Localized {
                    node: parts[0].parse().map_err(|_| bad("node"))?,
                    channel: parts[1].parse().map_err(|_| bad("channel"))?,
                    od: parts[2].parse().map_err(|_| bad("od"))?,
                });
            }
            report.localized.push(hits);
        }
        Ok(report)
    }
}

fn check_lengths(series: &GraphSeries, externals: &[ExternalFeatures]) -> Result<()> {
    if externals.len() != series.len() {
        return Err(Error::Input(format!(
            "{} snapshots but {} external feature vectors",
            series.len(),
            externals.len()
        )));
    }
    Ok(())
}

/// State after streaming `series` from a zero state with the same update
/// rule as [`score_step`], without scoring.
pub fn warm_state(model: &Model, series: &GraphSeries, externals: &[ExternalFeatures]) -> Result<RnnState> {
    check_lengths(series, externals)?;
    let mut state = model.initial_state();
    for (t, e) in externals.iter().enumerate() {
        let x = series.snapshot_tensor(t);
        let q = model.encode_step(&x, e, &state)?;
        state = model.recurrence_step(&x, &q.mean, &state)?;
    }
    Ok(state)
}

/// Streams [`score_step`] over the series from a zero state, localizing
/// entries at flagged steps only.
pub fn detect_series(
    model: &Model,
    series: &GraphSeries,
    externals: &[ExternalFeatures],
    calibration: &ThresholdCalibration,
    samples: usize,
    seed: u64,
) -> Result<DetectionReport> {
    detect_series_from(model, &model.initial_state(), series, externals, calibration, samples, seed)
}

/// [`detect_series`] continuing from `initial`, e.g. the state reached over
/// the data preceding `series`.
pub fn detect_series_from(
    model: &Model,
    initial: &RnnState,
    series: &GraphSeries,
    externals: &[ExternalFeatures],
    calibration: &ThresholdCalibration,
    samples: usize,
    seed: u64,
) -> Result<DetectionReport> {
    check_lengths(series, externals)?;
    let mut state = initial.clone();
    let mut report = DetectionReport {
        scores: Vec::with_capacity(series.len()),
        flags: Vec::with_capacity(series.len()),
        localized: Vec::with_capacity(series.len()),
        predictive: Vec::with_capacity(series.len()),
    };
    for (t, e) in externals.iter().enumerate() {
        let step = score_step(model, &state, &series.snapshot_tensor(t), e, samples, step_seed(seed, t))?;
        let flagged = calibration.flags(step.score);
        let hits = if flagged {
            localize(&step.predictive, series.snapshot(t), series.channels(), calibration.od_threshold)?
        } else {
            Vec::new()
        };
        report.scores.push(step.score);
        report.flags.push(flagged);
        report.localized.push(hits);
        report.predictive.push(step.predictive);
        state = step.next;
    }
    Ok(report)
}
