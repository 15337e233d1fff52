use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use graphvrnn::detection::{DEFAULT_OD_THRESHOLD, DEFAULT_QUANTILE, DEFAULT_SAMPLES};
use graphvrnn::experiment::AnomalyKind;

#[derive(Debug, Parser)]
#[command(name = "graphvrnn", version, about = "Anomaly detection on graph time series with a variational recurrent model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Synthetic grid traffic with calendar and weather conditions.
    Generate(GenerateArgs),
    /// Fit the model, calibrate the threshold and write a checkpoint.
    Train(TrainArgs),
    /// Insert one labelled anomaly into a series.
    Inject(InjectArgs),
    /// Score a series, flag and localize anomalies.
    Detect(DetectArgs),
    /// Repeated injection trials with AP/AUC per anomaly type.
    Evaluate(EvaluateArgs),
    /// Render a detection report as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, default_value_t = 8)]
    pub cols: usize,
    #[arg(long, default_value_t = 40)]
    pub days: usize,
    #[arg(long, default_value_t = 48)]
    pub steps_per_day: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.05)]
    pub holiday_probability: f64,
    #[arg(long, default_value_t = 0)]
    pub start_weekday: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Series CSV (`t,channel,node,value`).
    #[arg(long)]
    pub series: PathBuf,
    /// Conditions CSV (`t,weekday,holiday,weather,temp,wind`).
    #[arg(long)]
    pub conditions: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub step_minutes: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Edge list written by `generate`.
    #[arg(long)]
    pub graph: PathBuf,
    /// Fraction of the series used for fitting; the rest is left untouched.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 3)]
    pub cheb_order: usize,
    #[arg(long, default_value_t = 8)]
    pub graph_features: usize,
    #[arg(long, default_value_t = 16)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub sigma_floor: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 96)]
    pub window: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    /// Seed for parameter initialization.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Seed for window order and latent noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_QUANTILE)]
    pub quantile: f64,
    #[arg(long, default_value_t = DEFAULT_OD_THRESHOLD)]
    pub od_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Seed for the calibration scoring pass.
    #[arg(long, default_value_t = 11)]
    pub calibration_seed: u64,
    /// Write wall-clock seconds into the training report.
    #[arg(long)]
    pub record_times: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InjectArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub step_minutes: u32,
    #[arg(long = "type", value_parser = parse_kind)]
    #[serde(serialize_with = "kind_name")]
    pub kind: AnomalyKind,
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, default_value_t = 8)]
    pub cols: usize,
    /// Channel k; drawn at random when the placement is not given.
    #[arg(long)]
    pub channel: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub t0: Option<usize>,
    /// Exclusive end step.
    #[arg(long)]
    pub t1: Option<usize>,
    /// Shift for gms/lms.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Stddev multiplier for gac/lac.
    #[arg(long)]
    pub magnitude: Option<f64>,
    #[arg(long)]
    pub half_width: Option<usize>,
    /// Earliest step for random placement.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Checkpoint whose scaler maps the series to model units before
    /// injecting.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// With a checkpoint, amplitude noise uses the model's predictive stddev.
    #[arg(long)]
    pub conditions: Option<PathBuf>,
    /// Constant stddev reference for amplitude changes.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// First scored step; earlier steps only advance the state.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Overrides the calibrated threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub od_threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 12)]
    pub seed: u64,
    /// Nodes drawn in the plot; defaults to the most often localized.
    #[arg(long, value_delimiter = ',')]
    pub nodes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// First step of the clean test span.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, default_value_t = 8)]
    pub cols: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long = "types", value_delimiter = ',', value_parser = parse_kind, default_value = "gms,lms,gac,lac")]
    #[serde(serialize_with = "kind_names")]
    pub kinds: Vec<AnomalyKind>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub seed: u64,
    /// Seed for the clean pass that supplies amplitude stddevs.
    #[arg(long, default_value_t = 12)]
    pub clean_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    /// Report written by `detect`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub step_minutes: u32,
    /// Series step matching report row 0.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long, value_delimiter = ',')]
    pub nodes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> Result<AnomalyKind, String> {
    s.parse().map_err(|e: graphvrnn::Error| e.to_string())
}

fn kind_name<S: serde::Serializer>(k: &AnomalyKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&k.to_string())
}

fn kind_names<S: serde::Serializer>(k: &[AnomalyKind], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(k.iter().map(|k| k.to_string()))
}
