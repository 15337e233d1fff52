use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use graphvrnn::detection::{detect_series, detect_series_from, warm_state, DetectionReport, ThresholdCalibration};
use graphvrnn::diffmath::Tensor;
use graphvrnn::experiment::io::{read_conditions, read_series, write_conditions, write_labels, write_metrics, write_series, write_trials};
use graphvrnn::experiment::{
    encode_all, generate_synthetic, inject_anomaly, run_benchmark, split_point, AnomalyLabel, BenchmarkSetup, Scaler,
    SyntheticConfig,
};
use graphvrnn::graph::WeightedGraph;
use graphvrnn::model::{ExternalFeatures, Model, ModelConfig, ModelParams, RnnState, EXTERNAL_DIM};
use graphvrnn::training::{train_model, Checkpoint, TrainConfig};
use graphvrnn::GraphSeries;

use crate::args::{Command, DetectArgs, EvaluateArgs, GenerateArgs, InjectArgs, InputArgs, PlotArgs, TrainArgs};
use crate::manifest::Manifest;
use crate::plot::{default_nodes, PlotData};

const PLOT_NODES: usize = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flag values; exit code 2.
    Usage(String),
    /// Anything that went wrong while running; exit code 1.
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => f.write_str(m),
        }
    }
}

impl From<graphvrnn::Error> for CliError {
    fn from(e: graphvrnn::Error) -> Self {
        match e {
            graphvrnn::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Run(format!("{}: {e}", dir.display())))
}

/// Writes a file through `f` and records it in the manifest.
fn emit<C: Serialize>(
    m: &mut Manifest<'_, C>,
    path: PathBuf,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut w = create(&path)?;
    f(&mut w)?;
    w.flush()?;
    drop(w);
    m.output(&path)?;
    Ok(())
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a, command),
        Command::Train(a) => train(a, command),
        Command::Inject(a) => inject(a, command),
        Command::Detect(a) => detect(a, command),
        Command::Evaluate(a) => evaluate(a, command),
        Command::Plot(a) => plot(a, command),
    }
}

fn generate(a: &GenerateArgs, command: &Command) -> Result<()> {
    let cfg = SyntheticConfig {
        rows: a.rows,
        cols: a.cols,
        days: a.days,
        steps_per_day: a.steps_per_day,
        noise: a.noise,
        holiday_probability: a.holiday_probability,
        start_weekday: a.start_weekday,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg)?;
    let externals = data.externals()?;
    out_dir(&a.out)?;
    let mut m = Manifest::new("generate", command);
    emit(&mut m, a.out.join("series.csv"), |w| Ok(write_series(&data.series, w)?))?;
    emit(&mut m, a.out.join("conditions.csv"), |w| Ok(write_conditions(&data.conditions, w)?))?;
    emit(&mut m, a.out.join("externals.csv"), |w| write_externals(&externals, w))?;
    emit(&mut m, a.out.join("graph.txt"), |w| Ok(data.graph.write_edge_list(w)?))?;
    m.write(&a.out)?;
    eprintln!("generated {} steps on a {}×{} grid in {}", data.series.len(), a.rows, a.cols, a.out.display());
    Ok(())
}

/// Encoded condition vectors, `t,e0..e{d-1}`.
fn write_externals(externals: &[ExternalFeatures], w: &mut impl Write) -> Result<()> {
    let header: Vec<String> = (0..EXTERNAL_DIM).map(|i| format!("e{i}")).collect();
    writeln!(w, "t,{}", header.join(","))?;
    for (t, e) in externals.iter().enumerate() {
        let row: Vec<String> = e.tensor().data().iter().map(f64::to_string).collect();
        writeln!(w, "{t},{}", row.join(","))?;
    }
    Ok(())
}

struct Inputs {
    series: GraphSeries,
    externals: Vec<ExternalFeatures>,
}

fn read_inputs<C: Serialize>(input: &InputArgs, m: &mut Manifest<'_, C>) -> Result<Inputs> {
    let series = read_series(open(&input.series)?, input.step_minutes)?;
    let conditions = read_conditions(open(&input.conditions)?)?;
    if conditions.len() != series.len() {
        return Err(CliError::Run(format!(
            "{} has {} steps but {} has {}",
            input.series.display(),
            series.len(),
            input.conditions.display(),
            conditions.len()
        )));
    }
    m.input(&input.series)?;
    m.input(&input.conditions)?;
    Ok(Inputs { series, externals: encode_all(&conditions)? })
}

const SCALER_MIN: &str = "scaler.min";
const SCALER_MAX: &str = "scaler.max";
const CALIBRATION: &str = "calibration";
const TRAIN_LEN: &str = "train.len";

struct Loaded {
    model: Model,
    scaler: Scaler,
    calibration: ThresholdCalibration,
}

fn load_checkpoint<C: Serialize>(path: &Path, m: &mut Manifest<'_, C>) -> Result<Loaded> {
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    m.input(path)?;
    let extra = |key: &str| {
        ckpt.extras
            .get(key)
            .map(|t| t.data().to_vec())
            .ok_or_else(|| CliError::Run(format!("{}: checkpoint lacks {key}", path.display())))
    };
    let scaler = Scaler::new(extra(SCALER_MIN)?, extra(SCALER_MAX)?)?;
    let cal = extra(CALIBRATION)?;
    if cal.len() != 3 {
        return Err(CliError::Run(format!("{}: calibration record has {} values", path.display(), cal.len())));
    }
    let calibration = ThresholdCalibration::new(cal[0], cal[1], cal[2])?;
    let model = Model::new(ckpt.config, ckpt.graph, ckpt.params)?;
    Ok(Loaded { model, scaler, calibration })
}

fn train(a: &TrainArgs, command: &Command) -> Result<()> {
    if !(a.train_fraction > 0.0 && a.train_fraction <= 1.0) {
        return Err(usage(format!("--train-fraction {} must lie in (0, 1]", a.train_fraction)));
    }
    let mut m = Manifest::new("train", command);
    let inputs = read_inputs(&a.input, &mut m)?;
    let graph = WeightedGraph::read_edge_list(open(&a.graph)?, Some(inputs.series.nodes()))?;
    m.input(&a.graph)?;

    let cut = split_point(inputs.series.len(), a.train_fraction);
    let raw_train = inputs.series.slice(0..cut)?;
    let scaler = Scaler::fit(&raw_train)?;
    let train = scaler.apply(&raw_train)?;
    let e_train = &inputs.externals[..cut];

    let config = ModelConfig {
        nodes: inputs.series.nodes(),
        channels: inputs.series.channels(),
        cheb_order: a.cheb_order,
        graph_features: a.graph_features,
        latent_dim: a.latent_dim,
        hidden_dim: a.hidden_dim,
        external_dim: EXTERNAL_DIM,
        sigma_floor: a.sigma_floor,
    };
    config.validate()?;
    let tc = TrainConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        window: a.window,
        batch_size: a.batch_size,
        clip_norm: a.clip_norm,
        seed: a.seed,
        validation_fraction: a.validation_fraction,
    };
    tc.validate()?;
    let init = ModelParams::init(&config, a.init_seed)?;
    let (params, report) = train_model(&train, e_train, &graph, config, &tc, init)?;
    let model = Model::new(config, graph.clone(), params.clone())?;

    let open_cal = ThresholdCalibration::new(f64::INFINITY, a.quantile, a.od_threshold)?;
    let on_train = detect_series(&model, &train, e_train, &open_cal, a.samples, a.calibration_seed)?;
    let calibration = ThresholdCalibration::calibrate(&on_train.scores, a.quantile, a.od_threshold)?;

    let mut extras = std::collections::BTreeMap::new();
    extras.insert(SCALER_MIN.to_string(), Tensor::vector(scaler.min.clone()));
    extras.insert(SCALER_MAX.to_string(), Tensor::vector(scaler.max.clone()));
    extras.insert(
        CALIBRATION.to_string(),
        Tensor::vector(vec![calibration.threshold, calibration.quantile, calibration.od_threshold]),
    );
    extras.insert(TRAIN_LEN.to_string(), Tensor::vector(vec![cut as f64]));
    let ckpt = Checkpoint { config, graph, params, extras };

    out_dir(&a.out)?;
    emit(&mut m, a.out.join("model.ckpt"), |w| Ok(ckpt.write(w)?))?;
    emit(&mut m, a.out.join("train_report.csv"), |w| Ok(report.write_csv(w, a.record_times)?))?;
    emit(&mut m, a.out.join("calibration_scores.csv"), |w| {
        writeln!(w, "t,score")?;
        for (t, s) in on_train.scores.iter().enumerate() {
            writeln!(w, "{t},{s}")?;
        }
        Ok(())
    })?;
    m.write(&a.out)?;
    eprintln!(
        "trained {} epochs on {cut} steps; best epoch {}, threshold {:.4}",
        a.epochs, report.best_epoch, calibration.threshold
    );
    Ok(())
}

/// State after the first `start` steps, and the remainder of the series.
fn split_warm(
    model: &Model,
    scaled: &GraphSeries,
    externals: &[ExternalFeatures],
    start: usize,
) -> Result<(RnnState, GraphSeries)> {
    if start >= scaled.len() {
        return Err(usage(format!("--start {start} leaves nothing of a {}-step series", scaled.len())));
    }
    let warm = if start == 0 {
        model.initial_state()
    } else {
        warm_state(model, &scaled.slice(0..start)?, &externals[..start])?
    };
    Ok((warm, scaled.slice(start..scaled.len())?))
}

fn inject(a: &InjectArgs, command: &Command) -> Result<()> {
    let mut m = Manifest::new("inject", command);
    let series = read_series(open(&a.series)?, a.step_minutes)?;
    m.input(&a.series)?;
    if a.mu.is_some() && !a.kind.is_shift() {
        return Err(usage(format!("--mu applies to mean shifts, not {}", a.kind)));
    }
    if a.magnitude.is_some() && a.kind.is_shift() {
        return Err(usage(format!("--magnitude applies to amplitude changes, not {}", a.kind)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let placement = [a.p, a.q, a.t0, a.t1];
    let mut label = if placement.iter().all(Option::is_some) {
        let (lo, hi) = a.kind.magnitude_range();
        AnomalyLabel {
            kind: a.kind,
            channel: a.channel.unwrap_or(0),
            p: a.p.unwrap_or_default(),
            q: a.q.unwrap_or_default(),
            half_width: a.half_width.unwrap_or(a.kind.half_width()),
            t0: a.t0.unwrap_or_default(),
            t1: a.t1.unwrap_or_default(),
            magnitude: (lo + hi) / 2.0,
        }
    } else if placement.iter().all(Option::is_none) {
        if a.start >= series.len() {
            return Err(usage(format!("--start {} is past the end of the series", a.start)));
        }
        let mut l = AnomalyLabel::random(a.kind, a.rows, a.cols, series.channels(), series.len() - a.start, &mut rng)?;
        l.t0 += a.start;
        l.t1 += a.start;
        if let Some(k) = a.channel {
            l.channel = k;
        }
        if let Some(h) = a.half_width {
            l.half_width = h;
        }
        l
    } else {
        return Err(usage("give all of --p --q --t0 --t1 or none of them"));
    };
    if let Some(v) = a.mu.or(a.magnitude) {
        label.magnitude = v;
    }
    let noise_seed = rng.next_u64();

    let out_series = match &a.checkpoint {
        Some(path) => {
            let loaded = load_checkpoint(path, &mut m)?;
            let scaled = loaded.scaler.apply(&series)?;
            let sigma = match &a.conditions {
                Some(cpath) => {
                    let conditions = read_conditions(open(cpath)?)?;
                    m.input(cpath)?;
                    let externals = encode_all(&conditions)?;
                    let open_cal = ThresholdCalibration::new(f64::INFINITY, 0.0, loaded.calibration.od_threshold)?;
                    let clean = detect_series(&loaded.model, &scaled, &externals, &open_cal, 1, a.seed)?;
                    Some(clean.predictive.iter().flat_map(|p| p.stddev.data().to_vec()).collect::<Vec<_>>())
                }
                None => a.sigma.map(|s| vec![s; series.values().len()]),
            };
            let injected = inject_anomaly(&scaled, a.rows, a.cols, &label, sigma.as_deref(), noise_seed)?;
            let back = loaded.scaler.invert(&injected.series)?;
            let mut out = series.clone();
            for (i, _) in injected.cell_mask.iter().enumerate().filter(|(_, &c)| c) {
                out.values_mut()[i] = back.values()[i];
            }
            (out, injected.step_mask)
        }
        None => {
            let sigma = a.sigma.map(|s| vec![s; series.values().len()]);
            let injected = inject_anomaly(&series, a.rows, a.cols, &label, sigma.as_deref(), noise_seed)?;
            (injected.series, injected.step_mask)
        }
    };

    out_dir(&a.out)?;
    let (injected, step_mask) = out_series;
    emit(&mut m, a.out.join("series.csv"), |w| Ok(write_series(&injected, w)?))?;
    emit(&mut m, a.out.join("labels.csv"), |w| Ok(write_labels(std::slice::from_ref(&label), w)?))?;
    emit(&mut m, a.out.join("steps.csv"), |w| {
        writeln!(w, "t,anomalous")?;
        for (t, &s) in step_mask.iter().enumerate() {
            writeln!(w, "{t},{}", s as u8)?;
        }
        Ok(())
    })?;
    m.write(&a.out)?;
    eprintln!(
        "injected {} on channel {} around ({}, {}) over steps {}..{}",
        label.kind, label.channel, label.p, label.q, label.t0, label.t1
    );
    Ok(())
}

fn write_plot<C: Serialize>(
    m: &mut Manifest<'_, C>,
    dir: &Path,
    series: &GraphSeries,
    report: &DetectionReport,
    start: usize,
    nodes: &[usize],
    channel: usize,
) -> Result<()> {
    let nodes = if nodes.is_empty() { default_nodes(report, series.nodes(), PLOT_NODES) } else { nodes.to_vec() };
    let data = PlotData::new(series, report, start, &nodes, channel).map_err(CliError::Usage)?;
    emit(m, dir.join("plot.svg"), |w| Ok(w.write_all(data.svg().as_bytes())?))?;
    emit(m, dir.join("plot.csv"), |w| Ok(data.write_csv(w)?))?;
    Ok(())
}

fn detect(a: &DetectArgs, command: &Command) -> Result<()> {
    let mut m = Manifest::new("detect", command);
    let loaded = load_checkpoint(&a.checkpoint, &mut m)?;
    let inputs = read_inputs(&a.input, &mut m)?;
    let scaled = loaded.scaler.apply(&inputs.series)?;
    let (warm, span) = split_warm(&loaded.model, &scaled, &inputs.externals, a.start)?;
    let calibration = ThresholdCalibration::new(
        a.threshold.unwrap_or(loaded.calibration.threshold),
        loaded.calibration.quantile,
        a.od_threshold.unwrap_or(loaded.calibration.od_threshold),
    )?;
    let report =
        detect_series_from(&loaded.model, &warm, &span, &inputs.externals[a.start..], &calibration, a.samples, a.seed)?;

    out_dir(&a.out)?;
    emit(&mut m, a.out.join("report.csv"), |w| Ok(report.write_csv(w)?))?;
    write_plot(&mut m, &a.out, &inputs.series, &report, a.start, &a.nodes, a.channel)?;
    m.write(&a.out)?;
    eprintln!("scored {} steps, {} flagged", report.len(), report.flag_count());
    Ok(())
}

fn evaluate(a: &EvaluateArgs, command: &Command) -> Result<()> {
    if a.rows * a.cols == 0 {
        return Err(usage("grid must have at least one cell"));
    }
    let mut m = Manifest::new("evaluate", command);
    let loaded = load_checkpoint(&a.checkpoint, &mut m)?;
    let inputs = read_inputs(&a.input, &mut m)?;
    if a.rows * a.cols != inputs.series.nodes() {
        return Err(usage(format!("{}×{} grid does not match {} nodes", a.rows, a.cols, inputs.series.nodes())));
    }
    let scaled = loaded.scaler.apply(&inputs.series)?;
    let (warm, test) = split_warm(&loaded.model, &scaled, &inputs.externals, a.start)?;
    let e_test = &inputs.externals[a.start..];
    let clean = detect_series_from(&loaded.model, &warm, &test, e_test, &loaded.calibration, a.samples, a.clean_seed)?;
    let sigma: Vec<f64> = clean.predictive.iter().flat_map(|p| p.stddev.data().to_vec()).collect();
    let setup = BenchmarkSetup {
        model: &loaded.model,
        clean: &test,
        externals: e_test,
        initial: &warm,
        rows: a.rows,
        cols: a.cols,
        calibration: loaded.calibration,
        samples: a.samples,
        sigma: Some(&sigma),
    };
    let summaries = a
        .kinds
        .iter()
        .map(|&k| run_benchmark(&setup, k, a.trials, a.seed))
        .collect::<graphvrnn::Result<Vec<_>>>()?;

    out_dir(&a.out)?;
    emit(&mut m, a.out.join("metrics.csv"), |w| Ok(write_metrics(&summaries, w)?))?;
    emit(&mut m, a.out.join("trials.csv"), |w| Ok(write_trials(&summaries, w)?))?;
    m.write(&a.out)?;
    for s in &summaries {
        eprintln!("{}: AP {:.3} ± {:.3}, AUC {:.3} ± {:.3}", s.kind, s.mean_ap, s.sd_ap, s.mean_auc, s.sd_auc);
    }
    Ok(())
}

fn plot(a: &PlotArgs, command: &Command) -> Result<()> {
    let mut m = Manifest::new("plot", command);
    let report = DetectionReport::read_csv(open(&a.report)?)?;
    m.input(&a.report)?;
    let series = read_series(open(&a.series)?, a.step_minutes)?;
    m.input(&a.series)?;
    out_dir(&a.out)?;
    write_plot(&mut m, &a.out, &series, &report, a.start, &a.nodes, a.channel)?;
    m.write(&a.out)?;
    Ok(())
}
