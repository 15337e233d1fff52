//! End-to-end run on the synthetic 8×8 grid: train, calibrate, benchmark.

use std::time::Instant;

use graphvrnn::detection::{detect_series, detect_series_from, warm_state, ThresholdCalibration, DEFAULT_OD_THRESHOLD, DEFAULT_QUANTILE};
use graphvrnn::experiment::{
    generate_synthetic, run_benchmark, split_point, AnomalyKind, BenchmarkSetup, Scaler, SyntheticConfig,
};
use graphvrnn::model::{Model, ModelConfig, ModelParams};
use graphvrnn::training::{train_model, TrainConfig};

fn arg(name: &str, default: f64) -> f64 {
    std::env::args()
        .skip_while(|a| a != name)
        .nth(1)
        .map_or(default, |v| v.parse().expect("numeric flag"))
}

fn main() -> graphvrnn::Result<()> {
    let data = generate_synthetic(&SyntheticConfig::default())?;
    let externals = data.externals()?;
    let cut = split_point(data.series.len(), 0.8);
    let scaler = Scaler::fit(&data.series.slice(0..cut)?)?;
    let scaled = scaler.apply(&data.series)?;
    let (train, test) = (scaled.slice(0..cut)?, scaled.slice(cut..scaled.len())?);
    let (e_train, e_test) = externals.split_at(cut);

    let config = ModelConfig::new(64);
    let tc = TrainConfig {
        epochs: arg("--epochs", 30.0) as usize,
        learning_rate: arg("--lr", 2e-3),
        batch_size: arg("--batch", 1.0) as usize,
        window: arg("--window", 96.0) as usize,
        seed: 1,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let (params, report) = train_model(&train, e_train, &data.graph, config, &tc, ModelParams::init(&config, 1)?)?;
    println!("training {:.1}s best epoch {}", started.elapsed().as_secs_f64(), report.best_epoch);
    for (i, (t, v)) in report.train_elbo.iter().zip(&report.val_elbo).enumerate() {
        println!("epoch {:>2} train {t:.3} val {v:.3}", i + 1);
    }
    let model = Model::new(config, data.graph.clone(), params)?;
    let samples = arg("--samples", 16.0) as usize;

    let open = ThresholdCalibration::new(f64::INFINITY, DEFAULT_QUANTILE, DEFAULT_OD_THRESHOLD)?;
    let started = Instant::now();
    let on_train = detect_series(&model, &train, e_train, &open, samples, 11)?;
    let warm = warm_state(&model, &train, e_train)?;
    let clean = detect_series_from(&model, &warm, &test, e_test, &open, samples, 12)?;
    println!("clean scoring {:.1}s", started.elapsed().as_secs_f64());
    let mut se = 0.0;
    for (t, p) in clean.predictive.iter().enumerate() {
        for (m, x) in p.mean.data().iter().zip(test.snapshot(t)) {
            se += (m - x).powi(2);
        }
    }
    println!("test rmse {:.4}", (se / test.values().len() as f64).sqrt());

    let cal = ThresholdCalibration::calibrate(&on_train.scores, DEFAULT_QUANTILE, DEFAULT_OD_THRESHOLD)?;
    let rate = clean.scores.iter().filter(|&&s| cal.flags(s)).count() as f64 / clean.len() as f64;
    println!("threshold {:.3} clean test flag rate {rate:.4}", cal.threshold);
    let mean_score = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    println!("mean score train {:.3} test {:.3}", mean_score(&on_train.scores), mean_score(&clean.scores));

    let sigma: Vec<f64> = clean.predictive.iter().flat_map(|p| p.stddev.data().to_vec()).collect();
    let setup = BenchmarkSetup {
        model: &model,
        clean: &test,
        externals: e_test,
        initial: &warm,
        rows: 8,
        cols: 8,
        calibration: cal,
        samples,
        sigma: Some(&sigma),
    };
    let trials = arg("--trials", 20.0) as usize;
    for kind in AnomalyKind::ALL {
        let started = Instant::now();
        let s = run_benchmark(&setup, kind, trials, 100)?;
        println!(
            "{kind}: AP {:.3} ± {:.3} AUC {:.3} ± {:.3} loc {:?} ({:.1}s)",
            s.mean_ap,
            s.sd_ap,
            s.mean_auc,
            s.sd_auc,
            s.localization_precision(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
