//! Small end-to-end runs on a 4×4 grid.

use graphvrnn::detection::{detect_series_from, warm_state, DetectionReport, ThresholdCalibration};
use graphvrnn::experiment::{
    generate_synthetic, inject_anomaly, split_point, AnomalyKind, AnomalyLabel, Scaler, SyntheticConfig,
};
use graphvrnn::model::{Model, ModelConfig, ModelParams};
use graphvrnn::training::{train_model, Checkpoint, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> SyntheticConfig {
    SyntheticConfig { rows: 4, cols: 4, days: 6, ..SyntheticConfig::default() }
}

fn small_model_config() -> ModelConfig {
    ModelConfig { hidden_dim: 16, latent_dim: 4, graph_features: 4, ..ModelConfig::new(16) }
}

#[test]
fn checkpoint_reload_scores_identically() {
    let data = generate_synthetic(&small_config()).unwrap();
    let externals = data.externals().unwrap();
    let cut = split_point(data.series.len(), 0.8);
    let scaler = Scaler::fit(&data.series.slice(0..cut).unwrap()).unwrap();
    let scaled = scaler.apply(&data.series).unwrap();
    let train = scaled.slice(0..cut).unwrap();
    let test = scaled.slice(cut..scaled.len()).unwrap();
    let (e_train, e_test) = externals.split_at(cut);

    let config = small_model_config();
    let tc = TrainConfig { epochs: 2, window: 24, batch_size: 2, ..TrainConfig::default() };
    let (params, report) =
        train_model(&train, e_train, &data.graph, config, &tc, ModelParams::init(&config, 5).unwrap()).unwrap();
    assert_eq!(report.epochs(), 2);
    assert!(report.val_elbo.iter().all(|v| v.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let ckpt = Checkpoint { config, graph: data.graph.clone(), params, extras: Default::default() };
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);

    let a = Model::new(ckpt.config, ckpt.graph, ckpt.params).unwrap();
    let b = Model::new(loaded.config, loaded.graph, loaded.params).unwrap();
    let cal = ThresholdCalibration::new(-1e300, 0.01, 0.95).unwrap();
    let run = |m: &Model| {
        let warm = warm_state(m, &train, e_train).unwrap();
        detect_series_from(m, &warm, &test, e_test, &cal, 4, 3).unwrap()
    };
    let (ra, rb) = (run(&a), run(&b));
    assert!(ra.scores.iter().zip(&rb.scores).all(|(x, y)| x.to_bits() == y.to_bits()));

    let mut csv = Vec::new();
    ra.write_csv(&mut csv).unwrap();
    let back = DetectionReport::read_csv(csv.as_slice()).unwrap();
    assert_eq!(back.scores, ra.scores);
    assert_eq!(back.flags, ra.flags);
}

#[test]
fn injection_touches_only_the_labelled_block() {
    let data = generate_synthetic(&SyntheticConfig { days: 4, ..SyntheticConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in AnomalyKind::ALL {
        for seed in 0..10 {
            let label = AnomalyLabel::random(kind, 8, 8, 2, data.series.len(), &mut rng).unwrap();
            let out = inject_anomaly(&data.series, 8, 8, &label, None, seed).unwrap();
            for t in 0..data.series.len() {
                for c in 0..2 {
                    for n in 0..64 {
                        let i = data.series.index(t, c, n);
                        let inside = (label.t0..label.t1).contains(&t) && c == label.channel && label.contains_node(n, 8);
                        if !inside {
                            assert_eq!(out.series.values()[i], data.series.values()[i]);
                            assert!(!out.cell_mask[i]);
                        } else if kind.is_shift() {
                            assert!(out.cell_mask[i]);
                        }
                        assert_eq!(out.cell_mask[i], out.series.values()[i] != data.series.values()[i]);
                    }
                }
                let any = (0..2).any(|c| (0..64).any(|n| out.cell_mask[data.series.index(t, c, n)]));
                assert_eq!(out.step_mask[t], any);
            }
        }
    }
}
