//! Synthetic grid traffic, scaling, anomaly injection and ranking metrics.

mod benchmark;
pub mod io;
mod inject;
mod metrics;
mod scale;
mod synthetic;

pub use benchmark::{
    localization_counts, mean_sd, run_benchmark, run_trial, BenchmarkSetup, BenchmarkSummary, TrialResult,
};
pub use inject::{inject_anomaly, AnomalyKind, AnomalyLabel, Injected, FALLBACK_SIGMA};
pub use metrics::{auc_roc, average_precision};
pub use scale::{split_point, split_train_test, Scaler};
pub use synthetic::{
    condition_factor, encode_all, generate_synthetic, SyntheticConfig, SyntheticData, DEFAULT_WEATHER_DAMPING, DEFAULT_WEATHER_WEIGHTS,
    PEAK_STEPS, STEPS_PER_DAY,
};
