use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::inject::{inject_anomaly, AnomalyKind, AnomalyLabel};
use super::metrics::{auc_roc, average_precision};
use crate::detection::{detect_series_from, DetectionReport, ThresholdCalibration};
use crate::error::{Error, Result};
use crate::model::{ExternalFeatures, Model, RnnState};
use crate::series::GraphSeries;

/// Fixed inputs shared by every trial.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkSetup<'a> {
    pub model: &'a Model,
    /// Clean test span in scaled units.
    pub clean: &'a GraphSeries,
    pub externals: &'a [ExternalFeatures],
    /// State the detector carries into the test span.
    pub initial: &'a RnnState,
    pub rows: usize,
    pub cols: usize,
    pub calibration: ThresholdCalibration,
    pub samples: usize,
    /// Predictive stddev per entry of `clean` for amplitude anomalies.
    pub sigma: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub label: AnomalyLabel,
    pub ap: f64,
    pub auc: f64,
    /// Localized entries at flagged steps whose node lies in the square.
    pub localized_inside: usize,
    pub localized_total: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSummary {
    pub kind: AnomalyKind,
    pub trials: Vec<TrialResult>,
    pub mean_ap: f64,
    pub sd_ap: f64,
    pub mean_auc: f64,
    pub sd_auc: f64,
}

impl BenchmarkSummary {
    /// Pooled fraction of localized entries inside the injected squares.
    pub fn localization_precision(&self) -> Option<f64> {
        let inside: usize = self.trials.iter().map(|t| t.localized_inside).sum();
        let total: usize = self.trials.iter().map(|t| t.localized_total).sum();
        (total > 0).then(|| inside as f64 / total as f64)
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Counts localized entries at flagged steps, split by whether the node is
/// inside the labelled square.
pub fn localization_counts(report: &DetectionReport, label: &AnomalyLabel, cols: usize) -> (usize, usize) {
    let mut inside = 0;
    let mut total = 0;
    for (t, hits) in report.localized.iter().enumerate() {
        if !report.flags[t] {
            continue;
        }
        total += hits.len();
        inside += hits.iter().filter(|h| label.contains_node(h.node, cols)).count();
    }
    (inside, total)
}

/// One trial: random placement, injection into a fresh copy, detection and
/// step-level AP/AUC of the negated scores.
pub fn run_trial(setup: &BenchmarkSetup<'_>, kind: AnomalyKind, trial: usize, seed: u64) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = setup.clean;
    let label = AnomalyLabel::random(kind, setup.rows, setup.cols, clean.channels(), clean.len(), &mut rng)?;
    let injected = inject_anomaly(clean, setup.rows, setup.cols, &label, setup.sigma, rng.next_u64())?;
    if !injected.step_mask.iter().any(|&m| m) {
        return Err(Error::Input(format!("trial {trial}: injection changed nothing")));
    }
    let report = detect_series_from(
        setup.model,
        setup.initial,
        &injected.series,
        setup.externals,
        &setup.calibration,
        setup.samples,
        rng.next_u64(),
    )?;
    let anomaly: Vec<f64> = report.scores.iter().map(|s| -s).collect();
    let (localized_inside, localized_total) = localization_counts(&report, &label, setup.cols);
    Ok(TrialResult {
        trial,
        seed,
        label,
        ap: average_precision(&anomaly, &injected.step_mask)?,
        auc: auc_roc(&anomaly, &injected.step_mask)?,
        localized_inside,
        localized_total,
        flagged: report.flag_count(),
    })
}

/// Runs `trials` independent trials with seeds `seed + trial`.
pub fn run_benchmark(setup: &BenchmarkSetup<'_>, kind: AnomalyKind, trials: usize, seed: u64) -> Result<BenchmarkSummary> {
    if trials == 0 {
        return Err(Error::Input("benchmark needs at least one trial".into()));
    }
    if setup.externals.len() != setup.clean.len() {
        return Err(Error::Input("test series and externals differ in length".into()));
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(setup, kind, i, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (mean_ap, sd_ap) = mean_sd(&results.iter().map(|r| r.ap).collect::<Vec<_>>());
    let (mean_auc, sd_auc) = mean_sd(&results.iter().map(|r| r.auc).collect::<Vec<_>>());
    Ok(BenchmarkSummary {
        kind,
        trials: results,
        mean_ap,
        sd_ap,
        mean_auc,
        sd_auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
