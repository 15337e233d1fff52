use crate::diffmath::GaussianParams;
use crate::error::{Error, Result};

/// Below this ratio `x/μ` the proportional alternative variance is replaced.
pub const EPS_RATIO: f64 = 1e-3;
/// Absolute floor on the fallback alternative variance.
pub const EPS_VAR: f64 = 1e-6;

/// Variance of the alternative model `N(x, σ'²)`: `σ'² = σ²·x/μ`, or
/// `max(σ²·EPS_RATIO, EPS_VAR)` when the ratio is tiny or `μ ≤ 0`.
pub fn alternative_variance(x: f64, mean: f64, variance: f64) -> f64 {
    if mean > 0.0 && x > EPS_RATIO * mean {
        variance / mean * x
    } else {
        (variance * EPS_RATIO).max(EPS_VAR)
    }
}

/// `Λ = −2 [log N(x; μ, σ²) − log N(x; x, σ'²)]`, floored at zero.
///
/// ```
/// let l = graphvrnn::detection::lrt_statistic(30.0, 100.0, 200.0).unwrap();
/// assert!((l - 25.70).abs() < 0.01);
/// ```
pub fn lrt_statistic(x: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!("LRT needs a positive variance, got {variance}")));
    }
    if !x.is_finite() || !mean.is_finite() {
        return Err(Error::Domain("LRT inputs must be finite".into()));
    }
    let alt = alternative_variance(x, mean, variance);
    let d = x - mean;
    // log N(x; x, σ'²) − log N(x; μ, σ²) = ½ ln(σ²/σ'²) + d²/(2σ²)
    let lambda = (variance / alt).ln() + d * d / variance;
    Ok(lambda.max(0.0))
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::Domain(format!("P(a, x) needs a > 0 and x ≥ 0, got ({a}, {x})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // Σ x^n / (a (a+1) … (a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..1000 {
            term *= x / (a + n as f64);
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        Ok((sum * log_prefix.exp()).min(1.0))
    } else {
        // Modified Lentz on the continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok((1.0 - log_prefix.exp() * h).max(0.0))
    }
}

/// Chi-square CDF with `df` degrees of freedom.
pub fn chi_square_cdf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("chi-square needs df ≥ 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("chi-square CDF of negative value {x}")));
    }
    regularized_gamma_p(df as f64 / 2.0, x / 2.0)
}

/// One entry judged anomalous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localized {
    pub node: usize,
    pub channel: usize,
    /// Anomalous degree `χ²₁ CDF(Λ)`.
    pub od: f64,
}

/// Anomalous degree of every entry of a node-major snapshot.
pub fn anomalous_degrees(predictive: &GaussianParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != predictive.dim() {
        return Err(Error::Input(format!(
            "snapshot has {} entries but the predictive covers {}",
            x.len(),
            predictive.dim()
        )));
    }
    x.iter()
        .zip(predictive.mean.data())
        .zip(predictive.stddev.data())
        .map(|((&xi, &m), &s)| chi_square_cdf(lrt_statistic(xi, m, s * s)?, 1))
        .collect()
}

/// Entries with `od > threshold`, most anomalous first (ties by index).
pub fn localize(
    predictive: &GaussianParams,
    x: &[f64],
    channels: usize,
    od_threshold: f64,
) -> Result<Vec<Localized>> {
    if channels == 0 || x.len() % channels != 0 {
        return Err(Error::Input(format!("{} entries do not split into {channels} channels", x.len())));
    }
    let mut out: Vec<Localized> = anomalous_degrees(predictive, x)?
        .into_iter()
        .enumerate()
        .filter(|&(_, od)| od > od_threshold)
        .map(|(i, od)| Localized {
            node: i / channels,
            channel: i % channels,
            od,
        })
        .collect();
    out.sort_by(|a, b| b.od.total_cmp(&a.od));
    Ok(out)
}
