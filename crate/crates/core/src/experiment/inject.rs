use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::series::GraphSeries;

/// Stddev proxy for amplitude anomalies when no model is available.
pub const FALLBACK_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    /// Global mean shift.
    Gms,
    /// Local mean shift.
    Lms,
    /// Global amplitude change.
    Gac,
    /// Local amplitude change.
    Lac,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] = [Self::Gms, Self::Lms, Self::Gac, Self::Lac];

    pub fn half_width(self) -> usize {
        match self {
            Self::Gms | Self::Gac => 3,
            Self::Lms => 1,
            Self::Lac => 0,
        }
    }

    /// Inclusive range of the number of affected steps.
    pub fn duration_range(self) -> (usize, usize) {
        match self {
            Self::Gms | Self::Gac => (30, 60),
            Self::Lms => (5, 10),
            Self::Lac => (10, 20),
        }
    }

    /// Shift `μ` for mean shifts, stddev multiplier `m` for amplitude changes.
    pub fn magnitude_range(self) -> (f64, f64) {
        match self {
            Self::Gms => (0.8, 1.3),
            Self::Lms => (0.4, 0.6),
            Self::Gac => (10.0, 10.0),
            Self::Lac => (6.0, 6.0),
        }
    }

    pub fn is_shift(self) -> bool {
        matches!(self, Self::Gms | Self::Lms)
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gms => "GMS",
            Self::Lms => "LMS",
            Self::Gac => "GAC",
            Self::Lac => "LAC",
        })
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GMS" => Ok(Self::Gms),
            "LMS" => Ok(Self::Lms),
            "GAC" => Ok(Self::Gac),
            "LAC" => Ok(Self::Lac),
            _ => Err(Error::Input(format!("unknown anomaly type {s:?}"))),
        }
    }
}

/// One injected anomaly: a square of cells `[p ± h] × [q ± h]` in channel
/// `channel` over steps `t0..t1` (half-open).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyLabel {
    pub kind: AnomalyKind,
    pub channel: usize,
    pub p: usize,
    pub q: usize,
    pub half_width: usize,
    pub t0: usize,
    pub t1: usize,
    pub magnitude: f64,
}

impl AnomalyLabel {
    /// Random placement with the per-kind extent, duration and magnitude.
    pub fn random(
        kind: AnomalyKind,
        rows: usize,
        cols: usize,
        channels: usize,
        len: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let h = kind.half_width();
        let (d_lo, d_hi) = kind.duration_range();
        if rows < 2 * h + 1 || cols < 2 * h + 1 {
            return Err(Error::Input(format!("{rows}×{cols} grid cannot hold a {kind} square")));
        }
        if len < d_lo || channels == 0 {
            return Err(Error::Input(format!("{len} steps cannot hold a {kind} anomaly")));
        }
        let duration = rng.random_range(d_lo..=d_hi.min(len));
        let t0 = rng.random_range(0..=len - duration);
        let (m_lo, m_hi) = kind.magnitude_range();
        let magnitude = if m_lo == m_hi { m_lo } else { rng.random_range(m_lo..=m_hi) };
        Ok(Self {
            kind,
            channel: rng.random_range(0..channels),
            p: rng.random_range(h..rows - h),
            q: rng.random_range(h..cols - h),
            half_width: h,
            t0,
            t1: t0 + duration,
            magnitude,
        })
    }

    /// Node indices (row-major) covered by the square.
    pub fn nodes(&self, cols: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for i in self.p - self.half_width..=self.p + self.half_width {
            for j in self.q - self.half_width..=self.q + self.half_width {
                out.push(i * cols + j);
            }
        }
        out
    }

    pub fn contains_node(&self, node: usize, cols: usize) -> bool {
        let (i, j) = (node / cols, node % cols);
        i.abs_diff(self.p) <= self.half_width && j.abs_diff(self.q) <= self.half_width
    }

    fn validate(&self, series: &GraphSeries, rows: usize, cols: usize) -> Result<()> {
        if rows * cols != series.nodes() {
            return Err(Error::Input(format!("{rows}×{cols} grid does not match {} nodes", series.nodes())));
        }
        if self.channel >= series.channels() {
            return Err(Error::Input(format!("channel {} out of range", self.channel)));
        }
        let h = self.half_width;
        if self.p < h || self.q < h || self.p + h >= rows || self.q + h >= cols {
            return Err(Error::Input(format!(
                "square at ({}, {}) ± {h} leaves the {rows}×{cols} grid",
                self.p, self.q
            )));
        }
        if self.t0 >= self.t1 {
            return Err(Error::Input(format!("empty time range {}..{}", self.t0, self.t1)));
        }
        if self.t1 > series.len() {
            return Err(Error::Input(format!("time range ends at {} beyond {} steps", self.t1, series.len())));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::Input("magnitude must be finite".into()));
        }
        Ok(())
    }
}

/// Modified series and masks of exactly the changed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Injected {
    pub series: GraphSeries,
    pub step_mask: Vec<bool>,
    /// Same layout as [`GraphSeries::values`].
    pub cell_mask: Vec<bool>,
}

/// Applies the anomaly. Mean shifts add `μ`; amplitude changes multiply by
/// `1 + g` with `g ~ N(0, (m σ)²)` drawn per cell and step, where `σ` comes
/// from `sigma` (laid out like the series values) or [`FALLBACK_SIGMA`].
/// Values are not clamped.
pub fn inject_anomaly(
    series: &GraphSeries,
    rows: usize,
    cols: usize,
    label: &AnomalyLabel,
    sigma: Option<&[f64]>,
    seed: u64,
) -> Result<Injected> {
    label.validate(series, rows, cols)?;
    if let Some(s) = sigma {
        if s.len() != series.values().len() {
            return Err(Error::Input(format!(
                "{} stddev values for a series of {} entries",
                s.len(),
                series.values().len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = series.clone();
    let mut cell_mask = vec![false; series.values().len()];
    let nodes = label.nodes(cols);
    for t in label.t0..label.t1 {
        for &node in &nodes {
            let i = series.index(t, label.channel, node);
            let old = series.values()[i];
            let new = if label.kind.is_shift() {
                old + label.magnitude
            } else {
                let sd = sigma.map_or(FALLBACK_SIGMA, |s| s[i]);
                let g: f64 = StandardNormal.sample(&mut rng);
                old * (1.0 + label.magnitude * sd * g)
            };
            if new.to_bits() != old.to_bits() {
                out.values_mut()[i] = new;
                cell_mask[i] = true;
            }
        }
    }
    let w = series.snapshot_len();
    let step_mask = cell_mask.chunks(w).map(|c| c.iter().any(|&m| m)).collect();
    Ok(Injected {
        series: out,
        step_mask,
        cell_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> GraphSeries {
        GraphSeries::new(64, 2, 30, (0..100 * 128).map(|i| 0.3 + 0.001 * (i % 97) as f64).collect()).unwrap()
    }

    fn gms() -> AnomalyLabel {
        AnomalyLabel {
            kind: AnomalyKind::Gms,
            channel: 0,
            p: 4,
            q: 3,
            half_width: 3,
            t0: 30,
            t1: 60,
            magnitude: 0.9,
        }
    }

    #[test]
    fn gms_raises_a_seven_by_seven_square() {
        let s = base();
        let inj = inject_anomaly(&s, 8, 8, &gms(), None, 0).unwrap();
        assert_eq!(inj.cell_mask.iter().filter(|&&m| m).count(), 49 * 30);
        assert_eq!(inj.step_mask.iter().filter(|&&m| m).count(), 30);
        assert!(inj.step_mask[30] && inj.step_mask[59] && !inj.step_mask[60] && !inj.step_mask[29]);
        for (i, (&a, &b)) in s.values().iter().zip(inj.series.values()).enumerate() {
            if inj.cell_mask[i] {
                assert!((b - a - 0.9).abs() < 1e-12);
            } else {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert!(inj.series.get(40, 0, 7 * 8 + 6) > 1.0);
    }

    #[test]
    fn zero_magnitude_changes_nothing() {
        let s = base();
        let label = AnomalyLabel { magnitude: 0.0, ..gms() };
        let inj = inject_anomaly(&s, 8, 8, &label, None, 0).unwrap();
        assert_eq!(inj.series, s);
        assert!(!inj.cell_mask.iter().any(|&m| m));
    }

    #[test]
    fn lac_touches_one_cell() {
        let s = base();
        let label = AnomalyLabel {
            kind: AnomalyKind::Lac,
            channel: 1,
            p: 2,
            q: 5,
            half_width: 0,
            t0: 10,
            t1: 20,
            magnitude: 6.0,
        };
        let sigma = vec![0.1; s.values().len()];
        let inj = inject_anomaly(&s, 8, 8, &label, Some(&sigma), 3).unwrap();
        let hits: Vec<usize> = (0..inj.cell_mask.len()).filter(|&i| inj.cell_mask[i]).collect();
        assert_eq!(hits.len(), 10);
        assert!(hits.iter().all(|&i| i % 128 == (2 * 8 + 5) * 2 + 1));
        assert_eq!(inj, inject_anomaly(&s, 8, 8, &label, Some(&sigma), 3).unwrap());
    }

    #[test]
    fn amplitude_multiplier_has_unit_mean() {
        let s = GraphSeries::new(64, 1, 30, vec![1.0; 64 * 400]).unwrap();
        let label = AnomalyLabel {
            kind: AnomalyKind::Gac,
            channel: 0,
            t0: 0,
            t1: 400,
            magnitude: 10.0,
            ..gms()
        };
        let inj = inject_anomaly(&s, 8, 8, &label, None, 1).unwrap();
        let changed: Vec<f64> = (0..inj.cell_mask.len())
            .filter(|&i| inj.cell_mask[i])
            .map(|i| inj.series.values()[i])
            .collect();
        let n = changed.len() as f64;
        let mean = changed.iter().sum::<f64>() / n;
        let var = changed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        // multiplier 1 + g, g ~ N(0, 0.5²)
        assert!((mean - 1.0).abs() < 4.0 * 0.5 / n.sqrt());
        assert!((var.sqrt() - 0.5).abs() < 0.02);
    }

    #[test]
    fn extents_are_checked() {
        let s = base();
        for bad in [
            AnomalyLabel { p: 5, ..gms() },
            AnomalyLabel { q: 2, ..gms() },
            AnomalyLabel { t0: 40, t1: 40, ..gms() },
            AnomalyLabel { t1: 101, ..gms() },
            AnomalyLabel { channel: 2, ..gms() },
        ] {
            assert!(inject_anomaly(&s, 8, 8, &bad, None, 0).is_err(), "{bad:?}");
        }
        assert!(inject_anomaly(&s, 8, 8, &gms(), Some(&[0.1; 3]), 0).is_err());
    }

    #[test]
    fn random_labels_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let long = GraphSeries::new(64, 2, 30, vec![0.5; 384 * 128]).unwrap();
        for kind in AnomalyKind::ALL {
            for _ in 0..200 {
                let l = AnomalyLabel::random(kind, 8, 8, 2, 384, &mut rng).unwrap();
                assert!(l.validate(&long, 8, 8).is_ok());
                let (lo, hi) = kind.duration_range();
                assert!((lo..=hi).contains(&(l.t1 - l.t0)));
                assert_eq!(l.nodes(8).len(), (2 * l.half_width + 1).pow(2));
                assert!(l.nodes(8).iter().all(|&n| l.contains_node(n, 8)));
            }
        }
        assert!(AnomalyLabel::random(AnomalyKind::Gms, 6, 8, 2, 384, &mut rng).is_err());
    }

    #[test]
    fn kind_names() {
        for k in AnomalyKind::ALL {
            assert_eq!(k.to_string().parse::<AnomalyKind>().unwrap(), k);
        }
        assert_eq!("gms".parse::<AnomalyKind>().unwrap(), AnomalyKind::Gms);
        assert!("xyz".parse::<AnomalyKind>().is_err());
    }
}
