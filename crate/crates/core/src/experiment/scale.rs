use crate::error::{Error, Result};
use crate::series::GraphSeries;

/// Per-channel global min–max bounds of a training span.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(series: &GraphSeries) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Input("cannot fit a scaler on an empty series".into()));
        }
        let c = series.channels();
        let mut min = vec![f64::INFINITY; c];
        let mut max = vec![f64::NEG_INFINITY; c];
        for (i, &v) in series.values().iter().enumerate() {
            let ch = i % c;
            min[ch] = min[ch].min(v);
            max[ch] = max[ch].max(v);
        }
        Self::new(min, max)
    }

    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::Input("scaler bounds differ in length".into()));
        }
        if let Some(ch) = (0..min.len()).find(|&ch| !(max[ch] > min[ch]) || !(max[ch] - min[ch]).is_finite()) {
            return Err(Error::Input(format!("channel {ch} is constant or unbounded")));
        }
        Ok(Self { min, max })
    }

    fn check(&self, series: &GraphSeries) -> Result<()> {
        if series.channels() != self.min.len() {
            return Err(Error::Input(format!(
                "scaler has {} channels, series {}",
                self.min.len(),
                series.channels()
            )));
        }
        Ok(())
    }

    fn map(&self, series: &GraphSeries, f: impl Fn(f64, f64, f64) -> f64) -> Result<GraphSeries> {
        self.check(series)?;
        let c = series.channels();
        let mut out = series.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            *v = f(*v, self.min[i % c], self.max[i % c]);
        }
        Ok(out)
    }

    pub fn apply(&self, series: &GraphSeries) -> Result<GraphSeries> {
        self.map(series, |v, lo, hi| (v - lo) / (hi - lo))
    }

    pub fn invert(&self, series: &GraphSeries) -> Result<GraphSeries> {
        self.map(series, |v, lo, hi| v * (hi - lo) + lo)
    }
}

/// Contiguous split at `floor(fraction · T)`.
pub fn split_train_test(series: &GraphSeries, fraction: f64) -> Result<(GraphSeries, GraphSeries)> {
    if series.len() < 10 {
        return Err(Error::Input(format!("series of {} steps is too short to split", series.len())));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Input(format!("split fraction {fraction} outside (0, 1)")));
    }
    let cut = split_point(series.len(), fraction);
    if cut == 0 || cut == series.len() {
        return Err(Error::Input("split leaves an empty part".into()));
    }
    Ok((series.slice(0..cut)?, series.slice(cut..series.len())?))
}

pub fn split_point(len: usize, fraction: f64) -> usize {
    (len as f64 * fraction).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_to_unit_interval() {
        let s = GraphSeries::new(3, 1, 30, vec![0.0, 5.0, 10.0]).unwrap();
        let sc = Scaler::fit(&s).unwrap();
        assert_eq!(sc.apply(&s).unwrap().values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn per_channel_round_trip() {
        let s = GraphSeries::new(2, 2, 30, vec![1.0, -3.0, 7.5, 2.0, 4.0, 0.1, 3.3, 9.9]).unwrap();
        let sc = Scaler::fit(&s).unwrap();
        let scaled = sc.apply(&s).unwrap();
        assert!(scaled.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let back = sc.invert(&scaled).unwrap();
        for (a, b) in back.values().iter().zip(s.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_rejected() {
        let s = GraphSeries::new(2, 2, 30, vec![1.0, 2.0, 1.0, 3.0]).unwrap();
        assert!(Scaler::fit(&s).is_err());
    }

    #[test]
    fn split_floors() {
        let s = GraphSeries::new(1, 1, 30, (0..99).map(f64::from).collect()).unwrap();
        let (a, b) = split_train_test(&s, 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (79, 20));
        assert_eq!(a.concat(&b).unwrap(), s);
        let s = GraphSeries::new(1, 1, 30, (0..100).map(f64::from).collect()).unwrap();
        let (a, b) = split_train_test(&s, 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        let short = GraphSeries::new(1, 1, 30, vec![0.0; 9]).unwrap();
        assert!(split_train_test(&short, 0.8).is_err());
    }
}
