use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const WEEKDAYS: usize = 7;
pub const WEATHER_KINDS: usize = 16;
/// weekday one-hot, holiday flag, weather one-hot, temperature, windspeed
pub const EXTERNAL_DIM: usize = WEEKDAYS + 1 + WEATHER_KINDS + 2;

pub const TEMPERATURE_RANGE: (f64, f64) = (-24.1, 41.0);
pub const WINDSPEED_RANGE: (f64, f64) = (0.0, 48.6);

/// Raw exogenous conditions for one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    /// 0 = Monday … 6 = Sunday.
    pub weekday: u8,
    pub holiday: bool,
    /// Index into the 16 weather kinds.
    pub weather: u8,
    /// Degrees Celsius.
    pub temperature: f64,
    /// Miles per hour.
    pub windspeed: f64,
}

/// Encoded external feature vector `e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFeatures(Tensor);

impl ExternalFeatures {
    pub fn encode(c: &Conditions) -> Result<Self> {
        if c.weekday as usize >= WEEKDAYS {
            return Err(Error::Input(format!("weekday {} out of range", c.weekday)));
        }
        if c.weather as usize >= WEATHER_KINDS {
            return Err(Error::Input(format!("weather kind {} out of range", c.weather)));
        }
        if !c.temperature.is_finite() || !c.windspeed.is_finite() {
            return Err(Error::Input("non-finite temperature or windspeed".into()));
        }
        let mut v = vec![0.0; EXTERNAL_DIM];
        v[c.weekday as usize] = 1.0;
        v[WEEKDAYS] = if c.holiday { 1.0 } else { 0.0 };
        v[WEEKDAYS + 1 + c.weather as usize] = 1.0;
        v[EXTERNAL_DIM - 2] = to_unit_interval(c.temperature, TEMPERATURE_RANGE);
        v[EXTERNAL_DIM - 1] = to_unit_interval(c.windspeed, WINDSPEED_RANGE);
        Ok(Self(Tensor::vector(v)))
    }

    /// Wraps an already encoded vector of arbitrary length (used by models
    /// configured with a non-default external dimension).
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("external features must be finite and nonempty".into()));
        }
        Ok(Self(Tensor::vector(values)))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Maps `[lo, hi]` onto `[−1, 1]`, clamping outside values.
fn to_unit_interval(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}
