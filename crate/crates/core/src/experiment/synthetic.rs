use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::model::{Conditions, ExternalFeatures, TEMPERATURE_RANGE, WEATHER_KINDS, WINDSPEED_RANGE};
use crate::series::GraphSeries;

pub const STEPS_PER_DAY: usize = 48;
/// Peak positions of the inflow profile within a day.
pub const PEAK_STEPS: [usize; 2] = [16, 36];

/// Multiplicative damping per weather kind; kind 0 is clear sky.
pub const DEFAULT_WEATHER_DAMPING: [f64; WEATHER_KINDS] = [
    1.0, 0.98, 0.96, 0.93, 0.9, 0.86, 0.82, 0.78, 0.74, 0.95, 0.88, 0.84, 0.8, 0.92, 0.7, 0.65,
];

/// Relative frequency of each weather kind; the common kinds dominate so a
/// few weeks of data cover every kind that occurs.
pub const DEFAULT_WEATHER_WEIGHTS: [f64; WEATHER_KINDS] = [
    0.5, 0.25, 0.15, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];

/// Grid-traffic surrogate with two flow channels (inflow, outflow).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub rows: usize,
    pub cols: usize,
    pub days: usize,
    pub steps_per_day: usize,
    pub noise: f64,
    pub seed: u64,
    pub weekend_damping: f64,
    pub holiday_damping: f64,
    pub holiday_probability: f64,
    pub weather_damping: [f64; WEATHER_KINDS],
    pub weather_weights: [f64; WEATHER_KINDS],
    /// Relative flow change per unit of the `[−1, 1]`-mapped temperature.
    pub temperature_coef: f64,
    pub windspeed_coef: f64,
    /// Weekday of day 0, 0 = Monday.
    pub start_weekday: u8,
    /// Offset in steps of the outflow peaks relative to the inflow peaks.
    pub outflow_shift: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            days: 40,
            steps_per_day: STEPS_PER_DAY,
            noise: 0.02,
            seed: 0,
            weekend_damping: 0.75,
            holiday_damping: 0.6,
            holiday_probability: 0.05,
            weather_damping: DEFAULT_WEATHER_DAMPING,
            weather_weights: DEFAULT_WEATHER_WEIGHTS,
            temperature_coef: 0.04,
            windspeed_coef: -0.06,
            start_weekday: 0,
            outflow_shift: 2,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows * self.cols < 2 {
            return Err(Error::Config(format!("grid {}×{} has fewer than two cells", self.rows, self.cols)));
        }
        if self.days == 0 || self.steps_per_day < 2 {
            return Err(Error::Config("need at least one day of two steps".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise {} must be ≥ 0", self.noise)));
        }
        let dampings = [self.weekend_damping, self.holiday_damping]
            .into_iter()
            .chain(self.weather_damping);
        for d in dampings {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Config(format!("damping factor {d} outside (0, 1]")));
            }
        }
        if self.weather_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || !(self.weather_weights.iter().sum::<f64>() > 0.0)
        {
            return Err(Error::Config("weather weights must be nonnegative with a positive sum".into()));
        }
        if !(0.0..=1.0).contains(&self.holiday_probability) {
            return Err(Error::Config("holiday probability outside [0, 1]".into()));
        }
        if self.temperature_coef.abs() + self.windspeed_coef.abs() >= 1.0 {
            return Err(Error::Config("temperature and wind coefficients could make flow negative".into()));
        }
        if self.start_weekday >= 7 {
            return Err(Error::Config("start weekday outside 0..7".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn steps(&self) -> usize {
        self.days * self.steps_per_day
    }
}

/// Generated series with its per-step conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub graph: WeightedGraph,
    pub series: GraphSeries,
    pub conditions: Vec<Conditions>,
}

impl SyntheticData {
    pub fn externals(&self) -> Result<Vec<ExternalFeatures>> {
        encode_all(&self.conditions)
    }
}

pub fn encode_all(conditions: &[Conditions]) -> Result<Vec<ExternalFeatures>> {
    conditions.iter().map(ExternalFeatures::encode).collect()
}

fn bump(step: f64, center: f64, period: f64) -> f64 {
    // circular distance so evening traffic wraps smoothly into the night
    let d = (step - center).rem_euclid(period);
    let d = d.min(period - d);
    let width = period / 16.0;
    (-d * d / (2.0 * width * width)).exp()
}

fn unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    2.0 * (v - lo) / (hi - lo) - 1.0
}

/// Smooth positive spatial field and morning share per cell.
fn spatial(rows: usize, cols: usize, i: usize, j: usize) -> (f64, f64) {
    let u = (i as f64 + 0.5) / rows as f64;
    let v = (j as f64 + 0.5) / cols as f64;
    let level = 0.55 + 0.25 * (PI * u).sin() * (PI * v).sin() + 0.12 * (2.0 * PI * (u + 0.5 * v)).cos();
    let morning = 0.5 + 0.3 * (PI * (u - v)).sin();
    (level, morning)
}

/// Expected flow of one cell before noise.
fn mean_flow(cfg: &SyntheticConfig, node: usize, channel: usize, step_of_day: usize, factor: f64) -> f64 {
    let (level, morning) = spatial(cfg.rows, cfg.cols, node / cfg.cols, node % cfg.cols);
    let period = cfg.steps_per_day as f64;
    let scale = period / STEPS_PER_DAY as f64;
    let shift = if channel == 0 { 0.0 } else { cfg.outflow_shift as f64 * scale };
    let (am, pm) = if channel == 0 { (morning, 1.0 - morning) } else { (1.0 - morning, morning) };
    let s = step_of_day as f64;
    let profile = 0.15
        + am * bump(s, PEAK_STEPS[0] as f64 * scale + shift, period)
        + pm * bump(s, PEAK_STEPS[1] as f64 * scale + shift, period);
    level * profile * factor
}

fn draw_day(cfg: &SyntheticConfig, weather: &WeightedIndex<f64>, day: usize, rng: &mut ChaCha8Rng) -> Conditions {
    let weekday = ((cfg.start_weekday as usize + day) % 7) as u8;
    let holiday = rng.random::<f64>() < cfg.holiday_probability;
    let weather = weather.sample(rng) as u8;
    let temperature = rng.random_range(-5.0..30.0);
    let windspeed = (rng.random::<f64>().powi(2) * 30.0).min(WINDSPEED_RANGE.1);
    Conditions {
        weekday,
        holiday,
        weather,
        temperature,
        windspeed,
    }
}

/// Joint multiplicative factor of the day's conditions.
pub fn condition_factor(cfg: &SyntheticConfig, c: &Conditions) -> f64 {
    let mut f = cfg.weather_damping[c.weather as usize];
    if c.weekday >= 5 {
        f *= cfg.weekend_damping;
    }
    if c.holiday {
        f *= cfg.holiday_damping;
    }
    f * (1.0
        + cfg.temperature_coef * unit(c.temperature, TEMPERATURE_RANGE)
        + cfg.windspeed_coef * unit(c.windspeed, WINDSPEED_RANGE))
}

/// Inflow/outflow on a 4-neighbour grid, half-hour steps.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let graph = WeightedGraph::grid(cfg.rows, cfg.cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weather = WeightedIndex::new(cfg.weather_weights).map_err(|e| Error::Config(e.to_string()))?;
    let days: Vec<Conditions> = (0..cfg.days).map(|d| draw_day(cfg, &weather, d, &mut rng)).collect();
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let n = cfg.nodes();
    let mut values = Vec::with_capacity(cfg.steps() * n * 2);
    let mut conditions = Vec::with_capacity(cfg.steps());
    for t in 0..cfg.steps() {
        let c = days[t / cfg.steps_per_day];
        let factor = condition_factor(cfg, &c);
        for node in 0..n {
            for channel in 0..2 {
                let m = mean_flow(cfg, node, channel, t % cfg.steps_per_day, factor);
                values.push(m + noise.sample(&mut rng));
            }
        }
        conditions.push(c);
    }
    let series = GraphSeries::new(n, 2, (24 * 60 / cfg.steps_per_day) as u32, values)?;
    Ok(SyntheticData {
        graph,
        series,
        conditions,
    })
}
