//! Scenario configuration and seeded portfolio generation.
//!
//! A configuration is a flat `key = value` text file; `#` starts a comment
//! and list values are comma separated. Every key is optional and falls back
//! to [`ScenarioConfig::default`]. [`ScenarioConfig::to_kv`] writes every key,
//! so a written file pins a scenario completely.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ForecastConfig, LearningRule, ProducerPortfolio, RetailerPortfolio, TankLoad, Unit};
use crate::error::{Error, Result};
use crate::params::MarketParams;
use crate::types::ActorId;

/// Two-peak daily consumption shape (morning and evening), relative units.
pub const DEFAULT_DEMAND_SHAPE: [f64; 24] = [
    0.78, 0.74, 0.71, 0.70, 0.71, 0.76, 0.88, 1.02, 1.10, 1.10, 1.07, 1.05, 1.03, 1.01, 0.99, 0.99, 1.02, 1.10, 1.22, 1.26,
    1.20, 1.08, 0.95, 0.84,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketSetting {
    /// Only producers bid in the reserve market.
    Closed,
    /// Retailers also sell modulation bids.
    Open,
}

impl fmt::Display for MarketSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarketSetting::Closed => "closed",
            MarketSetting::Open => "open",
        })
    }
}

impl FromStr for MarketSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "closed" => Ok(MarketSetting::Closed),
            "open" => Ok(MarketSetting::Open),
            other => Err(Error::Parse(format!("unknown market setting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub setting: MarketSetting,
    /// Mean total consumption, MW.
    pub mean_consumption: f64,
    /// Share of consumption carried by tank loads.
    pub flexibility_rate: f64,
    pub producers: usize,
    pub retailers: usize,
    pub loads_per_retailer: usize,
    pub slow_units_per_producer: usize,
    pub fast_units_per_producer: usize,
    pub slow_cost: (f64, f64),
    pub fast_cost: (f64, f64),
    /// Installed slow capacity relative to mean consumption.
    pub slow_capacity_ratio: f64,
    pub fast_capacity_ratio: f64,
    /// Slow-unit ramp limit as a share of its capacity per period.
    pub slow_ramp_share: f64,
    pub demand_shape: Vec<f64>,
    pub market: MarketParams,
    pub modulation_length: usize,
    pub forecast: ForecastConfig,
    pub learning: LearningRule,
    pub max_rounds: usize,
    pub convergence_tol: f64,
    pub state_tol: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let market = MarketParams::default();
        Self {
            seed: 1,
            setting: MarketSetting::Closed,
            mean_consumption: 1000.0,
            flexibility_rate: 0.06,
            producers: 3,
            retailers: 2,
            loads_per_retailer: 2,
            slow_units_per_producer: 2,
            fast_units_per_producer: 1,
            slow_cost: (45.0, 60.0),
            fast_cost: (60.0, 80.0),
            slow_capacity_ratio: 2.0,
            fast_capacity_ratio: 0.3,
            slow_ramp_share: 1.0,
            demand_shape: DEFAULT_DEMAND_SHAPE.to_vec(),
            forecast: ForecastConfig {
                price_cap: market.price_cap,
                non_contracted_price: market.non_contracted_price,
                ..ForecastConfig::default()
            },
            market,
            modulation_length: 4,
            learning: LearningRule::default(),
            max_rounds: 500,
            convergence_tol: 0.01,
            state_tol: 1e-6,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = v.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok((parse(key, a)?, parse(key, b)?)),
        _ => Err(Error::Parse(format!("`{key}` expects two comma-separated numbers"))),
    }
}

impl ScenarioConfig {
    /// Applies `key = value` lines on top of the defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.market;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "setting" => self.setting = v.parse()?,
            "mean_consumption" => self.mean_consumption = parse(key, v)?,
            "flexibility_rate" => self.flexibility_rate = parse(key, v)?,
            "producers" => self.producers = parse(key, v)?,
            "retailers" => self.retailers = parse(key, v)?,
            "loads_per_retailer" => self.loads_per_retailer = parse(key, v)?,
            "slow_units_per_producer" => self.slow_units_per_producer = parse(key, v)?,
            "fast_units_per_producer" => self.fast_units_per_producer = parse(key, v)?,
            "slow_cost" => self.slow_cost = parse_pair(key, v)?,
            "fast_cost" => self.fast_cost = parse_pair(key, v)?,
            "slow_capacity_ratio" => self.slow_capacity_ratio = parse(key, v)?,
            "fast_capacity_ratio" => self.fast_capacity_ratio = parse(key, v)?,
            "slow_ramp_share" => self.slow_ramp_share = parse(key, v)?,
            "demand_shape" => self.demand_shape = v.split(',').map(|x| parse(key, x)).collect::<Result<_>>()?,
            "periods" => m.periods = parse(key, v)?,
            "period_hours" => m.period_hours = parse(key, v)?,
            "price_cap" => {
                m.price_cap = parse(key, v)?;
                self.forecast.price_cap = m.price_cap;
            }
            "non_contracted_price" => {
                m.non_contracted_price = parse(key, v)?;
                self.forecast.non_contracted_price = m.non_contracted_price;
            }
            "capacity_price_up" => m.capacity_price_up = parse(key, v)?,
            "capacity_price_down" => m.capacity_price_down = parse(key, v)?,
            "modulation_price" => m.modulation_price = parse(key, v)?,
            "modulation_efficiency" => m.modulation_efficiency = parse(key, v)?,
            "reserve_valuation" => m.reserve_valuation = parse(key, v)?,
            "reserve_rate" => m.reserve_rate = parse(key, v)?,
            "modulation_length" => self.modulation_length = parse(key, v)?,
            "forecast_window" => self.forecast.window = parse(key, v)?,
            "forecast_decay" => self.forecast.decay = parse(key, v)?,
            "initial_energy_forecast" => self.forecast.initial_energy = parse(key, v)?,
            "initial_imbalance_forecast" => self.forecast.initial_imbalance = parse(key, v)?,
            "threshold_factor" => self.learning.factor = parse(key, v)?,
            "threshold_forget_after" => {
                self.learning.forget_after = match v {
                    "never" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "max_rounds" => self.max_rounds = parse(key, v)?,
            "convergence_tol" => self.convergence_tol = parse(key, v)?,
            "state_tol" => self.state_tol = parse(key, v)?,
            other => return Err(Error::Parse(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its value, in a stable order. Floats use the shortest
    /// text that parses back to the same value.
    pub fn to_kv(&self) -> String {
        let m = &self.market;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("setting", self.setting.to_string());
        put("mean_consumption", self.mean_consumption.to_string());
        put("flexibility_rate", self.flexibility_rate.to_string());
        put("producers", self.producers.to_string());
        put("retailers", self.retailers.to_string());
        put("loads_per_retailer", self.loads_per_retailer.to_string());
        put("slow_units_per_producer", self.slow_units_per_producer.to_string());
        put("fast_units_per_producer", self.fast_units_per_producer.to_string());
        put("slow_cost", format!("{},{}", self.slow_cost.0, self.slow_cost.1));
        put("fast_cost", format!("{},{}", self.fast_cost.0, self.fast_cost.1));
        put("slow_capacity_ratio", self.slow_capacity_ratio.to_string());
        put("fast_capacity_ratio", self.fast_capacity_ratio.to_string());
        put("slow_ramp_share", self.slow_ramp_share.to_string());
        put("demand_shape", list(&self.demand_shape));
        put("periods", m.periods.to_string());
        put("period_hours", m.period_hours.to_string());
        put("price_cap", m.price_cap.to_string());
        put("non_contracted_price", m.non_contracted_price.to_string());
        put("capacity_price_up", m.capacity_price_up.to_string());
        put("capacity_price_down", m.capacity_price_down.to_string());
        put("modulation_price", m.modulation_price.to_string());
        put("modulation_efficiency", m.modulation_efficiency.to_string());
        put("reserve_valuation", m.reserve_valuation.to_string());
        put("reserve_rate", m.reserve_rate.to_string());
        put("modulation_length", self.modulation_length.to_string());
        put("forecast_window", self.forecast.window.to_string());
        put("forecast_decay", self.forecast.decay.to_string());
        put("initial_energy_forecast", self.forecast.initial_energy.to_string());
        put("initial_imbalance_forecast", self.forecast.initial_imbalance.to_string());
        put("threshold_factor", self.learning.factor.to_string());
        put(
            "threshold_forget_after",
            self.learning.forget_after.map_or("never".to_string(), |n| n.to_string()),
        );
        put("max_rounds", self.max_rounds.to_string());
        put("convergence_tol", self.convergence_tol.to_string());
        put("state_tol", self.state_tol.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let m = &self.market;
        if !(0.0..=1.0).contains(&self.flexibility_rate) {
            return fail(format!("flexibility rate {} outside [0, 1]", self.flexibility_rate));
        }
        if !(self.mean_consumption.is_finite() && self.mean_consumption > 0.0) {
            return fail("mean consumption must be positive".into());
        }
        if self.producers == 0 || self.retailers == 0 {
            return fail("at least one producer and one retailer are needed".into());
        }
        if self.slow_units_per_producer + self.fast_units_per_producer == 0 {
            return fail("producers need at least one unit".into());
        }
        if self.flexibility_rate > 0.0 && self.loads_per_retailer == 0 {
            return fail("a positive flexibility rate needs tank loads".into());
        }
        for (name, (lo, hi)) in [("slow_cost", self.slow_cost), ("fast_cost", self.fast_cost)] {
            if !(0.0 <= lo && lo <= hi && hi <= m.price_cap) {
                return fail(format!("{name} range must satisfy 0 <= min <= max <= price cap"));
            }
        }
        if m.periods == 0 || m.period_hours <= 0.0 {
            return fail("the day needs at least one period of positive length".into());
        }
        if self.demand_shape.len() != m.periods || self.demand_shape.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return fail(format!("demand shape needs {} positive values", m.periods));
        }
        let prices = [
            m.price_cap,
            m.non_contracted_price,
            m.capacity_price_up,
            m.capacity_price_down,
            m.modulation_price,
            m.reserve_valuation,
            m.reserve_rate,
        ];
        if prices.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return fail("prices and rates must be non-negative".into());
        }
        if !(m.modulation_efficiency > 0.0 && m.modulation_efficiency <= 1.0) {
            return fail("modulation efficiency must lie in (0, 1]".into());
        }
        if self.modulation_length < 2 || !self.modulation_length.is_multiple_of(2) {
            return fail(format!("modulation bid length {} must be even and at least 2", self.modulation_length));
        }
        if !(self.slow_ramp_share > 0.0 && self.slow_capacity_ratio >= 0.0 && self.fast_capacity_ratio >= 0.0) {
            return fail("capacity ratios and ramp share must be positive".into());
        }
        if self.max_rounds == 0 || self.forecast.window == 0 {
            return fail("max rounds and forecast window must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolios {
    pub producers: Vec<ProducerPortfolio>,
    pub retailers: Vec<RetailerPortfolio>,
}

impl Portfolios {
    pub fn flexible_mean(&self) -> f64 {
        let periods = self.retailers.first().map_or(0, |r| r.inelastic.len()).max(1) as f64;
        self.retailers
            .iter()
            .flat_map(|r| &r.loads)
            .map(|l| (l.total_min + l.total_max) / 2.0 / (l.period_hours * periods))
            .sum()
    }
}

fn normalized(shape: &[f64]) -> Vec<f64> {
    let mean = shape.iter().sum::<f64>() / shape.len() as f64;
    shape.iter().map(|v| v / mean).collect()
}

/// Random weights summing to one.
fn shares(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Builds producers and retailers for a configuration. Producers take ids
/// `1..=P`, retailers the ids after them.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Portfolios> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let periods = cfg.market.periods;
    let dt = cfg.market.period_hours;
    let shape = normalized(&cfg.demand_shape);

    let mut producers = Vec::with_capacity(cfg.producers);
    let slow_each = cfg.slow_capacity_ratio * cfg.mean_consumption / (cfg.producers * cfg.slow_units_per_producer).max(1) as f64;
    let fast_each = cfg.fast_capacity_ratio * cfg.mean_consumption / (cfg.producers * cfg.fast_units_per_producer).max(1) as f64;
    for p in 0..cfg.producers {
        let mut units = Vec::new();
        for _ in 0..cfg.slow_units_per_producer {
            let pmax = slow_each * rng.gen_range(0.7..1.3);
            let cost = rng.gen_range(cfg.slow_cost.0..=cfg.slow_cost.1);
            units.push(Unit {
                power_min: vec![0.0; periods],
                power_max: vec![pmax; periods],
                ramp_up: cfg.slow_ramp_share * pmax,
                ramp_down: cfg.slow_ramp_share * pmax,
                cost: vec![cost; periods],
                initial_output: 0.5 * pmax,
            });
        }
        for _ in 0..cfg.fast_units_per_producer {
            let pmax = fast_each * rng.gen_range(0.7..1.3);
            let cost = rng.gen_range(cfg.fast_cost.0..=cfg.fast_cost.1);
            units.push(Unit {
                power_min: vec![0.0; periods],
                power_max: vec![pmax; periods],
                ramp_up: pmax,
                ramp_down: pmax,
                cost: vec![cost; periods],
                initial_output: 0.0,
            });
        }
        producers.push(ProducerPortfolio::new(ActorId(p as u32 + 1), units));
    }

    let retail_shares = shares(&mut rng, cfg.retailers);
    let mut retailers = Vec::with_capacity(cfg.retailers);
    for (r, share) in retail_shares.iter().enumerate() {
        let mean = cfg.mean_consumption * share;
        let flexible = cfg.flexibility_rate * mean;
        let inelastic: Vec<f64> = shape.iter().map(|s| (mean - flexible) * s).collect();
        let mut loads = Vec::new();
        if flexible > 0.0 {
            for w in shares(&mut rng, cfg.loads_per_retailer) {
                loads.push(random_tank_load(&mut rng, flexible * w, &shape, dt));
            }
        }
        let actor = ActorId((cfg.producers + r) as u32 + 1);
        let port = RetailerPortfolio::new(actor, inelastic, loads);
        port.validate(periods)
            .map_err(|e| Error::Config(format!("generated retailer {actor} is infeasible: {e}")))?;
        retailers.push(port);
    }
    Ok(Portfolios { producers, retailers })
}

/// A tank whose losses follow the demand shape, so that consuming `mean`
/// scaled by the shape keeps the tank level constant. The daily energy is
/// pinned to `mean` over the horizon.
/// A tank load drawing `mean` MW on average. Losses follow `shape`, which
/// must average one; efficiency, power headroom and storage size are drawn.
pub fn random_tank_load<R: Rng>(rng: &mut R, mean: f64, shape: &[f64], dt: f64) -> TankLoad {
    let periods = shape.len();
    let efficiency = rng.gen_range(0.85..=1.0);
    let headroom = rng.gen_range(2.0..3.0);
    let storage_hours = rng.gen_range(3.0..6.0);
    let peak = shape.iter().copied().fold(0.0, f64::max);
    let power_max = mean * peak * headroom;
    let capacity = mean * storage_hours * dt;
    let energy = mean * periods as f64 * dt;
    TankLoad {
        power_min: vec![0.0; periods],
        power_max: vec![power_max; periods],
        energy_min: vec![0.0; periods + 1],
        energy_max: vec![capacity; periods + 1],
        efficiency,
        losses: shape.iter().map(|s| efficiency * mean * s * dt).collect(),
        total_min: energy,
        total_max: energy,
        initial_energy: capacity / 2.0,
        period_hours: dt,
    }
}
