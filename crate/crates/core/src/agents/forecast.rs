use serde::{Deserialize, Serialize};

/// Prices of one simulated day as seen by an actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceObservation {
    pub energy: Vec<f64>,
    /// Tariff on long positions.
    pub plus: Vec<f64>,
    /// Tariff on short positions.
    pub minus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Number of past rounds averaged.
    pub window: usize,
    /// Weight ratio between a round and the one after it.
    pub decay: f64,
    pub initial_energy: f64,
    /// Tariff forecast before any round has been observed. Starting at the
    /// non-contracted price keeps deliberate imbalance unattractive.
    pub initial_imbalance: f64,
    pub price_cap: f64,
    pub non_contracted_price: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: 24,
            decay: 0.5,
            initial_energy: 52.5,
            initial_imbalance: 500.0,
            price_cap: 3000.0,
            non_contracted_price: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceForecast {
    pub energy: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// The most recent round hit the energy price cap in this period.
    pub energy_capped: Vec<bool>,
    /// The most recent long-side tariff was 0 or the non-contracted price.
    pub plus_extreme: Vec<bool>,
    pub minus_extreme: Vec<bool>,
}

impl PriceForecast {
    pub fn flat(periods: usize, energy: f64, imbalance: f64) -> Self {
        Self {
            energy: vec![energy; periods],
            plus: vec![imbalance; periods],
            minus: vec![imbalance; periods],
            energy_capped: vec![false; periods],
            plus_extreme: vec![false; periods],
            minus_extreme: vec![false; periods],
        }
    }
}

/// Exponentially weighted mean of one price series.
///
/// Values rejected by `usable` are replaced by the most recent usable value
/// before them; leading unusable values are dropped. The newest retained
/// value has weight 1, the one before it `decay`, and so on.
pub fn exponential_mean(series: &[f64], window: usize, decay: f64, usable: impl Fn(f64) -> bool) -> Option<f64> {
    let mut last = None;
    let cleaned: Vec<f64> = series
        .iter()
        .filter_map(|&v| {
            if usable(v) {
                last = Some(v);
            }
            last
        })
        .collect();
    let recent = &cleaned[cleaned.len().saturating_sub(window)..];
    if recent.is_empty() {
        return None;
    }
    let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
    for v in recent.iter().rev() {
        num += w * v;
        den += w;
        w *= decay;
    }
    Some(num / den)
}

pub fn forecast(history: &[PriceObservation], periods: usize, cfg: &ForecastConfig) -> PriceForecast {
    let mut out = PriceForecast::flat(periods, cfg.initial_energy, cfg.initial_imbalance);
    let cap = cfg.price_cap;
    let nc = cfg.non_contracted_price;
    let extreme = |v: f64| v == 0.0 || v == nc;
    for t in 0..periods {
        let series = |pick: fn(&PriceObservation) -> &Vec<f64>| history.iter().map(|o| pick(o)[t]).collect::<Vec<f64>>();
        let energy = series(|o| &o.energy);
        let plus = series(|o| &o.plus);
        let minus = series(|o| &o.minus);
        if let Some(v) = exponential_mean(&energy, cfg.window, cfg.decay, |v| v < cap) {
            out.energy[t] = v;
        }
        if let Some(v) = exponential_mean(&plus, cfg.window, cfg.decay, |v| !extreme(v)) {
            out.plus[t] = v;
        }
        if let Some(v) = exponential_mean(&minus, cfg.window, cfg.decay, |v| !extreme(v)) {
            out.minus[t] = v;
        }
        out.energy_capped[t] = energy.last().is_some_and(|&v| v >= cap);
        out.plus_extreme[t] = plus.last().copied().is_some_and(extreme);
        out.minus_extreme[t] = minus.last().copied().is_some_and(extreme);
    }
    out
}
