use serde::{Deserialize, Serialize};

/// Market-wide constants shared by every stage of a simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Market periods per day.
    pub periods: usize,
    /// Period length in hours.
    pub period_hours: f64,
    /// Energy price cap (EUR/MWh).
    pub price_cap: f64,
    /// Cost of non-contracted reserve (EUR/MWh).
    pub non_contracted_price: f64,
    /// Regulated capacity price of upward classical reserve (EUR/MW per period).
    pub capacity_price_up: f64,
    /// Regulated capacity price of downward classical reserve.
    pub capacity_price_down: f64,
    /// Regulated capacity price of modulation bids.
    pub modulation_price: f64,
    /// Worth of one MW of modulation relative to classical reserve.
    pub modulation_efficiency: f64,
    /// Producer valuation of offered reserve (EUR/MW per period).
    pub reserve_valuation: f64,
    /// Reserve requirement per direction as a share of cleared consumption.
    pub reserve_rate: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            periods: 24,
            period_hours: 1.0,
            price_cap: 3000.0,
            non_contracted_price: 500.0,
            capacity_price_up: 45.0,
            capacity_price_down: 45.0,
            modulation_price: 10.0,
            modulation_efficiency: 0.5,
            reserve_valuation: 0.005,
            reserve_rate: 0.02,
        }
    }
}
