//! Decision models of the market participants.
//!
//! Retailers buy energy for inelastic demand plus a set of tank loads whose
//! consumption they may shift; with reserve market access they also sell
//! modulation bids. Producers dispatch units and offer the remaining headroom
//! as reserve. Every decision is a linear program built from the actor's
//! price forecast and the thresholds it learned from past rounds.

mod coverage;
mod forecast;
mod producer;
mod retailer;
mod tank;
mod thresholds;

use serde::{Deserialize, Serialize};

use crate::reserve::ModulationBid;
use crate::types::ActorId;

pub use coverage::{verify_load_coverage, verify_scenario_coverage, CoverageReport};
pub use forecast::{exponential_mean, forecast, ForecastConfig, PriceForecast, PriceObservation};
pub use producer::{producer_optimize, producer_to_offers, ProducerPortfolio, ProducerStage, Unit, UnitReserveBid};
pub use retailer::{
    bid_grid, retailer_day_ahead, retailer_reposition, retailer_to_offers, retailer_with_modulation, BidSlot,
    RetailerFixed, RetailerPortfolio, FLEX_TIE_BONUS,
};
pub use tank::TankLoad;
pub use thresholds::{learn_thresholds, LearningRule, RoundOutcome, Thresholds, VolumeBound};

/// Objective nudge, per MW, that makes ties favour production over
/// withholding and balanced positions over deliberate imbalance.
pub const TIE_BREAK: f64 = 1e-6;

/// An actor's decisions for one stage of a round.
///
/// `energy` is `D_t` for retailers and `P_t` for producers. `schedules`
/// holds one power series per tank load or production unit. Producer-only
/// and modulation-only fields are empty for the other kind of actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorPosition {
    pub actor: ActorId,
    pub energy: Vec<f64>,
    pub imbalance_plus: Vec<f64>,
    pub imbalance_minus: Vec<f64>,
    pub schedules: Vec<Vec<f64>>,
    /// Upward headroom `u_{i,t}` per unit.
    pub reserve_up: Vec<Vec<f64>>,
    /// Downward margin `l_{i,t}` per unit.
    pub reserve_down: Vec<Vec<f64>>,
    /// One bid per slot of the modulation grid, possibly with zero amplitude.
    pub modulation: Vec<ModulationBid>,
    /// Per load: baseline outside slots, the up-first scenario inside.
    pub scenario_up: Vec<Vec<f64>>,
    pub scenario_down: Vec<Vec<f64>>,
    pub objective: f64,
}

impl ActorPosition {
    /// `U_t`, the producer's total upward reserve.
    pub fn total_up(&self) -> Vec<f64> {
        column_sums(&self.reserve_up, self.energy.len())
    }

    pub fn total_down(&self) -> Vec<f64> {
        column_sums(&self.reserve_down, self.energy.len())
    }

    /// Sum of load consumption or unit output per period.
    pub fn scheduled(&self) -> Vec<f64> {
        column_sums(&self.schedules, self.energy.len())
    }
}

fn column_sums(rows: &[Vec<f64>], periods: usize) -> Vec<f64> {
    (0..periods).map(|t| rows.iter().map(|r| r[t]).sum()).collect()
}
