//! Round-by-round simulation of the coupled markets.
//!
//! Each round simulates the same day: actors forecast prices from earlier
//! rounds and take day-ahead positions, the energy market clears, reserves
//! are bid and procured, actors reposition, and the resulting imbalance is
//! settled. Thresholds are then learned from the outcome.

use serde::{Deserialize, Serialize};

use crate::agents::{
    bid_grid, forecast, learn_thresholds, producer_optimize, producer_to_offers, retailer_day_ahead,
    retailer_reposition, retailer_to_offers, retailer_with_modulation, ActorPosition, BidSlot, PriceForecast,
    PriceObservation, ProducerStage, RetailerFixed, RoundOutcome, Thresholds,
};
use crate::energy::{clear, ClearingResult, EnergyOffer};
use crate::error::{Error, Result};
use crate::imbalance::{fees, settle, system_imbalance, tariffs, ActorImbalance, ContractedReserves, SettlementResult};
use crate::reserve::{clear_reserve, ClassicalReserveBid, ModulationBid, ReservePrices, ReserveProcurement};
use crate::scenario::{generate_scenario, MarketSetting, Portfolios, ScenarioConfig};
use crate::types::{ActorId, Direction, Side};

const BID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Producer,
    Retailer,
}

/// One actor's positions over the three stages of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorRound {
    pub actor: ActorId,
    pub kind: ActorKind,
    pub day_ahead: ActorPosition,
    pub reserve: ActorPosition,
    pub repositioned: ActorPosition,
    /// Energy the market accepted from this actor.
    pub cleared: Vec<f64>,
    pub fee: f64,
}

/// Aggregates of one round. Energy quantities are in MWh, money in euros.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub mean_price: f64,
    pub price_variability: f64,
    pub total_imbalance: f64,
    pub procurement_cost: f64,
    pub non_contracted_volume: f64,
    pub retailer_imbalance: f64,
    pub producer_imbalance: f64,
    pub settlement_cost: f64,
    /// Largest gap between a forecast and the realised price it predicted.
    pub forecast_error: f64,
}

impl RoundMetrics {
    pub fn mean(records: &[RoundMetrics]) -> RoundMetrics {
        let n = records.len().max(1) as f64;
        let avg = |f: fn(&RoundMetrics) -> f64| records.iter().map(f).sum::<f64>() / n;
        RoundMetrics {
            mean_price: avg(|m| m.mean_price),
            price_variability: avg(|m| m.price_variability),
            total_imbalance: avg(|m| m.total_imbalance),
            procurement_cost: avg(|m| m.procurement_cost),
            non_contracted_volume: avg(|m| m.non_contracted_volume),
            retailer_imbalance: avg(|m| m.retailer_imbalance),
            producer_imbalance: avg(|m| m.producer_imbalance),
            settlement_cost: avg(|m| m.settlement_cost),
            forecast_error: avg(|m| m.forecast_error),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    pub forecast: PriceForecast,
    pub prices: PriceObservation,
    pub offers: Vec<EnergyOffer>,
    pub clearing: ClearingResult,
    pub requirement: Vec<f64>,
    pub classical_bids: Vec<ClassicalReserveBid>,
    pub modulation_bids: Vec<ModulationBid>,
    pub procurement: ReserveProcurement,
    pub imbalance: Vec<f64>,
    pub settlement: SettlementResult,
    pub actors: Vec<ActorRound>,
    /// Thresholds after learning from this round, producers first.
    pub thresholds: Vec<Thresholds>,
    pub metrics: RoundMetrics,
}

impl RoundRecord {
    /// Prices, acceptances, every actor's final position, and what the actors
    /// carry into the next round (forecast and thresholds), flattened for
    /// comparing rounds.
    pub fn state(&self) -> Vec<f64> {
        let mut s = Vec::new();
        s.extend(&self.forecast.energy);
        s.extend(&self.forecast.plus);
        s.extend(&self.forecast.minus);
        self.thresholds.iter().for_each(|th| s.extend(th.state()));
        s.extend(&self.prices.energy);
        s.extend(&self.prices.plus);
        s.extend(&self.prices.minus);
        s.extend(&self.procurement.classical);
        s.extend(&self.procurement.modulation);
        for a in &self.actors {
            s.extend(&a.cleared);
            let p = &a.repositioned;
            s.extend(&p.energy);
            s.extend(&p.imbalance_plus);
            s.extend(&p.imbalance_minus);
            p.schedules.iter().for_each(|v| s.extend(v));
            p.reserve_up.iter().for_each(|v| s.extend(v));
            p.reserve_down.iter().for_each(|v| s.extend(v));
            s.extend(p.modulation.iter().map(|b| b.amplitude));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Converged { round: usize },
    Cycle { start: usize, length: usize },
    MaxRounds,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::Converged { round } => write!(f, "converged at round {round}"),
            Termination::Cycle { start, length } => write!(f, "cycle of length {length} starting at round {start}"),
            Termination::MaxRounds => f.write_str("round limit reached"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub config: ScenarioConfig,
    pub termination: Termination,
    /// Mean metrics over the terminal rounds: the cycle, the converged round,
    /// or the last round at the limit.
    pub summary: RoundMetrics,
    pub history: Vec<RoundRecord>,
    pub portfolios: Portfolios,
}

impl SimulationOutcome {
    /// Records whose metrics make up the summary.
    pub fn terminal_rounds(&self) -> &[RoundRecord] {
        terminal_slice(&self.history, self.termination)
    }
}

fn terminal_slice(history: &[RoundRecord], termination: Termination) -> &[RoundRecord] {
    match termination {
        Termination::Cycle { start, length } => &history[start - 1..start - 1 + length],
        _ => &history[history.len().saturating_sub(1)..],
    }
}

fn same_state(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// First round that repeats an earlier one, as `(start, length)` with
/// 1-based rounds: round `start + length` equals round `start`.
pub fn detect_cycle(states: &[Vec<f64>], tol: f64) -> Option<(usize, usize)> {
    (1..states.len()).find_map(|j| repeat_of(&states[..j], &states[j], tol).map(|i| (i + 1, j - i)))
}

fn repeat_of(earlier: &[Vec<f64>], state: &[f64], tol: f64) -> Option<usize> {
    earlier.iter().position(|s| same_state(s, state, tol))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A running simulation. Most callers want [`run`].
pub struct Simulation {
    cfg: ScenarioConfig,
    portfolios: Portfolios,
    grid: Vec<BidSlot>,
    history: Vec<RoundRecord>,
    states: Vec<Vec<f64>>,
    observations: Vec<PriceObservation>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        let portfolios = generate_scenario(&cfg)?;
        Self::with_portfolios(cfg, portfolios)
    }

    pub fn with_portfolios(cfg: ScenarioConfig, portfolios: Portfolios) -> Result<Self> {
        cfg.validate()?;
        let periods = cfg.market.periods;
        for p in &portfolios.producers {
            p.validate(periods)?;
        }
        for r in &portfolios.retailers {
            r.validate(periods)?;
        }
        let grid = bid_grid(periods, cfg.modulation_length)?;
        Ok(Self {
            cfg,
            portfolios,
            grid,
            history: Vec::new(),
            states: Vec::new(),
            observations: Vec::new(),
        })
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn portfolios(&self) -> &Portfolios {
        &self.portfolios
    }

    /// Runs until convergence, a cycle, or the round limit.
    pub fn run(mut self) -> Result<SimulationOutcome> {
        let mut termination = Termination::MaxRounds;
        while self.history.len() < self.cfg.max_rounds {
            if let Some(t) = self.step()? {
                termination = t;
                break;
            }
        }
        let summary = RoundMetrics::mean(
            &terminal_slice(&self.history, termination).iter().map(|r| r.metrics).collect::<Vec<_>>(),
        );
        Ok(SimulationOutcome {
            config: self.cfg,
            termination,
            summary,
            history: self.history,
            portfolios: self.portfolios,
        })
    }

    /// Simulates one round and reports whether it ends the run.
    pub fn step(&mut self) -> Result<Option<Termination>> {
        let round = self.history.len() + 1;
        let record = self.simulate_round(round)?;
        let converged = record.metrics.forecast_error <= self.cfg.convergence_tol;
        let state = record.state();
        let repeat = repeat_of(&self.states, &state, self.cfg.state_tol);
        self.observations.push(record.prices.clone());
        self.history.push(record);
        self.states.push(state);
        Ok(match repeat {
            _ if converged => Some(Termination::Converged { round }),
            Some(i) => Some(Termination::Cycle {
                start: i + 1,
                length: round - (i + 1),
            }),
            None => None,
        })
    }

    fn simulate_round(&mut self, round: usize) -> Result<RoundRecord> {
        let cfg = &self.cfg;
        let params = &cfg.market;
        let periods = params.periods;
        let dt = params.period_hours;
        let open = cfg.setting == MarketSetting::Open;
        let fc = forecast(&self.observations, periods, &cfg.forecast);
        let grid = &self.grid;
        let ctx = |stage: &'static str, actor: Option<ActorId>| move |e: Error| e.in_round(round, stage, actor);

        // Stage 1: day-ahead positions and energy clearing.
        let mut offers = Vec::new();
        let mut producer_da = Vec::new();
        for port in &self.portfolios.producers {
            let pos = producer_optimize(port, params, &fc, ProducerStage::DayAhead).map_err(ctx("energy", Some(port.actor)))?;
            offers.extend(producer_to_offers(&pos, port, &fc).0);
            producer_da.push(pos);
        }
        let mut retailer_da = Vec::new();
        for port in &self.portfolios.retailers {
            let pos = if open {
                retailer_with_modulation(port, params, &fc, grid, RetailerFixed::default())
            } else {
                retailer_day_ahead(port, params, &fc)
            }
            .map_err(ctx("energy", Some(port.actor)))?;
            offers.extend(retailer_to_offers(&pos, params));
            retailer_da.push(pos);
        }
        let clearing = clear(&offers, periods, params.price_cap).map_err(ctx("energy", None))?;
        let producer_cleared: Vec<Vec<f64>> =
            self.portfolios.producers.iter().map(|p| clearing.cleared_for(&offers, p.actor, Side::Supply)).collect();
        let retailer_cleared: Vec<Vec<f64>> =
            self.portfolios.retailers.iter().map(|r| clearing.cleared_for(&offers, r.actor, Side::Demand)).collect();
        let consumption = clearing.accepted_volume(&offers, Side::Demand);
        let requirement: Vec<f64> = consumption.iter().map(|c| params.reserve_rate * c).collect();

        // Stage 2: reserve bids and procurement.
        let mut classical_bids = Vec::new();
        let mut bid_owner = Vec::new();
        let mut producer_rs = Vec::new();
        for (k, port) in self.portfolios.producers.iter().enumerate() {
            let stage = ProducerStage::PostEnergy { energy: &producer_cleared[k] };
            let pos = producer_optimize(port, params, &fc, stage).map_err(ctx("reserve", Some(port.actor)))?;
            for b in producer_to_offers(&pos, port, &fc).1 {
                bid_owner.push((k, b.unit));
                classical_bids.push(b.bid);
            }
            producer_rs.push(pos);
        }
        let mut modulation_bids = Vec::new();
        let mut slot_owner = Vec::new();
        let mut retailer_rs = Vec::new();
        for (k, port) in self.portfolios.retailers.iter().enumerate() {
            let fixed = RetailerFixed {
                energy: Some(&retailer_cleared[k]),
                modulation: None,
            };
            let pos = if open {
                retailer_with_modulation(port, params, &fc, grid, fixed)
            } else {
                retailer_reposition(port, params, &fc, &retailer_cleared[k])
            }
            .map_err(ctx("reserve", Some(port.actor)))?;
            if open {
                for (slot, bid) in pos.modulation.iter().enumerate() {
                    if bid.amplitude > BID_TOL {
                        slot_owner.push((k, slot));
                        modulation_bids.push(bid.clone());
                    }
                }
            }
            retailer_rs.push(pos);
        }
        let procurement = clear_reserve(
            &classical_bids,
            &modulation_bids,
            &requirement,
            &requirement,
            &ReservePrices::from(params),
        )
        .map_err(ctx("reserve", None))?;

        // Stage 3: repositioning and settlement.
        let mut producer_final = Vec::new();
        for (k, port) in self.portfolios.producers.iter().enumerate() {
            let mut up = vec![vec![0.0; periods]; port.units.len()];
            let mut down = vec![vec![0.0; periods]; port.units.len()];
            for ((bid, &(owner, unit)), x) in classical_bids.iter().zip(&bid_owner).zip(&procurement.classical) {
                if owner == k {
                    let target = match bid.direction {
                        Direction::Up => &mut up,
                        Direction::Down => &mut down,
                    };
                    target[unit][bid.period] += bid.volume * x;
                }
            }
            let stage = ProducerStage::PostReserve {
                energy: &producer_cleared[k],
                up: &up,
                down: &down,
            };
            producer_final.push(producer_optimize(port, params, &fc, stage).map_err(ctx("settlement", Some(port.actor)))?);
        }
        let mut retailer_final = Vec::new();
        for (k, port) in self.portfolios.retailers.iter().enumerate() {
            let pos = if open {
                let mut accepted = vec![0.0; grid.len()];
                for ((bid, &(owner, slot)), x) in modulation_bids.iter().zip(&slot_owner).zip(&procurement.modulation) {
                    if owner == k {
                        accepted[slot] = bid.amplitude * x;
                    }
                }
                let fixed = RetailerFixed {
                    energy: Some(&retailer_cleared[k]),
                    modulation: Some(&accepted),
                };
                retailer_with_modulation(port, params, &fc, grid, fixed)
            } else {
                Ok(retailer_rs[k].clone())
            }
            .map_err(ctx("settlement", Some(port.actor)))?;
            retailer_final.push(pos);
        }

        let positions: Vec<&ActorPosition> = producer_final.iter().chain(&retailer_final).collect();
        let imbalances: Vec<ActorImbalance> = positions
            .iter()
            .map(|p| ActorImbalance {
                plus: p.imbalance_plus.clone(),
                minus: p.imbalance_minus.clone(),
            })
            .collect();
        let imbalance = system_imbalance(&imbalances, periods);
        let contracted = ContractedReserves::from_procurement(&classical_bids, &modulation_bids, &procurement);
        let settlement =
            settle(&imbalance, &contracted, params.non_contracted_price).map_err(ctx("settlement", None))?;
        let tariff = tariffs(&settlement);
        let actor_fees = fees(&tariff, &imbalances, dt);
        let prices = PriceObservation {
            energy: clearing.prices(),
            plus: tariff.plus,
            minus: tariff.minus,
        };

        // Learning.
        let learn = |th: &mut Thresholds, submitted: &[f64], fin: &ActorPosition| {
            let outcome = RoundOutcome {
                prices: &prices,
                submitted,
                plus: &fin.imbalance_plus,
                minus: &fin.imbalance_minus,
            };
            learn_thresholds(th, &cfg.learning, &outcome, params.price_cap, params.non_contracted_price);
        };
        for (k, port) in self.portfolios.producers.iter_mut().enumerate() {
            learn(&mut port.thresholds, &producer_da[k].energy, &producer_final[k]);
        }
        for (k, port) in self.portfolios.retailers.iter_mut().enumerate() {
            learn(&mut port.thresholds, &retailer_da[k].energy, &retailer_final[k]);
        }

        let deviation = |p: &ActorPosition| -> f64 { p.imbalance_plus.iter().chain(&p.imbalance_minus).sum::<f64>() * dt };
        let energy = &prices.energy;
        let metrics = RoundMetrics {
            mean_price: energy.iter().sum::<f64>() / periods as f64,
            price_variability: energy.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - energy.iter().copied().fold(f64::INFINITY, f64::min),
            total_imbalance: (0..periods)
                .map(|t| {
                    settlement.activated_up[t].abs()
                        + settlement.activated_down[t].abs()
                        + settlement.non_contracted_up[t]
                        + settlement.non_contracted_down[t]
                })
                .sum::<f64>()
                * dt,
            procurement_cost: procurement.reservation_cost,
            non_contracted_volume: settlement.non_contracted_volume() * dt,
            retailer_imbalance: retailer_final.iter().map(deviation).sum(),
            producer_imbalance: producer_final.iter().map(deviation).sum(),
            settlement_cost: settlement.cost,
            forecast_error: max_gap(&fc.energy, energy)
                .max(max_gap(&fc.plus, &prices.plus))
                .max(max_gap(&fc.minus, &prices.minus)),
        };

        let mut actors = Vec::with_capacity(positions.len());
        let producers = self.portfolios.producers.iter().enumerate().map(|(k, p)| {
            (p.actor, ActorKind::Producer, &producer_da[k], &producer_rs[k], &producer_final[k], &producer_cleared[k])
        });
        let retailers = self.portfolios.retailers.iter().enumerate().map(|(k, r)| {
            (r.actor, ActorKind::Retailer, &retailer_da[k], &retailer_rs[k], &retailer_final[k], &retailer_cleared[k])
        });
        for ((actor, kind, da, rs, fin, cleared), fee) in producers.chain(retailers).zip(actor_fees) {
            actors.push(ActorRound {
                actor,
                kind,
                day_ahead: da.clone(),
                reserve: rs.clone(),
                repositioned: fin.clone(),
                cleared: cleared.clone(),
                fee,
            });
        }

        Ok(RoundRecord {
            round,
            forecast: fc,
            prices,
            offers,
            clearing,
            requirement,
            classical_bids,
            modulation_bids,
            procurement,
            imbalance,
            settlement,
            actors,
            thresholds: self
                .portfolios
                .producers
                .iter()
                .map(|p| p.thresholds.clone())
                .chain(self.portfolios.retailers.iter().map(|r| r.thresholds.clone()))
                .collect(),
            metrics,
        })
    }
}

/// Generates the portfolios of `cfg` and simulates them.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationOutcome> {
    Simulation::new(cfg.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Vec<f64> {
        vec![v, -v]
    }

    #[test]
    fn consecutive_repeat() {
        let h = vec![s(1.0), s(2.0), s(3.0), s(3.0)];
        assert_eq!(detect_cycle(&h, 1e-6), Some((3, 1)));
    }

    #[test]
    fn alternating() {
        let h = vec![s(1.0), s(2.0), s(1.0), s(2.0)];
        assert_eq!(detect_cycle(&h, 1e-6), Some((1, 2)));
    }

    #[test]
    fn injected_repeat() {
        let mut h: Vec<Vec<f64>> = (1..=11).map(|i| s(i as f64)).collect();
        h.push(h[6].clone());
        assert_eq!(detect_cycle(&h, 1e-6), Some((7, 5)));
    }

    #[test]
    fn tolerance_and_shape() {
        assert_eq!(detect_cycle(&[s(1.0), s(1.0 + 5e-7)], 1e-6), Some((1, 1)));
        assert_eq!(detect_cycle(&[s(1.0), s(1.0 + 5e-6)], 1e-6), None);
        assert_eq!(detect_cycle(&[vec![1.0], vec![1.0, 1.0]], 1e-6), None);
        assert_eq!(detect_cycle(&[s(1.0)], 1e-6), None);
    }

    #[test]
    fn metric_means() {
        let a = RoundMetrics {
            mean_price: 50.0,
            procurement_cost: 100.0,
            ..RoundMetrics::default()
        };
        let b = RoundMetrics {
            mean_price: 54.0,
            procurement_cost: 300.0,
            ..RoundMetrics::default()
        };
        let m = RoundMetrics::mean(&[a, b]);
        assert_eq!(m.mean_price, 52.0);
        assert_eq!(m.procurement_cost, 200.0);
    }
}
