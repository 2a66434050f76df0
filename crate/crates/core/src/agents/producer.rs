use serde::{Deserialize, Serialize};

use super::forecast::PriceForecast;
use super::TIE_BREAK;
use super::thresholds::Thresholds;
use super::ActorPosition;
use crate::energy::EnergyOffer;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, Sense, Solution, Status, VarId};
use crate::params::MarketParams;
use crate::reserve::ClassicalReserveBid;
use crate::types::{ActorId, Direction, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub power_min: Vec<f64>,
    pub power_max: Vec<f64>,
    /// Largest output increase between consecutive periods, MW.
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Marginal cost per period, EUR/MWh.
    pub cost: Vec<f64>,
    /// Output in the period before the day starts.
    pub initial_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducerPortfolio {
    pub actor: ActorId,
    pub units: Vec<Unit>,
    pub thresholds: Thresholds,
}

impl ProducerPortfolio {
    pub fn new(actor: ActorId, units: Vec<Unit>) -> Self {
        let periods = units.first().map_or(0, |u| u.power_max.len());
        let capacity = (0..periods).map(|t| units.iter().map(|u| u.power_max[t]).sum()).collect();
        Self {
            actor,
            units,
            thresholds: Thresholds::floor(capacity),
        }
    }

    /// Installed capacity per period.
    pub fn capacity(&self, periods: usize) -> Vec<f64> {
        (0..periods).map(|t| self.units.iter().map(|u| u.power_max[t]).sum()).collect()
    }

    pub fn validate(&self, periods: usize) -> Result<()> {
        let fail = |i: usize, msg: &str| Err(Error::Config(format!("producer {} unit {i}: {msg}", self.actor)));
        for (i, u) in self.units.iter().enumerate() {
            if u.power_min.len() != periods || u.power_max.len() != periods || u.cost.len() != periods {
                return fail(i, "series lengths differ from the horizon");
            }
            if (0..periods).any(|t| !(0.0 <= u.power_min[t] && u.power_min[t] <= u.power_max[t])) {
                return fail(i, "requires 0 <= p_min <= p_max");
            }
            if !(u.ramp_up >= 0.0 && u.ramp_down >= 0.0) {
                return fail(i, "ramp limits must be non-negative");
            }
            if u.cost.iter().chain([&u.initial_output]).any(|v| !v.is_finite()) {
                return fail(i, "non-finite cost or initial output");
            }
        }
        Ok(())
    }
}

/// Which quantities are already settled when the producer optimises.
#[derive(Debug, Clone, Copy)]
pub enum ProducerStage<'a> {
    DayAhead,
    /// Energy cleared `P_t` is known.
    PostEnergy { energy: &'a [f64] },
    /// Accepted reserve per unit and period is also known.
    PostReserve {
        energy: &'a [f64],
        up: &'a [Vec<f64>],
        down: &'a [Vec<f64>],
    },
}

struct Model {
    lp: LinearProgram,
    energy: Vec<VarId>,
    plus: Vec<[VarId; 2]>,
    minus: Vec<[VarId; 2]>,
    p: Vec<Vec<VarId>>,
    u: Vec<Vec<VarId>>,
    l: Vec<Vec<VarId>>,
}

fn imbalance_pair(lp: &mut LinearProgram, name: &str, forecast: f64, threshold: f64, limit: f64, nc: f64) -> [VarId; 2] {
    let within = lp.add_var(format!("{name}_a"), 0.0, threshold.min(limit), -forecast - TIE_BREAK);
    let beyond_cap = if threshold.is_finite() { limit } else { 0.0 };
    let beyond = lp.add_var(format!("{name}_b"), 0.0, beyond_cap, -nc);
    [within, beyond]
}

fn build(port: &ProducerPortfolio, params: &MarketParams, fc: &PriceForecast, stage: ProducerStage<'_>) -> Result<Model> {
    let periods = params.periods;
    port.validate(periods)?;
    let th = &port.thresholds;
    let nc = params.non_contracted_price;
    let eta = params.reserve_valuation;
    let capacity = port.capacity(periods);
    let mut lp = LinearProgram::new(Sense::Maximize);

    let mut p = Vec::with_capacity(port.units.len());
    let mut u = Vec::with_capacity(port.units.len());
    let mut l = Vec::with_capacity(port.units.len());
    for (i, unit) in port.units.iter().enumerate() {
        let mut pi = Vec::with_capacity(periods);
        let mut ui = Vec::with_capacity(periods);
        let mut li = Vec::with_capacity(periods);
        for t in 0..periods {
            let (lo, hi) = (unit.power_min[t], unit.power_max[t]);
            let pt = lp.add_var(format!("p{i}_{t}"), lo, hi, TIE_BREAK - unit.cost[t]);
            let ut = lp.add_var(format!("u{i}_{t}"), 0.0, hi - lo, eta);
            let lt = lp.add_var(format!("l{i}_{t}"), 0.0, hi - lo, eta);
            lp.add_constraint(vec![(pt, 1.0), (ut, 1.0)], Relation::Le, hi);
            lp.add_constraint(vec![(pt, 1.0), (lt, -1.0)], Relation::Ge, lo);
            let prev_max = if t == 0 { unit.initial_output } else { unit.power_max[t - 1] };
            // Ramp rows that can never bind are left out.
            if unit.ramp_up < hi {
                match t {
                    0 => lp.add_constraint(vec![(pt, 1.0), (ut, 1.0)], Relation::Le, unit.ramp_up + unit.initial_output),
                    _ => lp.add_constraint(vec![(pt, 1.0), (ut, 1.0), (pi[t - 1], -1.0)], Relation::Le, unit.ramp_up),
                };
            }
            if unit.ramp_down < prev_max - lo {
                match t {
                    0 => lp.add_constraint(vec![(pt, -1.0), (lt, 1.0)], Relation::Le, unit.ramp_down - unit.initial_output),
                    _ => lp.add_constraint(vec![(pi[t - 1], 1.0), (pt, -1.0), (lt, 1.0)], Relation::Le, unit.ramp_down),
                };
            }
            pi.push(pt);
            ui.push(ut);
            li.push(lt);
        }
        p.push(pi);
        u.push(ui);
        l.push(li);
    }

    let mut energy = Vec::with_capacity(periods);
    let mut plus = Vec::with_capacity(periods);
    let mut minus = Vec::with_capacity(periods);
    for t in 0..periods {
        let e = lp.add_var(format!("P{t}"), 0.0, f64::INFINITY, fc.energy[t]);
        let ip = imbalance_pair(&mut lp, &format!("Ip{t}"), fc.plus[t], th.plus_max[t], capacity[t], nc);
        let im = imbalance_pair(&mut lp, &format!("Im{t}"), fc.minus[t], th.minus_max[t], capacity[t], nc);
        let mut row = vec![(e, 1.0), (ip[0], 1.0), (ip[1], 1.0), (im[0], -1.0), (im[1], -1.0)];
        row.extend(p.iter().map(|pi| (pi[t], -1.0)));
        lp.add_constraint(row, Relation::Eq, 0.0);
        if th.volume[t] > 0.0 {
            let short = lp.add_var(format!("Ps{t}"), 0.0, f64::INFINITY, -(params.price_cap + fc.energy[t]));
            lp.add_constraint(vec![(e, 1.0), (short, 1.0)], Relation::Ge, th.volume[t]);
        }
        energy.push(e);
        plus.push(ip);
        minus.push(im);
    }

    match stage {
        ProducerStage::DayAhead => {}
        ProducerStage::PostEnergy { energy: cleared } => {
            for (t, &v) in energy.iter().enumerate() {
                lp.fix(v, cleared[t]);
            }
        }
        ProducerStage::PostReserve {
            energy: cleared,
            up,
            down,
        } => {
            if up.len() != port.units.len() || down.len() != port.units.len() {
                return Err(Error::Precondition("accepted reserve must be given per unit".into()));
            }
            for (t, &v) in energy.iter().enumerate() {
                lp.fix(v, cleared[t]);
            }
            for i in 0..port.units.len() {
                for t in 0..periods {
                    lp.fix(u[i][t], up[i][t]);
                    lp.fix(l[i][t], down[i][t]);
                }
            }
        }
    }

    Ok(Model {
        lp,
        energy,
        plus,
        minus,
        p,
        u,
        l,
    })
}

fn extract(model: &Model, sol: &Solution, port: &ProducerPortfolio) -> ActorPosition {
    let value = |v: VarId| sol[v];
    let grid = |vars: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> { vars.iter().map(|row| row.iter().map(|&v| value(v)).collect()).collect() };
    let pair = |p: &[VarId; 2]| (value(p[0]) + value(p[1])).max(0.0);
    ActorPosition {
        actor: port.actor,
        energy: model.energy.iter().map(|&v| value(v).max(0.0)).collect(),
        imbalance_plus: model.plus.iter().map(pair).collect(),
        imbalance_minus: model.minus.iter().map(pair).collect(),
        schedules: grid(&model.p),
        reserve_up: grid(&model.u),
        reserve_down: grid(&model.l),
        modulation: Vec::new(),
        scenario_up: Vec::new(),
        scenario_down: Vec::new(),
        objective: sol.objective,
    }
}

/// Optimises the producer's dispatch, reserve and imbalance for one stage.
pub fn producer_optimize(
    port: &ProducerPortfolio,
    params: &MarketParams,
    fc: &PriceForecast,
    stage: ProducerStage<'_>,
) -> Result<ActorPosition> {
    let model = build(port, params, fc, stage)?;
    let sol = model.lp.solve()?;
    match sol.status {
        Status::Optimal => Ok(extract(&model, &sol, port)),
        Status::Infeasible => Err(Error::Config(format!(
            "producer {}: unit limits cannot meet the fixed quantities",
            port.actor
        ))),
        status => Err(Error::Solve {
            model: "producer",
            status,
        }),
    }
}

/// A reserve bid together with the unit it comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitReserveBid {
    pub unit: usize,
    pub bid: ClassicalReserveBid,
}

/// Energy offers and reserve bids implied by a position.
///
/// Each unit offers its planned output at its marginal cost; a planned short
/// position is offered at the forecast short tariff. Reserve headroom is bid
/// at the unit's marginal cost.
pub fn producer_to_offers(
    position: &ActorPosition,
    port: &ProducerPortfolio,
    fc: &PriceForecast,
) -> (Vec<EnergyOffer>, Vec<UnitReserveBid>) {
    const MIN_VOLUME: f64 = 1e-9;
    let periods = position.energy.len();
    let mut offers = Vec::new();
    let mut bids = Vec::new();
    for t in 0..periods {
        for (i, unit) in port.units.iter().enumerate() {
            let supply = |volume: f64| EnergyOffer {
                actor: port.actor,
                period: t,
                side: Side::Supply,
                volume,
                price: unit.cost[t],
            };
            if position.schedules[i][t] > MIN_VOLUME {
                offers.push(supply(position.schedules[i][t]));
            }
        }
        if position.imbalance_minus[t] > MIN_VOLUME {
            offers.push(EnergyOffer {
                actor: port.actor,
                period: t,
                side: Side::Supply,
                volume: position.imbalance_minus[t],
                price: fc.minus[t],
            });
        }
        for (i, unit) in port.units.iter().enumerate() {
            for (direction, volume) in [(Direction::Up, position.reserve_up[i][t]), (Direction::Down, position.reserve_down[i][t])] {
                if volume > MIN_VOLUME {
                    bids.push(UnitReserveBid {
                        unit: i,
                        bid: ClassicalReserveBid {
                            actor: port.actor,
                            period: t,
                            direction,
                            volume,
                            activation_price: unit.cost[t],
                            efficiency: 1.0,
                        },
                    });
                }
            }
        }
    }
    (offers, bids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(cost: f64, pmax: f64, ramp: f64) -> Unit {
        Unit {
            power_min: vec![0.0; 2],
            power_max: vec![pmax; 2],
            ramp_up: ramp,
            ramp_down: ramp,
            cost: vec![cost; 2],
            initial_output: 0.0,
        }
    }

    fn params() -> MarketParams {
        MarketParams {
            periods: 2,
            ..MarketParams::default()
        }
    }

    #[test]
    fn profitable_unit_runs_flat_out() {
        let port = ProducerPortfolio::new(ActorId(3), vec![unit(45.0, 30.0, 100.0)]);
        let fc = PriceForecast::flat(2, 50.0, 80.0);
        let pos = producer_optimize(&port, &params(), &fc, ProducerStage::DayAhead).unwrap();
        assert_eq!(pos.schedules[0], vec![30.0, 30.0]);
        assert_eq!(pos.energy, vec![30.0, 30.0]);
        let (offers, _) = producer_to_offers(&pos, &port, &fc);
        assert_eq!(offers.len(), 2);
        assert_eq!((offers[0].volume, offers[0].price), (30.0, 45.0));
    }

    #[test]
    fn unprofitable_unit_stays_off_and_offers_headroom() {
        let port = ProducerPortfolio::new(ActorId(3), vec![unit(45.0, 30.0, 100.0)]);
        let fc = PriceForecast::flat(2, 40.0, 80.0);
        let pos = producer_optimize(&port, &params(), &fc, ProducerStage::DayAhead).unwrap();
        assert_eq!(pos.schedules[0], vec![0.0, 0.0]);
        assert_eq!(pos.reserve_up[0], vec![30.0, 30.0]);
        let (offers, bids) = producer_to_offers(&pos, &port, &fc);
        assert!(offers.is_empty());
        assert_eq!(bids.len(), 2);
        assert_eq!(bids[0].bid.direction, Direction::Up);
        assert_eq!((bids[0].bid.volume, bids[0].bid.activation_price), (30.0, 45.0));
    }

    #[test]
    fn cheap_short_tariff_is_offered_as_supply() {
        let port = ProducerPortfolio::new(ActorId(3), vec![unit(70.0, 10.0, 100.0)]);
        let fc = PriceForecast::flat(2, 50.0, 20.0);
        let pos = producer_optimize(&port, &params(), &fc, ProducerStage::DayAhead).unwrap();
        assert!((pos.imbalance_minus[0] - 10.0).abs() < 1e-9);
        let (offers, _) = producer_to_offers(&pos, &port, &fc);
        assert_eq!((offers[0].volume, offers[0].price), (10.0, 20.0));
    }
}
