use serde::{Deserialize, Serialize};

use super::forecast::PriceForecast;
use super::TIE_BREAK;
use super::tank::{add_tank, TankLoad, TankVars};
use super::thresholds::Thresholds;
use super::ActorPosition;
use crate::energy::EnergyOffer;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, Sense, Solution, Status, VarId};
use crate::params::MarketParams;
use crate::reserve::ModulationBid;
use crate::types::{ActorId, Side};

/// Bonus per MW of modulation amplitude, so that ties favour larger bids.
pub const FLEX_TIE_BONUS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetailerPortfolio {
    pub actor: ActorId,
    /// Inelastic demand `ν_t`, MW.
    pub inelastic: Vec<f64>,
    pub loads: Vec<TankLoad>,
    pub thresholds: Thresholds,
}

impl RetailerPortfolio {
    pub fn new(actor: ActorId, inelastic: Vec<f64>, loads: Vec<TankLoad>) -> Self {
        let periods = inelastic.len();
        Self {
            actor,
            inelastic,
            loads,
            thresholds: Thresholds::ceiling(periods),
        }
    }

    pub fn validate(&self, periods: usize) -> Result<()> {
        if self.inelastic.len() != periods {
            return Err(Error::Config(format!("retailer {}: demand series must have {periods} entries", self.actor)));
        }
        if self.inelastic.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("retailer {}: negative inelastic demand", self.actor)));
        }
        for load in &self.loads {
            load.validate(periods)?;
        }
        Ok(())
    }
}

/// Consecutive periods covered by one modulation bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidSlot {
    pub start: usize,
    pub length: usize,
}

/// Back-to-back slots of `length` periods; a trailing remainder gets no slot.
pub fn bid_grid(periods: usize, length: usize) -> Result<Vec<BidSlot>> {
    if length < 2 || !length.is_multiple_of(2) {
        return Err(Error::Config(format!("modulation bid length {length} must be even and at least 2")));
    }
    Ok((0..periods / length)
        .map(|k| BidSlot {
            start: k * length,
            length,
        })
        .collect())
}

/// Quantities held fixed when re-optimising after a market stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct RetailerFixed<'a> {
    /// Cleared demand `D_t`.
    pub energy: Option<&'a [f64]>,
    /// Accepted modulation amplitude per grid slot.
    pub modulation: Option<&'a [f64]>,
}

struct Scenario {
    up: Vec<Vec<VarId>>,
    down: Vec<Vec<VarId>>,
}

struct Model {
    lp: LinearProgram,
    demand: Vec<VarId>,
    plus: Vec<[VarId; 2]>,
    minus: Vec<[VarId; 2]>,
    tanks: Vec<TankVars>,
    scenarios: Vec<Scenario>,
    flex: Vec<VarId>,
}

/// Splits an imbalance into a part priced at the forecast tariff (up to the
/// learned threshold) and a part priced at the non-contracted price.
fn imbalance_pair(lp: &mut LinearProgram, name: &str, forecast: f64, threshold: f64, nc: f64) -> [VarId; 2] {
    let within = lp.add_var(format!("{name}_a"), 0.0, threshold, forecast + TIE_BREAK);
    let beyond = if threshold.is_finite() {
        lp.add_var(format!("{name}_b"), 0.0, f64::INFINITY, nc)
    } else {
        lp.add_var(format!("{name}_b"), 0.0, 0.0, nc)
    };
    [within, beyond]
}

fn build(
    port: &RetailerPortfolio,
    params: &MarketParams,
    fc: &PriceForecast,
    grid: Option<&[BidSlot]>,
    fixed: RetailerFixed<'_>,
) -> Result<Model> {
    let periods = params.periods;
    port.validate(periods)?;
    let th = &port.thresholds;
    let nc = params.non_contracted_price;
    let mut lp = LinearProgram::new(Sense::Minimize);

    let demand: Vec<VarId> = (0..periods)
        .map(|t| {
            let v = lp.add_var(format!("D{t}"), 0.0, f64::INFINITY, fc.energy[t]);
            if let Some(d) = fixed.energy {
                lp.fix(v, d[t]);
            }
            v
        })
        .collect();
    let plus: Vec<[VarId; 2]> = (0..periods)
        .map(|t| imbalance_pair(&mut lp, &format!("Ip{t}"), fc.plus[t], th.plus_max[t], nc))
        .collect();
    let minus: Vec<[VarId; 2]> = (0..periods)
        .map(|t| imbalance_pair(&mut lp, &format!("Im{t}"), fc.minus[t], th.minus_max[t], nc))
        .collect();
    let tanks: Vec<TankVars> = port.loads.iter().enumerate().map(|(i, l)| add_tank(&mut lp, l, &format!("L{i}"))).collect();

    for t in 0..periods {
        let mut row = vec![
            (demand[t], 1.0),
            (plus[t][0], -1.0),
            (plus[t][1], -1.0),
            (minus[t][0], 1.0),
            (minus[t][1], 1.0),
        ];
        row.extend(tanks.iter().map(|tv| (tv.d[t], -1.0)));
        lp.add_constraint(row, Relation::Eq, port.inelastic[t]);

        if th.volume[t].is_finite() {
            // With modulation bids the excess also counts the short position.
            let excess = lp.add_var(format!("Dx{t}"), 0.0, f64::INFINITY, params.price_cap - fc.energy[t]);
            let mut row = vec![(demand[t], 1.0), (excess, -1.0)];
            if grid.is_some() {
                row.push((minus[t][0], 1.0));
                row.push((minus[t][1], 1.0));
            }
            lp.add_constraint(row, Relation::Le, th.volume[t]);
        }
    }

    let mut scenarios = Vec::new();
    let mut flex = Vec::new();
    if let Some(grid) = grid {
        for (i, load) in port.loads.iter().enumerate() {
            let base = &tanks[i];
            let mut sc = Scenario {
                up: Vec::new(),
                down: Vec::new(),
            };
            for (k, slot) in grid.iter().enumerate() {
                let mut make = |tag: &str| -> Vec<VarId> {
                    let d: Vec<VarId> = (slot.start..slot.start + slot.length)
                        .map(|t| lp.add_var(format!("L{i}_{tag}{k}_d{t}"), load.power_min[t], load.power_max[t], 0.0))
                        .collect();
                    // Intermediate levels; the first and last steps reuse the baseline energy.
                    let inner: Vec<VarId> = (slot.start + 1..slot.start + slot.length)
                        .map(|t| lp.add_var(format!("L{i}_{tag}{k}_e{t}"), load.energy_min[t], load.energy_max[t], 0.0))
                        .collect();
                    let gain = load.efficiency * load.period_hours;
                    for j in 0..slot.length {
                        let t = slot.start + j;
                        let before = if j == 0 { base.e[t] } else { inner[j - 1] };
                        let after = if j + 1 == slot.length { base.e[t + 1] } else { inner[j] };
                        lp.add_constraint(vec![(after, 1.0), (before, -1.0), (d[j], -gain)], Relation::Eq, -load.losses[t]);
                    }
                    d
                };
                sc.up.push(make("up"));
                sc.down.push(make("dn"));
            }
            scenarios.push(sc);
        }
        for (k, slot) in grid.iter().enumerate() {
            let revenue = if fixed.modulation.is_some() {
                0.0
            } else {
                -(slot.length as f64 * params.modulation_price) - FLEX_TIE_BONUS
            };
            let f = lp.add_var(format!("F{k}"), 0.0, f64::INFINITY, revenue);
            if let Some(acc) = fixed.modulation {
                lp.fix(f, acc[k]);
            }
            let half = slot.length / 2;
            for j in 0..slot.length {
                let t = slot.start + j;
                // First half: the up scenario sits above the baseline and the
                // down scenario below; the second half mirrors this.
                let (high, low): (Vec<VarId>, Vec<VarId>) = scenarios
                    .iter()
                    .map(|sc| if j < half { (sc.up[k][j], sc.down[k][j]) } else { (sc.down[k][j], sc.up[k][j]) })
                    .unzip();
                let mut above = vec![(f, 1.0)];
                let mut below = vec![(f, 1.0)];
                for (i, tv) in tanks.iter().enumerate() {
                    above.push((high[i], -1.0));
                    above.push((tv.d[t], 1.0));
                    below.push((tv.d[t], -1.0));
                    below.push((low[i], 1.0));
                }
                lp.add_constraint(above, Relation::Le, 0.0);
                lp.add_constraint(below, Relation::Le, 0.0);
            }
            flex.push(f);
        }
    }

    Ok(Model {
        lp,
        demand,
        plus,
        minus,
        tanks,
        scenarios,
        flex,
    })
}

fn solve(model: &Model, port: &RetailerPortfolio) -> Result<Solution> {
    let sol = model.lp.solve()?;
    match sol.status {
        Status::Optimal => Ok(sol),
        Status::Infeasible => Err(Error::Config(format!(
            "retailer {}: tank loads cannot meet the fixed quantities",
            port.actor
        ))),
        status => Err(Error::Solve {
            model: "retailer",
            status,
        }),
    }
}

fn extract(model: &Model, sol: &Solution, port: &RetailerPortfolio, params: &MarketParams, grid: Option<&[BidSlot]>) -> ActorPosition {
    let value = |v: VarId| sol[v];
    let schedules: Vec<Vec<f64>> = model.tanks.iter().map(|tv| tv.d.iter().map(|&v| value(v)).collect()).collect();
    let mut scenario_up = Vec::new();
    let mut scenario_down = Vec::new();
    let mut modulation = Vec::new();
    if let Some(grid) = grid {
        for (i, sc) in model.scenarios.iter().enumerate() {
            let mut up = schedules[i].clone();
            let mut down = schedules[i].clone();
            for (k, slot) in grid.iter().enumerate() {
                for j in 0..slot.length {
                    up[slot.start + j] = value(sc.up[k][j]);
                    down[slot.start + j] = value(sc.down[k][j]);
                }
            }
            scenario_up.push(up);
            scenario_down.push(down);
        }
        modulation = grid
            .iter()
            .zip(&model.flex)
            .map(|(slot, &f)| ModulationBid {
                actor: port.actor,
                start: slot.start,
                length: slot.length,
                amplitude: value(f).max(0.0),
                activation_price: 0.0,
                efficiency: params.modulation_efficiency,
            })
            .collect();
    }
    let pair = |p: &[VarId; 2]| (value(p[0]) + value(p[1])).max(0.0);
    ActorPosition {
        actor: port.actor,
        energy: model.demand.iter().map(|&v| value(v).max(0.0)).collect(),
        imbalance_plus: model.plus.iter().map(pair).collect(),
        imbalance_minus: model.minus.iter().map(pair).collect(),
        schedules,
        reserve_up: Vec::new(),
        reserve_down: Vec::new(),
        modulation,
        scenario_up,
        scenario_down,
        objective: sol.objective,
    }
}

/// Day-ahead position of a retailer without reserve market access.
pub fn retailer_day_ahead(port: &RetailerPortfolio, params: &MarketParams, fc: &PriceForecast) -> Result<ActorPosition> {
    let model = build(port, params, fc, None, RetailerFixed::default())?;
    let sol = solve(&model, port)?;
    Ok(extract(&model, &sol, port, params, None))
}

/// Re-optimises schedules and imbalances once the cleared demand is known.
pub fn retailer_reposition(
    port: &RetailerPortfolio,
    params: &MarketParams,
    fc: &PriceForecast,
    cleared: &[f64],
) -> Result<ActorPosition> {
    let fixed = RetailerFixed {
        energy: Some(cleared),
        modulation: None,
    };
    let model = build(port, params, fc, None, fixed)?;
    let sol = solve(&model, port)?;
    Ok(extract(&model, &sol, port, params, None))
}

/// Position of a retailer that also sells modulation bids on `grid`.
///
/// With nothing fixed this is the day-ahead decision. Fixing the cleared
/// energy yields the amplitudes to bid; additionally fixing the accepted
/// amplitudes gives the final position.
pub fn retailer_with_modulation(
    port: &RetailerPortfolio,
    params: &MarketParams,
    fc: &PriceForecast,
    grid: &[BidSlot],
    fixed: RetailerFixed<'_>,
) -> Result<ActorPosition> {
    let periods = params.periods;
    for (k, slot) in grid.iter().enumerate() {
        if slot.length < 2 || slot.length % 2 != 0 || slot.start + slot.length > periods {
            return Err(Error::Config(format!("modulation slot {k} is malformed")));
        }
        if grid[..k].iter().any(|o| o.start < slot.start + slot.length && slot.start < o.start + o.length) {
            return Err(Error::Config(format!("modulation slot {k} overlaps an earlier one")));
        }
    }
    if fixed.modulation.is_some_and(|m| m.len() != grid.len()) {
        return Err(Error::Precondition("one accepted amplitude per slot expected".into()));
    }
    let model = build(port, params, fc, Some(grid), fixed)?;
    let sol = solve(&model, port)?;
    Ok(extract(&model, &sol, port, params, Some(grid)))
}

/// Demand offers at the price cap, one per period with positive volume.
pub fn retailer_to_offers(position: &ActorPosition, params: &MarketParams) -> Vec<EnergyOffer> {
    position
        .energy
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 1e-9)
        .map(|(t, &d)| EnergyOffer {
            actor: position.actor,
            period: t,
            side: Side::Demand,
            volume: d,
            price: params.price_cap,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(periods: usize) -> TankLoad {
        TankLoad {
            power_min: vec![0.0; periods],
            power_max: vec![10.0; periods],
            energy_min: vec![0.0; periods + 1],
            energy_max: vec![40.0; periods + 1],
            efficiency: 1.0,
            losses: vec![0.0; periods],
            total_min: 20.0,
            total_max: 20.0,
            initial_energy: 0.0,
            period_hours: 1.0,
        }
    }

    fn params(periods: usize) -> MarketParams {
        MarketParams {
            periods,
            ..MarketParams::default()
        }
    }

    #[test]
    fn inelastic_only_buys_exactly_its_demand() {
        let port = RetailerPortfolio::new(ActorId(1), vec![10.0, 20.0], vec![]);
        let fc = PriceForecast::flat(2, 50.0, 60.0);
        let pos = retailer_day_ahead(&port, &params(2), &fc).unwrap();
        assert_eq!(pos.energy, vec![10.0, 20.0]);
        assert!(pos.imbalance_plus.iter().chain(&pos.imbalance_minus).all(|&v| v == 0.0));
    }

    #[test]
    fn flexible_energy_goes_to_the_cheap_period() {
        let port = RetailerPortfolio::new(ActorId(1), vec![5.0; 4], vec![load(4)]);
        let mut fc = PriceForecast::flat(4, 50.0, 60.0);
        fc.energy[2] = 30.0;
        fc.energy[3] = 40.0;
        let pos = retailer_day_ahead(&port, &params(4), &fc).unwrap();
        assert_eq!(pos.schedules[0], vec![0.0, 0.0, 10.0, 10.0]);
        assert!((pos.objective - (50.0 * 10.0 + 30.0 * 15.0 + 40.0 * 15.0)).abs() < 1e-7);
    }

    #[test]
    fn zero_loads_offer_no_modulation() {
        let port = RetailerPortfolio::new(ActorId(1), vec![5.0; 4], vec![]);
        let fc = PriceForecast::flat(4, 50.0, 60.0);
        let grid = bid_grid(4, 4).unwrap();
        let pos = retailer_with_modulation(&port, &params(4), &fc, &grid, RetailerFixed::default()).unwrap();
        assert_eq!(pos.modulation.len(), 1);
        assert_eq!(pos.modulation[0].amplitude, 0.0);
    }

    #[test]
    fn odd_bid_length_is_rejected() {
        assert!(bid_grid(24, 3).is_err());
        assert_eq!(bid_grid(24, 4).unwrap().len(), 6);
    }
}
