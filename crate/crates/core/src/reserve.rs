//! Day-ahead secondary reserve market.
//!
//! The system operator buys `R+_t` upward and `R-_t` downward reserve per
//! period from two products:
//!
//! * classical bids: one period, one direction, volume `Q`, activation price
//!   `c`; reservation paid at the regulated capacity price;
//! * modulation bids: a symmetric band `±F` around a retailer's baseline over
//!   consecutive periods, counted towards both directions in every covered
//!   period after scaling by the bid's efficiency.
//!
//! Clearing minimises reservation cost plus the activation cost the operator
//! would face if it activated everything it contracted. Slack variables for
//! over-contracting (penalised at `c^o_t`) and non-contracted shortfall
//! (priced at the non-contracted reserve cost) keep the program feasible.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, Sense, Status, VarId};
use crate::params::MarketParams;
use crate::types::{ActorId, Direction};

/// Multiplier applied to the dearest downward activation price.
pub const OVER_CONTRACT_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReserveBid {
    pub actor: ActorId,
    pub period: usize,
    pub direction: Direction,
    /// MW, strictly positive.
    pub volume: f64,
    /// EUR/MWh paid (upward) or refunded (downward) on activation.
    pub activation_price: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationBid {
    pub actor: ActorId,
    /// First covered period (zero-based).
    pub start: usize,
    /// Number of covered periods; even and at least 2.
    pub length: usize,
    /// Modulation amplitude `F` in MW.
    pub amplitude: f64,
    pub activation_price: f64,
    pub efficiency: f64,
}

impl ModulationBid {
    pub fn periods(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.length
    }

    pub fn covers(&self, t: usize) -> bool {
        self.periods().contains(&t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservePrices {
    pub capacity_up: f64,
    pub capacity_down: f64,
    pub capacity_modulation: f64,
    pub non_contracted: f64,
}

impl From<&MarketParams> for ReservePrices {
    fn from(p: &MarketParams) -> Self {
        Self {
            capacity_up: p.capacity_price_up,
            capacity_down: p.capacity_price_down,
            capacity_modulation: p.modulation_price,
            non_contracted: p.non_contracted_price,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReserveProcurement {
    /// Acceptance share of each classical bid, aligned with the input.
    pub classical: Vec<f64>,
    /// Acceptance share of each modulation bid, aligned with the input.
    pub modulation: Vec<f64>,
    pub surplus_up: Vec<f64>,
    pub surplus_down: Vec<f64>,
    pub shortfall_up: Vec<f64>,
    pub shortfall_down: Vec<f64>,
    /// Over-contracting penalty `c^o_t` used for each period.
    pub over_contract_penalty: Vec<f64>,
    /// Optimal objective: reservation, assumed activation, slack and shortfall costs.
    pub total_cost: f64,
    /// Capacity payments alone (what the operator pays to reserve the capacity).
    pub reservation_cost: f64,
}

/// `c^o_t` for one period: 1.1 times the dearest downward activation price of
/// the period. With no downward bid, 1.1 times `fallback` (the dearest
/// activation price seen that day, or the non-contracted price).
pub fn over_contract_penalty(downward_prices: &[f64], fallback: f64) -> f64 {
    let base = downward_prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    OVER_CONTRACT_FACTOR * if base.is_finite() { base } else { fallback }
}

/// Per-period `c^o_t` for a set of classical bids.
pub fn over_contract_penalties(classical: &[ClassicalReserveBid], periods: usize, non_contracted: f64) -> Vec<f64> {
    let day_max = classical
        .iter()
        .map(|b| b.activation_price)
        .fold(f64::NEG_INFINITY, f64::max);
    let fallback = if day_max.is_finite() { day_max } else { non_contracted };
    (0..periods)
        .map(|t| {
            let prices: Vec<f64> = classical
                .iter()
                .filter(|b| b.period == t && b.direction == Direction::Down)
                .map(|b| b.activation_price)
                .collect();
            over_contract_penalty(&prices, fallback)
        })
        .collect()
}

pub fn validate_bids(classical: &[ClassicalReserveBid], modulation: &[ModulationBid], periods: usize) -> Result<()> {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    let efficiency_ok = |z: f64| z > 0.0 && z <= 1.0;
    for (index, b) in classical.iter().enumerate() {
        let reason = if b.period >= periods {
            Some(format!("period {} outside horizon", b.period))
        } else if !positive(b.volume) {
            Some(format!("volume {} must be positive", b.volume))
        } else if !b.activation_price.is_finite() {
            Some("non-finite activation price".to_string())
        } else if !efficiency_ok(b.efficiency) {
            Some(format!("efficiency {} outside (0, 1]", b.efficiency))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(Error::InvalidBid { index, reason });
        }
    }
    for (k, b) in modulation.iter().enumerate() {
        let index = classical.len() + k;
        let reason = if b.length < 2 || b.length % 2 != 0 {
            Some(format!("length {} must be even and at least 2", b.length))
        } else if b.start + b.length > periods {
            Some(format!("periods {}..{} outside horizon", b.start, b.start + b.length))
        } else if !(b.amplitude.is_finite() && b.amplitude >= 0.0) {
            Some(format!("amplitude {} must be non-negative", b.amplitude))
        } else if !efficiency_ok(b.efficiency) {
            Some(format!("efficiency {} outside (0, 1]", b.efficiency))
        } else if modulation[..k]
            .iter()
            .any(|o| o.actor == b.actor && o.start < b.start + b.length && b.start < o.start + o.length)
        {
            Some("overlaps another modulation bid of the same actor".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(Error::InvalidBid { index, reason });
        }
    }
    Ok(())
}

/// Clears the reserve market for one day.
pub fn clear_reserve(
    classical: &[ClassicalReserveBid],
    modulation: &[ModulationBid],
    requirement_up: &[f64],
    requirement_down: &[f64],
    prices: &ReservePrices,
) -> Result<ReserveProcurement> {
    let periods = requirement_up.len();
    if requirement_down.len() != periods {
        return Err(Error::Precondition("requirement vectors differ in length".into()));
    }
    if requirement_up.iter().chain(requirement_down).any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::Precondition("reserve requirements must be non-negative".into()));
    }
    if [prices.capacity_up, prices.capacity_down, prices.capacity_modulation, prices.non_contracted]
        .iter()
        .any(|p| !(p.is_finite() && *p >= 0.0))
    {
        return Err(Error::Precondition("reserve prices must be non-negative".into()));
    }
    validate_bids(classical, modulation, periods)?;

    let penalty = over_contract_penalties(classical, periods, prices.non_contracted);
    let mut lp = LinearProgram::new(Sense::Minimize);
    let xc: Vec<VarId> = classical
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let unit = match b.direction {
                Direction::Up => prices.capacity_up + b.activation_price,
                Direction::Down => prices.capacity_down - b.activation_price,
            };
            lp.add_var(format!("x_c{i}"), 0.0, 1.0, unit * b.volume)
        })
        .collect();
    let xm: Vec<VarId> = modulation
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let unit = prices.capacity_modulation + b.activation_price;
            lp.add_var(format!("x_m{i}"), 0.0, 1.0, unit * b.amplitude)
        })
        .collect();
    let mut slack = Vec::with_capacity(periods);
    for t in 0..periods {
        let s_up = lp.add_var(format!("s_up{t}"), 0.0, f64::INFINITY, penalty[t]);
        let s_dn = lp.add_var(format!("s_dn{t}"), 0.0, f64::INFINITY, penalty[t]);
        let n_up = lp.add_var(format!("n_up{t}"), 0.0, f64::INFINITY, prices.non_contracted);
        let n_dn = lp.add_var(format!("n_dn{t}"), 0.0, f64::INFINITY, prices.non_contracted);
        for (dir, s, n, req) in [
            (Direction::Up, s_up, n_up, requirement_up[t]),
            (Direction::Down, s_dn, n_dn, requirement_down[t]),
        ] {
            let mut terms: Vec<(VarId, f64)> = classical
                .iter()
                .zip(&xc)
                .filter(|(b, _)| b.period == t && b.direction == dir)
                .map(|(b, &x)| (x, b.volume * b.efficiency))
                .collect();
            terms.extend(
                modulation
                    .iter()
                    .zip(&xm)
                    .filter(|(b, _)| b.covers(t))
                    .map(|(b, &x)| (x, b.amplitude * b.efficiency)),
            );
            terms.push((n, 1.0));
            terms.push((s, -1.0));
            lp.add_constraint(terms, Relation::Eq, req);
        }
        slack.push([s_up, s_dn, n_up, n_dn]);
    }

    let sol = lp.solve()?;
    if sol.status != Status::Optimal {
        return Err(Error::Solve {
            model: "reserve clearing",
            status: sol.status,
        });
    }
    let classical_x: Vec<f64> = xc.iter().map(|&v| sol[v].clamp(0.0, 1.0)).collect();
    let modulation_x: Vec<f64> = xm.iter().map(|&v| sol[v].clamp(0.0, 1.0)).collect();
    let pick = |k: usize| slack.iter().map(|s| sol[s[k]].max(0.0)).collect::<Vec<_>>();

    let reservation_cost = classical
        .iter()
        .zip(&classical_x)
        .map(|(b, x)| {
            let price = match b.direction {
                Direction::Up => prices.capacity_up,
                Direction::Down => prices.capacity_down,
            };
            price * b.volume * x
        })
        .sum::<f64>()
        + modulation
            .iter()
            .zip(&modulation_x)
            .map(|(b, x)| prices.capacity_modulation * b.amplitude * x)
            .sum::<f64>();

    Ok(ReserveProcurement {
        surplus_up: pick(0),
        surplus_down: pick(1),
        shortfall_up: pick(2),
        shortfall_down: pick(3),
        classical: classical_x,
        modulation: modulation_x,
        over_contract_penalty: penalty,
        total_cost: sol.objective,
        reservation_cost,
    })
}

impl ReserveProcurement {
    /// Effective contracted volume per period and direction (efficiency applied).
    pub fn contracted_effective(
        &self,
        classical: &[ClassicalReserveBid],
        modulation: &[ModulationBid],
        periods: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut up = vec![0.0; periods];
        let mut down = vec![0.0; periods];
        for (b, x) in classical.iter().zip(&self.classical) {
            let v = b.volume * b.efficiency * x;
            match b.direction {
                Direction::Up => up[b.period] += v,
                Direction::Down => down[b.period] += v,
            }
        }
        for (b, x) in modulation.iter().zip(&self.modulation) {
            for t in b.periods() {
                up[t] += b.amplitude * b.efficiency * x;
                down[t] += b.amplitude * b.efficiency * x;
            }
        }
        (up, down)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ClassicalRow {
    pub actor: ActorId,
    pub period: usize,
    pub dir: Direction,
    pub q_mw: f64,
    pub c_act: f64,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ModulationRow {
    pub actor: ActorId,
    pub tau: usize,
    pub n: usize,
    pub f_mw: f64,
    pub c_act: f64,
    pub zeta: f64,
}

/// Classical bids as CSV (`actor,period,dir,q_mw,c_act`, periods 1-based).
pub fn write_classical_csv<W: Write>(bids: &[ClassicalReserveBid], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for b in bids {
        wtr.serialize(ClassicalRow {
            actor: b.actor,
            period: b.period + 1,
            dir: b.direction,
            q_mw: b.volume,
            c_act: b.activation_price,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_classical_csv<R: std::io::Read>(r: R) -> Result<Vec<ClassicalReserveBid>> {
    csv::Reader::from_reader(r)
        .deserialize::<ClassicalRow>()
        .map(|row| {
            let row = row?;
            Ok(ClassicalReserveBid {
                actor: row.actor,
                period: row.period.checked_sub(1).ok_or_else(|| Error::Parse("period 0".into()))?,
                direction: row.dir,
                volume: row.q_mw,
                activation_price: row.c_act,
                efficiency: 1.0,
            })
        })
        .collect()
}

/// Modulation bids as CSV (`actor,tau,n,f_mw,c_act,zeta`, `tau` 1-based).
pub fn write_modulation_csv<W: Write>(bids: &[ModulationBid], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for b in bids {
        wtr.serialize(ModulationRow {
            actor: b.actor,
            tau: b.start + 1,
            n: b.length,
            f_mw: b.amplitude,
            c_act: b.activation_price,
            zeta: b.efficiency,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_modulation_csv<R: std::io::Read>(r: R) -> Result<Vec<ModulationBid>> {
    csv::Reader::from_reader(r)
        .deserialize::<ModulationRow>()
        .map(|row| {
            let row = row?;
            Ok(ModulationBid {
                actor: row.actor,
                start: row.tau.checked_sub(1).ok_or_else(|| Error::Parse("tau 0".into()))?,
                length: row.n,
                amplitude: row.f_mw,
                activation_price: row.c_act,
                efficiency: row.zeta,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ProcurementRow {
    kind: &'static str,
    index: usize,
    period: Option<usize>,
    value: f64,
}

/// Procurement result as CSV (`kind,index,period,value`): one row per bid
/// acceptance and one per period slack/shortfall value.
pub fn write_procurement_csv<W: Write>(p: &ReserveProcurement, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (i, x) in p.classical.iter().enumerate() {
        wtr.serialize(ProcurementRow { kind: "classical", index: i, period: None, value: *x })?;
    }
    for (i, x) in p.modulation.iter().enumerate() {
        wtr.serialize(ProcurementRow { kind: "modulation", index: i, period: None, value: *x })?;
    }
    for (kind, series) in [
        ("surplus_up", &p.surplus_up),
        ("surplus_down", &p.surplus_down),
        ("shortfall_up", &p.shortfall_up),
        ("shortfall_down", &p.shortfall_down),
        ("over_contract_penalty", &p.over_contract_penalty),
    ] {
        for (t, v) in series.iter().enumerate() {
            wtr.serialize(ProcurementRow { kind, index: t, period: Some(t + 1), value: *v })?;
        }
    }
    wtr.serialize(ProcurementRow { kind: "total_cost", index: 0, period: None, value: p.total_cost })?;
    wtr.serialize(ProcurementRow { kind: "reservation_cost", index: 0, period: None, value: p.reservation_cost })?;
    wtr.flush()?;
    Ok(())
}
