//! Imbalance settlement.
//!
//! Knowing the system imbalance of every period, the operator activates its
//! contracted reserves at least cost; any remainder is met with
//! non-contracted reserve. Tariffs follow from what was activated.
//!
//! Sign conventions: `I_t > 0` is a system surplus and calls for downward
//! activation, `I_t < 0` a deficit calling for upward activation. An actor
//! that is short (`I-`) leans on upward activation and pays the upward
//! tariff; an actor that is long (`I+`) pays the downward tariff.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, Sense, Status, VarId};
use crate::reserve::{ClassicalReserveBid, ModulationBid, ReserveProcurement};
use crate::types::Direction;

/// Activated energy below this is treated as no activation when pricing.
pub const ACTIVATION_TOL: f64 = 1e-7;

/// Reserves the operator holds for the day, with volumes already scaled by
/// their acceptance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractedReserves {
    pub classical: Vec<ClassicalReserveBid>,
    pub modulation: Vec<ModulationBid>,
    /// `c^o_t` from the clearing, reused to price downward activation.
    pub over_contract_penalty: Vec<f64>,
}

impl ContractedReserves {
    pub fn from_procurement(
        classical: &[ClassicalReserveBid],
        modulation: &[ModulationBid],
        procurement: &ReserveProcurement,
    ) -> Self {
        let classical = classical
            .iter()
            .zip(&procurement.classical)
            .filter(|(b, x)| b.volume * **x > 1e-9)
            .map(|(b, x)| ClassicalReserveBid {
                volume: b.volume * x,
                ..b.clone()
            })
            .collect();
        let modulation = modulation
            .iter()
            .zip(&procurement.modulation)
            .filter(|(b, x)| b.amplitude * **x > 1e-9)
            .map(|(b, x)| ModulationBid {
                amplitude: b.amplitude * x,
                ..b.clone()
            })
            .collect();
        Self {
            classical,
            modulation,
            over_contract_penalty: procurement.over_contract_penalty.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlementResult {
    pub imbalance: Vec<f64>,
    /// Activation share of each contracted classical bid.
    pub classical: Vec<f64>,
    /// Per contracted modulation bid, upward activation for each covered period.
    pub modulation_up: Vec<Vec<f64>>,
    pub modulation_down: Vec<Vec<f64>>,
    pub non_contracted_up: Vec<f64>,
    pub non_contracted_down: Vec<f64>,
    /// Energy activated upward per period, contracted bids only.
    pub activated_up: Vec<f64>,
    pub activated_down: Vec<f64>,
    /// Price paid by actors that are short.
    pub tariff_up: Vec<f64>,
    /// Price paid by actors that are long.
    pub tariff_down: Vec<f64>,
    pub cost: f64,
}

impl SettlementResult {
    pub fn non_contracted_volume(&self) -> f64 {
        self.non_contracted_up.iter().chain(&self.non_contracted_down).sum()
    }
}

/// Solves the activation problem for one day and prices the result.
pub fn settle(imbalance: &[f64], contracted: &ContractedReserves, non_contracted_price: f64) -> Result<SettlementResult> {
    let periods = imbalance.len();
    if imbalance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("imbalance must be finite".into()));
    }
    if contracted.over_contract_penalty.len() != periods {
        return Err(Error::Precondition(format!(
            "{} over-contract penalties for {periods} periods",
            contracted.over_contract_penalty.len()
        )));
    }
    if contracted.classical.iter().any(|b| b.period >= periods)
        || contracted.modulation.iter().any(|b| b.start + b.length > periods)
    {
        return Err(Error::Precondition("contracted bid outside horizon".into()));
    }

    let mut lp = LinearProgram::new(Sense::Minimize);
    let x: Vec<VarId> = contracted
        .classical
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let unit = match b.direction {
                Direction::Up => b.activation_price,
                Direction::Down => contracted.over_contract_penalty[b.period] - b.activation_price,
            };
            lp.add_var(format!("x{i}"), 0.0, 1.0, unit * b.volume)
        })
        .collect();
    let mut vw: Vec<Vec<(VarId, VarId)>> = Vec::with_capacity(contracted.modulation.len());
    for (i, b) in contracted.modulation.iter().enumerate() {
        let unit = b.activation_price * b.amplitude;
        let pairs: Vec<(VarId, VarId)> = b
            .periods()
            .map(|t| {
                (
                    lp.add_var(format!("v{i}_{t}"), 0.0, 1.0, unit),
                    lp.add_var(format!("w{i}_{t}"), 0.0, 1.0, unit),
                )
            })
            .collect();
        let neutral: Vec<(VarId, f64)> = pairs.iter().flat_map(|&(v, w)| [(v, 1.0), (w, -1.0)]).collect();
        lp.add_constraint(neutral, Relation::Eq, 0.0);
        vw.push(pairs);
    }
    let y: Vec<(VarId, VarId)> = (0..periods)
        .map(|t| {
            (
                lp.add_var(format!("y_up{t}"), 0.0, f64::INFINITY, non_contracted_price),
                lp.add_var(format!("y_dn{t}"), 0.0, f64::INFINITY, non_contracted_price),
            )
        })
        .collect();
    for t in 0..periods {
        let mut terms: Vec<(VarId, f64)> = contracted
            .classical
            .iter()
            .zip(&x)
            .filter(|(b, _)| b.period == t)
            .map(|(b, &v)| {
                let sign = if b.direction == Direction::Up { 1.0 } else { -1.0 };
                (v, sign * b.volume)
            })
            .collect();
        for (b, pairs) in contracted.modulation.iter().zip(&vw) {
            if b.covers(t) {
                let (v, w) = pairs[t - b.start];
                terms.push((v, b.amplitude));
                terms.push((w, -b.amplitude));
            }
        }
        terms.push((y[t].0, 1.0));
        terms.push((y[t].1, -1.0));
        lp.add_constraint(terms, Relation::Eq, -imbalance[t]);
    }

    let sol = lp.solve()?;
    if sol.status != Status::Optimal {
        return Err(Error::Solve {
            model: "imbalance settlement",
            status: sol.status,
        });
    }

    let classical: Vec<f64> = x.iter().map(|&v| sol[v].clamp(0.0, 1.0)).collect();
    let modulation_up: Vec<Vec<f64>> = vw.iter().map(|p| p.iter().map(|&(v, _)| sol[v].clamp(0.0, 1.0)).collect()).collect();
    let modulation_down: Vec<Vec<f64>> = vw.iter().map(|p| p.iter().map(|&(_, w)| sol[w].clamp(0.0, 1.0)).collect()).collect();
    let non_contracted_up: Vec<f64> = y.iter().map(|&(u, _)| sol[u].max(0.0)).collect();
    let non_contracted_down: Vec<f64> = y.iter().map(|&(_, d)| sol[d].max(0.0)).collect();

    let mut activated_up = vec![0.0; periods];
    let mut activated_down = vec![0.0; periods];
    let mut dearest_up: Vec<Option<f64>> = vec![None; periods];
    let mut dearest_down: Vec<Option<f64>> = vec![None; periods];
    let record = |slot: &mut Option<f64>, price: f64| *slot = Some(slot.map_or(price, |p: f64| p.max(price)));
    for (b, &share) in contracted.classical.iter().zip(&classical) {
        let energy = b.volume * share;
        let (sum, dearest) = match b.direction {
            Direction::Up => (&mut activated_up, &mut dearest_up),
            Direction::Down => (&mut activated_down, &mut dearest_down),
        };
        sum[b.period] += energy;
        if energy > ACTIVATION_TOL {
            record(&mut dearest[b.period], b.activation_price);
        }
    }
    for (k, b) in contracted.modulation.iter().enumerate() {
        for (j, t) in b.periods().enumerate() {
            let up = b.amplitude * modulation_up[k][j];
            let down = b.amplitude * modulation_down[k][j];
            activated_up[t] += up;
            activated_down[t] += down;
            if up > ACTIVATION_TOL {
                record(&mut dearest_up[t], b.activation_price);
            }
            if down > ACTIVATION_TOL {
                record(&mut dearest_down[t], b.activation_price);
            }
        }
    }
    let tariff = |y: &[f64], dearest: &[Option<f64>]| -> Vec<f64> {
        y.iter()
            .zip(dearest)
            .map(|(&y, d)| if y > ACTIVATION_TOL { non_contracted_price } else { d.unwrap_or(0.0) })
            .collect()
    };
    let tariff_up = tariff(&non_contracted_up, &dearest_up);
    let tariff_down = tariff(&non_contracted_down, &dearest_down);

    Ok(SettlementResult {
        imbalance: imbalance.to_vec(),
        classical,
        modulation_up,
        modulation_down,
        non_contracted_up,
        non_contracted_down,
        activated_up,
        activated_down,
        tariff_up,
        tariff_down,
        cost: sol.objective,
    })
}

/// Imbalance prices from the actors' point of view.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceTariffs {
    /// `π^{I+}_t`, charged on long positions.
    pub plus: Vec<f64>,
    /// `π^{I-}_t`, charged on short positions.
    pub minus: Vec<f64>,
}

pub fn tariffs(result: &SettlementResult) -> ImbalanceTariffs {
    ImbalanceTariffs {
        plus: result.tariff_down.clone(),
        minus: result.tariff_up.clone(),
    }
}

/// An actor's per-period long (`plus`) and short (`minus`) deviations in MW.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActorImbalance {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

/// Fee owed by each actor, in euros, over the day.
pub fn fees(tariffs: &ImbalanceTariffs, imbalances: &[ActorImbalance], period_hours: f64) -> Vec<f64> {
    imbalances
        .iter()
        .map(|a| {
            let long: f64 = a.plus.iter().zip(&tariffs.plus).map(|(i, p)| i * p).sum();
            let short: f64 = a.minus.iter().zip(&tariffs.minus).map(|(i, p)| i * p).sum();
            (long + short) * period_hours
        })
        .collect()
}

/// System imbalance `I_t = Σ (I+ - I-)` over actors.
pub fn system_imbalance(imbalances: &[ActorImbalance], periods: usize) -> Vec<f64> {
    (0..periods)
        .map(|t| imbalances.iter().map(|a| a.plus[t] - a.minus[t]).sum())
        .collect()
}

#[derive(Serialize)]
struct SettlementRow {
    period: usize,
    #[serde(rename = "I_t")]
    imbalance: f64,
    activated_up: f64,
    activated_down: f64,
    y_up: f64,
    y_down: f64,
    tariff_up: f64,
    tariff_down: f64,
}

pub fn write_settlement_csv<W: Write>(r: &SettlementResult, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in 0..r.imbalance.len() {
        wtr.serialize(SettlementRow {
            period: t + 1,
            imbalance: r.imbalance[t],
            activated_up: r.activated_up[t],
            activated_down: r.activated_down[t],
            y_up: r.non_contracted_up[t],
            y_down: r.non_contracted_down[t],
            tariff_up: r.tariff_up[t],
            tariff_down: r.tariff_down[t],
        })?;
    }
    wtr.flush()?;
    Ok(())
}
