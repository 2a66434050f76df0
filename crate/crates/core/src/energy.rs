//! Day-ahead energy market with uniform per-period pricing.
//!
//! Each period is cleared independently. Supply offers are stacked in
//! ascending price order and demand offers in descending order; the market
//! clearing price (MCP) is where the two step curves meet. Offers priced
//! exactly at the MCP share the marginal volume pro rata. If demand willing to
//! pay the cap exceeds all supply, the price is the cap and demand at the cap
//! is rationed pro rata.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ActorId, Side};

/// Slack used when comparing cumulative volumes.
const VOLUME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyOffer {
    pub actor: ActorId,
    /// Zero-based period index.
    pub period: usize,
    pub side: Side,
    /// MW, strictly positive.
    pub volume: f64,
    /// Limit price (EUR/MWh) in `[0, price_cap]`.
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodClearing {
    pub price: f64,
    pub volume: f64,
    /// No offers at all in this period: price and volume are reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingResult {
    pub periods: Vec<PeriodClearing>,
    /// Accepted share of each offer, aligned with the input slice.
    pub fractions: Vec<f64>,
}

impl ClearingResult {
    pub fn prices(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.price).collect()
    }

    /// Per-period volume cleared for `actor` on `side`.
    pub fn cleared_for(&self, offers: &[EnergyOffer], actor: ActorId, side: Side) -> Vec<f64> {
        let mut out = vec![0.0; self.periods.len()];
        for (o, f) in offers.iter().zip(&self.fractions) {
            if o.actor == actor && o.side == side {
                out[o.period] += o.volume * f;
            }
        }
        out
    }

    /// Per-period accepted volume on one side, across all actors.
    pub fn accepted_volume(&self, offers: &[EnergyOffer], side: Side) -> Vec<f64> {
        let mut out = vec![0.0; self.periods.len()];
        for (o, f) in offers.iter().zip(&self.fractions) {
            if o.side == side {
                out[o.period] += o.volume * f;
            }
        }
        out
    }
}

pub fn validate_offers(offers: &[EnergyOffer], periods: usize, price_cap: f64) -> Result<()> {
    for (index, o) in offers.iter().enumerate() {
        let reason = if o.period >= periods {
            Some(format!("period {} outside horizon of {periods}", o.period))
        } else if !(o.volume.is_finite() && o.volume > 0.0) {
            Some(format!("volume {} must be positive", o.volume))
        } else if !(o.price.is_finite() && o.price >= 0.0 && o.price <= price_cap) {
            Some(format!("price {} outside [0, {price_cap}]", o.price))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(Error::InvalidOffer { index, reason });
        }
    }
    Ok(())
}

/// Clears every period of the day.
pub fn clear(offers: &[EnergyOffer], periods: usize, price_cap: f64) -> Result<ClearingResult> {
    if periods == 0 {
        return Err(Error::Precondition("energy market needs at least one period".into()));
    }
    validate_offers(offers, periods, price_cap)?;

    let mut by_period: Vec<Vec<usize>> = vec![Vec::new(); periods];
    for (i, o) in offers.iter().enumerate() {
        by_period[o.period].push(i);
    }
    let mut fractions = vec![0.0; offers.len()];
    let outcomes = by_period
        .iter()
        .map(|idx| clear_period(offers, idx, price_cap, &mut fractions))
        .collect();
    Ok(ClearingResult {
        periods: outcomes,
        fractions,
    })
}

struct Stack {
    prices: Vec<f64>,
    /// `cumulative[k]` = volume of the first `k` offers in stack order.
    cumulative: Vec<f64>,
}

impl Stack {
    fn new(mut entries: Vec<(f64, f64)>, ascending: bool) -> Self {
        entries.sort_by(|a, b| {
            let o = a.0.total_cmp(&b.0);
            if ascending {
                o
            } else {
                o.reverse()
            }
        });
        let mut cumulative = Vec::with_capacity(entries.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for &(_, v) in &entries {
            acc += v;
            cumulative.push(acc);
        }
        Self {
            prices: entries.into_iter().map(|e| e.0).collect(),
            cumulative,
        }
    }

    /// Volume of offers strictly ahead of price `p` and up to and including `p`.
    fn split(&self, p: f64, ascending: bool) -> (f64, f64) {
        let ahead = if ascending {
            self.prices.partition_point(|&x| x < p)
        } else {
            self.prices.partition_point(|&x| x > p)
        };
        let through = if ascending {
            self.prices.partition_point(|&x| x <= p)
        } else {
            self.prices.partition_point(|&x| x >= p)
        };
        (self.cumulative[ahead], self.cumulative[through])
    }
}

fn clear_period(offers: &[EnergyOffer], idx: &[usize], price_cap: f64, fractions: &mut [f64]) -> PeriodClearing {
    if idx.is_empty() {
        return PeriodClearing {
            price: 0.0,
            volume: 0.0,
            undefined: true,
        };
    }
    let supply = Stack::new(
        idx.iter()
            .filter(|&&i| offers[i].side == Side::Supply)
            .map(|&i| (offers[i].price, offers[i].volume))
            .collect(),
        true,
    );
    let demand = Stack::new(
        idx.iter()
            .filter(|&&i| offers[i].side == Side::Demand)
            .map(|&i| (offers[i].price, offers[i].volume))
            .collect(),
        false,
    );

    let mut levels: Vec<f64> = idx.iter().map(|&i| offers[i].price).collect();
    levels.push(0.0);
    levels.push(price_cap);
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    // Walk price levels upwards; keep the lowest level clearing the most volume.
    let mut best: Option<(f64, f64)> = None;
    for &p in &levels {
        let (s_below, s_through) = supply.split(p, true);
        let (d_above, d_through) = demand.split(p, false);
        let clears = d_above <= s_through + VOLUME_EPS && s_below <= d_through + VOLUME_EPS;
        if !clears {
            continue;
        }
        let volume = s_through.min(d_through);
        if best.is_none_or(|(_, v)| volume > v + VOLUME_EPS) {
            best = Some((p, volume));
        }
    }
    // The lowest level with no excess demand always clears.
    let (price, volume) = best.expect("step curves always meet at some level");

    let (s_below, s_through) = supply.split(price, true);
    let (d_above, d_through) = demand.split(price, false);
    let marginal = |below: f64, through: f64| {
        if through - below > 0.0 {
            ((volume - below) / (through - below)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let supply_share = marginal(s_below, s_through);
    let demand_share = marginal(d_above, d_through);
    for &i in idx {
        let o = &offers[i];
        fractions[i] = match o.side {
            Side::Supply if o.price < price => 1.0,
            Side::Supply if o.price == price => supply_share,
            Side::Demand if o.price > price => 1.0,
            Side::Demand if o.price == price => demand_share,
            _ => 0.0,
        };
    }
    PeriodClearing {
        price,
        volume,
        undefined: false,
    }
}

#[derive(Serialize, Deserialize)]
struct OfferRow {
    actor: ActorId,
    period: usize,
    side: Side,
    volume_mw: f64,
    price_eur_mwh: f64,
}

/// Offers as CSV (`actor,period,side,volume_mw,price_eur_mwh`, periods 1-based).
pub fn write_offers_csv<W: Write>(offers: &[EnergyOffer], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for o in offers {
        wtr.serialize(OfferRow {
            actor: o.actor,
            period: o.period + 1,
            side: o.side,
            volume_mw: o.volume,
            price_eur_mwh: o.price,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_offers_csv<R: Read>(r: R) -> Result<Vec<EnergyOffer>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<OfferRow>()
        .map(|row| {
            let row = row?;
            if row.period == 0 {
                return Err(Error::Parse("periods are numbered from 1".into()));
            }
            Ok(EnergyOffer {
                actor: row.actor,
                period: row.period - 1,
                side: row.side,
                volume: row.volume_mw,
                price: row.price_eur_mwh,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ClearingRow {
    period: usize,
    mcp: f64,
    offer_id: Option<usize>,
    fraction: Option<f64>,
}

/// Clearing outcome as CSV (`period,mcp,offer_id,fraction`). Periods without
/// offers get one row with empty `offer_id`.
pub fn write_clearing_csv<W: Write>(offers: &[EnergyOffer], result: &ClearingResult, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (t, p) in result.periods.iter().enumerate() {
        let mut any = false;
        for (i, o) in offers.iter().enumerate() {
            if o.period == t {
                any = true;
                wtr.serialize(ClearingRow {
                    period: t + 1,
                    mcp: p.price,
                    offer_id: Some(i),
                    fraction: Some(result.fractions[i]),
                })?;
            }
        }
        if !any {
            wtr.serialize(ClearingRow {
                period: t + 1,
                mcp: p.price,
                offer_id: None,
                fraction: None,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAP: f64 = 3000.0;

    fn offer(actor: u32, side: Side, volume: f64, price: f64) -> EnergyOffer {
        EnergyOffer {
            actor: ActorId(actor),
            period: 0,
            side,
            volume,
            price,
        }
    }

    #[test]
    fn single_crossing() {
        let offers = [offer(1, Side::Supply, 100.0, 50.0), offer(2, Side::Demand, 100.0, CAP)];
        let r = clear(&offers, 1, CAP).unwrap();
        assert_eq!(r.periods[0].price, 50.0);
        assert_eq!(r.fractions, vec![1.0, 1.0]);
    }

    #[test]
    fn marginal_supply_partially_accepted() {
        let offers = [
            offer(1, Side::Supply, 50.0, 40.0),
            offer(2, Side::Supply, 50.0, 60.0),
            offer(3, Side::Demand, 75.0, CAP),
        ];
        let r = clear(&offers, 1, CAP).unwrap();
        assert_eq!(r.periods[0].price, 60.0);
        assert_eq!(r.periods[0].volume, 75.0);
        assert_eq!(r.fractions, vec![1.0, 0.5, 1.0]);
    }

    #[test]
    fn shortage_hits_cap_and_rations_demand() {
        let offers = [offer(1, Side::Supply, 100.0, 50.0), offer(2, Side::Demand, 120.0, CAP)];
        let r = clear(&offers, 1, CAP).unwrap();
        assert_eq!(r.periods[0].price, CAP);
        assert_eq!(r.fractions[0], 1.0);
        assert!((r.fractions[1] * 120.0 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rationing_is_pro_rata_among_marginal_demand() {
        let offers = [
            offer(1, Side::Supply, 90.0, 50.0),
            offer(2, Side::Demand, 60.0, CAP),
            offer(3, Side::Demand, 60.0, CAP),
        ];
        let r = clear(&offers, 1, CAP).unwrap();
        assert_eq!(r.fractions[1], 0.75);
        assert_eq!(r.fractions[2], 0.75);
    }

    #[test]
    fn empty_period_is_flagged() {
        let offers = [EnergyOffer {
            period: 1,
            ..offer(1, Side::Supply, 10.0, 20.0)
        }];
        let r = clear(&offers, 2, CAP).unwrap();
        assert!(r.periods[0].undefined);
        assert_eq!(r.periods[0].price, 0.0);
        assert!(!r.periods[1].undefined);
        assert_eq!(r.periods[1].volume, 0.0);
    }

    #[test]
    fn rejects_invalid_offers() {
        let bad = [offer(1, Side::Supply, 10.0, CAP + 1.0)];
        assert!(matches!(clear(&bad, 1, CAP), Err(Error::InvalidOffer { index: 0, .. })));
        let bad = [offer(1, Side::Demand, 0.0, 10.0)];
        assert!(clear(&bad, 1, CAP).is_err());
        assert!(clear(&[], 0, CAP).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let offers = vec![offer(1, Side::Supply, 12.5, 45.25), offer(7, Side::Demand, 3.0, CAP)];
        let mut buf = Vec::new();
        write_offers_csv(&offers, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("actor,period,side,volume_mw,price_eur_mwh"));
        assert_eq!(read_offers_csv(buf.as_slice()).unwrap(), offers);
    }
}
