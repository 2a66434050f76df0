use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forecast::PriceForecast;
use super::retailer::{retailer_with_modulation, BidSlot, RetailerFixed, RetailerPortfolio};
use super::tank::TankLoad;
use super::ActorPosition;
use crate::error::{Error, Result};
use crate::params::MarketParams;
use crate::types::ActorId;

const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub samples: usize,
    pub failures: usize,
    /// First schedule that broke a limit, with the reason.
    pub counterexample: Option<(Vec<f64>, String)>,
}

impl CoverageReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Per-period envelope `[lo, hi]` of one slot, checked against its ordering.
fn envelope(slot: &BidSlot, baseline: &[f64], up: &[f64], down: &[f64]) -> Result<Vec<(f64, f64)>> {
    let half = slot.length / 2;
    let range = slot.start..slot.start + slot.length;
    let mut out = Vec::with_capacity(slot.length);
    for (j, t) in range.clone().enumerate() {
        let (lo, hi) = if j < half { (down[t], up[t]) } else { (up[t], down[t]) };
        if lo > hi + TOL || baseline[t] < lo - TOL || baseline[t] > hi + TOL {
            return Err(Error::Precondition(format!(
                "period {}: baseline {} not inside scenario envelope [{lo}, {hi}]",
                t + 1,
                baseline[t]
            )));
        }
        out.push((lo, hi.max(lo)));
    }
    let sum = |s: &[f64]| s[range.clone()].iter().sum::<f64>();
    let base = sum(baseline);
    if (sum(up) - base).abs() > TOL * slot.length as f64 || (sum(down) - base).abs() > TOL * slot.length as f64 {
        return Err(Error::Precondition(format!(
            "slot starting in period {}: scenarios do not preserve the baseline energy",
            slot.start + 1
        )));
    }
    Ok(out)
}

/// Uniform draw inside the envelope, then moved towards one side so that the
/// slot consumes exactly `target`.
fn draw(rng: &mut ChaCha8Rng, env: &[(f64, f64)], target: f64) -> Vec<f64> {
    let mut d: Vec<f64> = env.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect();
    let gap = target - d.iter().sum::<f64>();
    let room: Vec<f64> = d
        .iter()
        .zip(env)
        .map(|(&v, &(lo, hi))| if gap > 0.0 { hi - v } else { v - lo })
        .collect();
    let total: f64 = room.iter().sum();
    if total > 0.0 {
        let share = (gap.abs() / total).min(1.0);
        for (v, r) in d.iter_mut().zip(&room) {
            *v += gap.signum() * r * share;
        }
    }
    d
}

/// Samples activation schedules inside the scenario envelopes of every slot
/// and checks each against the load's limits.
pub fn verify_scenario_coverage(
    load: &TankLoad,
    baseline: &[f64],
    up: &[f64],
    down: &[f64],
    grid: &[BidSlot],
    samples: usize,
    seed: u64,
) -> Result<CoverageReport> {
    let periods = load.periods();
    if baseline.len() != periods || up.len() != periods || down.len() != periods {
        return Err(Error::Precondition("schedules must cover the whole horizon".into()));
    }
    for (name, s) in [("baseline", baseline), ("up scenario", up), ("down scenario", down)] {
        if let Err(why) = load.check_schedule(s, TOL) {
            return Err(Error::Precondition(format!("{name} infeasible: {why}")));
        }
    }
    let envelopes: Vec<Vec<(f64, f64)>> = grid.iter().map(|s| envelope(s, baseline, up, down)).collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CoverageReport {
        samples,
        failures: 0,
        counterexample: None,
    };
    for _ in 0..samples {
        let mut d = baseline.to_vec();
        for (slot, env) in grid.iter().zip(&envelopes) {
            let range = slot.start..slot.start + slot.length;
            let target: f64 = baseline[range.clone()].iter().sum();
            d[range].copy_from_slice(&draw(&mut rng, env, target));
        }
        let verdict = load.check_schedule(&d, TOL).and_then(|_| {
            let e = load.trajectory(&d);
            let base = load.trajectory(baseline);
            grid.iter()
                .map(|s| s.start + s.length)
                .find(|&end| (e[end] - base[end]).abs() > TOL)
                .map_or(Ok(()), |end| Err(format!("energy after period {end} differs from the baseline")))
        });
        if let Err(why) = verdict {
            report.failures += 1;
            if report.counterexample.is_none() {
                report.counterexample = Some((d, why));
            }
        }
    }
    Ok(report)
}

/// Solves the modulation model for a retailer holding only `load` and checks
/// the resulting scenarios. Returns the position so callers can see how much
/// modulation was offered.
pub fn verify_load_coverage(
    load: &TankLoad,
    params: &MarketParams,
    fc: &PriceForecast,
    grid: &[BidSlot],
    samples: usize,
    seed: u64,
) -> Result<(CoverageReport, ActorPosition)> {
    let port = RetailerPortfolio::new(ActorId(0), vec![0.0; params.periods], vec![load.clone()]);
    let pos = retailer_with_modulation(&port, params, fc, grid, RetailerFixed::default())?;
    let report = verify_scenario_coverage(
        load,
        &pos.schedules[0],
        &pos.scenario_up[0],
        &pos.scenario_down[0],
        grid,
        samples,
        seed,
    )?;
    Ok((report, pos))
}
