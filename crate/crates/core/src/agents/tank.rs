use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, VarId};

/// A flexible load modelled as an energy tank.
///
/// Energy entries are indexed from the start of the day: `energy_min[0]`
/// bounds the initial level and `energy_min[T]` the level after the last
/// period, so they hold `T + 1` values while power and loss series hold `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankLoad {
    pub power_min: Vec<f64>,
    pub power_max: Vec<f64>,
    pub energy_min: Vec<f64>,
    pub energy_max: Vec<f64>,
    pub efficiency: f64,
    /// MWh lost during each period.
    pub losses: Vec<f64>,
    /// Bounds on energy drawn over the day, MWh.
    pub total_min: f64,
    pub total_max: f64,
    pub initial_energy: f64,
    pub period_hours: f64,
}

impl TankLoad {
    pub fn periods(&self) -> usize {
        self.power_min.len()
    }

    pub fn validate(&self, periods: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("tank load: {msg}")));
        if self.power_min.len() != periods || self.power_max.len() != periods || self.losses.len() != periods {
            return fail(format!("power and loss series must have {periods} entries"));
        }
        if self.energy_min.len() != periods + 1 || self.energy_max.len() != periods + 1 {
            return fail(format!("energy bounds must have {} entries", periods + 1));
        }
        let all = self
            .power_min
            .iter()
            .chain(&self.power_max)
            .chain(&self.energy_min)
            .chain(&self.energy_max)
            .chain(&self.losses)
            .chain([&self.total_min, &self.total_max, &self.initial_energy, &self.period_hours]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return fail("non-finite parameter".into());
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return fail(format!("efficiency {} outside (0, 1]", self.efficiency));
        }
        if self.period_hours <= 0.0 {
            return fail("period length must be positive".into());
        }
        for t in 0..periods {
            if self.power_min[t] > self.power_max[t] {
                return fail(format!("power bounds inverted in period {}", t + 1));
            }
        }
        for t in 0..=periods {
            if self.energy_min[t] > self.energy_max[t] {
                return fail(format!("energy bounds inverted at step {t}"));
            }
        }
        if self.total_min > self.total_max {
            return fail("total energy bounds inverted".into());
        }
        if self.initial_energy < self.energy_min[0] || self.initial_energy > self.energy_max[0] {
            return fail("initial energy outside its bounds".into());
        }
        Ok(())
    }

    /// Energy levels `e_1 .. e_{T+1}` reached by a power schedule.
    pub fn trajectory(&self, power: &[f64]) -> Vec<f64> {
        let mut e = Vec::with_capacity(power.len() + 1);
        e.push(self.initial_energy);
        for (t, d) in power.iter().enumerate() {
            let prev = e[t];
            e.push(prev - self.losses[t] + self.efficiency * d * self.period_hours);
        }
        e
    }

    /// First violated limit of a full-day schedule, if any.
    pub fn check_schedule(&self, power: &[f64], tol: f64) -> std::result::Result<(), String> {
        for (t, &d) in power.iter().enumerate() {
            if d < self.power_min[t] - tol || d > self.power_max[t] + tol {
                return Err(format!("power {d} outside [{}, {}] in period {}", self.power_min[t], self.power_max[t], t + 1));
            }
        }
        for (t, &e) in self.trajectory(power).iter().enumerate() {
            if e < self.energy_min[t] - tol || e > self.energy_max[t] + tol {
                return Err(format!("energy {e} outside [{}, {}] at step {t}", self.energy_min[t], self.energy_max[t]));
            }
        }
        let total: f64 = power.iter().sum::<f64>() * self.period_hours;
        if total < self.total_min - tol || total > self.total_max + tol {
            return Err(format!("total energy {total} outside [{}, {}]", self.total_min, self.total_max));
        }
        Ok(())
    }
}

/// LP variables of one tank: power per period and energy per step.
pub(crate) struct TankVars {
    pub d: Vec<VarId>,
    pub e: Vec<VarId>,
}

/// Adds power, energy, state-transition and daily-total constraints.
pub(crate) fn add_tank(lp: &mut LinearProgram, load: &TankLoad, tag: &str) -> TankVars {
    let periods = load.periods();
    let d: Vec<VarId> = (0..periods)
        .map(|t| lp.add_var(format!("{tag}_d{t}"), load.power_min[t], load.power_max[t], 0.0))
        .collect();
    let e: Vec<VarId> = (0..=periods)
        .map(|t| {
            if t == 0 {
                lp.add_var(format!("{tag}_e0"), load.initial_energy, load.initial_energy, 0.0)
            } else {
                lp.add_var(format!("{tag}_e{t}"), load.energy_min[t], load.energy_max[t], 0.0)
            }
        })
        .collect();
    let gain = load.efficiency * load.period_hours;
    for t in 0..periods {
        lp.add_constraint(vec![(e[t + 1], 1.0), (e[t], -1.0), (d[t], -gain)], Relation::Eq, -load.losses[t]);
    }
    let total: Vec<(VarId, f64)> = d.iter().map(|&v| (v, load.period_hours)).collect();
    if load.total_min == load.total_max {
        lp.add_constraint(total, Relation::Eq, load.total_min);
    } else {
        lp.add_constraint(total.clone(), Relation::Ge, load.total_min);
        lp.add_constraint(total, Relation::Le, load.total_max);
    }
    TankVars { d, e }
}
