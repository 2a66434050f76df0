use serde::{Deserialize, Serialize};

use super::forecast::PriceObservation;

const VOLUME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRule {
    /// Share of the offending volume kept as the new threshold.
    pub factor: f64,
    /// Rounds without recurrence after which a ceiling or imbalance threshold
    /// is dropped. Producer floors are kept once learned.
    pub forget_after: Option<usize>,
}

impl Default for LearningRule {
    fn default() -> Self {
        Self {
            factor: 0.95,
            forget_after: Some(10),
        }
    }
}

/// Whether the energy threshold caps what is bought or floors what is sold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VolumeBound {
    /// Retailer: `D^max_t`, infinite until learned.
    Ceiling,
    /// Producer: `P^min_t`, zero until learned, never above the fleet capacity.
    Floor { capacity: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub bound: VolumeBound,
    pub volume: Vec<f64>,
    pub plus_max: Vec<f64>,
    pub minus_max: Vec<f64>,
    quiet: Vec<[usize; 3]>,
}

/// What an actor did in the last round, next to the prices it obtained.
#[derive(Debug, Clone, Copy)]
pub struct RoundOutcome<'a> {
    pub prices: &'a PriceObservation,
    /// Energy volume the actor submitted (`D_t` or `P_t`).
    pub submitted: &'a [f64],
    pub plus: &'a [f64],
    pub minus: &'a [f64],
}

impl Thresholds {
    pub fn ceiling(periods: usize) -> Self {
        Self::new(VolumeBound::Ceiling, periods)
    }

    pub fn floor(capacity: Vec<f64>) -> Self {
        let periods = capacity.len();
        Self::new(VolumeBound::Floor { capacity }, periods)
    }

    fn new(bound: VolumeBound, periods: usize) -> Self {
        let unlearned = match bound {
            VolumeBound::Ceiling => f64::INFINITY,
            VolumeBound::Floor { .. } => 0.0,
        };
        Self {
            bound,
            volume: vec![unlearned; periods],
            plus_max: vec![f64::INFINITY; periods],
            minus_max: vec![f64::INFINITY; periods],
            quiet: vec![[0; 3]; periods],
        }
    }

    /// Threshold values and the rounds each forgettable entry has gone
    /// without recurring, flattened for comparing actor states.
    pub fn state(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 * self.volume.len());
        for t in 0..self.volume.len() {
            for (k, v) in [self.volume[t], self.plus_max[t], self.minus_max[t]].into_iter().enumerate() {
                out.push(if v.is_finite() { v } else { -1.0 });
                out.push(self.quiet[t][k] as f64);
            }
        }
        out
    }

    fn unlearned_volume(&self) -> f64 {
        match self.bound {
            VolumeBound::Ceiling => f64::INFINITY,
            VolumeBound::Floor { .. } => 0.0,
        }
    }
}

/// Updates thresholds after a round.
///
/// A capped energy price moves the volume threshold past the submitted
/// volume by the rule's factor. A long or short tariff of 0 or the
/// non-contracted price, while the actor itself was long or short, caps that
/// imbalance at the factor times what it held.
pub fn learn_thresholds(
    th: &mut Thresholds,
    rule: &LearningRule,
    outcome: &RoundOutcome<'_>,
    price_cap: f64,
    non_contracted_price: f64,
) {
    let extreme = |p: f64| p == 0.0 || p == non_contracted_price;
    let unlearned = th.unlearned_volume();
    for t in 0..th.volume.len() {
        let capped = outcome.prices.energy[t] >= price_cap;
        let plus_hit = extreme(outcome.prices.plus[t]) && outcome.plus[t] > VOLUME_TOL;
        let minus_hit = extreme(outcome.prices.minus[t]) && outcome.minus[t] > VOLUME_TOL;

        if capped {
            th.volume[t] = match &th.bound {
                VolumeBound::Ceiling => rule.factor * outcome.submitted[t],
                VolumeBound::Floor { capacity } => (outcome.submitted[t] / rule.factor).min(capacity[t]),
            };
        }
        if plus_hit {
            th.plus_max[t] = rule.factor * outcome.plus[t];
        }
        if minus_hit {
            th.minus_max[t] = rule.factor * outcome.minus[t];
        }

        let forgettable = [
            th.volume[t] != unlearned && matches!(th.bound, VolumeBound::Ceiling),
            th.plus_max[t].is_finite(),
            th.minus_max[t].is_finite(),
        ];
        for (k, hit) in [capped, plus_hit, minus_hit].into_iter().enumerate() {
            let Some(n) = rule.forget_after.filter(|_| forgettable[k] && !hit) else {
                th.quiet[t][k] = 0;
                continue;
            };
            th.quiet[t][k] += 1;
            if th.quiet[t][k] >= n {
                th.quiet[t][k] = 0;
                match k {
                    0 => th.volume[t] = unlearned,
                    1 => th.plus_max[t] = f64::INFINITY,
                    _ => th.minus_max[t] = f64::INFINITY,
                }
            }
        }
    }
}
