//! Brute-force oracles shared by integration tests. Nothing here calls into
//! the solver or clearing code it is used to check.
#![allow(dead_code)]

use flexsim::energy::EnergyOffer;
use flexsim::imbalance::{ContractedReserves, SettlementResult, ACTIVATION_TOL};
use flexsim::lp::{LinearProgram, Relation, Sense};
use flexsim::reserve::{ClassicalReserveBid, ModulationBid};
use flexsim::{ActorId, Direction, Side};
use proptest::prelude::*;
use rand::Rng;

pub const CAP: f64 = 3000.0;

/// Best objective over all basic feasible solutions of a bounded LP, found by
/// enumerating every choice of `n` active hyperplanes (rows or variable
/// bounds). Returns `None` when no vertex is feasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.variables.len();
    // Hyperplane: (coefficients, rhs, is_equality_row)
    let mut planes: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for c in &lp.constraints {
        let mut row = vec![0.0; n];
        for &(v, a) in &c.terms {
            row[v.index()] += a;
        }
        planes.push((row, c.rhs, c.relation == Relation::Eq));
    }
    for (j, v) in lp.variables.iter().enumerate() {
        assert!(v.lower.is_finite() && v.upper.is_finite(), "oracle needs finite bounds");
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        planes.push((row.clone(), v.lower, false));
        planes.push((row, v.upper, false));
    }
    // Empty rows constrain nothing; the feasibility check still covers them.
    planes.retain(|p| p.0.iter().any(|&a| a != 0.0));
    let eq = independent(&planes, (0..planes.len()).filter(|&i| planes[i].2).collect());
    let free: Vec<usize> = (0..planes.len()).filter(|&i| !planes[i].2).collect();
    if eq.len() > n {
        // Fall back to choosing among all planes; equalities are still
        // enforced by the feasibility check.
        return enumerate(lp, &planes, &(0..planes.len()).collect::<Vec<_>>(), &[], n);
    }
    enumerate(lp, &planes, &free, &eq, n - eq.len())
}

fn enumerate(
    lp: &LinearProgram,
    planes: &[(Vec<f64>, f64, bool)],
    pool: &[usize],
    fixed: &[usize],
    k: usize,
) -> Option<f64> {
    let n = lp.variables.len();
    let sign = if lp.sense == Sense::Minimize { 1.0 } else { -1.0 };
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    if k > pool.len() {
        return None;
    }
    loop {
        let chosen: Vec<usize> = fixed.iter().copied().chain(idx.iter().map(|&i| pool[i])).collect();
        let mut a: Vec<Vec<f64>> = chosen.iter().map(|&p| planes[p].0.clone()).collect();
        let mut b: Vec<f64> = chosen.iter().map(|&p| planes[p].1).collect();
        if let Some(x) = gauss(&mut a, &mut b, n) {
            if feasible(lp, &x) {
                let obj: f64 = lp.variables.iter().zip(&x).map(|(v, xi)| v.cost * xi).sum();
                best = Some(match best {
                    None => obj,
                    Some(o) => {
                        if sign * obj < sign * o {
                            obj
                        } else {
                            o
                        }
                    }
                });
            }
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + pool.len() - k {
                break;
            }
            if i == 0 && idx[0] == pool.len() - k {
                return best;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Keeps a linearly independent subset of the given planes; dependent ones
/// are still enforced by `feasible`.
fn independent(planes: &[(Vec<f64>, f64, bool)], idx: Vec<usize>) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for i in idx {
        let mut v = planes[i].0.clone();
        for b in &basis {
            let p = b.iter().position(|&x| x.abs() > 1e-12).unwrap();
            let f = v[p] / b[p];
            for (vk, bk) in v.iter_mut().zip(b) {
                *vk -= f * bk;
            }
        }
        if v.iter().any(|&x| x.abs() > 1e-9) {
            basis.push(v);
            kept.push(i);
        }
    }
    kept
}

fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
    let tol = 1e-8;
    for (v, &xi) in lp.variables.iter().zip(x) {
        if xi < v.lower - tol || xi > v.upper + tol {
            return false;
        }
    }
    for c in &lp.constraints {
        let lhs: f64 = c.terms.iter().map(|&(v, a)| a * x[v.index()]).sum();
        let ok = match c.relation {
            Relation::Le => lhs <= c.rhs + tol,
            Relation::Ge => lhs >= c.rhs - tol,
            Relation::Eq => (lhs - c.rhs).abs() <= tol,
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn gauss(a: &mut [Vec<f64>], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    if a.len() != n {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Random LP with at most `max_vars` variables and `max_rows` rows, all
/// variables boxed so the feasible region is bounded. Integer data keeps the
/// oracle well conditioned.
pub fn random_small_lp<R: Rng>(rng: &mut R, max_vars: usize, max_rows: usize) -> LinearProgram {
    let sense = if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    let mut lp = LinearProgram::new(sense);
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let vars: Vec<_> = (0..n)
        .map(|j| {
            let lo = rng.gen_range(-3..=2) as f64;
            let hi = lo + rng.gen_range(1..=8) as f64;
            lp.add_var(format!("x{j}"), lo, hi, rng.gen_range(-6..=6) as f64)
        })
        .collect();
    // A point inside the box to make most instances feasible.
    let anchor: Vec<f64> = lp
        .variables
        .iter()
        .map(|v| v.lower + (v.upper - v.lower) * rng.gen_range(0.0..1.0))
        .collect();
    for _ in 0..m {
        let mut terms = Vec::new();
        for &v in &vars {
            if rng.gen_bool(0.7) {
                terms.push((v, rng.gen_range(-5..=5) as f64));
            }
        }
        let at: f64 = terms.iter().map(|&(v, a)| a * anchor[v.index()]).sum();
        let rel = match rng.gen_range(0..5) {
            0 => Relation::Eq,
            1 | 2 => Relation::Le,
            _ => Relation::Ge,
        };
        let slack = rng.gen_range(-2..=4) as f64;
        let rhs = match rel {
            Relation::Le => at.round() + slack,
            Relation::Ge => at.round() - slack,
            Relation::Eq => at.round(),
        };
        lp.add_constraint(terms, rel, rhs);
    }
    lp
}

/// Scans every breakpoint price with plain sums. A price is an intersection
/// when demand strictly above it fits in supply at or below it, and supply
/// strictly below it fits in demand at or above it. Among intersections the
/// largest traded volume wins, then the lowest price.
pub fn clearing_brute_force(offers: &[EnergyOffer]) -> (f64, f64) {
    let mut candidates = vec![0.0, CAP];
    candidates.extend(offers.iter().map(|o| o.price));
    let sum = |pred: &dyn Fn(&EnergyOffer) -> bool| offers.iter().filter(|o| pred(o)).map(|o| o.volume).sum::<f64>();
    let mut best: Option<(f64, f64)> = None;
    for &p in &candidates {
        let s_le = sum(&|o| o.side == Side::Supply && o.price <= p);
        let s_lt = sum(&|o| o.side == Side::Supply && o.price < p);
        let d_ge = sum(&|o| o.side == Side::Demand && o.price >= p);
        let d_gt = sum(&|o| o.side == Side::Demand && o.price > p);
        if d_gt > s_le || s_lt > d_ge {
            continue;
        }
        let vol = s_le.min(d_ge);
        best = match best {
            Some((bp, bv)) if bv > vol || (bv == vol && bp <= p) => Some((bp, bv)),
            _ => Some((p, vol)),
        };
    }
    best.expect("cap level always intersects")
}

pub fn random_energy_instance<R: Rng>(rng: &mut R) -> Vec<EnergyOffer> {
    let mut offers = Vec::new();
    for side in [Side::Supply, Side::Demand] {
        let n = rng.gen_range(0..=5);
        for k in 0..n {
            let price = if side == Side::Demand && rng.gen_bool(0.3) {
                CAP
            } else {
                // Coarse grid so that equal prices occur often.
                f64::from(rng.gen_range(0..=8u32) * 10)
            };
            offers.push(EnergyOffer {
                actor: ActorId(k),
                period: 0,
                side,
                volume: f64::from(rng.gen_range(1..=100u32)),
                price,
            });
        }
    }
    offers
}

pub const NC: f64 = 500.0;
pub const T: usize = 8;

pub fn contracted() -> impl Strategy<Value = ContractedReserves> {
    let classical = (0..T, prop::bool::ANY, 0.5f64..20.0, 0.0f64..90.0).prop_map(|(t, up, q, c)| ClassicalReserveBid {
        actor: ActorId(0),
        period: t,
        direction: if up { Direction::Up } else { Direction::Down },
        volume: q,
        activation_price: c,
        efficiency: 1.0,
    });
    let modulation = (0..T / 4, 0.0f64..15.0, prop_oneof![Just(0.0), 0.0f64..30.0]).prop_map(|(k, f, c)| ModulationBid {
        actor: ActorId(k as u32 + 1),
        start: 4 * k,
        length: 4,
        amplitude: f,
        activation_price: c,
        efficiency: 0.5,
    });
    (prop::collection::vec(classical, 0..12), prop::collection::btree_map(0..T / 4, modulation, 0..3)).prop_map(|(classical, md)| {
        let down_max = |t: usize| {
            classical
                .iter()
                .filter(|b| b.period == t && b.direction == Direction::Down)
                .map(|b| b.activation_price)
                .fold(NC, f64::max)
        };
        ContractedReserves {
            over_contract_penalty: (0..T).map(|t| 1.1 * down_max(t)).collect(),
            modulation: md.into_values().collect(),
            classical,
        }
    })
}

pub fn profile() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -30.0f64..30.0], T)
}

/// Balance residual, modulation neutrality and the three tariff rules of a
/// settlement, recomputed from the activations.
pub fn check_settlement(r: &SettlementResult, c: &ContractedReserves, imbalance: &[f64]) -> Result<(), String> {
    for t in 0..imbalance.len() {
        let mut net = r.non_contracted_up[t] - r.non_contracted_down[t] + imbalance[t];
        for (b, x) in c.classical.iter().zip(&r.classical) {
            if b.period == t {
                net += if b.direction == Direction::Up { b.volume * x } else { -b.volume * x };
            }
        }
        for (k, b) in c.modulation.iter().enumerate() {
            if b.covers(t) {
                net += b.amplitude * (r.modulation_up[k][t - b.start] - r.modulation_down[k][t - b.start]);
            }
        }
        if net.abs() > 1e-7 {
            return Err(format!("period {t} residual {net}"));
        }
    }
    for k in 0..c.modulation.len() {
        let drift: f64 = r.modulation_up[k].iter().zip(&r.modulation_down[k]).map(|(v, w)| v - w).sum();
        if drift.abs() > 1e-9 {
            return Err(format!("bid {k} drift {drift}"));
        }
    }
    for t in 0..imbalance.len() {
        for up in [true, false] {
            let (y, tariff) = if up {
                (r.non_contracted_up[t], r.tariff_up[t])
            } else {
                (r.non_contracted_down[t], r.tariff_down[t])
            };
            let mut prices = Vec::new();
            for (b, x) in c.classical.iter().zip(&r.classical) {
                if b.period == t && (b.direction == Direction::Up) == up && b.volume * x > ACTIVATION_TOL {
                    prices.push(b.activation_price);
                }
            }
            for (k, b) in c.modulation.iter().enumerate() {
                if b.covers(t) {
                    let a = if up { r.modulation_up[k][t - b.start] } else { r.modulation_down[k][t - b.start] };
                    if b.amplitude * a > ACTIVATION_TOL {
                        prices.push(b.activation_price);
                    }
                }
            }
            let expected = if y > ACTIVATION_TOL {
                NC
            } else if prices.is_empty() {
                0.0
            } else {
                prices.iter().copied().fold(f64::MIN, f64::max)
            };
            if tariff != expected {
                return Err(format!("period {t} up {up}: tariff {tariff}, expected {expected}"));
            }
        }
    }
    Ok(())
}
