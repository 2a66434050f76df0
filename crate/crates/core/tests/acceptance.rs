//! Acceptance suite. Each test prints one verdict line to stderr (bypassing
//! the harness capture) and then asserts it.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use flexsim::agents::{bid_grid, verify_load_coverage, PriceForecast};
use flexsim::energy::clear;
use flexsim::imbalance::settle;
use flexsim::lp::Status;
use flexsim::report::{replay, sweep, write_run};
use flexsim::scenario::{random_tank_load, DEFAULT_DEMAND_SHAPE};
use flexsim::{run, MarketParams, MarketSetting, ScenarioConfig, Termination};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u8, name: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {n} [{name}]: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "{}", line.trim_end());
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

#[test]
fn criterion_1_lp_oracle_suite() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut mismatches, mut infeasible) = (0.0f64, 0, 0);
    for _ in 0..50 {
        let lp = common::random_small_lp(&mut rng, 6, 6);
        let sol = lp.solve().unwrap();
        match common::vertex_enumeration(&lp) {
            Some(best) if sol.status == Status::Optimal => worst = worst.max((sol.objective - best).abs()),
            None if sol.status == Status::Infeasible => infeasible += 1,
            _ => mismatches += 1,
        }
    }
    let took = clock.elapsed();
    let pass = mismatches == 0 && worst <= 1e-6 && took < Duration::from_secs(5);
    let detail = format!("50 LPs, {infeasible} infeasible, worst gap {worst:.1e}, {mismatches} status mismatches, {}", secs(took));
    verdict(1, "LP oracle suite", pass, &detail);
}

#[test]
fn criterion_2_energy_clearing_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut checked, mut wrong) = (0, 0);
    while checked < 100 {
        let offers = common::random_energy_instance(&mut rng);
        if offers.is_empty() {
            continue;
        }
        let r = clear(&offers, 1, common::CAP).unwrap();
        let (price, volume) = common::clearing_brute_force(&offers);
        if r.periods[0].price != price || r.periods[0].volume != volume {
            wrong += 1;
        }
        checked += 1;
    }
    verdict(2, "energy clearing oracle", wrong == 0, &format!("{checked} instances, {wrong} differ in MCP or volume"));
}

#[test]
fn criterion_3_benchmark_band() {
    let cfg = ScenarioConfig::default();
    assert_eq!((cfg.setting, cfg.mean_consumption, cfg.flexibility_rate), (MarketSetting::Closed, 1000.0, 0.06));
    let clock = Instant::now();
    let out = run(&cfg).unwrap();
    let took = clock.elapsed();
    let s = &out.summary;
    let cycled = matches!(out.termination, Termination::Cycle { .. }) && out.history.len() <= 500;
    let pass = cycled
        && (45.0..=60.0).contains(&s.mean_price)
        && s.non_contracted_volume.abs() <= 1e-6
        && s.retailer_imbalance.abs() <= 1e-6
        && took < Duration::from_secs(120);
    let detail = format!(
        "{}; cycle-mean MCP {:.2}, non-contracted {:.2e} MWh, retailer imbalance {:.2e} MWh, producer imbalance {:.2e} MWh, {}",
        out.termination,
        s.mean_price,
        s.non_contracted_volume,
        s.retailer_imbalance,
        s.producer_imbalance,
        secs(took)
    );
    verdict(3, "benchmark band", pass, &detail);
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// series is constant.
fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

#[test]
fn spearman_handles_ties_and_constants() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), None);
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 1.0, 1.0]).unwrap();
    assert!((rho - 0.894427190999916).abs() < 1e-12);
}

#[test]
fn criterion_4_open_market_sweep() {
    let rates = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10];
    let clock = Instant::now();
    let cells = sweep(&ScenarioConfig::default(), &rates, &[MarketSetting::Closed, MarketSetting::Open]);
    let took = clock.elapsed();
    let failed: Vec<String> = cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().err().map(|e| format!("{}: {e}", c.key())))
        .collect();
    if !failed.is_empty() {
        verdict(4, "open-market sweep", false, &failed.join("; "));
        return;
    }
    let summary = |setting: MarketSetting| -> Vec<flexsim::RoundMetrics> {
        cells.iter().filter(|c| c.setting == setting).map(|c| c.outcome.as_ref().unwrap().summary).collect()
    };
    let (closed, open) = (summary(MarketSetting::Closed), summary(MarketSetting::Open));
    let cost_ratio = open[5].procurement_cost / open[0].procurement_cost;
    let price_gap = closed.iter().zip(&open).map(|(c, o)| (c.mean_price - o.mean_price).abs()).fold(0.0, f64::max);
    let nc: Vec<f64> = open.iter().map(|m| m.non_contracted_volume).collect();
    let rho = spearman(&rates, &nc);
    let monotone = nc.windows(2).all(|w| w[1] >= w[0]);
    let trend_ok = rho.map_or(monotone, |r| r > 0.0);
    let pass = cost_ratio <= 0.3 && price_gap <= 1.0 && trend_ok && took < Duration::from_secs(15 * 60);
    let detail = format!(
        "cost at 10% is {:.1}% of 0%, largest MCP gap {price_gap:.3} EUR/MWh, non-contracted {nc:?} MWh, Spearman {}, {}",
        100.0 * cost_ratio,
        rho.map_or("undefined (flat series)".to_string(), |r| format!("{r:.3}")),
        secs(took)
    );
    verdict(4, "open-market sweep", pass, &detail);
}

#[test]
fn criterion_5_scenario_coverage() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let mean = DEFAULT_DEMAND_SHAPE.iter().sum::<f64>() / 24.0;
    let shape: Vec<f64> = DEFAULT_DEMAND_SHAPE.iter().map(|v| v / mean).collect();
    let params = MarketParams::default();
    let grid = bid_grid(params.periods, 4).unwrap();
    let (mut failures, mut offered) = (0, 0.0);
    for k in 0..20 {
        let size = rng.gen_range(1.0..40.0);
        let load = random_tank_load(&mut rng, size, &shape, params.period_hours);
        let mut fc = PriceForecast::flat(params.periods, 52.5, 500.0);
        for p in fc.energy.iter_mut() {
            *p = rng.gen_range(40.0..65.0);
        }
        let (report, pos) = verify_load_coverage(&load, &params, &fc, &grid, 1000, 100 + k).unwrap();
        failures += report.failures;
        offered += pos.modulation.iter().map(|b| b.amplitude).sum::<f64>();
    }
    let took = clock.elapsed();
    let pass = failures == 0 && offered > 0.0 && took < Duration::from_secs(10);
    let detail = format!("20 loads x 1000 schemes, {failures} failures, {offered:.1} MW of modulation offered, {}", secs(took));
    verdict(5, "scenario coverage", pass, &detail);
}

#[test]
fn criterion_6_settlement_invariants() {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 200,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let result = runner.run(&(common::contracted(), common::profile()), |(c, imbalance)| {
        let r = settle(&imbalance, &c, common::NC).unwrap();
        common::check_settlement(&r, &c, &imbalance).map_err(proptest::test_runner::TestCaseError::fail)
    });
    let detail = match &result {
        Ok(()) => "200 profiles; residual <= 1e-7, neutrality <= 1e-9, tariff rules hold".to_string(),
        Err(e) => e.to_string(),
    };
    verdict(6, "settlement invariants", result.is_ok(), &detail);
}

#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    write_run(&run(&ScenarioConfig::default()).unwrap(), &first).unwrap();
    write_run(&replay(&first.join("manifest.txt")).unwrap(), &second).unwrap();
    let a = std::fs::read(first.join("metrics.csv")).unwrap();
    let b = std::fs::read(second.join("metrics.csv")).unwrap();
    let rounds_same = std::fs::read_dir(first.join("rounds")).unwrap().all(|e| {
        let round = e.unwrap().file_name();
        std::fs::read_dir(first.join("rounds").join(&round)).unwrap().all(|f| {
            let name = f.unwrap().file_name();
            std::fs::read(first.join("rounds").join(&round).join(&name)).ok()
                == std::fs::read(second.join("rounds").join(&round).join(&name)).ok()
        })
    });
    let detail = format!("metrics.csv {} bytes, identical {}; round detail identical {rounds_same}", a.len(), a == b);
    verdict(7, "determinism", a == b && !a.is_empty(), &detail);
}
