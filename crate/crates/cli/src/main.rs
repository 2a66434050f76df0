use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flexsim::agents::{bid_grid, verify_load_coverage, PriceForecast};
use flexsim::report::{read_metrics_csv, SweepRow};
use flexsim::{generate_scenario, replay, sweep, write_run, write_sweep, Manifest, MarketSetting, ScenarioConfig, SimulationOutcome};

/// Day-ahead energy and reserve market simulator with flexible loads.
#[derive(Parser)]
#[command(name = "flexsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario until it converges, cycles or hits the round limit.
    Run(Common),
    /// Simulate every flexibility rate in each market setting.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated flexibility rates.
        #[arg(long, value_delimiter = ',', default_value = "0,0.02,0.04,0.06,0.08,0.1")]
        rates: Vec<f64>,
        /// Comma-separated market settings.
        #[arg(long, value_delimiter = ',', default_value = "closed,open")]
        settings: Vec<MarketSetting>,
    },
    /// Check that modulation scenarios of every generated tank load cover
    /// random activation schemes.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Rerun the configuration stored in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print every configuration key with its default value.
    Config,
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Share of consumption from flexible loads, e.g. 0.06.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    setting: Option<MarketSetting>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Manifest::parse(&text).with_context(|| format!("parsing {}", path.display()))?.config
            }
            None => ScenarioConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.rate {
            cfg.flexibility_rate = v;
        }
        if let Some(v) = self.setting {
            cfg.setting = v;
        }
        if let Some(v) = self.max_rounds {
            cfg.max_rounds = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run(common) => {
            let cfg = common.config()?;
            let outcome = flexsim::run(&cfg)?;
            write_run(&outcome, &common.out_dir)?;
            print_outcome(&outcome, &common.out_dir);
            Ok(true)
        }
        Command::Sweep { common, rates, settings } => {
            let cfg = common.config()?;
            let cells = sweep(&cfg, &rates, &settings);
            write_sweep(&cells, &common.out_dir)?;
            println!("{:<8} {:>6} {:>10} {:>10} {:>12} {:>12} {:>10}  status", "setting", "rate", "price", "spread", "imbalance", "procurement", "nc");
            let mut all_ok = true;
            for cell in &cells {
                let row = SweepRow::new(cell);
                all_ok &= cell.outcome.is_ok();
                let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
                println!(
                    "{:<8} {:>6} {:>10} {:>10} {:>12} {:>12} {:>10}  {}",
                    row.setting,
                    row.rate,
                    f(row.mean_price),
                    f(row.price_variability),
                    f(row.total_imbalance),
                    f(row.procurement_cost),
                    f(row.non_contracted_volume),
                    row.status
                );
            }
            println!("wrote {}", common.out_dir.display());
            Ok(all_ok)
        }
        Command::Verify { common, samples } => verify(&common.config()?, samples),
        Command::Replay { manifest, out_dir } => {
            let recorded = Manifest::parse(&fs::read_to_string(&manifest)?)?;
            let outcome = replay(&manifest)?;
            let out_dir = out_dir.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("replay"));
            write_run(&outcome, &out_dir)?;
            print_outcome(&outcome, &out_dir);
            let same = recorded.termination.is_none_or(|t| t == outcome.termination);
            if !same {
                eprintln!("replay ended differently from the recorded run");
            }
            let original = manifest.with_file_name("metrics.csv");
            if original.exists() {
                let before = read_metrics_csv(fs::File::open(&original)?)?;
                let after = read_metrics_csv(fs::File::open(out_dir.join("metrics.csv"))?)?;
                if before != after {
                    eprintln!("replayed metrics differ from {}", original.display());
                    return Ok(false);
                }
                println!("metrics identical to {}", original.display());
            }
            Ok(same)
        }
        Command::Config => {
            print!("{}", ScenarioConfig::default().to_kv());
            Ok(true)
        }
    }
}

fn verify(cfg: &ScenarioConfig, samples: usize) -> Result<bool> {
    let portfolios = generate_scenario(cfg)?;
    let params = &cfg.market;
    let grid = bid_grid(params.periods, cfg.modulation_length)?;
    let fc = PriceForecast::flat(params.periods, cfg.forecast.initial_energy, cfg.forecast.initial_imbalance);
    let mut failures = 0;
    let mut checked = 0;
    for r in &portfolios.retailers {
        for (k, load) in r.loads.iter().enumerate() {
            let seed = cfg.seed.wrapping_add(checked as u64);
            let (report, pos) = verify_load_coverage(load, params, &fc, &grid, samples, seed)
                .with_context(|| format!("retailer {} load {}", r.actor, k + 1))?;
            let offered: f64 = pos.modulation.iter().map(|b| b.amplitude).sum();
            println!(
                "retailer {} load {}: {} of {} schemes outside limits, {offered:.3} MW offered",
                r.actor,
                k + 1,
                report.failures,
                report.samples
            );
            if let Some((_, why)) = &report.counterexample {
                println!("  first failure: {why}");
            }
            failures += report.failures;
            checked += 1;
        }
    }
    if checked == 0 {
        bail!("the scenario has no flexible loads; raise --rate");
    }
    Ok(failures == 0)
}

fn print_outcome(outcome: &SimulationOutcome, dir: &Path) {
    let s = &outcome.summary;
    println!("{} after {} rounds", outcome.termination, outcome.history.len());
    println!("mean price            {:>12.3} EUR/MWh", s.mean_price);
    println!("price variability     {:>12.3} EUR/MWh", s.price_variability);
    println!("total imbalance       {:>12.3} MWh", s.total_imbalance);
    println!("  retailers           {:>12.3} MWh", s.retailer_imbalance);
    println!("  producers           {:>12.3} MWh", s.producer_imbalance);
    println!("procurement cost      {:>12.3} EUR", s.procurement_cost);
    println!("non-contracted volume {:>12.3} MWh", s.non_contracted_volume);
    println!("wrote {}", dir.display());
}
