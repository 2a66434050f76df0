//! Files written for a run or a sweep, and the readers needed to replay them.
//!
//! A run directory holds `manifest.txt` (the full configuration plus how the
//! run ended), `metrics.csv` (one row per round), `rounds/<n>/*.csv` with the
//! market detail of each round, and `figures/*.svg`. The manifest alone is
//! enough to reproduce every other file.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chart::{line_chart, Series};
use crate::energy::{write_clearing_csv, write_offers_csv};
use crate::error::{Error, Result};
use crate::imbalance::write_settlement_csv;
use crate::reserve::{write_classical_csv, write_modulation_csv, write_procurement_csv};
use crate::scenario::{MarketSetting, ScenarioConfig};
use crate::simulator::{run, ActorKind, ActorRound, RoundMetrics, RoundRecord, SimulationOutcome, Termination};

const RESULT_PREFIX: &str = "result.";

/// Configuration echo plus the recorded ending of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: ScenarioConfig,
    pub termination: Option<Termination>,
    pub rounds: Option<usize>,
}

impl Manifest {
    pub fn of(outcome: &SimulationOutcome) -> Self {
        Self {
            config: outcome.config.clone(),
            termination: Some(outcome.termination),
            rounds: Some(outcome.history.len()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# flexsim run manifest\n");
        s.push_str(&self.config.to_kv());
        if let Some(t) = self.termination {
            let _ = writeln!(s, "\n# outcome, ignored when replaying");
            match t {
                Termination::Converged { round } => {
                    let _ = writeln!(s, "{RESULT_PREFIX}termination = converged");
                    let _ = writeln!(s, "{RESULT_PREFIX}converged_round = {round}");
                }
                Termination::Cycle { start, length } => {
                    let _ = writeln!(s, "{RESULT_PREFIX}termination = cycle");
                    let _ = writeln!(s, "{RESULT_PREFIX}cycle_start = {start}");
                    let _ = writeln!(s, "{RESULT_PREFIX}cycle_length = {length}");
                }
                Termination::MaxRounds => {
                    let _ = writeln!(s, "{RESULT_PREFIX}termination = max_rounds");
                }
            }
        }
        if let Some(n) = self.rounds {
            let _ = writeln!(s, "{RESULT_PREFIX}rounds = {n}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config_lines = String::new();
        let mut result = std::collections::BTreeMap::new();
        for line in text.lines() {
            let body = line.split('#').next().unwrap_or("").trim();
            match body.strip_prefix(RESULT_PREFIX).and_then(|r| r.split_once('=')) {
                Some((k, v)) => {
                    result.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => {
                    config_lines.push_str(line);
                    config_lines.push('\n');
                }
            }
        }
        let num = |k: &str| -> Result<usize> {
            let v = result.get(k).ok_or_else(|| Error::Parse(format!("manifest lacks `{RESULT_PREFIX}{k}`")))?;
            v.parse().map_err(|_| Error::Parse(format!("bad value `{v}` for `{RESULT_PREFIX}{k}`")))
        };
        let termination = match result.get("termination").map(String::as_str) {
            None => None,
            Some("converged") => Some(Termination::Converged { round: num("converged_round")? }),
            Some("cycle") => Some(Termination::Cycle {
                start: num("cycle_start")?,
                length: num("cycle_length")?,
            }),
            Some("max_rounds") => Some(Termination::MaxRounds),
            Some(other) => return Err(Error::Parse(format!("unknown termination `{other}`"))),
        };
        let rounds = result.contains_key("rounds").then(|| num("rounds")).transpose()?;
        Ok(Self {
            config: ScenarioConfig::from_kv(&config_lines)?,
            termination,
            rounds,
        })
    }
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub mean_price: f64,
    pub price_variability: f64,
    pub total_imbalance: f64,
    pub procurement_cost: f64,
    pub non_contracted_volume: f64,
    pub retailer_imbalance: f64,
    pub producer_imbalance: f64,
    pub settlement_cost: f64,
    pub forecast_error: f64,
}

impl MetricsRow {
    pub fn new(round: usize, m: &RoundMetrics) -> Self {
        Self {
            round,
            mean_price: m.mean_price,
            price_variability: m.price_variability,
            total_imbalance: m.total_imbalance,
            procurement_cost: m.procurement_cost,
            non_contracted_volume: m.non_contracted_volume,
            retailer_imbalance: m.retailer_imbalance,
            producer_imbalance: m.producer_imbalance,
            settlement_cost: m.settlement_cost,
            forecast_error: m.forecast_error,
        }
    }

    pub fn metrics(&self) -> RoundMetrics {
        RoundMetrics {
            mean_price: self.mean_price,
            price_variability: self.price_variability,
            total_imbalance: self.total_imbalance,
            procurement_cost: self.procurement_cost,
            non_contracted_volume: self.non_contracted_volume,
            retailer_imbalance: self.retailer_imbalance,
            producer_imbalance: self.producer_imbalance,
            settlement_cost: self.settlement_cost,
            forecast_error: self.forecast_error,
        }
    }
}

pub fn write_metrics_csv<W: Write>(history: &[RoundRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in history {
        wtr.serialize(MetricsRow::new(r.round, &r.metrics))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Serialize)]
struct PositionRow {
    actor: u32,
    kind: &'static str,
    stage: &'static str,
    period: usize,
    energy: f64,
    imbalance_plus: f64,
    imbalance_minus: f64,
    reserve_up: f64,
    reserve_down: f64,
    cleared: f64,
}

/// Each actor's energy, imbalance and reserve per stage and period.
pub fn write_positions_csv<W: Write>(actors: &[ActorRound], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for a in actors {
        let kind = match a.kind {
            ActorKind::Producer => "producer",
            ActorKind::Retailer => "retailer",
        };
        for (stage, pos) in [("day_ahead", &a.day_ahead), ("reserve", &a.reserve), ("final", &a.repositioned)] {
            let (up, down) = (pos.total_up(), pos.total_down());
            for t in 0..pos.energy.len() {
                wtr.serialize(PositionRow {
                    actor: a.actor.0,
                    kind,
                    stage,
                    period: t + 1,
                    energy: pos.energy[t],
                    imbalance_plus: pos.imbalance_plus[t],
                    imbalance_minus: pos.imbalance_minus[t],
                    reserve_up: up[t],
                    reserve_down: down[t],
                    cleared: a.cleared[t],
                })?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PriceRow {
    period: usize,
    forecast_energy: f64,
    forecast_plus: f64,
    forecast_minus: f64,
    energy: f64,
    tariff_plus: f64,
    tariff_minus: f64,
    requirement: f64,
    system_imbalance: f64,
}

pub fn write_prices_csv<W: Write>(record: &RoundRecord, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in 0..record.prices.energy.len() {
        wtr.serialize(PriceRow {
            period: t + 1,
            forecast_energy: record.forecast.energy[t],
            forecast_plus: record.forecast.plus[t],
            forecast_minus: record.forecast.minus[t],
            energy: record.prices.energy[t],
            tariff_plus: record.prices.plus[t],
            tariff_minus: record.prices.minus[t],
            requirement: record.requirement[t],
            system_imbalance: record.imbalance[t],
        })?;
    }
    wtr.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the detail CSVs of one round into `dir`.
pub fn write_round(record: &RoundRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_prices_csv(record, create(&dir.join("prices.csv"))?)?;
    write_offers_csv(&record.offers, create(&dir.join("offers.csv"))?)?;
    write_clearing_csv(&record.offers, &record.clearing, create(&dir.join("clearing.csv"))?)?;
    write_classical_csv(&record.classical_bids, create(&dir.join("classical_bids.csv"))?)?;
    write_modulation_csv(&record.modulation_bids, create(&dir.join("modulation_bids.csv"))?)?;
    write_procurement_csv(&record.procurement, create(&dir.join("procurement.csv"))?)?;
    write_settlement_csv(&record.settlement, create(&dir.join("settlement.csv"))?)?;
    write_positions_csv(&record.actors, create(&dir.join("positions.csv"))?)?;
    Ok(())
}

/// Writes the manifest, the metric table, per-round detail and figures.
pub fn write_run(outcome: &SimulationOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.txt"), Manifest::of(outcome).to_text())?;
    write_metrics_csv(&outcome.history, create(&dir.join("metrics.csv"))?)?;
    for r in &outcome.history {
        write_round(r, &dir.join("rounds").join(r.round.to_string()))?;
    }
    let figures = dir.join("figures");
    fs::create_dir_all(&figures)?;
    for (name, label, f) in RUN_FIGURES {
        let points = outcome.history.iter().map(|r| (r.round as f64, f(&r.metrics))).collect();
        let svg = line_chart(label, "round", label, &[Series { name: name.to_string(), points }]);
        fs::write(figures.join(format!("{name}.svg")), svg)?;
    }
    Ok(())
}

type MetricFn = fn(&RoundMetrics) -> f64;

const RUN_FIGURES: [(&str, &str, MetricFn); 5] = [
    ("mean_price", "Mean energy price (EUR/MWh)", |m| m.mean_price),
    ("price_variability", "Price variability (EUR/MWh)", |m| m.price_variability),
    ("total_imbalance", "Total imbalance (MWh)", |m| m.total_imbalance),
    ("procurement_cost", "Reserve procurement cost (EUR)", |m| m.procurement_cost),
    ("non_contracted_volume", "Non-contracted reserve (MWh)", |m| m.non_contracted_volume),
];

/// Reruns the configuration stored in a manifest file.
pub fn replay(manifest: &Path) -> Result<SimulationOutcome> {
    let m = Manifest::parse(&fs::read_to_string(manifest)?)?;
    run(&m.config)
}

/// Result of one (rate, setting) cell of a sweep.
#[derive(Debug)]
pub struct SweepCell {
    pub rate: f64,
    pub setting: MarketSetting,
    pub outcome: Result<SimulationOutcome>,
}

impl SweepCell {
    /// Directory name of the cell, unique per (rate, setting).
    pub fn key(&self) -> String {
        cell_key(self.rate, self.setting)
    }
}

pub fn cell_key(rate: f64, setting: MarketSetting) -> String {
    format!("{setting}-rate-{rate}")
}

/// Runs `base` at every rate in every setting. A failing cell is kept as an
/// error and the sweep moves on.
pub fn sweep(base: &ScenarioConfig, rates: &[f64], settings: &[MarketSetting]) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(rates.len() * settings.len());
    for &setting in settings {
        for &rate in rates {
            let cfg = ScenarioConfig {
                flexibility_rate: rate,
                setting,
                ..base.clone()
            };
            cells.push(SweepCell {
                rate,
                setting,
                outcome: run(&cfg),
            });
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub rate: f64,
    pub status: String,
    pub rounds: Option<usize>,
    pub mean_price: Option<f64>,
    pub price_variability: Option<f64>,
    pub total_imbalance: Option<f64>,
    pub procurement_cost: Option<f64>,
    pub non_contracted_volume: Option<f64>,
    pub retailer_imbalance: Option<f64>,
    pub producer_imbalance: Option<f64>,
}

impl SweepRow {
    pub fn new(cell: &SweepCell) -> Self {
        let ok = cell.outcome.as_ref().ok();
        let m = |f: MetricFn| ok.map(|o| f(&o.summary));
        Self {
            setting: cell.setting.to_string(),
            rate: cell.rate,
            status: match &cell.outcome {
                Ok(o) => o.termination.to_string(),
                Err(e) => format!("error: {e}"),
            },
            rounds: ok.map(|o| o.history.len()),
            mean_price: m(|s| s.mean_price),
            price_variability: m(|s| s.price_variability),
            total_imbalance: m(|s| s.total_imbalance),
            procurement_cost: m(|s| s.procurement_cost),
            non_contracted_volume: m(|s| s.non_contracted_volume),
            retailer_imbalance: m(|s| s.retailer_imbalance),
            producer_imbalance: m(|s| s.producer_imbalance),
        }
    }
}

const SWEEP_FIGURES: [(&str, &str, MetricFn); 4] = [
    ("price_variability", "Price variability (EUR/MWh)", |m| m.price_variability),
    ("total_imbalance", "Mean total imbalance (MWh)", |m| m.total_imbalance),
    ("procurement_cost", "Reserve procurement cost (EUR)", |m| m.procurement_cost),
    ("non_contracted_volume", "Non-contracted reserve (MWh)", |m| m.non_contracted_volume),
];

/// Writes `sweep.csv`, one run directory per successful cell and one figure
/// per reported metric with a line for each setting.
pub fn write_sweep(cells: &[SweepCell], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut wtr = csv::Writer::from_writer(create(&dir.join("sweep.csv"))?);
    for cell in cells {
        wtr.serialize(SweepRow::new(cell))?;
        if let Ok(o) = &cell.outcome {
            write_run(o, &dir.join(cell.key()))?;
        }
    }
    wtr.flush()?;

    let figures = dir.join("figures");
    fs::create_dir_all(&figures)?;
    let mut settings: Vec<MarketSetting> = cells.iter().map(|c| c.setting).collect();
    settings.dedup();
    for (name, label, f) in SWEEP_FIGURES {
        let series: Vec<Series> = settings
            .iter()
            .map(|&s| Series {
                name: s.to_string(),
                points: cells
                    .iter()
                    .filter(|c| c.setting == s)
                    .filter_map(|c| c.outcome.as_ref().ok().map(|o| (100.0 * c.rate, f(&o.summary))))
                    .collect(),
            })
            .collect();
        fs::write(figures.join(format!("{name}.svg")), line_chart(label, "flexibility rate (%)", label, &series))?;
    }
    Ok(())
}
