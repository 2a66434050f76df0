//! Agent-based simulation of a day-ahead energy market coupled with a
//! secondary reserve market that accepts load modulation bids.

pub mod agents;
pub mod chart;
pub mod energy;
pub mod error;
pub mod imbalance;
pub mod lp;
pub mod params;
pub mod report;
pub mod reserve;
pub mod scenario;
pub mod simulator;
pub mod types;

pub use energy::{ClearingResult, EnergyOffer, PeriodClearing};
pub use error::{Error, Result};
pub use imbalance::{ContractedReserves, SettlementResult};
pub use lp::{LinearProgram, Relation, Sense, Solution, Status};
pub use params::MarketParams;
pub use reserve::{ClassicalReserveBid, ModulationBid, ReservePrices, ReserveProcurement};
pub use report::{replay, sweep, write_run, write_sweep, Manifest, SweepCell};
pub use scenario::{generate_scenario, MarketSetting, Portfolios, ScenarioConfig};
pub use simulator::{detect_cycle, run, RoundMetrics, RoundRecord, Simulation, SimulationOutcome, Termination};
pub use types::{ActorId, Direction, Side};
