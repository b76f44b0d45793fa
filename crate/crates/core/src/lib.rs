//! Computation offloading for energy-harvesting mobile devices that share a
//! set of heterogeneous edge servers.
//!
//! Every device is a player in a noncooperative game: it splits its Poisson
//! task stream between local processing and the edge servers so as to
//! minimize its own mean response time, subject to a power budget. Servers are
//! M/G/1 FCFS queues, so each device's choice changes the waiting time seen by
//! everyone else.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: configuration types, validation and the transmit-power model.
//! - [`analytic`]: queueing and response-time formulas for a strategy profile.
//! - [`kkt`]: the fixed-total-offload subproblem solved through its
//!   stationarity polynomials.
//! - [`best_response`]: one device's optimal strategy (golden-section search
//!   over the total offload) plus a brute-force grid oracle.
//! - [`game`]: iterated best response, equilibrium residuals, mixed strategies.
//! - [`queue_sim`]: a discrete-event simulator used to validate the
//!   waiting-time formula.
//! - [`experiment`]: config files, sweeps, CSV output and the CLI commands.

pub mod analytic;
pub mod best_response;
mod error;
pub mod experiment;
pub mod game;
pub mod kkt;
pub mod model;
pub mod queue_sim;

pub use error::{ConfigError, Error, Result};
pub use model::{Scenario, ScenarioConfig, StrategyProfile};
