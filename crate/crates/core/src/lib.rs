//! Joint rate control and Markovian multipath routing.
//!
//! Link delays `λ` are the single decision vector: given `λ`, every source solves a
//! dynamic program for its expected delays-to-destination, routes its traffic as an
//! absorbing Markov chain, and picks its rate from the end-to-end queueing delay. The
//! equilibrium is the unique minimizer of a strictly convex dual objective over `λ`,
//! computed in [`equilibrium`]. [`protocol`] simulates the distributed two time-scale
//! scheme at flow level and measures how close it gets to that equilibrium.

pub mod choice;
pub mod equilibrium;
mod error;
pub mod exec;
pub mod io;
pub mod network;
pub mod protocol;
pub mod routing;

pub use choice::ChoiceModel;
pub use equilibrium::{Equilibrium, Instance, SolverOptions};
pub use error::{Error, Result};
pub use exec::Execution;
pub use network::{Arc, LatencyModel, Network, RateModel, Source};
