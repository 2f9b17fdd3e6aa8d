//! Analytical rate, power and energy-efficiency model of a two-tier massive
//! MIMO heterogeneous network with wireless backhaul, plus a Monte Carlo
//! validator.

pub mod energy;
pub mod config;
pub mod error;
pub mod model;
pub mod quadrature;
pub mod rates;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use model::{Duplex, Network, PowerParams, SystemParams};
pub use rates::{LaplaceKind, Link, RateBundle};
