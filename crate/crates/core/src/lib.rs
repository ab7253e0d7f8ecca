//! Fair truthful mechanisms for Bayesian bilateral trade.

pub mod bound_programs;
pub mod dist;
pub mod error;
pub mod fairness;
pub mod instances;
pub mod io;
pub mod lp_mechanisms;
pub mod mechanisms;
pub mod quadrature;
pub mod reproduce;

pub use dist::{Family, ValuationDist};
pub use error::{Error, Result};
pub use lp_mechanisms::{DiscreteDist, DiscreteInstance};
pub use mechanisms::{Benchmarks, Instance, Mechanism, MechanismOutcome, TradeModel};
