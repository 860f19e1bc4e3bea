//! Pareto-optimal risk sharing among agents that value losses with (robust)
//! distortion risk measures on finite empirical probability spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`distortion`]: parametric distortion functions and risk-aversion indices.
//! - [`riskmeasure`]: empirical spaces, Choquet integrals, VaR, ES and robust
//!   distortion risk measures.
//! - [`posolver`]: decentralized (peer-to-peer) Pareto optima by layer
//!   decomposition of the aggregate loss.
//! - [`centralized`]: Pareto optima with a single Expected Shortfall insurer and
//!   Stackelberg premiums.
//! - [`ingest`]: loss panels from claim exports.
//! - [`oracle`]: brute-force verifiers for small instances.
//! - [`cli`]: configuration and command implementations behind the binary.

pub mod centralized;
pub mod cli;
pub mod distortion;
pub mod error;
pub mod ingest;
pub mod oracle;
pub mod posolver;
pub mod riskmeasure;

pub use distortion::{Distortion, DistortionSet, Family};
pub use error::{Error, Result};
pub use riskmeasure::{EmpiricalSpace, LossProfile};
