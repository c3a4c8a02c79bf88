//! Water-quality state-space modelling of drinking-water networks, model
//! order reduction and model predictive control.
//!
//! The pipeline is parse ([`netmodel`]) → assemble ([`wqss`]) → reduce
//! ([`mor`], with [`gramians`] and [`stabilize`]) → validate ([`sim`]) →
//! control ([`mpc`]).

pub mod cli;
pub mod error;
pub mod linalg;
pub mod mor;
pub mod mpc;
pub mod sim;
pub mod stabilize;
pub mod netmodel;
pub mod gramians;
pub mod wqss;

pub use error::{Error, Result};
