//! Regime detection for multi-asset return panels.

pub mod backtest;
pub mod cluster;
pub mod detect;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fracdiff;
pub mod io;
pub mod linalg;
pub mod market_data;
pub mod month;
pub mod optim;
pub mod pipeline;
pub mod realized_cov;
pub mod regime;
pub mod seeds;
pub mod synthetic;
pub mod tvar;
pub mod var;
pub mod vlstar;

pub use error::{Error, Result};
