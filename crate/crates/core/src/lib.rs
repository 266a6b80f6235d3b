//! Network-level travel-time forecasting with a hierarchical LSTM whose two
//! levels are joined by attention pooling over cell and hidden states.
//!
//! The crate contains the differentiable numeric substrate ([`tape`],
//! [`tensor`]), the model ([`lstm`], [`pooling`], [`forecaster`]), training
//! and evaluation ([`dataset`], [`train`], [`metrics`], [`compare`]),
//! time-series diagnostics ([`diagnostics`]), and data handling
//! ([`data`], [`checkpoint`]).

pub mod checkpoint;
pub mod compare;
pub mod data;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod forecaster;
pub mod lstm;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod pooling;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
