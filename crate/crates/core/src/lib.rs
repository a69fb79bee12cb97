//! Federated throughput forecasting with a live-streaming QoE testbed.
//!
//! The crate is organised bottom-up:
//!
//! * [`trace`] ingests throughput traces into a canonical per-client schema.
//! * [`preprocess`] filters, scales and windows traces into training samples.
//! * [`tensor`] is a small dense tensor type with a reverse-mode autodiff tape.
//! * [`models`] holds the four forecasters (CNN, LSTM, LSTM+CNN, Transformer).
//! * [`fl`] runs federated rounds with FedAvg, FedProx or FedBN aggregation.
//! * [`analysis`] provides R², MSE, horizon correlations and Gaussian KDE.
//! * [`stream`] simulates live streaming with MPC bitrate control and scores
//!   sessions with the live QoE objective.
//! * [`runner`] ties the stages together behind a config file.

pub mod analysis;
pub mod config;
mod error;
pub mod fl;
pub mod io;
pub mod models;
pub mod preprocess;
pub mod rng;
pub mod runner;
pub mod stream;
pub mod synthetic;
pub mod tensor;
pub mod trace;

pub use error::{Error, Result};
