//! Throughput-optimal linear precoding for coordinated multi-cell MIMO
//! downlinks.
//!
//! Base stations in a cluster jointly serve their users as one large
//! zero-forcing (block-diagonalized) transmitter. Within the zero-forcing
//! class this crate computes the precoders that maximize weighted sum rate
//! under per-antenna, per-base-station or sum power budgets, by solving the
//! convex dual of the rate maximization with a projected gradient method.
//! A Monte Carlo layer drops users on a hexagonal cell layout, schedules
//! them greedily (max sum rate or proportional fair) and compares schemes
//! across fading realizations.
//!
//! Module map:
//! - [`linalg`]: complex matrix helpers on top of nalgebra
//! - [`layout`]: hexagonal cells, clusters and interferer geometry
//! - [`channel`]: user drops, shadowing, fast fading, interference whitening
//! - [`power`]: the three power constraint kinds and their reduced spaces
//! - [`bd`]: null-space decomposition, water-filling, conventional BD
//! - [`dual`]: the dual problem, its solver and precoder recovery
//! - [`scheduler`]: greedy user selection and proportional-fair weights
//! - [`sim`]: experiment configuration, Monte Carlo driver, result files

// Validation guards are written `!(x > 0.0)` so that NaN inputs fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bd;
pub mod channel;
pub mod dual;
pub mod error;
pub mod layout;
pub mod linalg;
pub mod power;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};
