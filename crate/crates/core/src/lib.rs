#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::manual_is_multiple_of,
    clippy::needless_range_loop
)]

//! Markov neural operators for dissipative chaotic systems.

pub mod analysis;
pub mod config;
pub mod dissipativity;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod spectral;
pub mod state;
pub mod systems;
pub mod training;

pub use error::{MnoError, Result};
