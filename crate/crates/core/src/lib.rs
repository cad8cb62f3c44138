//! Link-level simulation of intensity-modulated visible-light links:
//! ACO-OFDM, ACO-SCFDE and OOK with MMSE equalization over a ray-traced
//! indoor channel and a polynomial LED model.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod aco;
pub mod analysis;
pub mod channel;
pub mod coding;
pub mod constellation;
pub mod error;
pub mod led;
pub mod link;
pub mod ook;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
pub use signal::{SignalFrame, SymbolBlock};
