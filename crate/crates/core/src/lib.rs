//! Computation harvesting on road traffic.
//!
//! The crate is organised along the data path:
//!
//! ```text
//! trafficnet (simulate) ─► CrossingLog ─► ingest (parse, bin, normalise, multiplex)
//!                                               │
//!                         baseline (AR) ◄───────┼──► harvest (ridge readout, online, ablation)
//!                                               ▼
//!                                   evalkit (NRMSE, embedding, WD, spectra, sweeps)
//! ```
//!
//! [`pipeline`] glues the steps together the same way the command-line tool does.

pub mod baseline;
mod error;
pub mod evalkit;
pub mod harvest;
pub mod ingest;
pub mod pipeline;
pub mod trafficnet;

pub use error::{Error, Result};

/// Version tag written into every persisted model and network file.
pub const FORMAT_VERSION: u32 = 1;
