//! Origin-destination request prediction with a baselined, gated
//! multi-head graph attention and recurrent network.
//!
//! Pipeline: trip records are bucketed into per-slot OD graphs over a
//! rectangular grid ([`preprocess`]); each slot gets forward, backward and
//! geographical neighborhoods ([`neighborhoods`]) and a gated multi-head
//! attention embedding ([`spatial`]); four history slices are encoded by a
//! recurrent cell and fused ([`temporal`]); demand and OD heads tune their
//! outputs with a baseline reference ([`transfer`]). [`training`] holds the
//! loop, metrics and checkpoints; [`cli`] wires it into the `odp` binary.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod model;
pub mod neighborhoods;
pub mod params;
pub mod preprocess;
pub mod spatial;
pub mod synth;
pub mod temporal;
pub mod training;
pub mod transfer;

pub use error::{OdpError, Result};
