//! Link-level throughput analysis of HARQ retransmission schemes whose
//! receiver keeps previously received packets in a buffer of finite size.
//!
//! The crate evaluates Type-I, Chase Combining (store-and-combine and
//! combine-and-store) and Incremental Redundancy HARQ over quasi-static
//! Rayleigh fading. Stored packets are modelled through additive Gaussian
//! quantization noise whose variance follows from the buffer allocation.
//! On top of the scalar Gaussian-signalling model the crate covers BICM with
//! baseband or LLR-domain storage, two-layer superposition coding,
//! transform-coded MIMO storage and a finite-blocklength approximation.

pub mod bicm;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fbl;
pub mod gaussian;
pub mod layered;
pub mod mimo;
pub mod model;
pub mod quantizer;

pub use error::{Error, Result};
pub use model::{
    HarqConfig, Modulation, PeCurve, Scheme, SessionDraw, StorageDomain, ThroughputResult,
};
