//! Spin-boson dynamics on a chain-mapped bath with matrix product states and
//! one-site TDVP, plus repeated projective-measurement protocols for quantum
//! Zeno / anti-Zeno decay-rate analysis.

pub mod cli;
pub mod config;
pub mod error;
pub mod krylov;
mod linalg;
pub mod model;
pub mod mpo;
pub mod mps;
pub mod oracle;
pub mod spectral;
pub mod tdvp;
pub mod zeno;

pub use error::{Error, Result};
