//! Quench dynamics of the quantum Rabi model in a truncated spin ⊗ Fock space.
//!
//! The crate covers both flavours of dynamical phase transition that appear in
//! the limit of a large spin-to-mode frequency ratio `eta`:
//!
//! * long-time averages of order parameters after a sudden quench
//!   ([`quench`]),
//! * kinks in the Loschmidt-echo rate function ([`loschmidt`]),
//!
//! together with the analytic symmetry-broken ground states ([`states`]), the
//! exact spectra they are propagated with ([`spectra`]) and a mean-field
//! engine for the classical limit ([`semiclassics`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod dd;
mod error;
pub mod hilbert;
pub mod loschmidt;
pub mod quench;
pub mod semiclassics;
pub mod spectra;
pub mod states;

pub use error::{Error, Result};
pub use hilbert::{Basis, ModelParams, OperatorKind, OperatorMatrix};
pub use spectra::SpectralData;
pub use states::{Branch, QuantumState};

/// Library version recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
