//! Simulation and analysis toolkit for atomic-frequency-comb (AFC) optical
//! quantum memories embedded in impedance-matched cavities.
//!
//! Units throughout: frequencies in MHz, times in µs (so `MHz * µs = 1`),
//! optical depths as natural-log intensity attenuation per pass.
//!
//! Module map:
//! - [`medium`]: comb absorption profiles, Kramers–Kronig phase, single-pass response.
//! - [`cavity`]: asymmetric two-mirror resonator around the medium, linewidth analysis.
//! - [`propagation`]: FFT transport of pulse envelopes, echo windows, parameter scans.
//! - [`analytics`]: closed-form efficiencies, impedance matching, depth optimization, decay fits.
//! - [`timebin`]: time-bin qubits, AFC interferometer analyzer, fringes and fidelities.
//! - [`montecarlo`]: photon-counting emulation of the efficiency and fringe measurements.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cavity;
mod error;
mod fourier;
pub mod medium;
pub mod montecarlo;
pub mod optimize;
pub mod propagation;
pub mod timebin;

pub use error::{Error, Result};
pub use num_complex::Complex64;
