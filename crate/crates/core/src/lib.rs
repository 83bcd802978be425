//! Storage and retrieval of photons in Λ-type atomic ensembles with
//! inhomogeneous broadening.
//!
//! The crate is organised around the physical pipeline:
//!
//! * [`profile`] – spectral line shapes, their resolvent `f(v)` and the
//!   frequency classes used by the time-domain solvers;
//! * [`free_space`] – method-of-lines Maxwell–Bloch integrator for the
//!   free-space ensemble, π-pulse maps and storage-interval transforms;
//! * [`cavity`] – the same atoms coupled to a single cavity mode;
//! * [`spectral`] – Laplace/frequency-domain transfer functions for fast
//!   (π-pulse) storage and retrieval;
//! * [`optimizer`] – optimal spin waves and input modes, CRIB width scans
//!   and error models;
//! * [`config`] and [`verify`] – the run configuration and the executable
//!   reproduction checks used by the command line tool.
//!
//! All quantities are dimensionless: frequencies in units of the optical
//! polarization decay rate γ, times in units of 1/γ and positions along the
//! medium rescaled to `z ∈ [0, 1]`.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod config;
pub mod crib;
pub mod erfc;
pub mod error;
pub mod figures;
pub mod free_space;
pub mod mode;
pub mod optimal_input;
pub mod optimizer;
pub mod profile;
pub mod quadrature;
pub mod spectral;
pub mod verify;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
pub use mode::{Domain, ModeSample};
pub use profile::{FrequencyClasses, LineProfile};
