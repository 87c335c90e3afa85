//! Simulator and design library for a multimode optical parametric
//! oscillator built around a self-imaging cavity.
//!
//! The crate is organised bottom-up:
//!
//! - [`modes`]: Hermite-Gauss basis, Gouy phases, quadrature overlaps
//! - [`cavity`]: ray-matrix resonator model, linewidth and degeneracy scans
//! - [`coupling`]: parametric coupling matrix and its Takagi factorization
//! - [`squeezing`]: below-threshold quadrature variance spectra
//! - [`homodyne`]: mode-selective homodyne detection and Monte Carlo traces
//! - [`config`], [`app`], [`reproduce`]: TOML configuration, subcommand
//!   orchestration and the reproduction report used by the `sopo` binary
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```bash
//! cargo run --release -p selfimaging-opo --example cavity_design
//! cargo run --release -p selfimaging-opo --example eigenmodes
//! cargo run --release -p selfimaging-opo --example squeezing_ladder
//! cargo run --release -p selfimaging-opo --example homodyne_sweep
//! cargo run --release -p selfimaging-opo --example mode_profiles
//! cargo run --release -p selfimaging-opo --example reproduce_paper
//! ```

pub mod app;
pub mod cavity;
pub mod config;
pub mod coupling;
pub mod error;
pub mod homodyne;
pub mod modes;
pub mod quadrature;
pub mod reproduce;
pub mod squeezing;
pub mod takagi;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type Complex = nalgebra::Complex<f64>;
