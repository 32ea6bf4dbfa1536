//! Bipartite nonlocal correlations as explicit probability boxes.
//!
//! - [`boxes`]: conditional boxes `p(a, b | x, y)`, marginals, correlators,
//!   no-signaling checks.
//! - [`correlations`]: angle-parameterized correlation functions, including a
//!   causal model that reaches the algebraic CHSH maximum of 4.
//! - [`bell`]: the CHSH expression, the 2 / 2√2 / 4 bound hierarchy,
//!   local-polytope membership and axis optimization.
//! - [`sampler`]: seeded Monte Carlo measurement rounds.
//! - [`jamming`]: light-cone conditions and simulation for a third party that
//!   alters distant correlations.
//! - [`format`]: box files, scenario configs and angle parsing.
//! - [`cli`]: the `nonlocal` command-line tool.

#![allow(clippy::needless_range_loop)]

pub mod bell;
pub mod boxes;
pub mod cli;
pub mod correlations;
pub mod error;
pub mod format;
pub mod jamming;
pub mod sampler;

pub use boxes::{ConditionalBox, Outcome, Party};
pub use correlations::{AxisConfiguration, CorrelationModel};
pub use error::{Error, Result};
