//! Multi-distribution f-divergences, statistical information and
//! surrogate-loss constructions for k-class Bayesian testing on finite
//! sample spaces.
//!
//! Modules, bottom-up:
//!
//! - [`experiment`]: priors, class-conditional pmfs, posteriors, cost matrices, simplex grids
//! - [`divergences`]: generators, closed perspectives, quantized divergences, transport matrices, order instances
//! - [`uncertainty`]: concave uncertainty functions and statistical information
//! - [`losses`]: loss families, pointwise Bayes solutions, loss/uncertainty/generator conversions
//! - [`calibration`]: calibration verdicts and gap inequalities
//! - [`equivalence`]: affine-equivalence fits, quantizer rankings, counterexample search
//! - [`quantize`]: quantized Bayes risk, partition enumeration, ERM and the consistency harness
//!
//! Everything uses natural logarithms and counting measure on `0..m`.

pub mod calibration;
pub mod divergences;
pub mod equivalence;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod numeric;
pub mod quantize;
pub mod rng;
pub mod selftest;
pub mod uncertainty;

pub use error::{Error, Result};
pub use experiment::{CostMatrix, DiscreteExperiment, PosteriorTable, RawExperiment, SimplexVector};
pub use divergences::{Generator, MarkovKernel, OrderInstance, OrderMode, TransportMatrix};
pub use losses::{BayesMethod, BayesSolution, LossFamily, LossKind};
pub use quantize::Quantizer;
pub use uncertainty::{InformationReport, UncertaintyFn, UncertaintyKind};

/// Crate version, written into every CLI report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
