//! Joint universal lossy coding and identification of stationary mixing sources.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] parametric stationary source families (Gaussian i.i.d., Gaussian
//!   AR(p), hidden Markov) with exact sampling, log-densities and mixing bounds.
//! * [`bitcode`] bit strings and Elias gamma integer codes.
//! * [`ecvq`] bounded per-letter distortion and entropy-constrained vector
//!   quantizer design, the second-stage codes.
//! * [`distance`] variational distance and divergence oracles.
//! * [`yatracos`] Yatracos classes, the minimum-distance estimator and VC
//!   bound calculators.
//! * [`scheme`] the two-stage code: memory blocking, the random parameter
//!   database, waiting-time search, block encoding and decoding.
//! * [`harness`] experiment orchestration, CSV output and the invariant suite.

pub mod bitcode;
pub mod distance;
pub mod ecvq;
pub mod error;
pub mod harness;
pub mod model;
pub mod quad;
pub mod scheme;
pub mod seed;
pub mod yatracos;

pub use error::{Error, Result};
pub use model::{ParamVector, SampleBlock, SourceFamily};
