//! Label mappings for large-class classification.
//!
//! An `N`-class problem is split into `n` small sub-problems by site
//! functions `f_i: Z/NZ -> Z/N_iZ`. Each site gets its own base learner, and
//! the per-site distributions are recombined by a maximum log-likelihood
//! decoder.

pub mod analysis;
pub mod codec;
pub mod error;
pub mod field;
pub mod harness;
pub mod learners;
pub mod matrix;
pub mod primes;
pub mod mapping;

pub use error::{Error, Result};
pub use mapping::{Codeword, LabelMapping, MappingKind, MappingSpec};
