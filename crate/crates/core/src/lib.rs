//! Online instance matching (OIM) for person search.
//!
//! The crate pairs a non-parametric identification loss, scored against a
//! lookup table of labeled identities and a circular queue of unlabeled
//! ones, with the tools needed to study it end to end: a small trainable
//! embedder, a synthetic scene generator with a detector simulator, the
//! query/gallery evaluation protocol, and a seeded training loop.

pub mod embedder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod linalg;
pub mod oim;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
