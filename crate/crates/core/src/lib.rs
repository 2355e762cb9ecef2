//! Streaming frequency estimation with learned hashing schemes.
//!
//! A stream prefix is summarised into per-element frequencies and features,
//! an optimizer assigns the observed elements to a small number of buckets so
//! that bucket means are good frequency estimates, and a classifier routes
//! elements that were never observed. The resulting [`sketches::OptHashSketch`]
//! is compared against Count-Min and Learned Count-Min at equal memory by the
//! [`bench`] module.

pub mod bench;
pub mod classify;
pub mod error;
pub mod objective;
pub mod rng;
pub mod scheme;
pub mod sketches;
pub mod solvers;
pub mod stream;
pub mod synthgen;

pub use error::{Error, Result};
pub use objective::{evaluate, BucketStats, ObjectiveValue};
pub use scheme::{validate_scheme, HashScheme};
pub use stream::{ingest_prefix, Element, StreamPrefix};
