//! Frequency estimators behind a common update/query shape.

mod bloom;
mod cms;
mod hashing;
mod lcms;
mod opthash;
mod persist;

pub use bloom::{BloomFilter, BITS_PER_BUCKET, DEFAULT_BITS_PER_ITEM, DEFAULT_HASHES};
pub use cms::CountMinSketch;
pub use hashing::{hash_family, HashFn};
pub use lcms::LearnedCms;
pub use opthash::{BloomParams, Mode, OptHashSketch};
pub use persist::SavedSketch;
