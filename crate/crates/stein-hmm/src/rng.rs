//! Deterministic stream derivation for replicated experiments.
//!
//! Every replicate owns an independent generator derived from
//! `(master seed, label, index)`, so results do not depend on scheduling and
//! a run can be reproduced from its manifest alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator handed to every sampling routine in this crate.
pub type Stream = ChaCha8Rng;

/// Derive the generator for one replicate of one experiment.
///
/// The seed is `SHA-256(master || len(label) || label || index)`, so distinct
/// labels or indices give unrelated streams regardless of their contents.
pub fn stream(master: u64, label: &str, index: u64) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Fold a label into a master seed, e.g. to scope streams to an
/// experiment id before deriving per-replicate streams.
pub fn derive_master(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Derive a child stream from an existing one.
///
/// Used by estimators that need several internally independent streams
/// (e.g. one per outer replicate) out of a single caller-provided generator.
pub fn substream(parent: &mut Stream, index: u64) -> Stream {
    use rand_chacha::rand_core::RngCore;
    let master = parent.next_u64();
    stream(master, "substream", index)
}

/// Derive one substream per index from a single draw of the parent.
///
/// All children are derived from the same parent draw, so the parent
/// advances by one step no matter how many children are requested.
pub fn substreams(parent: &mut Stream, count: usize) -> Vec<Stream> {
    use rand_chacha::rand_core::RngCore;
    let master = parent.next_u64();
    (0..count as u64).map(|i| stream(master, "substream", i)).collect()
}
