//! Counter-based random substreams.
//!
//! A stream is keyed by `(master seed, domain tag, index tuple)`. The key is
//! hashed into a ChaCha8 key, so identical keys yield identical streams no
//! matter which worker asks for them or in what order, and distinct keys yield
//! statistically independent streams. Simulation code never shares one stream
//! across cells or steps; it derives one per unit of work instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

/// Derives the stream for `(master_seed, tag, indices)`.
pub fn seed_substream(master_seed: u64, tag: &str, indices: &[u64]) -> Stream {
    let mut h = Sha256::new();
    h.update(b"kac-bgk/substream/v1");
    h.update(master_seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update((indices.len() as u64).to_le_bytes());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// A master seed plus an index prefix (e.g. a replica number) that every
/// derived stream inherits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substreams {
    master: u64,
    prefix: Vec<u64>,
}

impl Substreams {
    pub fn new(master: u64) -> Self {
        Substreams {
            master,
            prefix: Vec::new(),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Same master seed with `index` appended to the prefix.
    pub fn child(&self, index: u64) -> Self {
        let mut prefix = self.prefix.clone();
        prefix.push(index);
        Substreams {
            master: self.master,
            prefix,
        }
    }

    pub fn stream(&self, tag: &str, indices: &[u64]) -> Stream {
        if self.prefix.is_empty() {
            return seed_substream(self.master, tag, indices);
        }
        let mut key = Vec::with_capacity(self.prefix.len() + indices.len());
        key.extend_from_slice(&self.prefix);
        key.extend_from_slice(indices);
        seed_substream(self.master, tag, &key)
    }
}
