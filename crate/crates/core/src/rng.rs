//! Named deterministic random substreams derived from one master seed.
//!
//! Every consumer of randomness asks for a stream by name (`pool`,
//! `dialog/<target>`, `sut/<target>`, ...). The stream seed is a SHA-256 of
//! the master seed and the name, so streams are independent of each other and
//! of the order in which they are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// 32-byte seed for the named substream.
    pub fn seed_bytes(&self, name: &str) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.master.to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.finalize().into()
    }

    pub fn stream(&self, name: &str) -> SimRng {
        SimRng::from_seed(self.seed_bytes(name))
    }

    /// A 64-bit seed for the named substream, for APIs that take an integer.
    pub fn derive_u64(&self, name: &str) -> u64 {
        let bytes = self.seed_bytes(name);
        u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}
