//! Named, hierarchical random streams.
//!
//! Every random draw in the crate comes from a [`RngStream`]: a master seed
//! plus a label path such as `"augment/stateless/init/cell.w_x"`. The
//! generator seed is the SHA-256 of both, so a stream's draws depend only on
//! its own label and never on how many numbers other streams consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream: String,
}

impl RngStream {
    pub fn new(seed: u64, stream: impl Into<String>) -> Self {
        RngStream {
            seed,
            stream: stream.into(),
        }
    }

    pub fn root(seed: u64) -> Self {
        Self::new(seed, "")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream
    }

    pub fn child(&self, label: impl AsRef<str>) -> RngStream {
        let stream = if self.stream.is_empty() {
            label.as_ref().to_string()
        } else {
            format!("{}/{}", self.stream, label.as_ref())
        };
        RngStream {
            seed: self.seed,
            stream,
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.stream.len() as u64).to_le_bytes());
        hasher.update(self.stream.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}
