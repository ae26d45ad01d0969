//! Seeded random-number streams.
//!
//! All randomness in the pipeline flows through ChaCha8 generators derived
//! from a single 64-bit seed plus a domain string (for example
//! `"image:frame_0042"`). Substreams make augmentation outcomes independent
//! of worker count and scheduling: each image draws from its own generator,
//! so runs with one worker and eight workers are byte-identical.

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a deterministic generator for `domain` from the run seed.
pub fn derive(seed: u64, domain: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(domain.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    rand::SeedableRng::from_seed(key)
}

/// Substream for one image, keyed by its basename.
pub fn for_image(seed: u64, basename: &str) -> ChaCha8Rng {
    derive(seed, &format!("image:{basename}"))
}
