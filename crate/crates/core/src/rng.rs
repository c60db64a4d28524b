//! Seeded random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from the
//! command seed plus a purpose tag (and optionally a per-item key), so
//! results do not depend on iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    GlyphNegatives = 1,
    PhoneticPartners = 2,
    Split = 3,
    Embeddings = 4,
    ProbeInit = 5,
    ProbeShuffle = 6,
}

/// Stream for `purpose`, optionally specialised by `key` (for example a codepoint).
pub fn stream(seed: u64, purpose: Purpose, key: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | u64::from(key));
    rng
}
