//! Seed splitting. Every random draw in a fit comes from one of these
//! independent ChaCha streams keyed by the user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Anchors,
    EmbeddingInit,
    Labels,
    Restart(u32),
    Synthetic,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Anchors => 1,
            Stream::EmbeddingInit => 2,
            Stream::Labels => 3,
            Stream::Synthetic => 4,
            Stream::Restart(r) => 0x1000 + r as u64,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Derives a child seed for nested deterministic work (e.g. k-means restarts).
pub fn child_seed(seed: u64, stream: Stream) -> u64 {
    use rand::Rng;
    stream_rng(seed, stream).random()
}
