//! Reproducible random streams.
//!
//! Every sampled quantity draws from ChaCha8 seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`. Parallel replicas use the same key and
//! select the ChaCha stream number equal to the replica index, so replica
//! `r` of seed `s` is the same sequence regardless of thread scheduling or
//! how many replicas run alongside it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Splits `runs` draws over `replicas` as evenly as possible; earlier
/// replicas take the remainder.
pub fn replica_shares(runs: u64, replicas: u64) -> Vec<u64> {
    let replicas = replicas.max(1);
    (0..replicas)
        .map(|r| runs / replicas + u64::from(r < runs % replicas))
        .collect()
}
