use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream index reserved for building the superpopulation.
pub const SUPERPOPULATION_STREAM: u64 = u64::MAX;

/// Independent, replication-indexed random stream.
///
/// All streams share the ChaCha key derived from `seed` and differ in the
/// stream nonce, so draws for replication `i` do not depend on which thread
/// runs it or on how many other replications exist.
pub fn seed_stream(seed: u64, replication_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication_index);
    rng
}
