use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Stream ids keep every random consumer independent of the others, so adding
// draws in one place never shifts another.
pub(crate) const STREAM_SYNTH_PARAMS: u64 = 1;
pub(crate) const STREAM_SYNTH_INPUTS: u64 = 2;
pub(crate) const STREAM_SYNTH_LABELS: u64 = 3;
pub(crate) const STREAM_SYNTH_AMBIGUOUS: u64 = 4;
pub(crate) const STREAM_MASK: u64 = 5;
pub(crate) const STREAM_INIT: u64 = 6;
pub(crate) const STREAM_DROPOUT: u64 = 7;
pub(crate) const STREAM_SHUFFLE_BASE: u64 = 1 << 32;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Maps 64 random bits to a uniform double in [0, 1).
pub(crate) fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
