//! Seeded random streams.
//!
//! Every stochastic consumer in a run owns its own ChaCha stream derived from
//! the run seed, so subsystems can interleave freely without perturbing each
//! other and identically seeded runs replay bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the independent random consumers of a training run.
///
/// Environment instances use their instance index directly (`seed ^ i`); the
/// remaining consumers use large constants so their streams cannot collide
/// with any realistic instance count.
pub mod stream {
    /// Policy parameter initialization.
    pub const POLICY_INIT: u64 = 0x9e37_79b9_7f4a_7c15;
    /// Value-net parameter initialization.
    pub const VALUE_INIT: u64 = 0xbf58_476d_1ce4_e5b9;
    /// Discriminator parameter initialization.
    pub const DISC_INIT: u64 = 0x94d0_49bb_1331_11eb;
    /// Minibatch shuffling inside PPO updates.
    pub const PPO_SHUFFLE: u64 = 0xff51_afd7_ed55_8ccd;
    /// Discriminator batch sampling and shuffling.
    pub const DISC_BATCH: u64 = 0xc4ce_b9fe_1a85_ec53;
    /// Evaluation episode resets.
    pub const EVAL: u64 = 0x2545_f491_4f6c_dd1d;
    /// Demo-recording episode resets.
    pub const DEMOS: u64 = 0xd6e8_feb8_6659_fd93;
    /// Action-noise streams for rollout workers; worker `i` of a run uses
    /// `stream_rng(seed ^ i, ACTION)`.
    pub const ACTION: u64 = 0x8538_ecb5_bd45_6ea3;
}

/// The ChaCha stream identified by `seed ^ stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream)
}
