//! Counter-based random streams.
//!
//! A stream is addressed by `(master seed, domain, lineage, counter)`. The
//! first three are hashed into a ChaCha key; the counter selects the ChaCha
//! stream id. Any worker can reconstruct any stream without coordination, so
//! ensemble results do not depend on scheduling or particle order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags that keep unrelated draws statistically separate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamDomain {
    Kick,
    InitialState,
    Dictionary,
    Split,
    Auxiliary(u64),
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Kick => 0x4b49_434b,
            StreamDomain::InitialState => 0x494e_4954,
            StreamDomain::Dictionary => 0x4449_4354,
            StreamDomain::Split => 0x5350_4c54,
            StreamDomain::Auxiliary(x) => splitmix64(0x4155_5800 ^ x),
        }
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(master, domain, lineage)` at position `counter`.
pub fn stream(master: u64, domain: StreamDomain, lineage: u64, counter: u64) -> ChaCha8Rng {
    let mut state = splitmix64(master ^ splitmix64(domain.tag()));
    state = splitmix64(state ^ lineage.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(counter);
    rng
}

/// Kick stream for particle `lineage` at Markov time `kick`.
pub fn kick_stream(master: u64, lineage: u64, kick: u64) -> ChaCha8Rng {
    stream(master, StreamDomain::Kick, lineage, kick)
}
