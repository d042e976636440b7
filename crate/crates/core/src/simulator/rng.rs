//! Keyed random streams.
//!
//! Every random quantity is drawn from a stream identified by what it is
//! for (cycle, channel, member, ...). Runs that differ only in scheme then
//! see the same channel states, votes and burst lengths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Tag {
    Pair = 1,
    Order,
    Channel,
    Rate,
    Vote,
    Burst,
    Link,
    Queue,
    Backoff,
    Loss,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key(seed: u64, tag: Tag, parts: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(tag as u64));
    for &p in parts {
        h = splitmix(h ^ p);
    }
    h
}

pub(crate) fn stream(seed: u64, tag: Tag, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(seed, tag, parts))
}

/// One uniform in `[0, 1)`.
pub(crate) fn uniform(seed: u64, tag: Tag, parts: &[u64]) -> f64 {
    stream(seed, tag, parts).random::<f64>()
}
