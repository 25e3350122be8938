//! Deterministic random streams.
//!
//! Every walker, chain or inner Monte Carlo replicate draws from its own
//! ChaCha8 stream. The stream is addressed by a [`SeedKey`]: the master seed
//! fixes the ChaCha key and a hashed index path fixes the 64-bit stream id, so
//! a given walker sees the same numbers no matter which thread runs it or in
//! which order the walkers are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The per-walker generator. Owned by exactly one walker.
pub type RandomStream = ChaCha8Rng;

/// Address of a random stream: master seed plus a hashed index path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey {
    seed: u64,
    path: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Key of the `index`-th child stream.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            path: splitmix64(self.path ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))),
        }
    }

    /// Key of a named child stream; used to separate the roles inside one
    /// experiment (reference draws, starting points, inner walks, ...).
    pub fn named(&self, name: &str) -> Self {
        // FNV-1a keeps the mapping stable across platforms and releases.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.child(h)
    }

    pub fn rng(&self) -> RandomStream {
        let mut key = [0u8; 32];
        let mut s = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let k = SeedKey::new(7).child(3).named("inner");
        let a: Vec<u64> = (0..8).map({
            let mut r = k.rng();
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = k.rng();
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn siblings_differ() {
        let root = SeedKey::new(7);
        let x: u64 = root.child(0).rng().random();
        let y: u64 = root.child(1).rng().random();
        let z: u64 = SeedKey::new(8).child(0).rng().random();
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_ne!(root.child(1).child(0), root.child(0).child(1));
    }
}
