//! Reproducible random streams.
//!
//! Every random decision in the crate is drawn from a ChaCha8 stream whose
//! key and stream id are a pure function of `(base seed, tag path)`. A
//! replica, a site or an arrow direction each get their own stream, so the
//! realised randomness never depends on evaluation order, window size or
//! worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags used when deriving child streams.
pub mod tag {
    pub const ENVIRONMENT: u64 = 0x454e_5600;
    pub const ARROWS: u64 = 0x4152_5200;
    pub const QUENCHED: u64 = 0x5157_4b00;
    pub const REPLICA: u64 = 0x5245_5000;
    pub const ANNEALED: u64 = 0x414e_4e00;
    pub const INITIAL: u64 = 0x494e_4900;
    pub const DYNAMICS: u64 = 0x4459_4e00;
    pub const SWEEP: u64 = 0x5357_5000;
    pub const SPATIAL: u64 = 0x5350_4100;
    pub const RIGHT: u64 = 1;
    pub const LEFT: u64 = 2;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a signed lattice coordinate onto a stream id without collisions.
pub fn site_stream(site: i64) -> u64 {
    ((site << 1) ^ (site >> 63)) as u64
}

/// A node in the tree of derived random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedTree {
    key: [u64; 4],
}

impl SeedTree {
    pub fn new(base_seed: u64) -> Self {
        let a = splitmix64(base_seed);
        let b = splitmix64(a);
        let c = splitmix64(b);
        let d = splitmix64(c);
        Self { key: [a, b, c, d] }
    }

    /// Child node identified by `tag`. Distinct tags give unrelated keys.
    pub fn child(&self, tag: u64) -> Self {
        let mut rng = self.stream(splitmix64(tag ^ 0x5eed_7ee0_0000_0000));
        let mut key = [0u64; 4];
        for k in key.iter_mut() {
            *k = rand::RngCore::next_u64(&mut rng);
        }
        Self { key }
    }

    /// The ChaCha8 stream `id` under this node's key.
    pub fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        for (chunk, word) in seed.chunks_exact_mut(8).zip(self.key) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(id);
        rng
    }

    /// Stream dedicated to lattice site `site`.
    pub fn site_rng(&self, site: i64) -> ChaCha8Rng {
        self.stream(site_stream(site))
    }

    /// A 64-bit seed derived from this node, for APIs that take plain seeds.
    pub fn seed(&self) -> u64 {
        self.key[0]
    }

    /// Stream for replica `index` of a batch.
    pub fn replica(&self, index: u64) -> Self {
        self.child(tag::REPLICA).child(index)
    }
}
