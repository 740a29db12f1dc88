//! Keyed, counter-style random streams.
//!
//! Every random draw in the toolkit is produced by a [`StreamKey`]: a 128-bit
//! key derived from the master seed plus a path of absorbed words (purpose
//! tags, replicate indices, point coordinate bits). Identical `(seed, path)`
//! always yields the identical stream, independent of scheduling or worker
//! count, which is what makes coupled runs consume common randomness exactly
//! when they face identical sub-configurations.

use crate::geometry::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Purpose tags absorbed into stream keys. Distinct tags keep logically
/// different draws on disjoint streams even when the remaining path words
/// coincide.
pub mod tags {
    pub const CARRIER: u64 = 0x01;
    pub const MARKED_POISSON: u64 = 0x02;
    pub const REJECTION: u64 = 0x03;
    pub const RETENTION: u64 = 0x04;
    pub const AUX_CARRIER: u64 = 0x05;
    pub const PLUGIN: u64 = 0x06;
    pub const REPLICATE: u64 = 0x07;
    pub const GNZ: u64 = 0x08;
    pub const DECAY: u64 = 0x09;
    pub const FIELD_BOX: u64 = 0x0a;
    pub const SELFTEST: u64 = 0x0b;
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 128-bit derived key identifying one random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    hi: u64,
    lo: u64,
}

impl StreamKey {
    /// Root key for a master seed.
    pub fn root(master_seed: u64) -> Self {
        StreamKey {
            hi: splitmix(master_seed ^ GAMMA),
            lo: splitmix(master_seed.wrapping_add(GAMMA)),
        }
    }

    /// Derive a child key by absorbing a path of words.
    pub fn child(&self, words: &[u64]) -> Self {
        let mut hi = self.hi;
        let mut lo = self.lo;
        for (i, w) in words.iter().enumerate() {
            hi = splitmix(hi ^ w.wrapping_add((i as u64 + 1).wrapping_mul(GAMMA)));
            lo = splitmix(lo ^ hi.wrapping_add(GAMMA));
        }
        StreamKey { hi, lo }
    }

    /// Derive a child key from a tag and a point's coordinate bit patterns.
    ///
    /// Points with distinct coordinates get distinct keys; the same point
    /// under the same parent gets the same key in any run. This is the anchor
    /// of the common-randomness convention used by the couplings.
    pub fn child_point<const D: usize>(&self, tag: u64, p: &Point<D>) -> Self {
        let mut words = [0u64; 4];
        words[0] = tag;
        for i in 0..D {
            words[i + 1] = p.coords()[i].to_bits();
        }
        self.child(&words[..D + 1])
    }

    /// Instantiate the stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.hi.to_le_bytes());
        seed[8..16].copy_from_slice(&self.lo.to_le_bytes());
        seed[16..24].copy_from_slice(&splitmix(self.hi ^ GAMMA).to_le_bytes());
        seed[24..32].copy_from_slice(&splitmix(self.lo.wrapping_add(GAMMA)).to_le_bytes());
        ChaCha12Rng::from_seed(seed)
    }
}

/// Poisson count with the given mean. Mean 0 returns 0.
pub fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    use rand_distr::Distribution;
    let d = rand_distr::Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

/// Standard normal draw.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_keys_reproduce_streams() {
        let a = StreamKey::root(7).child(&[tags::CARRIER, 3]);
        let b = StreamKey::root(7).child(&[tags::CARRIER, 3]);
        let xs: Vec<f64> = {
            let mut r = a.rng();
            (0..32).map(|_| r.random::<f64>()).collect()
        };
        let ys: Vec<f64> = {
            let mut r = b.rng();
            (0..32).map(|_| r.random::<f64>()).collect()
        };
        assert_eq!(xs, ys);
    }

    #[test]
    fn sibling_keys_differ() {
        let root = StreamKey::root(7);
        assert_ne!(root.child(&[1]), root.child(&[2]));
        assert_ne!(root.child(&[1, 2]), root.child(&[2, 1]));
        let p = Point::new([0.25f64, 0.75]);
        let q = Point::new([0.75f64, 0.25]);
        assert_ne!(
            root.child_point(tags::RETENTION, &p),
            root.child_point(tags::RETENTION, &q)
        );
    }

    #[test]
    fn poisson_mean_sane() {
        let mut rng = StreamKey::root(11).child(&[tags::SELFTEST]).rng();
        let n = 20_000;
        let mean = 3.7;
        let total: u64 = (0..n).map(|_| poisson_count(&mut rng, mean)).sum();
        let avg = total as f64 / n as f64;
        // 5 sigma band around the mean
        let tol = 5.0 * (mean / n as f64).sqrt();
        assert!((avg - mean).abs() < tol, "avg {avg} vs {mean}");
    }
}
