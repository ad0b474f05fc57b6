//! One Bloom filter per table, double hashing over a 64-bit key hash.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    k: u8,
    num_bits: u32,
    bits: Vec<u8>,
}

/// FNV-1a followed by the splitmix64 finalizer. Stable across platforms so
/// table files are reproducible.
pub fn key_hash(key: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in key {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

impl BloomFilter {
    /// `k = round(bits_per_key * ln 2)`, clamped to [1, 30].
    pub fn num_probes(bits_per_key: u32) -> u8 {
        ((bits_per_key as f64 * std::f64::consts::LN_2).round() as u32).clamp(1, 30) as u8
    }

    pub fn from_hashes(hashes: &[u64], bits_per_key: u32) -> Self {
        let num_bits = ((hashes.len() as u64 * bits_per_key as u64).max(64)).min(u32::MAX as u64) as u32;
        let mut f = Self { k: Self::num_probes(bits_per_key), num_bits, bits: vec![0; num_bits.div_ceil(8) as usize] };
        for &h in hashes {
            f.probe(h, |bits, bit| {
                bits[bit / 8] |= 1 << (bit % 8);
                true
            });
        }
        f
    }

    fn probe(&mut self, hash: u64, mut visit: impl FnMut(&mut [u8], usize) -> bool) -> bool {
        let delta = hash.rotate_right(17) | 1;
        let mut h = hash;
        for _ in 0..self.k {
            let bit = (h % self.num_bits as u64) as usize;
            if !visit(&mut self.bits, bit) {
                return false;
            }
            h = h.wrapping_add(delta);
        }
        true
    }

    pub fn may_contain(&self, key: &[u8]) -> bool {
        self.may_contain_hash(key_hash(key))
    }

    pub fn may_contain_hash(&self, hash: u64) -> bool {
        let delta = hash.rotate_right(17) | 1;
        let mut h = hash;
        for _ in 0..self.k {
            let bit = (h % self.num_bits as u64) as usize;
            if self.bits[bit / 8] & (1 << (bit % 8)) == 0 {
                return false;
            }
            h = h.wrapping_add(delta);
        }
        true
    }

    /// `k:u8 | num_bits:u32 LE | bits`.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.k);
        out.extend_from_slice(&self.num_bits.to_le_bytes());
        out.extend_from_slice(&self.bits);
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < 5 {
            return Err(Error::Corruption("bloom section truncated".into()));
        }
        let k = buf[0];
        let num_bits = u32::from_le_bytes(buf[1..5].try_into().unwrap());
        let bits = &buf[5..];
        if k == 0 || num_bits == 0 || bits.len() != num_bits.div_ceil(8) as usize {
            return Err(Error::Corruption("bloom section malformed".into()));
        }
        Ok(Self { k, num_bits, bits: bits.to_vec() })
    }

    pub fn encoded_len(&self) -> usize {
        5 + self.bits.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_false_negatives_and_low_fp_rate() {
        let keys: Vec<[u8; 8]> = (0..10_000u64).map(|i| (i * 2).to_be_bytes()).collect();
        let hashes: Vec<u64> = keys.iter().map(|k| key_hash(k)).collect();
        let f = BloomFilter::from_hashes(&hashes, 10);
        assert!(keys.iter().all(|k| f.may_contain(k)));
        let fp = (0..10_000u64).filter(|i| f.may_contain(&(i * 2 + 1).to_be_bytes())).count();
        assert!(fp < 200, "false positives {fp}");
    }

    #[test]
    fn probes_for_ten_bits() {
        assert_eq!(BloomFilter::num_probes(10), 7);
        assert_eq!(BloomFilter::num_probes(1), 1);
    }

    #[test]
    fn encode_roundtrip() {
        let f = BloomFilter::from_hashes(&[1, 2, 3], 10);
        let mut buf = Vec::new();
        f.encode_into(&mut buf);
        assert_eq!(buf.len(), f.encoded_len());
        assert_eq!(BloomFilter::decode(&buf).unwrap(), f);
        assert!(BloomFilter::decode(&buf[..4]).is_err());
    }
}
