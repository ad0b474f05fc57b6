//! LEB128 unsigned varints.

use crate::error::{Error, Result};

pub fn put(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

/// Reads one varint and advances `buf` past it.
pub fn get(buf: &mut &[u8]) -> Result<u64> {
    let mut v = 0u64;
    for (i, &b) in buf.iter().enumerate().take(10) {
        let bits = (b & 0x7f) as u64;
        if i == 9 && bits > 1 {
            return Err(Error::decode("varint overflows u64"));
        }
        v |= bits << (7 * i);
        if b & 0x80 == 0 {
            *buf = &buf[i + 1..];
            return Ok(v);
        }
    }
    Err(Error::decode("truncated varint"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        for v in [0, 1, 127, 128, 300, u32::MAX as u64, u64::MAX] {
            let mut buf = Vec::new();
            put(&mut buf, v);
            let mut s = buf.as_slice();
            assert_eq!(get(&mut s).unwrap(), v);
            assert!(s.is_empty());
        }
        assert!(get(&mut &[0x80u8][..]).is_err());
        assert!(get(&mut &[0xffu8; 11][..]).is_err());
    }
}
