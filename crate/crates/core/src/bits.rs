//! LSB-first bit writer and bounds-checked reader over 64-bit words.

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    words: Vec<u64>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends the low `width` bits of `value`. `width` may be 0..=64.
    pub fn write_bits(&mut self, value: u64, width: u32) {
        if width == 0 {
            return;
        }
        debug_assert!(width <= 64);
        let value = if width == 64 { value } else { value & ((1u64 << width) - 1) };
        let offset = (self.len % 64) as u32;
        if offset == 0 {
            self.words.push(value);
        } else {
            *self.words.last_mut().unwrap() |= value << offset;
            if offset + width > 64 {
                self.words.push(value >> (64 - offset));
            }
        }
        self.len += width as usize;
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.write_bits(bit as u64, 1);
    }

    /// `zeros` zero bits followed by a single one bit.
    pub fn write_unary(&mut self, zeros: u64) {
        let mut left = zeros;
        while left >= 64 {
            self.write_bits(0, 64);
            left -= 64;
        }
        self.write_bits(0, left as u32);
        self.write_bit(true);
    }

    pub fn into_parts(self) -> (Vec<u64>, usize) {
        (self.words, self.len)
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    words: &'a [u64],
    len: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(words: &'a [u64], len: usize) -> Self {
        debug_assert!(len <= words.len() * 64);
        Self { words, len, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.len - self.pos
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        if width == 0 {
            return Ok(0);
        }
        if width as usize > self.remaining() {
            return Err(Error::decode("bitstream truncated"));
        }
        let word = self.pos / 64;
        let offset = (self.pos % 64) as u32;
        let mut value = self.words[word] >> offset;
        if offset + width > 64 {
            value |= self.words[word + 1] << (64 - offset);
        }
        if width < 64 {
            value &= (1u64 << width) - 1;
        }
        self.pos += width as usize;
        Ok(value)
    }

    /// Counts zero bits up to and including the next one bit.
    pub fn read_unary(&mut self) -> Result<u64> {
        let mut zeros = 0u64;
        loop {
            if self.pos >= self.len {
                return Err(Error::decode("unterminated unary code"));
            }
            let word = self.pos / 64;
            let offset = (self.pos % 64) as u32;
            let bits = self.words[word] >> offset;
            let avail = (64 - offset) as usize;
            if bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                if self.pos + tz >= self.len {
                    return Err(Error::decode("unterminated unary code"));
                }
                self.pos += tz + 1;
                return Ok(zeros + tz as u64);
            }
            zeros += avail as u64;
            self.pos += avail;
        }
    }
}

pub fn words_to_bytes(words: &[u64], len_bits: usize) -> Vec<u8> {
    let nbytes = len_bits.div_ceil(8);
    let mut out = Vec::with_capacity(nbytes);
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.truncate(nbytes);
    out
}

pub fn bytes_to_words(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks(8)
        .map(|chunk| {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            u64::from_le_bytes(buf)
        })
        .collect()
}
