//! Per-vertex approximate degree counters, one byte each.
//!
//! The high nibble of a cell is an exponent `E`, the low nibble a mantissa
//! `M`. An increment is applied with probability `2^-E`; because the cell is
//! a plain byte, a mantissa overflow carries into the exponent. The estimate
//! `(2^E - 1) * 16 + 2^E * M` is unbiased.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const SATURATED: u8 = 0xff;
pub const MAX_ESTIMATE: u64 = estimate_cell(SATURATED);

const MAGIC: &[u8; 8] = b"PLSMDSK1";

/// Decodes one cell.
pub const fn estimate_cell(cell: u8) -> u64 {
    let e = (cell >> 4) as u32;
    let m = (cell & 0x0f) as u64;
    ((1u64 << e) - 1) * 16 + (1u64 << e) * m
}

#[derive(Debug, Clone)]
pub struct DegreeSketch {
    cells: Vec<u8>,
    rng: ChaCha8Rng,
}

impl DegreeSketch {
    pub fn new(seed: u64) -> Self {
        Self { cells: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn with_capacity(seed: u64, vertices: usize) -> Self {
        let mut s = Self::new(seed);
        s.cells.resize(vertices, 0);
        s
    }

    /// Allocated cells; one byte each.
    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, u: u64) -> u8 {
        self.cells.get(u as usize).copied().unwrap_or(0)
    }

    fn slot(&mut self, u: u64) -> &mut u8 {
        let idx = usize::try_from(u).expect("vertex id fits in usize");
        if idx >= self.cells.len() {
            let new_len = (idx + 1).next_power_of_two().max(64);
            self.cells.resize(new_len, 0);
        }
        &mut self.cells[idx]
    }

    pub fn set_cell(&mut self, u: u64, cell: u8) {
        *self.slot(u) = cell;
    }

    /// Records one more edge endpoint at `u`.
    pub fn increment(&mut self, u: u64) {
        let cell = self.cell(u);
        if cell == SATURATED {
            return;
        }
        let e = cell >> 4;
        // probability 2^-e: the low e bits of a uniform word are all zero
        let hit = e == 0 || self.rng.next_u64() & ((1u64 << e) - 1) == 0;
        if hit {
            *self.slot(u) = cell + 1;
        }
    }

    pub fn estimate(&self, u: u64) -> u64 {
        estimate_cell(self.cell(u))
    }

    pub fn is_saturated(&self, u: u64) -> bool {
        self.cell(u) == SATURATED
    }

    pub fn clear(&mut self) {
        self.cells.iter_mut().for_each(|c| *c = 0);
    }

    /// Writes `magic | u64 LE cell count | cells`.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(MAGIC)?;
        f.write_all(&(self.cells.len() as u64).to_le_bytes())?;
        f.write_all(&self.cells)?;
        f.sync_all()?;
        fs::rename(tmp, path)
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Corruption(format!("{} is not a degree sketch", path.display())));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() - 16 != len {
            return Err(Error::Corruption(format!("{}: length mismatch", path.display())));
        }
        let mut s = Self::new(seed);
        s.cells = bytes[16..].to_vec();
        Ok(s)
    }
}
