//! Block I/O cost model for edge updates.
//!
//! A *delta* update writes a small labeled entry that later lookups of the
//! vertex must also fetch until compaction folds it into the pivot. A *pivot*
//! update reads the whole neighbor list and rewrites it. Both costs are in
//! expected block I/Os per update, under a balanced tree with size ratio `T`
//! and `L` levels, a uniform key distribution, and a static mix of lookups
//! (`theta_lookup`) and updates (`theta_update`).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lsm::LevelingMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParams {
    /// Bytes per vertex ID.
    pub id_bytes: f64,
    pub block_bytes: f64,
    pub size_ratio: f64,
    pub levels: u32,
    pub avg_degree: f64,
    pub theta_lookup: f64,
    pub theta_update: f64,
    pub mode: LevelingMode,
}

impl CostParams {
    /// `I = 8 B, B = 4096 B, T = 10, L = 4, d = 32`, half lookups.
    pub fn running_example() -> Self {
        Self {
            id_bytes: 8.0,
            block_bytes: 4096.0,
            size_ratio: 10.0,
            levels: 4,
            avg_degree: 32.0,
            theta_lookup: 0.5,
            theta_update: 0.5,
            mode: LevelingMode::Leveling,
        }
    }

    pub fn with_mode(self, mode: LevelingMode) -> Self {
        Self { mode, ..self }
    }

    /// Sets both fractions from the lookup fraction.
    pub fn with_theta_lookup(self, theta_lookup: f64) -> Self {
        Self { theta_lookup, theta_update: 1.0 - theta_lookup, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.id_bytes > 0.0 && self.block_bytes > 0.0) {
            return bad(format!("id and block sizes must be positive: I={} B={}", self.id_bytes, self.block_bytes));
        }
        if self.size_ratio < 2.0 {
            return bad(format!("size ratio {} < 2", self.size_ratio));
        }
        if self.levels < 1 {
            return bad("level count must be at least 1".into());
        }
        if self.avg_degree.is_nan() || self.avg_degree < 0.0 {
            return bad(format!("average degree {} < 0", self.avg_degree));
        }
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.theta_lookup) || !in_unit(self.theta_update) {
            return bad("workload fractions must lie in [0, 1]".into());
        }
        if (self.theta_lookup + self.theta_update - 1.0).abs() > 1e-9 {
            return bad(format!("workload fractions sum to {} instead of 1", self.theta_lookup + self.theta_update));
        }
        Ok(())
    }

    fn t(&self) -> f64 {
        self.size_ratio
    }

    fn l(&self) -> f64 {
        self.levels as f64
    }

    /// Write amplification applied to an entry that travels to the last level.
    pub fn write_amplification(&self) -> f64 {
        match self.mode {
            LevelingMode::Leveling => self.t() * self.l(),
            LevelingMode::OneLeveling => self.t() * (self.l() - 1.0) + 1.0,
        }
    }

    /// Expected extra lookups of a vertex while one of its deltas is alive.
    pub fn prospective_reads(&self) -> Result<f64> {
        if self.theta_update <= 0.0 {
            return Err(Error::ZeroUpdateFraction);
        }
        Ok(self.theta_lookup * self.avg_degree / (self.theta_update * (self.t() - 1.0)))
    }
}

/// Expected block I/Os of one delta update: writing a two-ID entry through
/// every level, plus one extra block read for each lookup of the vertex that
/// happens before the delta reaches the pivot.
pub fn delta_cost(p: &CostParams) -> Result<f64> {
    p.validate()?;
    Ok(delta_write_cost(p) + p.prospective_reads()?)
}

/// Write share of [`delta_cost`].
pub fn delta_write_cost(p: &CostParams) -> f64 {
    2.0 * p.id_bytes * p.write_amplification() / p.block_bytes
}

/// Blocks read by a lookup that finds a pivot of `degree` neighbors: about
/// one I/O for deltas above it, then the blocks spanned by the pivot.
pub fn lookup_cost(p: &CostParams, degree: u64) -> f64 {
    2.0 + (degree as f64 + 1.0) * p.id_bytes / p.block_bytes
}

/// Expected block I/Os of one pivot update at a vertex of `degree`: a lookup,
/// then rewriting a pivot of `degree + 1` neighbors plus its key.
pub fn pivot_cost(p: &CostParams, degree: u64) -> f64 {
    lookup_cost(p, degree) + pivot_rewrite_cost(p, degree)
}

/// Write share of [`pivot_cost`].
pub fn pivot_rewrite_cost(p: &CostParams, degree: u64) -> f64 {
    let rewrite_amp = match p.mode {
        LevelingMode::Leveling => p.t() * p.l(),
        LevelingMode::OneLeveling => p.t() * p.l() - p.t() + 1.0,
    };
    (degree as f64 + 2.0) * p.id_bytes * rewrite_amp / p.block_bytes
}

const TIE_EPS: f64 = 1e-9;

/// Smallest degree at which a delta update costs no more than a pivot
/// update, from the closed form. Degrees at or above it take deltas.
pub fn threshold(p: &CostParams) -> Result<u64> {
    p.validate()?;
    let x = p.prospective_reads()?;
    let (i, b, t, l) = (p.id_bytes, p.block_bytes, p.t(), p.l());
    let raw = match p.mode {
        LevelingMode::Leveling => {
            let k = t * l + 1.0;
            p.theta_lookup * p.avg_degree * b / (p.theta_update * i * (t - 1.0) * k) - 2.0 * b / (i * k) - 1.0 / k
        }
        LevelingMode::OneLeveling => {
            let k = t * l - t + 2.0;
            b / (i * k) * (x - 2.0) - 1.0 / k
        }
    };
    Ok(clamp_ceil(raw))
}

/// Values within rounding error of an integer are treated as that integer,
/// so exact ties land on the delta side like they do in the scan.
fn clamp_ceil(x: f64) -> u64 {
    let nearest = x.round();
    let x = if (x - nearest).abs() <= TIE_EPS * nearest.abs().max(1.0) { nearest } else { x };
    if x <= 0.0 {
        0
    } else if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        x.ceil() as u64
    }
}

/// The same threshold found by evaluating `delta_cost <= pivot_cost(d)`
/// directly: gallop to a degree where it holds, then bisect.
pub fn threshold_by_scan(p: &CostParams) -> Result<u64> {
    let delta = delta_cost(p)?;
    let holds = |d: u64| {
        let pivot = pivot_cost(p, d);
        delta <= pivot + TIE_EPS * pivot.abs().max(1.0)
    };
    if holds(0) {
        return Ok(0);
    }
    let mut hi = 1u64;
    while !holds(hi) {
        hi = hi.checked_mul(2).ok_or_else(|| Error::InvalidArgument("threshold overflows".into()))?;
    }
    let mut lo = hi / 2; // fails at lo
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Probability that a lookup finds a delta of the vertex at the `i`-th level
/// above the last one.
pub fn level_hit_probability(i: u32, size_ratio: f64, avg_degree: f64) -> f64 {
    let t = size_ratio;
    1.0 - (-(t - 1.0) * avg_degree / t.powi(1 + i as i32)).exp()
}

/// Expected number of delta entries a lookup fetches across all levels above
/// the last.
pub fn expected_retrieval_cost(levels: u32, size_ratio: f64, avg_degree: f64) -> f64 {
    (1..levels).map(|i| level_hit_probability(i, size_ratio, avg_degree)).sum()
}
