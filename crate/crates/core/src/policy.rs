//! Live workload statistics and the adaptive delta/pivot decision.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cost::{self, CostParams};
use crate::lsm::LevelingMode;

pub const DEFAULT_WINDOW: usize = 1024;
/// Observations needed before the window replaces the prior.
pub const MIN_OBSERVATIONS: usize = 64;
/// Threshold used when the window holds no updates at all.
pub const MAX_THRESHOLD: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdatePolicy {
    Adaptive,
    AlwaysDelta,
    AlwaysPivot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateMethod {
    Delta,
    Pivot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Lookup,
    Update,
}

/// Vertex and edge counts plus a sliding window over recent operations.
#[derive(Debug, Clone)]
pub struct WorkloadStats {
    pub n: u64,
    pub m: u64,
    window: VecDeque<OpKind>,
    window_size: usize,
    lookups_in_window: usize,
    prior_lookup: f64,
}

impl Default for WorkloadStats {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW, 0.5)
    }
}

impl WorkloadStats {
    pub fn new(window_size: usize, prior_lookup: f64) -> Self {
        assert!(window_size > 0);
        Self {
            n: 0,
            m: 0,
            window: VecDeque::with_capacity(window_size),
            window_size,
            lookups_in_window: 0,
            prior_lookup,
        }
    }

    pub fn observe(&mut self, op: OpKind) {
        if self.window.len() == self.window_size && self.window.pop_front() == Some(OpKind::Lookup) {
            self.lookups_in_window -= 1;
        }
        if op == OpKind::Lookup {
            self.lookups_in_window += 1;
        }
        self.window.push_back(op);
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// `(theta_lookup, theta_update)`.
    pub fn theta(&self) -> (f64, f64) {
        if self.window.len() < MIN_OBSERVATIONS.min(self.window_size) {
            return (self.prior_lookup, 1.0 - self.prior_lookup);
        }
        let lookup = self.lookups_in_window as f64 / self.window.len() as f64;
        (lookup, 1.0 - lookup)
    }

    /// `m / n`.
    pub fn avg_degree(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m as f64 / self.n as f64
        }
    }
}

/// Static tree geometry the model needs besides live statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub id_bytes: f64,
    pub block_bytes: f64,
    pub size_ratio: f64,
    pub mode: LevelingMode,
}

impl ModelShape {
    /// Snapshot of cost parameters; `levels` comes from the engine each time.
    pub fn params(&self, stats: &WorkloadStats, levels: u32) -> CostParams {
        let (theta_lookup, theta_update) = stats.theta();
        CostParams {
            id_bytes: self.id_bytes,
            block_bytes: self.block_bytes,
            size_ratio: self.size_ratio,
            levels: levels.max(1),
            avg_degree: stats.avg_degree(),
            theta_lookup,
            theta_update,
            mode: self.mode,
        }
    }
}

/// Degree threshold, saturating to [`MAX_THRESHOLD`] when nothing updates.
pub fn effective_threshold(p: &CostParams) -> u64 {
    if p.theta_update <= 0.0 {
        return MAX_THRESHOLD;
    }
    cost::threshold(p).map_or(MAX_THRESHOLD, |t| t.min(MAX_THRESHOLD))
}

/// Delta when the vertex is saturated or its estimated degree reaches the
/// threshold; pivot otherwise.
pub fn choose_update(estimated_degree: u64, p: &CostParams, saturated: bool) -> UpdateMethod {
    if saturated || estimated_degree >= effective_threshold(p) {
        UpdateMethod::Delta
    } else {
        UpdateMethod::Pivot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_ratio() {
        let mut s = WorkloadStats::new(100, 0.5);
        for i in 0..100 {
            s.observe(if i % 2 == 0 { OpKind::Lookup } else { OpKind::Update });
        }
        assert_eq!(s.theta(), (0.5, 0.5));
    }

    #[test]
    fn prior_until_enough_observations() {
        let mut s = WorkloadStats::default();
        assert_eq!(s.theta(), (0.5, 0.5));
        for _ in 0..MIN_OBSERVATIONS - 1 {
            s.observe(OpKind::Lookup);
        }
        assert_eq!(s.theta(), (0.5, 0.5));
        s.observe(OpKind::Lookup);
        assert_eq!(s.theta(), (1.0, 0.0));
    }

    #[test]
    fn window_slides() {
        let mut s = WorkloadStats::new(10, 0.5);
        for _ in 0..10 {
            s.observe(OpKind::Lookup);
        }
        for _ in 0..4 {
            s.observe(OpKind::Update);
        }
        assert_eq!(s.window_len(), 10);
        assert!((s.theta().0 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn ninety_ten_mix_converges() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut s = WorkloadStats::default();
        for _ in 0..10_000 {
            s.observe(if rng.random_bool(0.9) { OpKind::Lookup } else { OpKind::Update });
        }
        assert!((s.theta().0 - 0.9).abs() <= 0.05, "{:?}", s.theta());
    }

    #[test]
    fn table_five_degree_classes() {
        // the Wikipedia graph: average degree 37.11, half lookups
        let p = CostParams { avg_degree: 37.11, ..CostParams::running_example() };
        assert_eq!(choose_update(118, &p, false), UpdateMethod::Delta);
        assert_eq!(choose_update(4, &p, false), UpdateMethod::Pivot);
        assert_eq!(choose_update(0, &p, true), UpdateMethod::Delta);
    }

    #[test]
    fn tie_goes_to_delta() {
        let p = CostParams::running_example();
        assert_eq!(choose_update(20, &p, false), UpdateMethod::Delta);
        assert_eq!(choose_update(19, &p, false), UpdateMethod::Pivot);
    }

    #[test]
    fn pure_lookup_window_prefers_pivots() {
        let p = CostParams::running_example().with_theta_lookup(1.0);
        assert_eq!(effective_threshold(&p), MAX_THRESHOLD);
        assert_eq!(choose_update(100_000, &p, false), UpdateMethod::Pivot);
    }

    #[test]
    fn degree_from_counts() {
        let mut s = WorkloadStats::default();
        assert_eq!(s.avg_degree(), 0.0);
        s.n = 4;
        s.m = 10;
        assert_eq!(s.avg_degree(), 2.5);
    }
}
