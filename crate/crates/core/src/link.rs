//! Received-signal smoothing and proximity quantization.
//!
//! Raw per-packet energy-detection (ED) readings are far too noisy to gate
//! the mate relation directly. Each node therefore keeps, per neighbor, a
//! short-term average over the last `W1` raw samples (recomputed every
//! `dt1`) and a long-term average over the last `W2` short averages
//! (recomputed every `dt2`). The quantizer maps `min(short, long)` through
//! two thresholds into four levels:
//!
//! - 3: at or above `th20` (within-20m class, mate)
//! - 2: at or above `th30` (within-30m class)
//! - 1: heard recently but weak
//! - 0: silent beyond the expiry horizon, or never heard
//!
//! Taking the minimum of the two averages means a transient spike can never
//! raise the level; only sustained signal can.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::consensus::NodeId;

/// Smoothing windows, refresh cadence and quantizer thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Short window length, in raw samples.
    pub short_window: usize,
    /// Long window length, in short-average values.
    pub long_window: usize,
    /// Short-average refresh period (ms).
    pub short_period_ms: u64,
    /// Long-average refresh period (ms).
    pub long_period_ms: u64,
    /// Quantizer threshold for the within-20m class.
    pub th20: f64,
    /// Quantizer threshold for the within-30m class.
    pub th30: f64,
    /// A neighbor silent for longer than this drops to level 0 (ms).
    pub silence_expiry_ms: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            short_window: 10,
            long_window: 5,
            short_period_ms: 1000,
            long_period_ms: 1000,
            th20: 8.0,
            th30: 5.0,
            silence_expiry_ms: 5000,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.short_window == 0 || self.long_window == 0 {
            return Err("estimator windows must be >= 1".into());
        }
        if self.short_period_ms == 0 || self.long_period_ms == 0 {
            return Err("estimator refresh periods must be > 0".into());
        }
        if !(self.th20 > self.th30 && self.th30 > 0.0) {
            return Err(format!(
                "thresholds must satisfy th20 > th30 > 0 (got {} and {})",
                self.th20, self.th30
            ));
        }
        Ok(())
    }
}

/// One received-signal measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkSample {
    pub neighbor: NodeId,
    pub ed: u8,
    pub timestamp_ms: u64,
}

/// Per-neighbor smoothing state.
#[derive(Debug, Clone)]
struct NeighborLink {
    raw: VecDeque<u8>,
    shorts: VecDeque<f64>,
    short_avg: f64,
    long_avg: f64,
    level: u8,
    last_heard_ms: u64,
}

impl NeighborLink {
    fn new(sample: LinkSample) -> Self {
        let mut raw = VecDeque::new();
        raw.push_back(sample.ed);
        Self {
            raw,
            shorts: VecDeque::new(),
            short_avg: f64::NAN,
            long_avg: f64::NAN,
            level: 0,
            last_heard_ms: sample.timestamp_ms,
        }
    }
}

/// A level transition reported by [`LinkEstimator::refresh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelChange {
    pub neighbor: NodeId,
    pub old: u8,
    pub new: u8,
}

/// All link state one node keeps about its neighbors.
///
/// Memory is bounded by `neighbors x (short_window + long_window)`
/// regardless of how long the run is.
#[derive(Debug, Clone)]
pub struct LinkEstimator {
    cfg: EstimatorConfig,
    links: BTreeMap<NodeId, NeighborLink>,
    next_short_ms: u64,
    next_long_ms: u64,
}

impl LinkEstimator {
    pub fn new(cfg: EstimatorConfig) -> Self {
        Self {
            cfg,
            links: BTreeMap::new(),
            next_short_ms: cfg.short_period_ms,
            next_long_ms: cfg.long_period_ms,
        }
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    /// Append a raw sample to the neighbor's window. Levels are not touched
    /// here; they only move at refresh instants.
    pub fn ingest_sample(&mut self, sample: LinkSample) {
        match self.links.entry(sample.neighbor) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(NeighborLink::new(sample));
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                let link = e.into_mut();
                debug_assert!(sample.timestamp_ms >= link.last_heard_ms);
                link.raw.push_back(sample.ed);
                while link.raw.len() > self.cfg.short_window {
                    link.raw.pop_front();
                }
                link.last_heard_ms = sample.timestamp_ms;
            }
        }
    }

    /// Recompute averages and levels that are due at `now`.
    ///
    /// The host must call this at least every `min(dt1, dt2)`; the
    /// simulator drives it from a fixed event grid. Returns the level
    /// transitions, in neighbor order.
    pub fn refresh(&mut self, now_ms: u64) -> Vec<LevelChange> {
        let mut short_due = false;
        let mut long_due = false;
        while now_ms >= self.next_short_ms {
            self.next_short_ms += self.cfg.short_period_ms;
            short_due = true;
        }
        while now_ms >= self.next_long_ms {
            self.next_long_ms += self.cfg.long_period_ms;
            long_due = true;
        }
        if !short_due && !long_due {
            return Vec::new();
        }

        let mut changes = Vec::new();
        for (&neighbor, link) in self.links.iter_mut() {
            if short_due && !link.raw.is_empty() {
                link.short_avg = mean_u8(&link.raw);
                link.shorts.push_back(link.short_avg);
                while link.shorts.len() > self.cfg.long_window {
                    link.shorts.pop_front();
                }
            }
            if long_due && !link.shorts.is_empty() {
                link.long_avg = mean_f64(&link.shorts);
            }
            let old = link.level;
            link.level = quantize(
                link.short_avg,
                link.long_avg,
                now_ms.saturating_sub(link.last_heard_ms),
                &self.cfg,
            );
            if link.level != old {
                changes.push(LevelChange {
                    neighbor,
                    old,
                    new: link.level,
                });
            }
        }
        changes
    }

    /// Current quantized proximity level for a neighbor; 0 if never heard.
    pub fn proxim(&self, neighbor: NodeId) -> u8 {
        self.links.get(&neighbor).map_or(0, |l| l.level)
    }

    /// Current levels for every neighbor ever heard.
    pub fn levels(&self) -> impl Iterator<Item = (NodeId, u8)> + '_ {
        self.links.iter().map(|(&n, l)| (n, l.level))
    }

    #[cfg(test)]
    fn window_len(&self, neighbor: NodeId) -> usize {
        self.links.get(&neighbor).map_or(0, |l| l.raw.len())
    }
}

fn mean_u8(values: &VecDeque<u8>) -> f64 {
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
}

fn mean_f64(values: &VecDeque<f64>) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Threshold the combined statistic. A silent neighbor expires to 0 no
/// matter what its stale averages say.
fn quantize(short: f64, long: f64, silence_ms: u64, cfg: &EstimatorConfig) -> u8 {
    if silence_ms > cfg.silence_expiry_ms {
        return 0;
    }
    let combined = if long.is_nan() { short } else { short.min(long) };
    if combined.is_nan() {
        // heard (entry exists) but no refresh has averaged anything yet
        return 0;
    }
    if combined >= cfg.th20 {
        3
    } else if combined >= cfg.th30 {
        2
    } else {
        1
    }
}
