//! Convergence and detection metrics.
//!
//! The central quantity is tau: the number of data messages broadcast
//! network-wide from an epoch's start until every node's extracted mate
//! set matches its true group (and every node has adopted the epoch).
//! Empirical tau distributions are compared against two analytic bounds
//! on randomized broadcast max-consensus:
//!
//! - expected value: `N * Delta * (1 + ln N)`
//! - with confidence `1 - eps`: `N * Delta * (ln N + ln(Delta / eps))`
//!
//! The bounds are stated for natural log; base-10 variants are reported
//! alongside since the smaller base-10 figures are the stricter claim.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::replay::Replayer;
use crate::scenario::{GroundTruthTimeline, Partition};
use crate::trace::{TraceKind, TraceMeta, TraceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid bound parameters: {0}")]
    InvalidArgument(String),
}

/// Inputs to the tau bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Network size.
    pub n: u64,
    /// Diameter of the (mate) graph.
    pub delta: u64,
    /// Bound confidence: holds with probability `1 - epsilon`.
    pub epsilon: f64,
}

impl BoundParams {
    fn validate(&self) -> Result<(), MetricsError> {
        if self.n < 1 || self.delta < 1 {
            return Err(MetricsError::InvalidArgument(
                "n and delta must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Upper bound on the expected number of messages to convergence.
pub fn bound_expected_tau(p: &BoundParams) -> Result<f64, MetricsError> {
    p.validate()?;
    let n = p.n as f64;
    Ok(n * p.delta as f64 * (1.0 + n.ln()))
}

/// Upper bound holding with probability `1 - epsilon`.
pub fn bound_tau_with_confidence(p: &BoundParams) -> Result<f64, MetricsError> {
    p.validate()?;
    if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
        return Err(MetricsError::InvalidArgument(format!(
            "epsilon must be in (0, 1), got {}",
            p.epsilon
        )));
    }
    let n = p.n as f64;
    let delta = p.delta as f64;
    Ok(n * delta * (n.ln() + (delta / p.epsilon).ln()))
}

/// Same bounds evaluated with log base 10 (the stricter reading).
pub fn bound_expected_tau_log10(p: &BoundParams) -> Result<f64, MetricsError> {
    p.validate()?;
    let n = p.n as f64;
    Ok(n * p.delta as f64 * (1.0 + n.log10()))
}

pub fn bound_tau_with_confidence_log10(p: &BoundParams) -> Result<f64, MetricsError> {
    p.validate()?;
    if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
        return Err(MetricsError::InvalidArgument(format!(
            "epsilon must be in (0, 1), got {}",
            p.epsilon
        )));
    }
    let n = p.n as f64;
    let delta = p.delta as f64;
    Ok(n * delta * (n.log10() + (delta / p.epsilon).log10()))
}

// ---------------------------------------------------------------------------
// Mate graph
// ---------------------------------------------------------------------------

/// Diameter of the graph: longest shortest path within a component,
/// maximized over components. Singleton or empty graphs have diameter 0.
pub fn mate_graph_diameter(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut best = 0;
    let mut dist = vec![usize::MAX; n];
    for start in 0..n {
        dist.fill(usize::MAX);
        dist[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    best = best.max(dist[w]);
                    queue.push_back(w);
                }
            }
        }
    }
    best
}

/// Mate edges from per-node level tables: an edge exists when both
/// directions sit strictly above the mate threshold.
pub fn mate_edges_from_levels(
    levels: &[std::collections::BTreeMap<u32, u8>],
    mate_threshold: u8,
) -> Vec<(usize, usize)> {
    let n = levels.len();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let ab = levels[a].get(&(b as u32)).copied().unwrap_or(0);
            let ba = levels[b].get(&(a as u32)).copied().unwrap_or(0);
            if ab > mate_threshold && ba > mate_threshold {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Mate edges from node positions and the distance rule.
pub fn mate_edges_from_positions(positions: &[(f64, f64)], range_m: f64) -> Vec<(usize, usize)> {
    let n = positions.len();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if crate::scenario::distance(positions[a], positions[b]) <= range_m {
                edges.push((a, b));
            }
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// Tau measurement
// ---------------------------------------------------------------------------

/// Per-epoch convergence measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub epoch: u64,
    pub start_ms: f64,
    pub end_ms: f64,
    /// Data messages broadcast from epoch start until global agreement;
    /// `None` when the epoch never converged.
    pub tau: Option<u64>,
    pub converged: bool,
    pub convergence_ms: Option<f64>,
    /// The trace ended inside this epoch; it is excluded from statistics.
    pub truncated: bool,
}

/// Replay a trace and measure tau per epoch.
///
/// An epoch converges at the first instant every node's mate set equals
/// its ground-truth component *and* every node has caught up to the epoch;
/// beacons are excluded from the message count.
pub fn measure_tau(
    records: &[TraceRecord],
    meta: &TraceMeta,
    truth: &GroundTruthTimeline,
) -> Vec<ConvergenceRecord> {
    let n = meta.n_nodes;
    let duration_us = meta.duration_ms * 1000;

    // epoch windows from beacon emissions; epoch 0 always opens at t=0
    let mut starts: std::collections::BTreeMap<u64, u64> = Default::default();
    starts.insert(0, 0);
    for r in records {
        if r.kind == TraceKind::BeaconTx {
            if let Some(k) = r.epoch {
                starts.entry(k).or_insert(r.time_us);
            }
        }
    }
    let epochs: Vec<(u64, u64)> = starts.into_iter().collect();
    let mut windows: Vec<(u64, u64, u64)> = Vec::with_capacity(epochs.len());
    for (i, &(k, start)) in epochs.iter().enumerate() {
        let end = epochs.get(i + 1).map_or(duration_us, |&(_, s)| s);
        windows.push((k, start, end));
    }

    let mut rep = Replayer::new(meta);
    let mut matched = vec![false; n];
    let mut k_ok = vec![false; n];
    let mut matched_count = 0usize;
    let mut k_ok_count = 0usize;

    let mut out: Vec<ConvergenceRecord> = Vec::with_capacity(windows.len());
    let mut widx = 0usize;
    let mut tx_count = 0u64;
    let mut truth_time = 0u64;

    let recheck_all =
        |rep: &Replayer,
         matched: &mut Vec<bool>,
         k_ok: &mut Vec<bool>,
         matched_count: &mut usize,
         k_ok_count: &mut usize,
         truth_at: &Partition,
         window_k: u64| {
            *matched_count = 0;
            *k_ok_count = 0;
            for v in 0..n {
                matched[v] = rep.mates_sorted(v)
                    == GroundTruthTimeline::component_of(truth_at, v as u32);
                k_ok[v] = rep.node(v).epoch() == window_k;
                if matched[v] {
                    *matched_count += 1;
                }
                if k_ok[v] {
                    *k_ok_count += 1;
                }
            }
        };

    let open_window = |widx: usize, windows: &[(u64, u64, u64)]| -> ConvergenceRecord {
        let (k, start, end) = windows[widx];
        ConvergenceRecord {
            epoch: k,
            start_ms: start as f64 / 1000.0,
            end_ms: end as f64 / 1000.0,
            tau: None,
            converged: false,
            convergence_ms: None,
            truncated: widx == windows.len() - 1,
        }
    };

    out.push(open_window(0, &windows));
    recheck_all(
        &rep,
        &mut matched,
        &mut k_ok,
        &mut matched_count,
        &mut k_ok_count,
        truth.at(0),
        windows[0].0,
    );
    if matched_count == n && k_ok_count == n {
        let rec = out.last_mut().unwrap();
        rec.converged = true;
        rec.tau = Some(0);
        rec.convergence_ms = Some(0.0);
    }

    for r in records {
        // move into any window this record passed
        while widx + 1 < windows.len() && r.time_us >= windows[widx + 1].1 {
            widx += 1;
            tx_count = 0;
            out.push(open_window(widx, &windows));
            recheck_all(
                &rep,
                &mut matched,
                &mut k_ok,
                &mut matched_count,
                &mut k_ok_count,
                truth.at(windows[widx].1 / 1000),
                windows[widx].0,
            );
            if matched_count == n && k_ok_count == n {
                let rec = out.last_mut().unwrap();
                rec.converged = true;
                rec.tau = Some(0);
                rec.convergence_ms = Some(0.0);
            }
        }

        // ground truth changes between records force a full recheck
        let t_ms = r.time_us / 1000;
        if truth
            .events()
            .iter()
            .any(|&(te, _)| te > truth_time && te <= t_ms)
        {
            recheck_all(
                &rep,
                &mut matched,
                &mut k_ok,
                &mut matched_count,
                &mut k_ok_count,
                truth.at(t_ms),
                windows[widx].0,
            );
        }
        truth_time = t_ms;

        let already = out[widx].converged;
        if r.kind == TraceKind::Tx && !already {
            tx_count += 1;
        }
        if let Some(v) = rep.apply(r) {
            let was = (matched[v], k_ok[v]);
            matched[v] =
                rep.mates_sorted(v) == GroundTruthTimeline::component_of(truth.at(t_ms), v as u32);
            k_ok[v] = rep.node(v).epoch() == windows[widx].0;
            match (was.0, matched[v]) {
                (false, true) => matched_count += 1,
                (true, false) => matched_count -= 1,
                _ => {}
            }
            match (was.1, k_ok[v]) {
                (false, true) => k_ok_count += 1,
                (true, false) => k_ok_count -= 1,
                _ => {}
            }
            if !already && matched_count == n && k_ok_count == n {
                let rec = &mut out[widx];
                rec.converged = true;
                rec.tau = Some(tx_count);
                rec.convergence_ms = Some((r.time_us - windows[widx].1) as f64 / 1000.0);
            }
        }
    }

    out
}

// ---------------------------------------------------------------------------
// Detection latency
// ---------------------------------------------------------------------------

/// Outcome for one ground-truth change event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub event_time_ms: f64,
    /// Group count after the event, a cheap signature of what changed.
    pub groups_after: usize,
    pub detected_time_ms: Option<f64>,
    pub latency_ms: Option<f64>,
}

impl DetectionRecord {
    pub fn missed(&self) -> bool {
        self.detected_time_ms.is_none()
    }
}

/// Latency from each ground-truth change to the first instant every
/// node's mate set agrees with the new partition. Unlike tau measurement
/// this does not require nodes to share the beacon epoch: agreement on
/// the groups is what counts.
pub fn detection_latency(
    records: &[TraceRecord],
    meta: &TraceMeta,
    truth: &GroundTruthTimeline,
) -> Vec<DetectionRecord> {
    let n = meta.n_nodes;
    let events = truth.events();
    let mut out: Vec<DetectionRecord> = events
        .iter()
        .map(|(te, p)| DetectionRecord {
            event_time_ms: *te as f64,
            groups_after: p.len(),
            detected_time_ms: None,
            latency_ms: None,
        })
        .collect();
    if events.is_empty() {
        return out;
    }

    let mut rep = Replayer::new(meta);
    let mut matched = vec![false; n];
    let mut matched_count = 0usize;
    // index of the truth era in effect: 0 = initial, i+1 = after events[i]
    let mut era = 0usize;

    let recheck_all = |rep: &Replayer,
                       matched: &mut Vec<bool>,
                       matched_count: &mut usize,
                       truth_at: &Partition| {
        *matched_count = 0;
        for (v, slot) in matched.iter_mut().enumerate() {
            *slot = rep.mates_sorted(v) == GroundTruthTimeline::component_of(truth_at, v as u32);
            if *slot {
                *matched_count += 1;
            }
        }
    };

    for r in records {
        let t_ms = r.time_us / 1000;
        // advance eras whose event time has passed
        while era < events.len() && events[era].0 <= t_ms {
            era += 1;
            recheck_all(&rep, &mut matched, &mut matched_count, truth.at(t_ms));
            if era >= 1 && matched_count == n && out[era - 1].detected_time_ms.is_none() {
                // the system already agreed with the new truth at the event
                let te = events[era - 1].0 as f64;
                out[era - 1].detected_time_ms = Some(te);
                out[era - 1].latency_ms = Some(0.0);
            }
        }
        if let Some(v) = rep.apply(r) {
            let was = matched[v];
            matched[v] =
                rep.mates_sorted(v) == GroundTruthTimeline::component_of(truth.at(t_ms), v as u32);
            match (was, matched[v]) {
                (false, true) => matched_count += 1,
                (true, false) => matched_count -= 1,
                _ => {}
            }
            if era >= 1 && matched_count == n && out[era - 1].detected_time_ms.is_none() {
                let te = events[era - 1].0 as f64;
                let td = r.time_us as f64 / 1000.0;
                out[era - 1].detected_time_ms = Some(td);
                out[era - 1].latency_ms = Some(td - te);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Aggregates
// ---------------------------------------------------------------------------

/// Empirical tau statistics over completed, converged epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: u64,
}

/// Nearest-rank empirical quantile of a sorted sample.
pub fn quantile(sorted: &[u64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as f64
}

pub fn tau_stats(records: &[ConvergenceRecord]) -> Option<TauStats> {
    let mut taus: Vec<u64> = records
        .iter()
        .filter(|r| !r.truncated && r.converged)
        .filter_map(|r| r.tau)
        .collect();
    if taus.is_empty() {
        return None;
    }
    taus.sort_unstable();
    let count = taus.len();
    let mean = taus.iter().sum::<u64>() as f64 / count as f64;
    Some(TauStats {
        count,
        mean,
        p50: quantile(&taus, 0.50),
        p90: quantile(&taus, 0.90),
        p99: quantile(&taus, 0.99),
        max: *taus.last().unwrap(),
    })
}

/// Binned tau counts for plotting the empirical distribution.
pub fn tau_histogram(records: &[ConvergenceRecord], bin_width: u64) -> Vec<(u64, u64, u64)> {
    let bw = bin_width.max(1);
    let mut bins: std::collections::BTreeMap<u64, u64> = Default::default();
    for r in records {
        if r.truncated || !r.converged {
            continue;
        }
        if let Some(tau) = r.tau {
            *bins.entry(tau / bw).or_insert(0) += 1;
        }
    }
    bins.into_iter()
        .map(|(bin, count)| (bin * bw, (bin + 1) * bw, count))
        .collect()
}

/// Loss accounting recomputed from trace rows (data packets only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub delivered: u64,
    pub lost: u64,
    pub collided: u64,
    pub loss_rate: f64,
}

pub fn loss_summary(records: &[TraceRecord], n_nodes: usize) -> LossSummary {
    let n = n_nodes as u32;
    let mut delivered = 0u64;
    let mut lost = 0u64;
    let mut collided = 0u64;
    for r in records {
        let data_peer = r.peer.is_some_and(|p| p < n);
        match r.kind {
            TraceKind::Rx => delivered += 1,
            TraceKind::Loss if data_peer => lost += 1,
            TraceKind::Collision if data_peer => collided += 1,
            _ => {}
        }
    }
    let total = delivered + lost + collided;
    LossSummary {
        delivered,
        lost,
        collided,
        loss_rate: if total == 0 {
            0.0
        } else {
            (lost + collided) as f64 / total as f64
        },
    }
}

/// Everything the CLI emits as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_nodes: usize,
    pub duration_ms: u64,
    pub seed: u64,
    pub epochs_total: usize,
    pub epochs_completed: usize,
    pub epochs_converged: usize,
    pub converged_fraction: f64,
    pub tau: Option<TauStats>,
    /// Diameter of the mate graph reconstructed from the final level
    /// tables (both directions above threshold).
    pub mate_graph_diameter: usize,
    pub bounds: BoundsReport,
    pub loss: LossSummary,
    pub mean_tx_rate_per_node: f64,
    /// Mean delivered-packet rate per ordered (receiver, sender) pair.
    pub mean_rx_rate_per_pair: f64,
    pub detections: Vec<DetectionRecord>,
}

/// Both bounds, under both log conventions, at eps = 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n: u64,
    pub delta: u64,
    pub epsilon: f64,
    pub expected_tau_ln: f64,
    pub tau_confidence_ln: f64,
    pub expected_tau_log10: f64,
    pub tau_confidence_log10: f64,
}

pub fn bounds_report(n: u64, delta: u64, epsilon: f64) -> Result<BoundsReport, MetricsError> {
    let p = BoundParams { n, delta, epsilon };
    Ok(BoundsReport {
        n,
        delta,
        epsilon,
        expected_tau_ln: bound_expected_tau(&p)?,
        tau_confidence_ln: bound_tau_with_confidence(&p)?,
        expected_tau_log10: bound_expected_tau_log10(&p)?,
        tau_confidence_log10: bound_tau_with_confidence_log10(&p)?,
    })
}

/// Compute the full summary from a trace. Works identically whether the
/// records came straight out of the simulator or from a trace file.
pub fn compute_summary(
    records: &[TraceRecord],
    meta: &TraceMeta,
    truth: &GroundTruthTimeline,
) -> (Vec<ConvergenceRecord>, MetricsSummary) {
    let epochs = measure_tau(records, meta, truth);
    let detections = detection_latency(records, meta, truth);

    let mut rep = Replayer::new(meta);
    for r in records {
        rep.apply(r);
    }
    let edges = mate_edges_from_levels(rep.level_tables(), meta.mate_threshold);
    let diameter = mate_graph_diameter(meta.n_nodes, &edges);

    let loss = loss_summary(records, meta.n_nodes);
    let tx_total = records.iter().filter(|r| r.kind == TraceKind::Tx).count() as f64;
    let secs = meta.duration_ms as f64 / 1000.0;
    let n = meta.n_nodes as f64;
    let pairs = if meta.n_nodes > 1 { n * (n - 1.0) } else { 1.0 };

    let completed: Vec<&ConvergenceRecord> = epochs.iter().filter(|r| !r.truncated).collect();
    let converged = completed.iter().filter(|r| r.converged).count();
    let summary = MetricsSummary {
        n_nodes: meta.n_nodes,
        duration_ms: meta.duration_ms,
        seed: meta.seed,
        epochs_total: epochs.len(),
        epochs_completed: completed.len(),
        epochs_converged: converged,
        converged_fraction: if completed.is_empty() {
            0.0
        } else {
            converged as f64 / completed.len() as f64
        },
        tau: tau_stats(&epochs),
        mate_graph_diameter: diameter,
        bounds: bounds_report(meta.n_nodes as u64, diameter.max(1) as u64, 0.1)
            .expect("valid bound inputs"),
        loss,
        mean_tx_rate_per_node: tx_total / n / secs,
        mean_rx_rate_per_pair: loss.delivered as f64 / pairs / secs,
        detections,
    };
    (epochs, summary)
}

/// Per-epoch CSV, one row per convergence record.
pub fn epochs_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from("epoch,start_ms,end_ms,tau,converged,convergence_ms,truncated\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.3},{:.3},{},{},{},{}\n",
            r.epoch,
            r.start_ms,
            r.end_ms,
            r.tau.map(|t| t.to_string()).unwrap_or_default(),
            if r.converged { 1 } else { 0 },
            r.convergence_ms
                .map(|t| format!("{t:.3}"))
                .unwrap_or_default(),
            if r.truncated { 1 } else { 0 },
        ));
    }
    out
}

/// Histogram CSV of the tau distribution.
pub fn histogram_csv(records: &[ConvergenceRecord], bin_width: u64) -> String {
    let mut out = String::from("tau_from,tau_to,count\n");
    for (from, to, count) in tau_histogram(records, bin_width) {
        out.push_str(&format!("{from},{to},{count}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, delta: u64, epsilon: f64) -> BoundParams {
        BoundParams { n, delta, epsilon }
    }

    #[test]
    fn expected_tau_bound_values() {
        // frozen from direct evaluation: N*Delta*(1 + ln N)
        assert_eq!(bound_expected_tau(&params(1, 1, 0.1)).unwrap(), 1.0);
        let b10 = bound_expected_tau(&params(10, 1, 0.1)).unwrap();
        assert!((b10 - 33.025_850_929_940_46).abs() < 1e-9);
        let b10d2 = bound_expected_tau(&params(10, 2, 0.1)).unwrap();
        assert!((b10d2 - 2.0 * b10).abs() < 1e-9);
    }

    #[test]
    fn confidence_bound_values() {
        // N*Delta*(ln N + ln(Delta/eps))
        let b = bound_tau_with_confidence(&params(10, 1, 0.1)).unwrap();
        assert!((b - 46.051_701_859_880_92).abs() < 1e-9);
        let b1 = bound_tau_with_confidence(&params(1, 1, 0.5)).unwrap();
        assert!((b1 - std::f64::consts::LN_2).abs() < 1e-12);
        // doubling delta adds N*Delta*ln 2 beyond the linear factor
        let d1 = bound_tau_with_confidence(&params(10, 1, 0.1)).unwrap();
        let d2 = bound_tau_with_confidence(&params(10, 2, 0.1)).unwrap();
        assert!((d2 - (2.0 * d1 + 10.0 * 2.0 * std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn bound_rejects_bad_epsilon() {
        assert!(bound_tau_with_confidence(&params(10, 1, 0.0)).is_err());
        assert!(bound_tau_with_confidence(&params(10, 1, 1.0)).is_err());
        assert!(bound_expected_tau(&params(0, 1, 0.1)).is_err());
    }

    #[test]
    fn diameter_examples() {
        // complete graph on 10
        let mut edges = Vec::new();
        for a in 0..10 {
            for b in (a + 1)..10 {
                edges.push((a, b));
            }
        }
        assert_eq!(mate_graph_diameter(10, &edges), 1);
        // 12-node path
        let path: Vec<(usize, usize)> = (0..11).map(|i| (i, i + 1)).collect();
        assert_eq!(mate_graph_diameter(12, &path), 11);
        // two components: max over components
        let two = vec![(0, 1), (1, 2), (3, 4)];
        assert_eq!(mate_graph_diameter(5, &two), 2);
        assert_eq!(mate_graph_diameter(3, &[]), 0);
    }

    #[test]
    fn quantile_nearest_rank() {
        let taus: Vec<u64> = (1..=100).collect();
        assert_eq!(quantile(&taus, 0.5), 50.0);
        assert_eq!(quantile(&taus, 0.9), 90.0);
        assert_eq!(quantile(&taus, 1.0), 100.0);
        assert_eq!(quantile(&[7], 0.9), 7.0);
    }

    #[test]
    fn histogram_bins() {
        let mk = |tau: u64| ConvergenceRecord {
            epoch: 0,
            start_ms: 0.0,
            end_ms: 1.0,
            tau: Some(tau),
            converged: true,
            convergence_ms: Some(0.5),
            truncated: false,
        };
        let records = vec![mk(3), mk(4), mk(9), mk(12)];
        let bins = tau_histogram(&records, 5);
        assert_eq!(bins, vec![(0, 5, 2), (5, 10, 1), (10, 15, 1)]);
    }
}
