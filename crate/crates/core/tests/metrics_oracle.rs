//! Cross-checks of the metrics pipeline against independent
//! reimplementations: a from-scratch tau counter, quantile dominance on a
//! multi-hop line, and trace-robustness under heavy row deletion.

use groupsense::metrics::{
    bound_expected_tau, bound_tau_with_confidence, measure_tau, mate_edges_from_levels,
    mate_graph_diameter, quantile, tau_stats, BoundParams,
};
use groupsense::netsim::{run, SimConfig};
use groupsense::replay::Replayer;
use groupsense::scenario::{make_stable_pack, make_static, GroundTruthTimeline, Scenario};
use groupsense::trace::{TraceKind, TraceMeta, TraceRecord};

/// Step-by-step tau counter written from the trace semantics alone: plain
/// arrays, inline max-merge, no shared code with the metrics module or the
/// consensus state machine.
fn naive_tau(
    records: &[TraceRecord],
    meta: &TraceMeta,
    truth: &GroundTruthTimeline,
) -> Vec<(u64, Option<u64>)> {
    let n = meta.n_nodes;
    let m = meta.m;

    // epoch windows from beacon emissions
    let mut starts: Vec<(u64, u64)> = vec![(0, 0)];
    for r in records {
        if r.kind == TraceKind::BeaconTx {
            let k = r.epoch.unwrap();
            if !starts.iter().any(|&(kk, _)| kk == k) {
                starts.push((k, r.time_us));
            }
        }
    }
    starts.sort();

    let mut vectors: Vec<Vec<u8>> = (0..n)
        .map(|v| {
            let mut b = vec![0u8; n];
            b[v] = m;
            b
        })
        .collect();
    let mut epochs = vec![0u64; n];
    let mut levels = vec![vec![0u8; n]; n];

    let mut out = Vec::new();
    for (w, &(k, start)) in starts.iter().enumerate() {
        let end = starts.get(w + 1).map_or(u64::MAX, |&(_, s)| s);
        let mut tau_count = 0u64;
        let mut tau = None;

        let matches = |vectors: &Vec<Vec<u8>>, epochs: &Vec<u64>, t_ms: u64| -> bool {
            let partition = truth.at(t_ms);
            (0..n).all(|v| {
                if epochs[v] != k {
                    return false;
                }
                let mates: Vec<u32> = (0..n)
                    .filter(|&i| i == v || vectors[v][i] >= m)
                    .map(|i| i as u32)
                    .collect();
                partition.iter().any(|g| g.contains(&(v as u32)) && *g == mates)
            })
        };

        if matches(&vectors, &epochs, start / 1000) {
            tau = Some(0);
        }
        for r in records {
            if r.time_us < start || r.time_us >= end {
                continue;
            }
            match r.kind {
                TraceKind::Tx if tau.is_none() => tau_count += 1,
                TraceKind::LevelChange => {
                    levels[r.node as usize][r.peer.unwrap() as usize] = r.ed.unwrap();
                }
                TraceKind::BeaconRx => {
                    let v = r.node as usize;
                    let kb = r.epoch.unwrap();
                    if kb > epochs[v] {
                        epochs[v] = kb;
                        vectors[v] = {
                            let mut b = vec![0u8; n];
                            b[v] = m;
                            b
                        };
                    }
                    if tau.is_none() && matches(&vectors, &epochs, r.time_us / 1000) {
                        tau = Some(tau_count);
                    }
                }
                TraceKind::Rx => {
                    let v = r.node as usize;
                    let sender = r.peer.unwrap() as usize;
                    let kp = r.epoch.unwrap();
                    let payload: Vec<u8> = (0..n)
                        .map(|i| {
                            let hex = r.vector.as_ref().unwrap();
                            u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap()
                        })
                        .collect();
                    if kp > epochs[v] {
                        epochs[v] = kp;
                        vectors[v] = {
                            let mut b = vec![0u8; n];
                            b[v] = m;
                            b
                        };
                    }
                    if kp >= epochs[v] {
                        let proxim = levels[v][sender].min(m);
                        if proxim > meta.mate_threshold {
                            for i in 0..n {
                                vectors[v][i] = vectors[v][i].max(payload[i]);
                            }
                        } else {
                            vectors[v][sender] = vectors[v][sender].max(proxim);
                        }
                    }
                    if tau.is_none() && matches(&vectors, &epochs, r.time_us / 1000) {
                        tau = Some(tau_count);
                    }
                }
                _ => {}
            }
        }
        out.push((k, tau));
    }
    out
}

#[test]
fn measured_tau_matches_naive_recount() {
    // 4-node line, adjacent-only mates, lossless: multi-hop flooding with
    // epoch resets, checked epoch by epoch against the naive counter
    let scenario = make_static(4, 18.0, 20_000).unwrap();
    let truth = GroundTruthTimeline::from_scenario(&scenario);
    for seed in [1u64, 2, 3] {
        let trace = run(&SimConfig::lossless(seed), &scenario).unwrap();
        let measured = measure_tau(&trace.records, &trace.meta, &truth);
        let naive = naive_tau(&trace.records, &trace.meta, &truth);
        assert_eq!(measured.len(), naive.len(), "seed {seed}");
        for (rec, (k, tau)) in measured.iter().zip(&naive) {
            assert_eq!(rec.epoch, *k, "seed {seed}");
            assert_eq!(rec.tau, *tau, "seed {seed} epoch {k}");
        }
    }
}

#[test]
fn measured_tau_matches_naive_recount_lossy() {
    // same cross-check under the calibrated lossy pack
    let scenario = make_stable_pack(8, 30_000).unwrap();
    let truth = GroundTruthTimeline::from_scenario(&scenario);
    let mut cfg = SimConfig {
        seed: 11,
        ..SimConfig::default()
    };
    if let Some(patch) = &scenario.sim {
        patch.apply_to(&mut cfg);
    }
    let trace = run(&cfg, &scenario).unwrap();
    let measured = measure_tau(&trace.records, &trace.meta, &truth);
    let naive = naive_tau(&trace.records, &trace.meta, &truth);
    for (rec, (k, tau)) in measured.iter().zip(&naive) {
        assert_eq!((rec.epoch, rec.tau), (*k, *tau));
    }
}

#[test]
fn single_node_converges_at_reset() {
    let scenario = make_static(1, 1.0, 8000).unwrap();
    let truth = GroundTruthTimeline::from_scenario(&scenario);
    let trace = run(&SimConfig::lossless(5), &scenario).unwrap();
    let records = measure_tau(&trace.records, &trace.meta, &truth);
    for rec in records.iter().filter(|r| !r.truncated) {
        assert!(rec.converged, "epoch {}", rec.epoch);
        assert!(rec.tau.unwrap() <= 1, "epoch {} tau {:?}", rec.epoch, rec.tau);
    }
}

/// Tau-quantile dominance on a 6-node line (diameter 5), per the analytic
/// bounds at eps 0.1 and 0.01.
#[test]
fn path_graph_quantiles_below_bounds() {
    let scenario = make_static(6, 18.0, 420_000).unwrap();
    let truth = GroundTruthTimeline::from_scenario(&scenario);
    let trace = run(&SimConfig::lossless(2), &scenario).unwrap();
    let records = measure_tau(&trace.records, &trace.meta, &truth);
    let stats = tau_stats(&records).unwrap();
    assert!(stats.count >= 1000, "epochs {}", stats.count);

    let params = |epsilon| BoundParams {
        n: 6,
        delta: 5,
        epsilon,
    };
    let mean_bound = bound_expected_tau(&params(0.1)).unwrap();
    assert!(
        stats.mean < mean_bound,
        "mean {} vs {mean_bound}",
        stats.mean
    );
    let mut taus: Vec<u64> = records
        .iter()
        .filter(|r| !r.truncated && r.converged)
        .filter_map(|r| r.tau)
        .collect();
    taus.sort_unstable();
    for eps in [0.1, 0.01] {
        let bound = bound_tau_with_confidence(&params(eps)).unwrap();
        let q = quantile(&taus, 1.0 - eps);
        assert!(q < bound, "eps {eps}: quantile {q} vs bound {bound}");
    }
}

/// The mate graph reconstructed from a rolling-pack snapshot has diameter
/// 1 or 2: everyone is (almost) everyone's direct mate.
#[test]
fn stable_pack_mate_diameter() {
    let scenario = make_stable_pack(10, 20_000).unwrap();
    let mut cfg = SimConfig {
        seed: 4,
        ..SimConfig::default()
    };
    if let Some(patch) = &scenario.sim {
        patch.apply_to(&mut cfg);
    }
    let trace = run(&cfg, &scenario).unwrap();
    let mut rep = Replayer::new(&trace.meta);
    for r in &trace.records {
        rep.apply(r);
    }
    let edges = mate_edges_from_levels(rep.level_tables(), trace.meta.mate_threshold);
    let diameter = mate_graph_diameter(10, &edges);
    assert!(
        (1..=2).contains(&diameter),
        "pack mate-graph diameter {diameter}"
    );
}

/// Deleting 22% of the rx rows (the loss regime's rate) must not break
/// group reconstruction for the stable pack: redundancy covers it.
#[test]
fn replay_survives_rx_row_deletion() {
    let scenario = make_stable_pack(10, 30_000).unwrap();
    let truth = GroundTruthTimeline::from_scenario(&scenario);
    let mut cfg = SimConfig {
        seed: 21,
        ..SimConfig::default()
    };
    if let Some(patch) = &scenario.sim {
        patch.apply_to(&mut cfg);
    }
    let trace = run(&cfg, &scenario).unwrap();

    // deterministic 22% thinning of rx rows only
    let mut counter = 0u32;
    let thinned: Vec<TraceRecord> = trace
        .records
        .iter()
        .filter(|r| {
            if r.kind != TraceKind::Rx {
                return true;
            }
            counter += 1;
            counter % 100 >= 22
        })
        .cloned()
        .collect();

    let mut rep = Replayer::new(&trace.meta);
    for r in &thinned {
        rep.apply(r);
    }
    // after the run settles, every node still reports the whole pack
    let expected: Vec<u32> = (0..10).collect();
    let final_truth = truth.at(scenario.duration_ms);
    assert_eq!(final_truth.len(), 1);
    for v in 0..10 {
        assert_eq!(rep.mates_sorted(v), expected, "node {v}");
    }
}

/// Scenario generators exposed through `Scenario::from_json` keep their
/// invariants after a disk round trip.
#[test]
fn generated_scenarios_survive_round_trip() {
    for s in [
        make_static(10, 0.5, 10_000).unwrap(),
        make_stable_pack(10, 10_000).unwrap(),
        groupsense::scenario::breakaway_default(),
        groupsense::scenario::merge_default(),
        groupsense::scenario::make_pack_split(10, 10.0, (6, 4), 40_000).unwrap(),
    ] {
        let json = s.to_json();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(s, back);
    }
}
