//! Scenario generation: node position timelines, sink behavior and the
//! distance-based ground truth groups.
//!
//! Scenarios use a 1-D road abstraction: riders move along +x at roughly
//! 10 m/s with fixed lane offsets in y. Track generation is pure — no RNG —
//! so a scenario file pins everything except the channel seed.
//!
//! Ground truth is the transitive closure of the pairwise 20 m relation:
//! two nodes are in the same true group when a chain of nodes at most 20 m
//! apart connects them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::ProximityScale;
use crate::link::EstimatorConfig;
use crate::netsim::SimPatch;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Default rider speed along the road (m/s).
const PACK_SPEED: f64 = 10.0;
/// Gap between riders in a paceline (m).
const PACELINE_SPACING: f64 = 2.5;
/// Sinks ride this far behind the centroid of their group (m).
const SINK_TRAIL: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unsupported scenario format_version {0}")]
    UnsupportedVersion(u32),
}

/// One point of a piecewise-linear track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_ms: u64,
    pub x: f64,
    pub y: f64,
}

/// Time-sorted waypoints; positions between them are interpolated linearly
/// and clamped outside the covered range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Track(pub Vec<Waypoint>);

impl Track {
    pub fn position_at(&self, t_ms: u64) -> (f64, f64) {
        let pts = &self.0;
        match pts.binary_search_by(|w| w.t_ms.cmp(&t_ms)) {
            Ok(i) => (pts[i].x, pts[i].y),
            Err(0) => (pts[0].x, pts[0].y),
            Err(i) if i == pts.len() => (pts[i - 1].x, pts[i - 1].y),
            Err(i) => {
                let (a, b) = (&pts[i - 1], &pts[i]);
                let f = (t_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
                (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
            }
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.0.is_empty() {
            return Err(ScenarioError::Invalid("track has no waypoints".into()));
        }
        if self.0.windows(2).any(|w| w[1].t_ms <= w[0].t_ms) {
            return Err(ScenarioError::Invalid(
                "track waypoints not strictly time-sorted".into(),
            ));
        }
        Ok(())
    }
}

/// A beacon-emitting sink. Sinks are not consensus nodes: they only
/// broadcast the global epoch on a fixed schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkSpec {
    pub track: Track,
    /// Offset of this sink's emission grid (ms).
    #[serde(default)]
    pub epoch_phase_ms: u64,
    /// Beacons stop after this instant (ms); `None` keeps them on for the
    /// whole run.
    #[serde(default)]
    pub active_until_ms: Option<u64>,
}

/// A complete simulation input: who moves where, who beacons, and the
/// protocol parameters the nodes run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub format_version: u32,
    pub name: String,
    pub duration_ms: u64,
    pub n_nodes: usize,
    /// Two nodes closer than this are truly in the same group (m).
    pub mate_range_m: f64,
    pub consensus: ProximityScale,
    pub estimator: EstimatorConfig,
    /// Channel/protocol overrides baked into the scenario (lowest
    /// precedence; a config file and CLI overrides can still replace them).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimPatch>,
    pub tracks: Vec<Track>,
    pub sinks: Vec<SinkSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.format_version != SCENARIO_FORMAT_VERSION {
            return Err(ScenarioError::UnsupportedVersion(self.format_version));
        }
        if self.n_nodes == 0 {
            return Err(ScenarioError::Invalid("n_nodes must be >= 1".into()));
        }
        if self.tracks.len() != self.n_nodes {
            return Err(ScenarioError::Invalid(format!(
                "expected {} tracks, found {}",
                self.n_nodes,
                self.tracks.len()
            )));
        }
        if self.duration_ms == 0 {
            return Err(ScenarioError::Invalid("duration must be > 0".into()));
        }
        let range_ok = self.mate_range_m > 0.0;
        if !range_ok {
            return Err(ScenarioError::Invalid("mate_range_m must be > 0".into()));
        }
        self.estimator
            .validate()
            .map_err(ScenarioError::Invalid)?;
        for track in self.tracks.iter().chain(self.sinks.iter().map(|s| &s.track)) {
            track.validate()?;
            if track.0.last().unwrap().t_ms > self.duration_ms {
                return Err(ScenarioError::Invalid(
                    "waypoint beyond scenario duration".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn node_position(&self, node: usize, t_ms: u64) -> (f64, f64) {
        self.tracks[node].position_at(t_ms)
    }

    pub fn sink_position(&self, sink: usize, t_ms: u64) -> (f64, f64) {
        self.sinks[sink].track.position_at(t_ms)
    }

    /// Position of any simulated entity: nodes are `0..n_nodes`, sinks
    /// follow at `n_nodes..n_nodes + sinks.len()`.
    pub fn entity_position(&self, entity: usize, t_ms: u64) -> (f64, f64) {
        if entity < self.n_nodes {
            self.node_position(entity, t_ms)
        } else {
            self.sink_position(entity - self.n_nodes, t_ms)
        }
    }

    /// True group partition at an instant: union of all pairs within the
    /// mate range, then the connected classes.
    pub fn ground_truth(&self, t_ms: u64) -> Partition {
        let positions: Vec<(f64, f64)> = (0..self.n_nodes)
            .map(|i| self.node_position(i, t_ms))
            .collect();
        let mut uf = UnionFind::new(self.n_nodes);
        for a in 0..self.n_nodes {
            for b in (a + 1)..self.n_nodes {
                if distance(positions[a], positions[b]) <= self.mate_range_m {
                    uf.union(a, b);
                }
            }
        }
        uf.partition()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(json)
            .map_err(|e| ScenarioError::Invalid(format!("scenario parse error: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Groups as sorted node-id lists, sorted by their smallest member.
pub type Partition = Vec<Vec<u32>>;

/// Ground truth sampled over a whole run: the partition at t=0 plus every
/// instant it changes (10 ms resolution).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTimeline {
    /// (time the partition takes effect, partition); first entry is t=0.
    pub entries: Vec<(u64, Partition)>,
}

impl GroundTruthTimeline {
    pub const STEP_MS: u64 = 10;

    pub fn from_scenario(scenario: &Scenario) -> Self {
        let mut entries: Vec<(u64, Partition)> = vec![(0, scenario.ground_truth(0))];
        let mut t = Self::STEP_MS;
        while t <= scenario.duration_ms {
            let p = scenario.ground_truth(t);
            if p != entries.last().unwrap().1 {
                entries.push((t, p));
            }
            t += Self::STEP_MS;
        }
        Self { entries }
    }

    pub fn at(&self, t_ms: u64) -> &Partition {
        let idx = self.entries.partition_point(|(t, _)| *t <= t_ms);
        &self.entries[idx - 1].1
    }

    /// The change events (everything after the initial partition).
    pub fn events(&self) -> &[(u64, Partition)] {
        &self.entries[1..]
    }

    pub fn component_of(partition: &Partition, node: u32) -> &[u32] {
        partition
            .iter()
            .find(|g| g.binary_search(&node).is_ok())
            .map(|g| g.as_slice())
            .expect("node in partition")
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn partition(&mut self) -> Partition {
        let n = self.parent.len();
        let mut groups: std::collections::BTreeMap<usize, Vec<u32>> = Default::default();
        for x in 0..n {
            let root = self.find(x);
            groups.entry(root).or_default().push(x as u32);
        }
        groups.into_values().collect()
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Lane offset for a paceline slot: alternating half-meter lanes.
fn lane(slot: usize) -> f64 {
    if slot.is_multiple_of(2) {
        0.5
    } else {
        -0.5
    }
}

fn base_scenario(name: &str, n: usize, duration_ms: u64) -> Scenario {
    Scenario {
        format_version: SCENARIO_FORMAT_VERSION,
        name: name.to_string(),
        duration_ms,
        n_nodes: n,
        mate_range_m: 20.0,
        consensus: ProximityScale::default(),
        estimator: EstimatorConfig::default(),
        sim: None,
        tracks: Vec::new(),
        sinks: Vec::new(),
    }
}

fn still(x: f64, y: f64) -> Track {
    Track(vec![Waypoint { t_ms: 0, x, y }])
}

fn straight(duration_ms: u64, x0: f64, y: f64, speed: f64) -> Track {
    Track(vec![
        Waypoint { t_ms: 0, x: x0, y },
        Waypoint {
            t_ms: duration_ms,
            x: x0 + speed * (duration_ms as f64 / 1000.0),
            y,
        },
    ])
}

/// Bench scenario: `n` motionless nodes in a row at the given spacing, one
/// sink parked 5 m off to the side of the row's midpoint.
pub fn make_static(n: usize, spacing_m: f64, duration_ms: u64) -> Result<Scenario, ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::Invalid("n must be >= 1".into()));
    }
    let mut s = base_scenario("static", n, duration_ms);
    s.tracks = (0..n).map(|i| still(i as f64 * spacing_m, 0.0)).collect();
    s.sinks = vec![SinkSpec {
        track: still((n - 1) as f64 * spacing_m / 2.0, 5.0),
        epoch_phase_ms: 0,
        active_until_ms: None,
    }];
    s.validate()?;
    Ok(s)
}

/// A stable pack: one paceline rolling down the road for the whole run,
/// trailed by a single sink.
pub fn make_stable_pack(n: usize, duration_ms: u64) -> Result<Scenario, ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::Invalid("n must be >= 1".into()));
    }
    let mut s = base_scenario("stable_pack", n, duration_ms);
    s.tracks = (0..n)
        .map(|i| straight(duration_ms, -(i as f64) * PACELINE_SPACING, lane(i), PACK_SPEED))
        .collect();
    let centroid = -((n - 1) as f64) * PACELINE_SPACING / 2.0;
    s.sinks = vec![
        SinkSpec {
            track: straight(duration_ms, centroid - SINK_TRAIL, 0.0, PACK_SPEED),
            epoch_phase_ms: 0,
            active_until_ms: None,
        },
        SinkSpec {
            track: straight(duration_ms, centroid + SINK_TRAIL, 0.0, PACK_SPEED),
            epoch_phase_ms: 50,
            active_until_ms: None,
        },
    ];
    // race-density loss calibration: the distance ramp alone undershoots
    // the packet loss seen in a dense moving pack, so the scenario adds a
    // flat extra on top (tuned against 60+ s runs)
    s.sim = Some(crate::netsim::SimPatch {
        payload_loss_extra: Some(0.10),
        ..Default::default()
    });
    s.validate()?;
    Ok(s)
}

/// Breakaway-and-rejoin: node 3 rides at the tail of the paceline, falls
/// off the back at `t_leave` with the gap opening at `v_gap` m/s, drifts
/// out to 60 m behind, then closes the gap again to rejoin by `t_rejoin`.
///
/// The run continues 10 s past the rejoin so the merge can be observed.
pub fn make_breakaway(
    n: usize,
    t_leave_s: f64,
    t_rejoin_s: f64,
    v_gap: f64,
) -> Result<Scenario, ScenarioError> {
    if n < 3 {
        return Err(ScenarioError::Invalid("breakaway needs n >= 3".into()));
    }
    let gap_ok = v_gap >= 0.0;
    if !gap_ok {
        return Err(ScenarioError::Invalid("v_gap must be >= 0".into()));
    }
    let gap_max: f64 = 60.0;
    let ramp_s = if v_gap > 0.0 { gap_max / v_gap } else { 0.0 };
    let ramps_fit = t_leave_s + ramp_s < t_rejoin_s - ramp_s;
    if v_gap > 0.0 && !ramps_fit {
        return Err(ScenarioError::Invalid(
            "t_leave and t_rejoin leave no room for the gap ramps".into(),
        ));
    }
    let duration_ms = ((t_rejoin_s + 10.0) * 1000.0).round() as u64;
    let mut s = base_scenario("breakaway", n, duration_ms);

    // node 3 takes the last paceline slot; everyone else keeps order
    let slot_of = |i: usize| -> usize {
        match i.cmp(&3) {
            std::cmp::Ordering::Less => i,
            std::cmp::Ordering::Equal => n - 1,
            std::cmp::Ordering::Greater => i - 1,
        }
    };

    for i in 0..n {
        let slot = slot_of(i);
        let x0 = -(slot as f64) * PACELINE_SPACING;
        let y = lane(slot);
        if i != 3 || v_gap == 0.0 {
            s.tracks.push(straight(duration_ms, x0, y, PACK_SPEED));
            continue;
        }
        // gap profile: 0 until t_leave, ramp up to gap_max, hold, ramp
        // back down to 0 at t_rejoin
        let t0 = (t_leave_s * 1000.0).round() as u64;
        let t1 = ((t_leave_s + ramp_s) * 1000.0).round() as u64;
        let t2 = ((t_rejoin_s - ramp_s) * 1000.0).round() as u64;
        let t3 = (t_rejoin_s * 1000.0).round() as u64;
        let pack_x = |t: u64| x0 + PACK_SPEED * (t as f64 / 1000.0);
        s.tracks.push(Track(vec![
            Waypoint { t_ms: 0, x: x0, y },
            Waypoint { t_ms: t0, x: pack_x(t0), y },
            Waypoint { t_ms: t1, x: pack_x(t1) - gap_max, y },
            Waypoint { t_ms: t2, x: pack_x(t2) - gap_max, y },
            Waypoint { t_ms: t3, x: pack_x(t3), y },
            Waypoint { t_ms: duration_ms, x: pack_x(duration_ms), y },
        ]));
    }

    // two sinks escort the pack (the n-1 riders that stay together): one
    // trailing, one ahead with its beacon grid offset half a backoff so a
    // slot lost to a collision is healed 50 ms later
    let pack_centroid = -((0..n - 1).map(|s| s as f64).sum::<f64>() / (n - 1) as f64)
        * PACELINE_SPACING;
    s.sinks = vec![
        SinkSpec {
            track: straight(duration_ms, pack_centroid - SINK_TRAIL, 0.0, PACK_SPEED),
            epoch_phase_ms: 0,
            active_until_ms: None,
        },
        SinkSpec {
            track: straight(duration_ms, pack_centroid + SINK_TRAIL, 0.0, PACK_SPEED),
            epoch_phase_ms: 50,
            active_until_ms: None,
        },
    ];
    s.validate()?;
    Ok(s)
}

/// The default breakaway used by the CLI and the validation runs: a
/// 10-rider pack, the gap opening at 12.5 m/s from t=6.2 s and closing
/// again to a rejoin at t=26 s.
pub fn breakaway_default() -> Scenario {
    let mut s = make_breakaway(10, 6.2, 26.0, 12.5).expect("default breakaway is valid");
    // split/merge dynamics ride on a faster estimator cadence than the
    // bench default: short spans of recent samples so level transitions
    // track the geometry within an epoch period even when losses thin the
    // sample stream
    s.estimator = EstimatorConfig {
        short_window: 4,
        long_window: 5,
        short_period_ms: 200,
        long_period_ms: 200,
        th20: 8.0,
        th30: 5.0,
        silence_expiry_ms: 5000,
    };
    s
}

/// Merge-focused variant of the breakaway: beacons stop at the rejoin
/// crossing, so the groups can only unify through data-packet merges.
pub fn merge_default() -> Scenario {
    let mut s = breakaway_default();
    s.name = "merge_no_reset".into();
    let crossing_ms = 24_610;
    for sink in &mut s.sinks {
        sink.active_until_ms = Some(crossing_ms);
    }
    s
}

/// Pack split: the front `sizes.0` riders accelerate away from the rear
/// `sizes.1` at `t_split`, each sub-pack trailed by its own sink.
pub fn make_pack_split(
    n: usize,
    t_split_s: f64,
    sizes: (usize, usize),
    duration_ms: u64,
) -> Result<Scenario, ScenarioError> {
    let (a, b) = sizes;
    if a + b != n || a == 0 || b == 0 {
        return Err(ScenarioError::Invalid(format!(
            "sizes {a}+{b} must partition n={n}"
        )));
    }
    let t_split_ms = (t_split_s * 1000.0).round() as u64;
    let mut s = base_scenario("pack_split", n, duration_ms);
    let dv = 2.5; // extra speed of the front group after the split (m/s)

    let split_track = |slot: usize, front: bool| -> Track {
        let x0 = -(slot as f64) * PACELINE_SPACING;
        let y = lane(slot);
        if !front || t_split_ms >= duration_ms {
            return straight(duration_ms, x0, y, PACK_SPEED);
        }
        let x_split = x0 + PACK_SPEED * (t_split_ms as f64 / 1000.0);
        Track(vec![
            Waypoint { t_ms: 0, x: x0, y },
            Waypoint { t_ms: t_split_ms, x: x_split, y },
            Waypoint {
                t_ms: duration_ms,
                x: x_split + (PACK_SPEED + dv) * ((duration_ms - t_split_ms) as f64 / 1000.0),
                y,
            },
        ])
    };

    s.tracks = (0..n).map(|i| split_track(i, i < a)).collect();

    let centroid = |slots: std::ops::Range<usize>| -> f64 {
        let len = slots.len() as f64;
        -(slots.map(|s| s as f64).sum::<f64>() / len) * PACELINE_SPACING
    };
    let front_centroid = centroid(0..a);
    let rear_centroid = centroid(a..n);
    let front_sink = {
        let x0 = front_centroid - SINK_TRAIL;
        if t_split_ms >= duration_ms {
            straight(duration_ms, x0, -2.0, PACK_SPEED)
        } else {
            let x_split = x0 + PACK_SPEED * (t_split_ms as f64 / 1000.0);
            Track(vec![
                Waypoint { t_ms: 0, x: x0, y: -2.0 },
                Waypoint { t_ms: t_split_ms, x: x_split, y: -2.0 },
                Waypoint {
                    t_ms: duration_ms,
                    x: x_split + (PACK_SPEED + dv) * ((duration_ms - t_split_ms) as f64 / 1000.0),
                    y: -2.0,
                },
            ])
        }
    };
    s.sinks = vec![
        SinkSpec {
            track: front_sink,
            epoch_phase_ms: 0,
            active_until_ms: None,
        },
        SinkSpec {
            track: straight(duration_ms, rear_centroid - SINK_TRAIL, 2.0, PACK_SPEED),
            epoch_phase_ms: 0,
            active_until_ms: None,
        },
    ];
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_interpolation_and_clamping() {
        let t = Track(vec![
            Waypoint { t_ms: 1000, x: 0.0, y: 0.0 },
            Waypoint { t_ms: 3000, x: 20.0, y: 4.0 },
        ]);
        assert_eq!(t.position_at(0), (0.0, 0.0));
        assert_eq!(t.position_at(1000), (0.0, 0.0));
        assert_eq!(t.position_at(2000), (10.0, 2.0));
        assert_eq!(t.position_at(3000), (20.0, 4.0));
        assert_eq!(t.position_at(9000), (20.0, 4.0));
    }

    #[test]
    fn static_close_spacing_is_one_group() {
        let s = make_static(10, 0.5, 10_000).unwrap();
        let p = s.ground_truth(0);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0], (0..10).collect::<Vec<u32>>());
    }

    #[test]
    fn static_singleton() {
        let s = make_static(1, 1.0, 1000).unwrap();
        assert_eq!(s.ground_truth(0), vec![vec![0]]);
        assert!(make_static(0, 1.0, 1000).is_err());
    }

    #[test]
    fn far_clusters_are_two_groups() {
        let mut s = base_scenario("two_clusters", 4, 1000);
        s.tracks = vec![
            still(0.0, 0.0),
            still(5.0, 0.0),
            still(100.0, 0.0),
            still(105.0, 0.0),
        ];
        s.validate().unwrap();
        assert_eq!(s.ground_truth(500), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn transitive_chain_is_one_group() {
        // d(A,B)=15, d(B,C)=15, d(A,C)=30: still one group through B
        let mut s = base_scenario("chain", 3, 1000);
        s.tracks = vec![still(0.0, 0.0), still(15.0, 0.0), still(30.0, 0.0)];
        s.validate().unwrap();
        assert_eq!(s.ground_truth(0), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn ground_truth_is_a_partition() {
        let s = breakaway_default();
        for t in [0u64, 7000, 8000, 15000, 25000, 30000] {
            let p = s.ground_truth(t);
            let mut all: Vec<u32> = p.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<u32>>(), "t={t}");
        }
    }

    #[test]
    fn breakaway_timeline_splits_and_rejoins() {
        let s = breakaway_default();
        let timeline = GroundTruthTimeline::from_scenario(&s);
        assert_eq!(timeline.at(0).len(), 1, "starts connected");
        let events = timeline.events();
        assert_eq!(events.len(), 2, "one split and one merge: {events:?}");
        let (t_split, ref split_p) = events[0];
        let (t_merge, ref merge_p) = events[1];
        assert_eq!(split_p.len(), 2);
        assert!(split_p.contains(&vec![3]), "node 3 becomes a singleton");
        assert_eq!(merge_p.len(), 1);
        // split lands where the gap profile crosses 20 m; merge mirrors it
        assert!((7500..=7700).contains(&t_split), "t_split={t_split}");
        assert!((24_500..=24_700).contains(&t_merge), "t_merge={t_merge}");
    }

    #[test]
    fn breakaway_rejects_bad_times() {
        assert!(make_breakaway(10, 20.0, 21.0, 10.0).is_err());
        assert!(make_breakaway(2, 1.0, 30.0, 10.0).is_err());
    }

    #[test]
    fn zero_gap_rate_never_splits() {
        let s = make_breakaway(10, 5.0, 26.0, 0.0).unwrap();
        let timeline = GroundTruthTimeline::from_scenario(&s);
        assert!(timeline.events().is_empty());
    }

    #[test]
    fn pack_split_partitions_by_sizes() {
        let s = make_pack_split(10, 10.0, (6, 4), 40_000).unwrap();
        assert_eq!(s.sinks.len(), 2);
        let timeline = GroundTruthTimeline::from_scenario(&s);
        let last = &timeline.entries.last().unwrap().1;
        assert_eq!(last.len(), 2);
        assert_eq!(last[0], vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(last[1], vec![6, 7, 8, 9]);
        assert!(make_pack_split(10, 10.0, (6, 5), 40_000).is_err());
    }

    #[test]
    fn split_after_duration_never_happens() {
        let s = make_pack_split(10, 50.0, (6, 4), 40_000).unwrap();
        let timeline = GroundTruthTimeline::from_scenario(&s);
        assert!(timeline.events().is_empty());
    }

    #[test]
    fn line_at_18m_is_a_path_graph() {
        let s = make_static(12, 18.0, 5000).unwrap();
        // adjacent nodes are mates, two apart (36 m) are not
        let p = s.ground_truth(0);
        assert_eq!(p.len(), 1);
        let d01 = distance(s.node_position(0, 0), s.node_position(1, 0));
        let d02 = distance(s.node_position(0, 0), s.node_position(2, 0));
        assert!(d01 <= 20.0 && d02 > 20.0);
    }

    #[test]
    fn generators_start_connected() {
        for s in [
            make_static(10, 0.5, 5000).unwrap(),
            make_static(12, 18.0, 5000).unwrap(),
            make_stable_pack(10, 5000).unwrap(),
            breakaway_default(),
            merge_default(),
            make_pack_split(10, 10.0, (6, 4), 40_000).unwrap(),
        ] {
            assert_eq!(s.ground_truth(0).len(), 1, "{} starts split", s.name);
        }
    }

    #[test]
    fn json_round_trip_and_version_gate() {
        let s = breakaway_default();
        let json = s.to_json();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(s, back);

        let bad = json.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            Scenario::from_json(&bad),
            Err(ScenarioError::UnsupportedVersion(9))
        ));
    }
}
