//! Deterministic packet-level broadcast channel simulation.
//!
//! Nodes contend for a shared medium with random backoff: each draws a
//! wait uniform in (0, T], counts it down only while the channel is sensed
//! idle, broadcasts its `{k_v, B^v}` packet at expiry, and draws again.
//! Sinks broadcast epoch beacons on a fixed schedule regardless of the
//! channel. Receivers within range get the packet unless it overlapped
//! another in-range transmission (collision), the receiver was itself
//! transmitting, or an independent loss draw failed.
//!
//! Everything is event-driven on a single microsecond timeline. Ties are
//! broken by (event kind, entity id), and all randomness comes from one
//! seeded stream, so a (config, scenario, seed) triple always produces the
//! identical trace.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{BeaconPacket, DataPacket, NodeId, NodeState};
use crate::link::{LinkEstimator, LinkSample};
use crate::scenario::{distance, Scenario};
use crate::trace::{TraceKind, TraceMeta, TraceRecord, TRACE_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

/// Distance-dependent signal and loss model.
///
/// The expected energy-detection reading falls off log-linearly with
/// distance and is calibrated through a reference point: at `ref_dist_m`
/// the expected reading is exactly `ref_ed`. With the defaults that anchor
/// sits at 20 m mapping onto the within-20m quantizer threshold, and the
/// slope is chosen so 30 m lands on the within-30m threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Expected ED reading at the reference distance.
    pub ref_ed: f64,
    /// Reference (calibration) distance in meters.
    pub ref_dist_m: f64,
    /// ED units lost per decade of distance (10 * path-loss exponent).
    pub decade_slope: f64,
    /// Per-packet gaussian spread of the reading, in ED units.
    pub shadow_sigma: f64,
    /// Hard delivery cutoff in meters; nothing arrives beyond it.
    pub comm_range_m: f64,
    /// Saturation ceiling of the radio's ED register.
    pub ed_max: u8,
    /// Distance-independent floor of the random loss probability.
    pub loss_base: f64,
    /// Distance where random loss reaches the halfway ramp point (m).
    pub loss_mid_m: f64,
    /// Width of the loss ramp (m).
    pub loss_width_m: f64,
}

impl ChannelModel {
    /// Calibrate the ED curve so `expected_ed(d20) == th20` and
    /// `expected_ed(d30) == th30`.
    pub fn anchored(th20: f64, d20: f64, th30: f64, d30: f64) -> Self {
        let decade_slope = (th20 - th30) / (d30 / d20).log10();
        Self {
            ref_ed: th20,
            ref_dist_m: d20,
            decade_slope,
            shadow_sigma: 0.4,
            comm_range_m: 60.0,
            ed_max: 84,
            loss_base: 0.03,
            loss_mid_m: 45.0,
            loss_width_m: 6.0,
        }
    }

    /// Expected (noise-free) ED reading at a distance.
    pub fn expected_ed(&self, dist_m: f64) -> f64 {
        let d = dist_m.max(0.1);
        self.ref_ed + self.decade_slope * (self.ref_dist_m / d).log10()
    }

    /// Probability that a packet at this distance is lost to noise,
    /// independent of collisions.
    pub fn loss_probability(&self, dist_m: f64) -> f64 {
        let ramp = 1.0 / (1.0 + (-(dist_m - self.loss_mid_m) / self.loss_width_m).exp());
        (self.loss_base + (1.0 - self.loss_base) * ramp).clamp(0.0, 1.0)
    }

    fn quantize_ed(&self, ed: f64) -> u8 {
        ed.floor().clamp(0.0, self.ed_max as f64) as u8
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::anchored(8.0, 20.0, 5.0, 30.0)
    }
}

/// Protocol and channel parameters for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Upper limit of the random backoff draw (ms).
    pub backoff_ms: u64,
    /// Beacon/reset period of the sinks (ms).
    pub epoch_period_ms: u64,
    /// Fixed on-air time of every packet (us).
    pub airtime_us: u64,
    /// Carrier-sense blind window after a transmission starts (us); backoffs
    /// expiring inside it still fire, which is where collisions come from.
    pub sensing_delay_us: u64,
    /// Radio/processing turnaround after a node's own transmission before
    /// its next backoff starts counting (us).
    pub turnaround_us: u64,
    /// Extra loss probability added on top of the distance ramp.
    pub payload_loss_extra: f64,
    pub channel: ChannelModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backoff_ms: 70,
            epoch_period_ms: 400,
            airtime_us: 4000,
            sensing_delay_us: 192,
            turnaround_us: 1600,
            payload_loss_extra: 0.0,
            channel: ChannelModel::default(),
        }
    }
}

impl SimConfig {
    /// Ideal channel: no noise, no random loss, no sensing blind window.
    /// Packets only fail by range or exact-tie collisions. Validation runs
    /// use this to isolate protocol behavior from channel behavior.
    pub fn lossless(seed: u64) -> Self {
        let mut cfg = Self {
            seed,
            sensing_delay_us: 0,
            payload_loss_extra: 0.0,
            ..Self::default()
        };
        cfg.channel.shadow_sigma = 0.0;
        cfg.channel.loss_base = 0.0;
        cfg.channel.loss_mid_m = 1e9;
        cfg
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.backoff_ms == 0 {
            return Err(SimError::InvalidConfig("backoff_ms must be > 0".into()));
        }
        if self.epoch_period_ms <= self.backoff_ms {
            return Err(SimError::InvalidConfig(
                "epoch_period_ms must exceed backoff_ms".into(),
            ));
        }
        if self.airtime_us == 0 {
            return Err(SimError::InvalidConfig("airtime_us must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.payload_loss_extra) {
            return Err(SimError::InvalidConfig(
                "payload_loss_extra must be in [0, 1]".into(),
            ));
        }
        let range_ok = self.channel.comm_range_m > 0.0;
        if !range_ok {
            return Err(SimError::InvalidConfig("comm_range must be > 0".into()));
        }
        Ok(())
    }

    /// Apply one string override of the form used by the CLI, e.g.
    /// `epoch_period_ms=400` or `shadow_sigma=0`.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn p<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?}"))
        }
        match key {
            "seed" => self.seed = p(value)?,
            "backoff_ms" => self.backoff_ms = p(value)?,
            "epoch_period_ms" => self.epoch_period_ms = p(value)?,
            "airtime_us" => self.airtime_us = p(value)?,
            "sensing_delay_us" => self.sensing_delay_us = p(value)?,
            "turnaround_us" => self.turnaround_us = p(value)?,
            "payload_loss_extra" => self.payload_loss_extra = p(value)?,
            "ref_ed" => self.channel.ref_ed = p(value)?,
            "ref_dist_m" => self.channel.ref_dist_m = p(value)?,
            "decade_slope" => self.channel.decade_slope = p(value)?,
            "shadow_sigma" => self.channel.shadow_sigma = p(value)?,
            "comm_range_m" => self.channel.comm_range_m = p(value)?,
            "ed_max" => self.channel.ed_max = p(value)?,
            "loss_base" => self.channel.loss_base = p(value)?,
            "loss_mid_m" => self.channel.loss_mid_m = p(value)?,
            "loss_width_m" => self.channel.loss_width_m = p(value)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }
}

/// Partial [`SimConfig`]: the override layers (scenario file, config file,
/// CLI) each fill in just the fields they care about.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_period_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub airtime_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing_delay_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turnaround_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_loss_extra: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_range_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_mid_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_width_m: Option<f64>,
}

impl SimPatch {
    pub fn apply_to(&self, cfg: &mut SimConfig) {
        if let Some(v) = self.backoff_ms {
            cfg.backoff_ms = v;
        }
        if let Some(v) = self.epoch_period_ms {
            cfg.epoch_period_ms = v;
        }
        if let Some(v) = self.airtime_us {
            cfg.airtime_us = v;
        }
        if let Some(v) = self.sensing_delay_us {
            cfg.sensing_delay_us = v;
        }
        if let Some(v) = self.turnaround_us {
            cfg.turnaround_us = v;
        }
        if let Some(v) = self.payload_loss_extra {
            cfg.payload_loss_extra = v;
        }
        if let Some(v) = self.shadow_sigma {
            cfg.channel.shadow_sigma = v;
        }
        if let Some(v) = self.comm_range_m {
            cfg.channel.comm_range_m = v;
        }
        if let Some(v) = self.loss_base {
            cfg.channel.loss_base = v;
        }
        if let Some(v) = self.loss_mid_m {
            cfg.channel.loss_mid_m = v;
        }
        if let Some(v) = self.loss_width_m {
            cfg.channel.loss_width_m = v;
        }
    }
}

/// Delivery bookkeeping over a whole run, split by packet class. For every
/// (transmission, in-range receiver) pair exactly one counter moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryStats {
    pub data_delivered: u64,
    pub data_lost: u64,
    pub data_collided: u64,
    pub beacon_delivered: u64,
    pub beacon_lost: u64,
    pub beacon_collided: u64,
}

impl DeliveryStats {
    pub fn data_pairs(&self) -> u64 {
        self.data_delivered + self.data_lost + self.data_collided
    }

    pub fn data_loss_rate(&self) -> f64 {
        let pairs = self.data_pairs();
        if pairs == 0 {
            0.0
        } else {
            (self.data_lost + self.data_collided) as f64 / pairs as f64
        }
    }
}

/// Complete result of one simulated run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
    pub stats: DeliveryStats,
}

// ---------------------------------------------------------------------------
// Event machinery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    /// A transmission finishes; deliveries resolve here.
    TxEnd = 0,
    /// A sink's scheduled beacon goes on air.
    BeaconEmit = 1,
    /// A node's backoff ran out; its packet goes on air.
    BackoffExpiry = 2,
    /// Global estimator refresh grid tick.
    EstimatorRefresh = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time_us: u64,
    kind: EventKind,
    entity: u32,
    /// Stale-event guard: a frozen backoff invalidates its queued expiry.
    gen: u64,
}

#[derive(Debug, Clone, Copy)]
enum Mac {
    Counting { expiry_us: u64, gen: u64 },
    Frozen { remaining_us: u64 },
    Transmitting,
}

#[derive(Debug, Clone)]
enum Payload {
    Data(DataPacket),
    Beacon(BeaconPacket),
}

#[derive(Debug, Clone, Copy)]
struct OverlapInfo {
    sender: u32,
    sender_pos: (f64, f64),
}

#[derive(Debug)]
struct ActiveTx {
    sender: u32,
    start_us: u64,
    end_us: u64,
    payload: Payload,
    sender_pos: (f64, f64),
    /// Consensus nodes whose busy count this transmission raised.
    frozen: Vec<u32>,
    /// Transmissions that overlapped this one in time (either direction).
    overlaps: Vec<OverlapInfo>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    shadow: Normal<f64>,
    now_us: u64,
    duration_us: u64,
    events: BinaryHeap<Reverse<Event>>,
    nodes: Vec<NodeState>,
    estimators: Vec<LinkEstimator>,
    mac: Vec<Mac>,
    busy: Vec<u32>,
    gen_counter: u64,
    active: Vec<ActiveTx>,
    records: Vec<TraceRecord>,
    stats: DeliveryStats,
}

/// Run the event loop to the scenario's end and return the full trace.
pub fn run(cfg: &SimConfig, scenario: &Scenario) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    scenario.validate()?;
    let mut sim = Sim::new(cfg, scenario);
    sim.prime();
    while let Some(Reverse(ev)) = sim.events.pop() {
        if ev.time_us > sim.duration_us {
            break;
        }
        sim.now_us = ev.time_us;
        match ev.kind {
            EventKind::TxEnd => sim.on_tx_end(ev.entity),
            EventKind::BeaconEmit => sim.on_beacon_emit(ev.entity),
            EventKind::BackoffExpiry => sim.on_backoff_expiry(ev.entity, ev.gen),
            EventKind::EstimatorRefresh => sim.on_refresh(),
        }
    }
    let meta = TraceMeta {
        format_version: TRACE_FORMAT_VERSION,
        n_nodes: scenario.n_nodes,
        m: scenario.consensus.m,
        mate_threshold: scenario.consensus.mate_threshold,
        epoch_period_ms: cfg.epoch_period_ms,
        duration_ms: scenario.duration_ms,
        seed: cfg.seed,
    };
    Ok(SimTrace {
        meta,
        records: sim.records,
        stats: sim.stats,
    })
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, scenario: &'a Scenario) -> Self {
        let n = scenario.n_nodes;
        let nodes = (0..n)
            .map(|i| {
                NodeState::new(NodeId(i as u32), n, scenario.consensus)
                    .expect("scenario validated")
            })
            .collect();
        let estimators = (0..n)
            .map(|_| LinkEstimator::new(scenario.estimator))
            .collect();
        Self {
            cfg,
            scenario,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            shadow: Normal::new(0.0, cfg.channel.shadow_sigma.max(0.0))
                .expect("finite sigma"),
            now_us: 0,
            duration_us: scenario.duration_ms * 1000,
            events: BinaryHeap::new(),
            nodes,
            estimators,
            mac: vec![
                Mac::Frozen { remaining_us: 0 };
                n
            ],
            busy: vec![0; n],
            gen_counter: 0,
            active: Vec::new(),
            records: Vec::new(),
            stats: DeliveryStats::default(),
        }
    }

    fn prime(&mut self) {
        // initial backoffs, in node order
        for i in 0..self.scenario.n_nodes {
            let draw = self.draw_backoff();
            let gen = self.next_gen();
            self.mac[i] = Mac::Counting {
                expiry_us: draw,
                gen,
            };
            self.push(Event {
                time_us: draw,
                kind: EventKind::BackoffExpiry,
                entity: i as u32,
                gen,
            });
        }
        // beacon schedules
        for (s, sink) in self.scenario.sinks.iter().enumerate() {
            let entity = (self.scenario.n_nodes + s) as u32;
            self.push(Event {
                time_us: sink.epoch_phase_ms * 1000,
                kind: EventKind::BeaconEmit,
                entity,
                gen: 0,
            });
        }
        // estimator refresh grid
        let grid = gcd(
            self.scenario.estimator.short_period_ms,
            self.scenario.estimator.long_period_ms,
        ) * 1000;
        self.push(Event {
            time_us: grid,
            kind: EventKind::EstimatorRefresh,
            entity: 0,
            gen: 0,
        });
    }

    fn push(&mut self, ev: Event) {
        self.events.push(Reverse(ev));
    }

    fn next_gen(&mut self) -> u64 {
        self.gen_counter += 1;
        self.gen_counter
    }

    /// Uniform over (0, T], microsecond resolution.
    fn draw_backoff(&mut self) -> u64 {
        self.rng.random_range(1..=self.cfg.backoff_ms * 1000)
    }

    fn entity_pos(&self, entity: u32, t_us: u64) -> (f64, f64) {
        self.scenario.entity_position(entity as usize, t_us / 1000)
    }

    fn record(&mut self, rec: TraceRecord) {
        self.records.push(rec);
    }

    // -- transmission lifecycle ---------------------------------------------

    /// Put a packet on the air at `now` and freeze in-range counters.
    fn start_tx(&mut self, sender: u32, payload: Payload) {
        let start_us = self.now_us;
        let end_us = start_us + self.cfg.airtime_us;
        let sender_pos = self.entity_pos(sender, start_us);
        let sense_horizon = start_us + self.cfg.sensing_delay_us;

        let mut frozen = Vec::new();
        for v in 0..self.scenario.n_nodes {
            if v as u32 == sender {
                continue;
            }
            let d = distance(sender_pos, self.entity_pos(v as u32, start_us));
            if d > self.cfg.channel.comm_range_m {
                continue;
            }
            self.busy[v] += 1;
            frozen.push(v as u32);
            if let Mac::Counting { expiry_us, .. } = self.mac[v] {
                if expiry_us >= sense_horizon {
                    // freeze; the queued expiry event goes stale
                    self.mac[v] = Mac::Frozen {
                        remaining_us: expiry_us - sense_horizon,
                    };
                }
                // else: expiry falls inside the blind window and still fires
            }
        }

        // cross-register overlaps with everything already on air
        let info = OverlapInfo { sender, sender_pos };
        let mut overlaps = Vec::new();
        for tx in self.active.iter_mut() {
            tx.overlaps.push(info);
            overlaps.push(OverlapInfo {
                sender: tx.sender,
                sender_pos: tx.sender_pos,
            });
        }

        self.active.push(ActiveTx {
            sender,
            start_us,
            end_us,
            payload,
            sender_pos,
            frozen,
            overlaps,
        });
        self.push(Event {
            time_us: end_us,
            kind: EventKind::TxEnd,
            entity: sender,
            gen: 0,
        });
    }

    fn on_backoff_expiry(&mut self, node: u32, gen: u64) {
        match self.mac[node as usize] {
            Mac::Counting { gen: g, .. } if g == gen => {}
            _ => return, // stale event from before a freeze
        }
        self.mac[node as usize] = Mac::Transmitting;
        let pkt = self.nodes[node as usize].outgoing();
        self.record(TraceRecord {
            time_us: self.now_us,
            kind: TraceKind::Tx,
            node,
            peer: None,
            epoch: Some(pkt.epoch),
            ed: None,
            vector: Some(pkt.vector.to_hex()),
            crc_ok: true,
        });
        self.start_tx(node, Payload::Data(pkt));
    }

    fn on_beacon_emit(&mut self, entity: u32) {
        let sink_idx = entity as usize - self.scenario.n_nodes;
        let sink = &self.scenario.sinks[sink_idx];
        let phase_us = sink.epoch_phase_ms * 1000;
        let period_us = self.cfg.epoch_period_ms * 1000;
        let epoch = (self.now_us - phase_us) / period_us;
        let slot_us = phase_us + epoch * period_us;

        // sinks carrier-sense too: a busy channel defers the beacon until
        // the sensed transmissions clear, keeping the slot's epoch number
        let sink_pos = self.entity_pos(entity, self.now_us);
        let busy_until = self
            .active
            .iter()
            .filter(|tx| distance(tx.sender_pos, sink_pos) <= self.cfg.channel.comm_range_m)
            .map(|tx| tx.end_us)
            .max();
        if let Some(end_us) = busy_until {
            self.push(Event {
                time_us: end_us,
                kind: EventKind::BeaconEmit,
                entity,
                gen: 0,
            });
            return;
        }

        let active = sink
            .active_until_ms
            .is_none_or(|until| self.now_us <= until * 1000);
        if active {
            self.record(TraceRecord {
                time_us: self.now_us,
                kind: TraceKind::BeaconTx,
                node: entity,
                peer: None,
                epoch: Some(epoch),
                ed: None,
                vector: None,
                crc_ok: true,
            });
            self.start_tx(entity, Payload::Beacon(BeaconPacket { epoch }));
        }
        let next = slot_us + period_us;
        if next <= self.duration_us {
            self.push(Event {
                time_us: next,
                kind: EventKind::BeaconEmit,
                entity,
                gen: 0,
            });
        }
    }

    fn on_tx_end(&mut self, sender: u32) {
        let idx = self
            .active
            .iter()
            .position(|tx| tx.end_us == self.now_us && tx.sender == sender)
            .expect("TxEnd event matches an active transmission");
        let tx = self.active.remove(idx);

        self.deliver_all(&tx);

        // release frozen counters; idle is only sensed after the same
        // blind window that delayed the freeze
        for &v in &tx.frozen {
            let v = v as usize;
            self.busy[v] -= 1;
            if self.busy[v] == 0 {
                if let Mac::Frozen { remaining_us } = self.mac[v] {
                    let expiry_us = self.now_us + self.cfg.sensing_delay_us + remaining_us;
                    let gen = self.next_gen();
                    self.mac[v] = Mac::Counting { expiry_us, gen };
                    self.push(Event {
                        time_us: expiry_us,
                        kind: EventKind::BackoffExpiry,
                        entity: v as u32,
                        gen,
                    });
                }
            }
        }

        // the sender re-arms after its turnaround (sinks have their own
        // schedule)
        if (tx.sender as usize) < self.scenario.n_nodes {
            let draw = self.cfg.turnaround_us + self.draw_backoff();
            let v = tx.sender as usize;
            if self.busy[v] > 0 {
                self.mac[v] = Mac::Frozen { remaining_us: draw };
            } else {
                let gen = self.next_gen();
                self.mac[v] = Mac::Counting {
                    expiry_us: self.now_us + draw,
                    gen,
                };
                self.push(Event {
                    time_us: self.now_us + draw,
                    kind: EventKind::BackoffExpiry,
                    entity: tx.sender,
                    gen,
                });
            }
        }
    }

    /// Resolve this transmission at every in-range consensus node.
    fn deliver_all(&mut self, tx: &ActiveTx) {
        let is_data = matches!(tx.payload, Payload::Data(_));
        for r in 0..self.scenario.n_nodes {
            let r32 = r as u32;
            if r32 == tx.sender {
                continue;
            }
            let r_pos = self.entity_pos(r32, tx.start_us);
            let d = distance(tx.sender_pos, r_pos);
            if d > self.cfg.channel.comm_range_m {
                continue; // out of range: not a potential receiver
            }

            // half duplex: a node transmitting during any part of the
            // window cannot receive
            let rx_busy = tx.overlaps.iter().any(|o| o.sender == r32);
            // interference: any overlapping transmission audible at r
            let interfered = !rx_busy
                && tx.overlaps.iter().any(|o| {
                    distance(o.sender_pos, r_pos) <= self.cfg.channel.comm_range_m
                });

            if interfered {
                self.count(is_data, Outcome::Collided);
                self.record(TraceRecord {
                    time_us: self.now_us,
                    kind: TraceKind::Collision,
                    node: r32,
                    peer: Some(tx.sender),
                    epoch: None,
                    ed: None,
                    vector: None,
                    crc_ok: false,
                });
                continue;
            }

            let lost = rx_busy || {
                let p = self.cfg.channel.loss_probability(d) + self.cfg.payload_loss_extra;
                self.rng.random::<f64>() < p
            };
            if lost {
                self.count(is_data, Outcome::Lost);
                self.record(TraceRecord {
                    time_us: self.now_us,
                    kind: TraceKind::Loss,
                    node: r32,
                    peer: Some(tx.sender),
                    epoch: None,
                    ed: None,
                    vector: None,
                    crc_ok: false,
                });
                continue;
            }

            let ed_raw = self.cfg.channel.expected_ed(d) + self.shadow.sample(&mut self.rng);
            let ed = self.cfg.channel.quantize_ed(ed_raw);
            self.count(is_data, Outcome::Delivered);
            match &tx.payload {
                Payload::Data(pkt) => self.deliver_data(r32, pkt, ed),
                Payload::Beacon(b) => self.deliver_beacon(r32, tx.sender, *b, ed),
            }
        }
    }

    fn deliver_data(&mut self, receiver: u32, pkt: &DataPacket, ed: u8) {
        let r = receiver as usize;
        self.estimators[r].ingest_sample(LinkSample {
            neighbor: pkt.sender,
            ed,
            timestamp_ms: self.now_us / 1000,
        });
        let proxim = self.estimators[r]
            .proxim(pkt.sender)
            .min(self.scenario.consensus.m);
        self.record(TraceRecord {
            time_us: self.now_us,
            kind: TraceKind::Rx,
            node: receiver,
            peer: Some(pkt.sender.0),
            epoch: Some(pkt.epoch),
            ed: Some(ed),
            vector: Some(pkt.vector.to_hex()),
            crc_ok: true,
        });
        let outcome = self.nodes[r]
            .handle_data_packet(pkt, proxim)
            .expect("uniform vector width inside one run");
        if outcome.epoch_advanced {
            self.record(TraceRecord {
                time_us: self.now_us,
                kind: TraceKind::EpochChange,
                node: receiver,
                peer: None,
                epoch: Some(self.nodes[r].epoch()),
                ed: None,
                vector: None,
                crc_ok: true,
            });
        }
    }

    fn deliver_beacon(&mut self, receiver: u32, sink: u32, beacon: BeaconPacket, ed: u8) {
        self.record(TraceRecord {
            time_us: self.now_us,
            kind: TraceKind::BeaconRx,
            node: receiver,
            peer: Some(sink),
            epoch: Some(beacon.epoch),
            ed: Some(ed),
            vector: None,
            crc_ok: true,
        });
        if self.nodes[receiver as usize].handle_beacon(beacon) {
            self.record(TraceRecord {
                time_us: self.now_us,
                kind: TraceKind::EpochChange,
                node: receiver,
                peer: None,
                epoch: Some(beacon.epoch),
                ed: None,
                vector: None,
                crc_ok: true,
            });
        }
    }

    fn on_refresh(&mut self) {
        let now_ms = self.now_us / 1000;
        for v in 0..self.scenario.n_nodes {
            for change in self.estimators[v].refresh(now_ms) {
                self.records.push(TraceRecord {
                    time_us: self.now_us,
                    kind: TraceKind::LevelChange,
                    node: v as u32,
                    peer: Some(change.neighbor.0),
                    epoch: None,
                    ed: Some(change.new),
                    vector: None,
                    crc_ok: true,
                });
            }
        }
        let grid = gcd(
            self.scenario.estimator.short_period_ms,
            self.scenario.estimator.long_period_ms,
        ) * 1000;
        let next = self.now_us + grid;
        if next <= self.duration_us {
            self.push(Event {
                time_us: next,
                kind: EventKind::EstimatorRefresh,
                entity: 0,
                gen: 0,
            });
        }
    }

    fn count(&mut self, is_data: bool, outcome: Outcome) {
        let stats = &mut self.stats;
        match (is_data, outcome) {
            (true, Outcome::Delivered) => stats.data_delivered += 1,
            (true, Outcome::Lost) => stats.data_lost += 1,
            (true, Outcome::Collided) => stats.data_collided += 1,
            (false, Outcome::Delivered) => stats.beacon_delivered += 1,
            (false, Outcome::Lost) => stats.beacon_lost += 1,
            (false, Outcome::Collided) => stats.beacon_collided += 1,
        }
    }
}

#[derive(Clone, Copy)]
enum Outcome {
    Delivered,
    Lost,
    Collided,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
