//! Max-consensus state machines for group membership.
//!
//! Each node keeps an N-entry proximity vector. Entries are merged with a
//! component-wise max when a packet from a *mate* (a close-enough neighbor)
//! is received, so knowledge of the connected component floods through the
//! group. A beacon-driven epoch counter periodically resets the vectors,
//! which is what lets a mobile network forget nodes that left.
//!
//! The state machines here are pure: no timers, no channel, no RNG. The
//! simulator ([`crate::netsim`]) and the trace replayer ([`crate::replay`])
//! both drive the same code.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node, in `[0, N)` for a network of `N` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("node id {id} out of range for network of {n} nodes")]
    NodeOutOfRange { id: u32, n: usize },
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid proximity scale: mate_threshold {threshold} must be in [1, {m})")]
    InvalidScale { m: u8, threshold: u8 },
}

/// Proximity value range and the mate cutoff.
///
/// Proximity levels live in `[0, M]`. Two nodes are mates when the level
/// one measures for the other is strictly above `mate_threshold`. The
/// defaults give four levels (0 unknown, 1 weak, 2 within-30m class,
/// 3 within-20m class) with only the top level making a mate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProximityScale {
    pub m: u8,
    pub mate_threshold: u8,
}

impl ProximityScale {
    pub fn new(m: u8, mate_threshold: u8) -> Result<Self, ConsensusError> {
        if mate_threshold == 0 || mate_threshold >= m {
            return Err(ConsensusError::InvalidScale {
                m,
                threshold: mate_threshold,
            });
        }
        Ok(Self { m, mate_threshold })
    }

    /// Boolean mode: M=1 and every received packet merges. This is the
    /// original static-group algorithm without the mate gate.
    pub fn boolean() -> Self {
        Self {
            m: 1,
            mate_threshold: 0,
        }
    }

    pub fn is_mate(&self, proxim: u8) -> bool {
        proxim > self.mate_threshold
    }
}

impl Default for ProximityScale {
    fn default() -> Self {
        Self {
            m: 3,
            mate_threshold: 2,
        }
    }
}

/// Per-node proximity vector: one entry in `[0, M]` per node id.
///
/// Entries only ever grow between resets (max-merge), so the vector is a
/// join-semilattice element and message order cannot matter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProximityVector {
    values: Vec<u8>,
}

impl ProximityVector {
    /// Fresh vector for `own` in a network of `n` nodes: `m` at the own
    /// index, zero elsewhere.
    pub fn init(own: NodeId, n: usize, m: u8) -> Result<Self, ConsensusError> {
        if own.index() >= n {
            return Err(ConsensusError::NodeOutOfRange { id: own.0, n });
        }
        let mut values = vec![0u8; n];
        values[own.index()] = m;
        Ok(Self { values })
    }

    pub fn from_values(values: Vec<u8>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: NodeId) -> u8 {
        self.values[id.index()]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// Component-wise maximum of two vectors of equal length.
    pub fn merge_max(a: &Self, b: &Self) -> Result<Self, ConsensusError> {
        if a.len() != b.len() {
            return Err(ConsensusError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| x.max(y))
            .collect();
        Ok(Self { values })
    }

    fn merge_from(&mut self, other: &Self) -> Result<(), ConsensusError> {
        if self.len() != other.len() {
            return Err(ConsensusError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        for (x, &y) in self.values.iter_mut().zip(&other.values) {
            *x = (*x).max(y);
        }
        Ok(())
    }

    /// Hex encoding, two digits per entry, used by the trace format.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 2);
        for v in &self.values {
            s.push_str(&format!("{v:02x}"));
        }
        s
    }

    pub fn from_hex(hex: &str) -> Option<Self> {
        if !hex.len().is_multiple_of(2) {
            return None;
        }
        let mut values = Vec::with_capacity(hex.len() / 2);
        for i in (0..hex.len()).step_by(2) {
            values.push(u8::from_str_radix(&hex[i..i + 2], 16).ok()?);
        }
        Some(Self { values })
    }
}

/// Payload of a data broadcast: the sender's epoch and vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub sender: NodeId,
    pub epoch: u64,
    pub vector: ProximityVector,
}

/// Payload of a sink beacon: the global epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeaconPacket {
    pub epoch: u64,
}

/// What a node did with a received data packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RxOutcome {
    /// The packet carried a newer epoch and the vector was reset first.
    pub epoch_advanced: bool,
    /// The full vector was merged (sender was a mate).
    pub merged: bool,
    /// The packet's epoch was older than ours; it was discarded outright.
    pub stale: bool,
}

/// Decoded view of a vector: confirmed mates and the proximity levels
/// observed for everyone else that has been heard of.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupView {
    pub mates: BTreeSet<NodeId>,
    pub observed: BTreeMap<NodeId, u8>,
}

/// Full per-node protocol state: vector plus local epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    id: NodeId,
    scale: ProximityScale,
    epoch: u64,
    vector: ProximityVector,
    /// Malformed packets dropped (length mismatch).
    protocol_errors: u64,
}

impl NodeState {
    pub fn new(id: NodeId, n: usize, scale: ProximityScale) -> Result<Self, ConsensusError> {
        let vector = ProximityVector::init(id, n, scale.m)?;
        Ok(Self {
            id,
            scale,
            epoch: 0,
            vector,
            protocol_errors: 0,
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn scale(&self) -> ProximityScale {
        self.scale
    }

    pub fn vector(&self) -> &ProximityVector {
        &self.vector
    }

    pub fn protocol_errors(&self) -> u64 {
        self.protocol_errors
    }

    /// Packet to broadcast right now: `{k_v, B^v}`.
    pub fn outgoing(&self) -> DataPacket {
        DataPacket {
            sender: self.id,
            epoch: self.epoch,
            vector: self.vector.clone(),
        }
    }

    /// Shared epoch-advance path for beacons and data packets: a strictly
    /// newer epoch bumps `k_v` and resets the vector to its initial value.
    fn advance_epoch(&mut self, epoch: u64) -> bool {
        if epoch > self.epoch {
            self.epoch = epoch;
            self.vector = ProximityVector::init(self.id, self.vector.len(), self.scale.m)
                .expect("own id in range");
            true
        } else {
            false
        }
    }

    /// Process a received data packet given the current proximity level of
    /// its sender.
    ///
    /// Order matters: the epoch check runs first, so a packet that opens a
    /// new epoch resets the vector and is then applied against the fresh
    /// state. Packets from an older epoch are discarded entirely — merging
    /// them (or even keeping their proximity entry) would resurrect
    /// membership the reset just dropped.
    pub fn handle_data_packet(
        &mut self,
        pkt: &DataPacket,
        proxim: u8,
    ) -> Result<RxOutcome, ConsensusError> {
        if pkt.vector.len() != self.vector.len() {
            self.protocol_errors += 1;
            return Err(ConsensusError::LengthMismatch {
                left: self.vector.len(),
                right: pkt.vector.len(),
            });
        }
        let epoch_advanced = self.advance_epoch(pkt.epoch);
        if pkt.epoch < self.epoch {
            return Ok(RxOutcome {
                epoch_advanced: false,
                merged: false,
                stale: true,
            });
        }
        let merged = if self.scale.is_mate(proxim) {
            self.vector.merge_from(&pkt.vector)?;
            true
        } else {
            let i = pkt.sender.index();
            let entry = &mut self.vector.values[i];
            *entry = (*entry).max(proxim.min(self.scale.m));
            false
        };
        Ok(RxOutcome {
            epoch_advanced,
            merged,
            stale: false,
        })
    }

    /// Process a sink beacon: strictly newer epochs reset the node.
    pub fn handle_beacon(&mut self, beacon: BeaconPacket) -> bool {
        self.advance_epoch(beacon.epoch)
    }

    /// Decode the current vector: mates are the entries pinned at `M`
    /// (always including the node itself), everything else heard of is
    /// reported with its observed level.
    pub fn extract_groups(&self) -> GroupView {
        extract_groups(&self.vector, self.id, self.scale.m)
    }
}

/// Decode a vector into mates (entries equal to `m`, plus `own`) and
/// observed non-mate proximities (entries in `(0, m)`).
pub fn extract_groups(vector: &ProximityVector, own: NodeId, m: u8) -> GroupView {
    let mut mates = BTreeSet::new();
    let mut observed = BTreeMap::new();
    mates.insert(own);
    for (i, &v) in vector.values.iter().enumerate() {
        let id = NodeId(i as u32);
        if v >= m && v > 0 {
            mates.insert(id);
        } else if v > 0 {
            observed.insert(id, v);
        }
    }
    GroupView { mates, observed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scale() -> ProximityScale {
        ProximityScale::default()
    }

    #[test]
    fn init_places_m_at_own_index() {
        let v = ProximityVector::init(NodeId(0), 3, 1).unwrap();
        assert_eq!(v.values(), &[1, 0, 0]);
        let v = ProximityVector::init(NodeId(2), 3, 3).unwrap();
        assert_eq!(v.values(), &[0, 0, 3]);
        let v = ProximityVector::init(NodeId(0), 1, 3).unwrap();
        assert_eq!(v.values(), &[3]);
    }

    #[test]
    fn init_rejects_out_of_range() {
        assert_eq!(
            ProximityVector::init(NodeId(3), 3, 3),
            Err(ConsensusError::NodeOutOfRange { id: 3, n: 3 })
        );
    }

    #[test]
    fn merge_max_componentwise() {
        let a = ProximityVector::from_values(vec![1, 0, 0]);
        let b = ProximityVector::from_values(vec![0, 1, 0]);
        assert_eq!(
            ProximityVector::merge_max(&a, &b).unwrap().values(),
            &[1, 1, 0]
        );
        let c = ProximityVector::from_values(vec![3, 2, 0]);
        assert_eq!(ProximityVector::merge_max(&c, &c).unwrap(), c);
    }

    #[test]
    fn merge_max_rejects_length_mismatch() {
        let a = ProximityVector::from_values(vec![1, 0]);
        let b = ProximityVector::from_values(vec![1, 0, 0]);
        assert!(matches!(
            ProximityVector::merge_max(&a, &b),
            Err(ConsensusError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mate_packet_merges_vector() {
        let mut node = NodeState::new(NodeId(0), 3, scale()).unwrap();
        advance_to_epoch(&mut node, 5);
        let pkt = DataPacket {
            sender: NodeId(1),
            epoch: 5,
            vector: ProximityVector::from_values(vec![0, 3, 0]),
        };
        let out = node.handle_data_packet(&pkt, 3).unwrap();
        assert!(out.merged && !out.stale && !out.epoch_advanced);
        assert_eq!(node.vector().values(), &[3, 3, 0]);
    }

    #[test]
    fn newer_epoch_resets_before_merge() {
        let mut node = NodeState::new(NodeId(0), 3, scale()).unwrap();
        advance_to_epoch(&mut node, 5);
        // fill the vector to simulate an old converged state
        node.handle_data_packet(
            &DataPacket {
                sender: NodeId(1),
                epoch: 5,
                vector: ProximityVector::from_values(vec![0, 3, 3]),
            },
            3,
        )
        .unwrap();
        assert_eq!(node.vector().values(), &[3, 3, 3]);

        let pkt = DataPacket {
            sender: NodeId(1),
            epoch: 6,
            vector: ProximityVector::from_values(vec![0, 3, 0]),
        };
        let out = node.handle_data_packet(&pkt, 3).unwrap();
        assert!(out.epoch_advanced && out.merged);
        assert_eq!(node.epoch(), 6);
        assert_eq!(node.vector().values(), &[3, 3, 0]);
    }

    #[test]
    fn non_mate_updates_sender_entry_only() {
        let mut node = NodeState::new(NodeId(0), 3, scale()).unwrap();
        let pkt = DataPacket {
            sender: NodeId(1),
            epoch: 0,
            vector: ProximityVector::from_values(vec![0, 3, 3]),
        };
        let out = node.handle_data_packet(&pkt, 1).unwrap();
        assert!(!out.merged);
        assert_eq!(node.vector().values(), &[3, 1, 0]);
    }

    #[test]
    fn stale_packet_discarded_entirely() {
        let mut node = NodeState::new(NodeId(0), 3, scale()).unwrap();
        advance_to_epoch(&mut node, 5);
        let pkt = DataPacket {
            sender: NodeId(1),
            epoch: 3,
            vector: ProximityVector::from_values(vec![0, 3, 3]),
        };
        let out = node.handle_data_packet(&pkt, 3).unwrap();
        assert!(out.stale && !out.merged);
        // neither the merge nor the proximity side-channel applied
        assert_eq!(node.vector().values(), &[3, 0, 0]);
    }

    #[test]
    fn length_mismatch_counts_protocol_error() {
        let mut node = NodeState::new(NodeId(0), 3, scale()).unwrap();
        let pkt = DataPacket {
            sender: NodeId(1),
            epoch: 0,
            vector: ProximityVector::from_values(vec![0, 3]),
        };
        assert!(node.handle_data_packet(&pkt, 3).is_err());
        assert_eq!(node.protocol_errors(), 1);
        assert_eq!(node.vector().values(), &[3, 0, 0]);
    }

    #[test]
    fn beacon_epoch_rules() {
        let mut node = NodeState::new(NodeId(0), 2, scale()).unwrap();
        advance_to_epoch(&mut node, 4);
        assert!(node.handle_beacon(BeaconPacket { epoch: 5 }));
        assert_eq!(node.epoch(), 5);
        assert_eq!(node.vector().values(), &[3, 0]);
        // equal and stale beacons change nothing
        assert!(!node.handle_beacon(BeaconPacket { epoch: 5 }));
        assert!(!node.handle_beacon(BeaconPacket { epoch: 3 }));
        assert_eq!(node.epoch(), 5);
    }

    #[test]
    fn extract_groups_decodes_levels() {
        let v = ProximityVector::from_values(vec![3, 3, 1]);
        let g = extract_groups(&v, NodeId(0), 3);
        assert_eq!(
            g.mates.iter().copied().collect::<Vec<_>>(),
            vec![NodeId(0), NodeId(1)]
        );
        assert_eq!(g.observed.get(&NodeId(2)), Some(&1));

        let v = ProximityVector::from_values(vec![3, 0, 0]);
        let g = extract_groups(&v, NodeId(0), 3);
        assert_eq!(g.mates.len(), 1);
        assert!(g.observed.is_empty());
    }

    #[test]
    fn scale_validation() {
        assert!(ProximityScale::new(3, 2).is_ok());
        assert!(ProximityScale::new(3, 0).is_err());
        assert!(ProximityScale::new(3, 3).is_err());
        assert!(ProximityScale::new(1, 1).is_err());
        // boolean mode merges on any nonzero proximity
        let b = ProximityScale::boolean();
        assert!(b.is_mate(1));
        assert!(!b.is_mate(0));
    }

    #[test]
    fn hex_round_trip() {
        let v = ProximityVector::from_values(vec![0, 1, 2, 3, 255]);
        assert_eq!(v.to_hex(), "00010203ff");
        assert_eq!(ProximityVector::from_hex("00010203ff").unwrap(), v);
        assert!(ProximityVector::from_hex("0").is_none());
        assert!(ProximityVector::from_hex("zz").is_none());
    }

    /// Drive a node to the given epoch through the beacon path.
    fn advance_to_epoch(node: &mut NodeState, epoch: u64) {
        node.handle_beacon(BeaconPacket { epoch });
        assert_eq!(node.epoch(), epoch);
    }

    /// BFS connected components, the oracle for group extraction.
    pub(crate) fn bfs_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = std::collections::VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Exchange packets over the mate graph until no vector changes.
    /// Message order is driven by `order_seed` to exercise different
    /// interleavings; merging must converge regardless.
    fn run_to_fixpoint(n: usize, mate_edges: &[(usize, usize)], order_seed: u64) -> Vec<NodeState> {
        let mut nodes: Vec<NodeState> = (0..n)
            .map(|i| NodeState::new(NodeId(i as u32), n, scale()).unwrap())
            .collect();
        let mut rng = order_seed;
        let mut next = move |m: usize| {
            // xorshift, test-only
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng as usize) % m
        };
        let mut changed = true;
        while changed {
            changed = false;
            for _ in 0..n * n * 4 {
                if mate_edges.is_empty() {
                    break;
                }
                let (a, b) = mate_edges[next(mate_edges.len())];
                let (tx, rx) = if next(2) == 0 { (a, b) } else { (b, a) };
                let pkt = nodes[tx].outgoing();
                let before = nodes[rx].vector().clone();
                nodes[rx].handle_data_packet(&pkt, 3).unwrap();
                if nodes[rx].vector() != &before {
                    changed = true;
                }
            }
        }
        nodes
    }

    #[test]
    fn path_graph_converges_to_component() {
        // 4-node path: every node must learn the whole line, any order.
        let edges = [(0, 1), (1, 2), (2, 3)];
        for seed in 1..=20u64 {
            let nodes = run_to_fixpoint(4, &edges, seed);
            for node in &nodes {
                assert_eq!(node.vector().values(), &[3, 3, 3, 3], "seed {seed}");
            }
        }
    }

    #[test]
    fn converged_groups_match_bfs_oracle() {
        // random graphs on up to 12 nodes, exhaustive node-by-node check
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move |m: usize| {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed as usize) % m
        };
        for trial in 0..60 {
            let n = 2 + next(11); // 2..=12
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if next(100) < 25 {
                        edges.push((a, b));
                    }
                }
            }
            let nodes = run_to_fixpoint(n, &edges, 1 + trial as u64);
            let comps = bfs_components(n, &edges);
            for node in &nodes {
                let mates: Vec<usize> = node
                    .extract_groups()
                    .mates
                    .iter()
                    .map(|id| id.index())
                    .collect();
                let expected = comps
                    .iter()
                    .find(|c| c.contains(&node.id().index()))
                    .unwrap();
                assert_eq!(&mates, expected, "trial {trial}, node {}", node.id());
            }
        }
    }

    proptest! {
        #[test]
        fn merge_is_a_join(
            a in proptest::collection::vec(0u8..=3, 1..16),
            b in proptest::collection::vec(0u8..=3, 1..16),
            c in proptest::collection::vec(0u8..=3, 1..16),
        ) {
            let n = a.len().min(b.len()).min(c.len());
            let a = ProximityVector::from_values(a[..n].to_vec());
            let b = ProximityVector::from_values(b[..n].to_vec());
            let c = ProximityVector::from_values(c[..n].to_vec());
            let ab = ProximityVector::merge_max(&a, &b).unwrap();
            let ba = ProximityVector::merge_max(&b, &a).unwrap();
            prop_assert_eq!(&ab, &ba);
            let ab_c = ProximityVector::merge_max(&ab, &c).unwrap();
            let bc = ProximityVector::merge_max(&b, &c).unwrap();
            let a_bc = ProximityVector::merge_max(&a, &bc).unwrap();
            prop_assert_eq!(&ab_c, &a_bc);
            prop_assert_eq!(ProximityVector::merge_max(&a, &a).unwrap(), a);
        }

        #[test]
        fn entries_monotone_between_resets(
            packets in proptest::collection::vec(
                (0u32..6, 0u8..=3, proptest::collection::vec(0u8..=3, 6)),
                1..64,
            ),
        ) {
            let mut node = NodeState::new(NodeId(0), 6, scale()).unwrap();
            let mut prev = node.vector().clone();
            let mut prev_epoch = node.epoch();
            for (sender, proxim, values) in packets {
                let pkt = DataPacket {
                    sender: NodeId(sender),
                    epoch: prev_epoch, // same epoch: no reset possible
                    vector: ProximityVector::from_values(values),
                };
                node.handle_data_packet(&pkt, proxim).unwrap();
                prop_assert_eq!(node.epoch(), prev_epoch);
                for (now, before) in node.vector().values().iter().zip(prev.values()) {
                    prop_assert!(now >= before);
                }
                prev = node.vector().clone();
                prev_epoch = node.epoch();
            }
        }

        #[test]
        fn epoch_safety_and_reset_correctness(
            packets in proptest::collection::vec(
                (0u32..5, 0u64..8, 0u8..=3, proptest::collection::vec(0u8..=3, 5)),
                1..64,
            ),
        ) {
            let mut node = NodeState::new(NodeId(2), 5, scale()).unwrap();
            for (sender, epoch, proxim, values) in packets {
                let before_epoch = node.epoch();
                let pkt = DataPacket {
                    sender: NodeId(sender),
                    epoch,
                    vector: ProximityVector::from_values(values),
                };
                let out = node.handle_data_packet(&pkt, proxim).unwrap();
                // a node never merges anything from an older epoch
                if epoch < before_epoch {
                    prop_assert!(out.stale && !out.merged);
                }
                // epochs never move backwards
                prop_assert!(node.epoch() >= before_epoch);
                prop_assert!(node.epoch() >= epoch || out.stale);
                if out.epoch_advanced {
                    // post-reset state is init + at most this packet's update
                    prop_assert_eq!(node.epoch(), epoch);
                    prop_assert_eq!(node.vector().get(NodeId(2)), 3);
                }
            }
        }
    }
}
