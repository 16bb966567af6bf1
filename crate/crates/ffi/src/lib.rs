//! C ABI for the node-side protocol: the consensus state machine plus the
//! link estimator behind an opaque handle, so firmware shims and other
//! languages can run the same receive path the simulator exercises.
//!
//! Conventions: handles come from [`gs_node_new`] and must be released
//! with [`gs_node_free`]; every fallible call returns a [`GsStatus`];
//! nothing here panics across the boundary.

use std::panic::{catch_unwind, AssertUnwindSafe};

use groupsense::consensus::{
    BeaconPacket, DataPacket, NodeId, NodeState, ProximityScale, ProximityVector,
};
use groupsense::link::{EstimatorConfig, LinkEstimator, LinkSample};
use groupsense::metrics::{bound_expected_tau, bound_tau_with_confidence, BoundParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    GsOk = 0,
    GsNullPointer = 1,
    GsInvalidArgument = 2,
    GsLengthMismatch = 3,
    GsInternal = 4,
}

/// Smoothing and quantizer parameters, mirroring the library defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GsEstimatorConfig {
    /// Short window length in raw samples.
    pub short_window: u32,
    /// Long window length in short-average values.
    pub long_window: u32,
    pub short_period_ms: u64,
    pub long_period_ms: u64,
    /// Quantizer threshold for the within-20m level.
    pub th20: f64,
    /// Quantizer threshold for the within-30m level.
    pub th30: f64,
    /// Silence horizon after which a neighbor decays to level 0 (ms).
    pub silence_expiry_ms: u64,
}

/// Opaque per-node protocol state.
pub struct GsNode {
    state: NodeState,
    estimator: LinkEstimator,
}

fn estimator_config(cfg: Option<&GsEstimatorConfig>) -> Option<EstimatorConfig> {
    let Some(c) = cfg else {
        return Some(EstimatorConfig::default());
    };
    let cfg = EstimatorConfig {
        short_window: c.short_window as usize,
        long_window: c.long_window as usize,
        short_period_ms: c.short_period_ms,
        long_period_ms: c.long_period_ms,
        th20: c.th20,
        th30: c.th30,
        silence_expiry_ms: c.silence_expiry_ms,
    };
    cfg.validate().ok()?;
    Some(cfg)
}

/// Create a node handle for `node_id` in a network of `n_nodes`, with
/// proximity levels in `[0, m]` and merges gated strictly above
/// `mate_threshold`. Pass NULL for `estimator` to use the defaults.
/// Returns NULL on invalid arguments.
///
/// # Safety
/// `estimator` must be NULL or point to a valid [`GsEstimatorConfig`].
#[no_mangle]
pub unsafe extern "C" fn gs_node_new(
    node_id: u32,
    n_nodes: u32,
    m: u8,
    mate_threshold: u8,
    estimator: *const GsEstimatorConfig,
) -> *mut GsNode {
    let scale = match ProximityScale::new(m, mate_threshold) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    let Some(est_cfg) = estimator_config(unsafe { estimator.as_ref() }) else {
        return std::ptr::null_mut();
    };
    match NodeState::new(NodeId(node_id), n_nodes as usize, scale) {
        Ok(state) => Box::into_raw(Box::new(GsNode {
            state,
            estimator: LinkEstimator::new(est_cfg),
        })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Release a handle. NULL is a no-op.
///
/// # Safety
/// `node` must be NULL or a pointer from [`gs_node_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_node_free(node: *mut GsNode) {
    if !node.is_null() {
        drop(unsafe { Box::from_raw(node) });
    }
}

/// Full receive path for a data packet: the signal reading is folded into
/// the link estimator, the sender's current quantized level gates the
/// merge, and the epoch rules run first (a newer epoch resets the vector,
/// an older one discards the packet).
///
/// `vector` must point to `vector_len` bytes holding the sender's
/// proximity vector; `vector_len` must equal the network size.
///
/// # Safety
/// `node` must be NULL or a live handle; `vector` must be NULL or point
/// to `vector_len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn gs_node_receive_data(
    node: *mut GsNode,
    sender: u32,
    epoch: u64,
    ed: u8,
    time_ms: u64,
    vector: *const u8,
    vector_len: usize,
) -> GsStatus {
    let Some(gs) = (unsafe { node.as_mut() }) else {
        return GsStatus::GsNullPointer;
    };
    if vector.is_null() {
        return GsStatus::GsNullPointer;
    }
    if vector_len != gs.state.vector().len() {
        return GsStatus::GsLengthMismatch;
    }
    let values = unsafe { std::slice::from_raw_parts(vector, vector_len) };
    let pkt = DataPacket {
        sender: NodeId(sender),
        epoch,
        vector: ProximityVector::from_values(values.to_vec()),
    };
    let result = catch_unwind(AssertUnwindSafe(|| {
        gs.estimator.ingest_sample(LinkSample {
            neighbor: NodeId(sender),
            ed,
            timestamp_ms: time_ms,
        });
        let proxim = gs.estimator.proxim(NodeId(sender)).min(gs.state.scale().m);
        gs.state.handle_data_packet(&pkt, proxim)
    }));
    match result {
        Ok(Ok(_)) => GsStatus::GsOk,
        Ok(Err(_)) => GsStatus::GsLengthMismatch,
        Err(_) => GsStatus::GsInternal,
    }
}

/// Apply an epoch beacon: a strictly newer epoch resets the vector.
///
/// # Safety
/// `node` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_node_receive_beacon(node: *mut GsNode, epoch: u64) -> GsStatus {
    let Some(gs) = (unsafe { node.as_mut() }) else {
        return GsStatus::GsNullPointer;
    };
    gs.state.handle_beacon(BeaconPacket { epoch });
    GsStatus::GsOk
}

/// Advance the estimator clock: recomputes averages and levels that are
/// due at `time_ms`. Call at least once per refresh period.
///
/// # Safety
/// `node` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_node_refresh(node: *mut GsNode, time_ms: u64) -> GsStatus {
    let Some(gs) = (unsafe { node.as_mut() }) else {
        return GsStatus::GsNullPointer;
    };
    match catch_unwind(AssertUnwindSafe(|| gs.estimator.refresh(time_ms))) {
        Ok(_) => GsStatus::GsOk,
        Err(_) => GsStatus::GsInternal,
    }
}

/// Current local epoch, or 0 for NULL.
///
/// # Safety
/// `node` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_node_epoch(node: *const GsNode) -> u64 {
    unsafe { node.as_ref() }.map_or(0, |gs| gs.state.epoch())
}

/// Current quantized proximity level for a neighbor, or -1 on NULL.
///
/// # Safety
/// `node` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_node_proxim(node: *const GsNode, neighbor: u32) -> i32 {
    match unsafe { node.as_ref() } {
        Some(gs) => gs.estimator.proxim(NodeId(neighbor)) as i32,
        None => -1,
    }
}

/// Copy the node's proximity vector into `out` (capacity `cap` bytes).
/// Returns the number of entries written, or -1 on NULL / insufficient
/// capacity.
///
/// # Safety
/// `node` must be NULL or a live handle; `out` must be NULL or point to
/// `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gs_node_vector(node: *const GsNode, out: *mut u8, cap: usize) -> i32 {
    let Some(gs) = (unsafe { node.as_ref() }) else {
        return -1;
    };
    if out.is_null() {
        return -1;
    }
    let values = gs.state.vector().values();
    if cap < values.len() {
        return -1;
    }
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
    values.len() as i32
}

/// Copy the decoded mate set (node ids pinned at the top level, own id
/// included) into `out`. Returns the number of mates, or -1 on NULL /
/// insufficient capacity.
///
/// # Safety
/// `node` must be NULL or a live handle; `out` must be NULL or point to
/// `cap` writable u32 slots.
#[no_mangle]
pub unsafe extern "C" fn gs_node_mates(node: *const GsNode, out: *mut u32, cap: usize) -> i32 {
    let Some(gs) = (unsafe { node.as_ref() }) else {
        return -1;
    };
    if out.is_null() {
        return -1;
    }
    let mates: Vec<u32> = gs.state.extract_groups().mates.iter().map(|id| id.0).collect();
    if cap < mates.len() {
        return -1;
    }
    unsafe { std::ptr::copy_nonoverlapping(mates.as_ptr(), out, mates.len()) };
    mates.len() as i32
}

/// Expected-messages bound `N * Delta * (1 + ln N)`; NaN on invalid input.
#[no_mangle]
pub extern "C" fn gs_bound_expected_tau(n: u64, delta: u64) -> f64 {
    bound_expected_tau(&BoundParams {
        n,
        delta,
        epsilon: 0.1,
    })
    .unwrap_or(f64::NAN)
}

/// Confidence bound `N * Delta * (ln N + ln(Delta/eps))`; NaN on invalid
/// input (including epsilon outside (0, 1)).
#[no_mangle]
pub extern "C" fn gs_bound_tau_with_confidence(n: u64, delta: u64, epsilon: f64) -> f64 {
    bound_tau_with_confidence(&BoundParams { n, delta, epsilon }).unwrap_or(f64::NAN)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const std::os::raw::c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const std::os::raw::c_char
}
