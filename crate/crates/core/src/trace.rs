//! Trace persistence: the event log a run leaves behind, and the manifest
//! that pins down how to reproduce it.
//!
//! The trace is a CSV with a `# format_version` header block, one row per
//! radio/protocol event. Proximity vectors are hex encoded (two digits per
//! entry) so rows stay fixed-width and language-neutral. Readers reject
//! unknown major versions and report malformed rows by line number while
//! continuing with the rest.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TRACE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unsupported trace format_version {0}")]
    UnsupportedVersion(u32),
    #[error("trace has no header")]
    MissingHeader,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Event categories recorded in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// A node broadcast its `{k_v, B^v}` packet.
    Tx,
    /// A node received a data packet (fields carry the full payload).
    Rx,
    /// A sink emitted an epoch beacon.
    BeaconTx,
    /// A node received an epoch beacon.
    BeaconRx,
    /// A packet was destroyed at this receiver by overlapping transmissions.
    Collision,
    /// A packet failed to decode at this receiver (noise, range, busy radio).
    Loss,
    /// A node advanced its local epoch (and reset its vector).
    EpochChange,
    /// The quantized proximity level for a (node, peer) link changed;
    /// the `ed` column carries the new level.
    LevelChange,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Tx => "tx",
            TraceKind::Rx => "rx",
            TraceKind::BeaconTx => "beacon_tx",
            TraceKind::BeaconRx => "beacon_rx",
            TraceKind::Collision => "collision",
            TraceKind::Loss => "loss",
            TraceKind::EpochChange => "epoch_change",
            TraceKind::LevelChange => "level_change",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tx" => TraceKind::Tx,
            "rx" => TraceKind::Rx,
            "beacon_tx" => TraceKind::BeaconTx,
            "beacon_rx" => TraceKind::BeaconRx,
            "collision" => TraceKind::Collision,
            "loss" => TraceKind::Loss,
            "epoch_change" => TraceKind::EpochChange,
            "level_change" => TraceKind::LevelChange,
            _ => return None,
        })
    }
}

/// One trace row. Times are microseconds internally and millisecond
/// decimals on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_us: u64,
    pub kind: TraceKind,
    pub node: u32,
    pub peer: Option<u32>,
    pub epoch: Option<u64>,
    pub ed: Option<u8>,
    pub vector: Option<String>,
    pub crc_ok: bool,
}

impl TraceRecord {
    pub fn time_ms(&self) -> f64 {
        self.time_us as f64 / 1000.0
    }
}

/// Run parameters a reader needs to interpret the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub format_version: u32,
    pub n_nodes: usize,
    pub m: u8,
    pub mate_threshold: u8,
    pub epoch_period_ms: u64,
    pub duration_ms: u64,
    pub seed: u64,
}

/// A malformed row, reported but skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

/// Result of reading a trace: meta, the good rows, and any issues. A trace
/// with issues, or missing its end marker, is flagged partial; analysis
/// continues on what parsed.
#[derive(Debug)]
pub struct TraceReadResult {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
    pub issues: Vec<ParseIssue>,
    /// The closing `# end` marker was missing: the file was cut short.
    pub truncated: bool,
}

impl TraceReadResult {
    pub fn is_partial(&self) -> bool {
        self.truncated || !self.issues.is_empty()
    }
}

fn fmt_time_ms(time_us: u64) -> String {
    format!("{}.{:03}", time_us / 1000, time_us % 1000)
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Serialize a trace to CSV text.
pub fn write_trace(meta: &TraceMeta, records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 40 + 256);
    let _ = writeln!(out, "# format_version {}", meta.format_version);
    let _ = writeln!(out, "# n_nodes {}", meta.n_nodes);
    let _ = writeln!(out, "# m {}", meta.m);
    let _ = writeln!(out, "# mate_threshold {}", meta.mate_threshold);
    let _ = writeln!(out, "# epoch_period_ms {}", meta.epoch_period_ms);
    let _ = writeln!(out, "# duration_ms {}", meta.duration_ms);
    let _ = writeln!(out, "# seed {}", meta.seed);
    out.push_str("time_ms,kind,node,peer,epoch,ed,vector,crc_ok\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_time_ms(r.time_us),
            r.kind.as_str(),
            r.node,
            opt(&r.peer),
            opt(&r.epoch),
            opt(&r.ed),
            r.vector.as_deref().unwrap_or(""),
            if r.crc_ok { 1 } else { 0 },
        );
    }
    out.push_str("# end\n");
    out
}

fn parse_time_us(s: &str) -> Option<u64> {
    match s.split_once('.') {
        Some((ms, frac)) => {
            let ms: u64 = ms.parse().ok()?;
            let frac = format!("{frac:0<3}");
            if frac.len() != 3 {
                return None;
            }
            let us: u64 = frac.parse().ok()?;
            Some(ms * 1000 + us)
        }
        None => s.parse::<u64>().ok().map(|ms| ms * 1000),
    }
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse::<T>()
            .map(Some)
            .map_err(|_| format!("bad field value {s:?}"))
    }
}

/// Parse a trace from CSV text. Header problems are fatal; row problems are
/// collected as issues.
pub fn read_trace(text: &str) -> Result<TraceReadResult, TraceError> {
    let mut headers: std::collections::BTreeMap<String, String> = Default::default();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.trim().splitn(2, ' ');
            if let (Some(k), Some(v)) = (parts.next(), parts.next()) {
                headers.insert(k.to_string(), v.trim().to_string());
            }
        }
    }

    let version: u32 = headers
        .get("format_version")
        .ok_or(TraceError::MissingHeader)?
        .parse()
        .map_err(|_| TraceError::MissingHeader)?;
    if version != TRACE_FORMAT_VERSION {
        return Err(TraceError::UnsupportedVersion(version));
    }
    let get = |k: &str| -> Result<u64, TraceError> {
        headers
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or(TraceError::MissingHeader)
    };
    let meta = TraceMeta {
        format_version: version,
        n_nodes: get("n_nodes")? as usize,
        m: get("m")? as u8,
        mate_threshold: get("mate_threshold")? as u8,
        epoch_period_ms: get("epoch_period_ms")?,
        duration_ms: get("duration_ms")?,
        seed: get("seed")?,
    };

    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut saw_columns = false;
    let mut saw_end = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.starts_with('#') || line.is_empty() {
            if line.trim() == "# end" {
                saw_end = true;
            }
            continue;
        }
        if !saw_columns {
            // the column header row
            saw_columns = true;
            continue;
        }
        match parse_row(line, meta.n_nodes) {
            Ok(rec) => records.push(rec),
            Err(message) => issues.push(ParseIssue {
                line: lineno,
                message,
            }),
        }
    }

    Ok(TraceReadResult {
        meta,
        records,
        issues,
        truncated: !saw_end,
    })
}

fn parse_row(line: &str, n_nodes: usize) -> Result<TraceRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 8 {
        return Err(format!("expected 8 fields, found {}", fields.len()));
    }
    let time_us = parse_time_us(fields[0]).ok_or_else(|| format!("bad time {:?}", fields[0]))?;
    let kind = TraceKind::parse(fields[1]).ok_or_else(|| format!("bad kind {:?}", fields[1]))?;
    let node: u32 = fields[2]
        .parse()
        .map_err(|_| format!("bad node {:?}", fields[2]))?;
    let peer = parse_opt(fields[3])?;
    let epoch = parse_opt(fields[4])?;
    let ed = parse_opt(fields[5])?;
    let vector = if fields[6].is_empty() {
        None
    } else {
        if fields[6].len() != n_nodes * 2
            || crate::consensus::ProximityVector::from_hex(fields[6]).is_none()
        {
            return Err(format!("vector does not decode to {n_nodes} entries"));
        }
        Some(fields[6].to_string())
    };
    let crc_ok = match fields[7] {
        "1" => true,
        "0" => false,
        other => return Err(format!("bad crc_ok {other:?}")),
    };
    Ok(TraceRecord {
        time_us,
        kind,
        node,
        peer,
        epoch,
        ed,
        vector,
        crc_ok,
    })
}

/// Everything needed to bit-reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub scenario_name: String,
    pub scenario_sha256: String,
    pub config_sha256: String,
    /// Config overrides applied on top of the scenario, in precedence order.
    pub overrides: Vec<String>,
    pub n_nodes: usize,
    pub duration_ms: u64,
    pub sim_start_ms: u64,
    pub sim_end_ms: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}
