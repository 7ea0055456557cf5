//! Run metrics and cross-run summaries.

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::interconnect::{ChannelId, PacketKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoreStats {
    pub accesses: u64,
    pub completed: u64,
    /// Time the core could not issue because every slot was taken, plus the
    /// final drain after its last issue.
    pub total_mem_stall_ns: f64,
    /// Sum of per-access latencies (issue to completion).
    pub total_latency_ns: f64,
    pub finish_ns: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NetworkStats {
    /// Granted bytes (payload + header) per channel, indexed by `ChannelId::index`.
    pub channel_bytes: [u64; 3],
    pub channel_payload_bytes: [u64; 3],
    pub channel_packets: [u64; 3],
    /// Indexed by `PacketKind::index`; includes free-riding packets.
    pub kind_packets: [u64; 5],
    pub kind_bytes: [u64; 5],
    /// Bytes of page transfers that took no link time.
    pub free_ride_bytes: u64,
    pub free_ride_packets: u64,
}

impl NetworkStats {
    pub fn total_bytes(&self) -> u64 {
        self.channel_bytes.iter().sum()
    }

    pub fn bytes(&self, channel: ChannelId) -> u64 {
        self.channel_bytes[channel.index()]
    }

    pub fn payload_bytes(&self, channel: ChannelId) -> u64 {
        self.channel_payload_bytes[channel.index()]
    }

    pub fn packets(&self, kind: PacketKind) -> u64 {
        self.kind_packets[kind.index()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CacheStats {
    pub llc_hits: u64,
    pub llc_misses: u64,
    pub llc_evictions: u64,
    pub local_hits: u64,
    pub local_misses: u64,
    pub local_evictions: u64,
    pub page_writebacks: u64,
    pub dirty_lines_absorbed: u64,
    pub dirty_lines_dropped: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DaemonStats {
    pub line_only: u64,
    pub page_only: u64,
    pub both: u64,
    pub stalls: u64,
    /// Inflight occupancy sampled at each dispatched miss; bucket i counts samples with i entries.
    pub sub_occupancy_hist: Vec<u64>,
    pub page_occupancy_hist: Vec<u64>,
}

impl DaemonStats {
    /// (PageOnly + Both) / LineOnly; infinite when no line-only decision was made.
    pub fn page_to_line_ratio(&self) -> f64 {
        (self.page_only + self.both) as f64 / self.line_only as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub elapsed_ns: f64,
    pub cores: Vec<CoreStats>,
    pub per_job_elapsed_ns: Vec<f64>,
    pub network: NetworkStats,
    pub cache: CacheStats,
    /// Indexed by `ServedBy::index`.
    pub served_by: [u64; 4],
    pub daemon: DaemonStats,
    pub events: u64,
}

impl RunStats {
    pub fn accesses(&self) -> u64 {
        self.cores.iter().map(|c| c.accesses).sum()
    }

    pub fn completed(&self) -> u64 {
        self.cores.iter().map(|c| c.completed).sum()
    }

    pub fn total_mem_stall_ns(&self) -> f64 {
        self.cores.iter().map(|c| c.total_mem_stall_ns).sum()
    }

    pub fn mean_latency_ns(&self) -> f64 {
        let n = self.completed();
        if n == 0 {
            0.0
        } else {
            self.cores.iter().map(|c| c.total_latency_ns).sum::<f64>() / n as f64
        }
    }
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if den == 0.0 {
        if num == 0.0 {
            return Ok(1.0);
        }
        return Err(SimError::Metrics("baseline elapsed time is 0 with a nonzero run".into()));
    }
    Ok(num / den)
}

/// Elapsed time normalized to a baseline run of the same trace.
pub fn slowdown(stats: &RunStats, baseline: &RunStats) -> Result<f64> {
    ratio(stats.elapsed_ns, baseline.elapsed_ns)
}

pub fn slowdown_ns(elapsed_ns: f64, baseline_ns: f64) -> Result<f64> {
    ratio(elapsed_ns, baseline_ns)
}

/// Speedup of `ours` over `theirs`: slowdown(theirs) / slowdown(ours).
pub fn speedup(ours: &RunStats, theirs: &RunStats, baseline: &RunStats) -> Result<f64> {
    Ok(slowdown(theirs, baseline)? / slowdown(ours, baseline)?)
}

pub fn geomean(ratios: &[f64]) -> Result<f64> {
    if ratios.is_empty() {
        return Err(SimError::Metrics("geomean of an empty list".into()));
    }
    if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0)) {
        return Err(SimError::Metrics(format!("geomean needs positive ratios, got {bad}")));
    }
    let mean_log = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
    Ok(mean_log.exp())
}
