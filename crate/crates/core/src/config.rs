//! Simulation configuration and address geometry.
//!
//! A [`SimConfig`] is a flat key-value document (JSON). Every field is
//! addressable by its snake_case name, absent keys take the defaults below,
//! and unknown keys are rejected. A config is immutable once validated and
//! may be shared freely between concurrently running simulations.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Data-movement scheme between the compute component and remote memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Monolithic reference: every page lives in local memory.
    #[serde(rename = "local")]
    Local,
    /// Remote data moves only at page granularity into local memory.
    #[serde(rename = "page")]
    Page,
    /// Like `Page`, but page transfers occupy no link bandwidth.
    #[serde(rename = "page_free", alias = "pagefree")]
    PageFree,
    /// Remote data moves only at cache-line granularity into the LLC.
    #[serde(rename = "cache_line", alias = "cacheline")]
    CacheLine,
    /// Every miss fetches both the line and its page over one shared queue.
    #[serde(rename = "cache_line_page", alias = "cacheline_page")]
    CacheLinePage,
    /// Partitioned line/page queues, inflight-driven granularity selection
    /// and page link compression.
    #[serde(rename = "daemon")]
    DaeMon,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Local,
        Scheme::Page,
        Scheme::PageFree,
        Scheme::CacheLine,
        Scheme::CacheLinePage,
        Scheme::DaeMon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Local => "local",
            Scheme::Page => "page",
            Scheme::PageFree => "page_free",
            Scheme::CacheLine => "cache_line",
            Scheme::CacheLinePage => "cache_line_page",
            Scheme::DaeMon => "daemon",
        }
    }

    pub fn uses_network(self) -> bool {
        self != Scheme::Local
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| SimError::invalid("scheme", format!("unknown scheme `{s}`")))
    }
}

/// Granularity chosen for serving one remote miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityDecision {
    LineOnly,
    PageOnly,
    Both,
}

/// How the selection unit maps inflight-buffer utilization to a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionVariant {
    /// Page pressure at or above the high threshold throttles pages, line
    /// pressure at or above it throttles lines, anything else moves both.
    #[default]
    Table,
    /// Both granularities only while both buffers sit at or below the low
    /// threshold; otherwise lines only.
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub line_size_bytes: u64,
    pub page_size_bytes: u64,
    pub footprint_pages: u64,
    pub local_mem_fraction: f64,
    pub llc_capacity_lines: u64,
    pub llc_associativity: u64,
    pub num_cores: usize,
    pub num_mcs: usize,
    pub bus_bandwidth_bytes_per_ns: f64,
    /// Network bandwidth is the bus bandwidth divided by this factor.
    pub net_bandwidth_factor: f64,
    /// One-way propagation delay of a CC-MC link.
    pub net_latency_ns: f64,
    pub local_mem_latency_ns: f64,
    pub llc_hit_latency_ns: f64,
    pub mc_dram_latency_ns: f64,
    pub scheme: Scheme,
    /// Arbitration weights `(sub_block, page)`.
    pub daemon_weights: (u32, u32),
    /// Inflight buffer capacities `(sub_block, page)`.
    pub daemon_buffer_capacity: (usize, usize),
    /// Selection-unit thresholds `(low, high)` on buffer utilization.
    pub daemon_thresholds: (f64, f64),
    pub selection_variant: SelectionVariant,
    /// Pins the selection unit to one answer; used to reduce the mechanism to
    /// a baseline.
    pub daemon_forced_decision: Option<GranularityDecision>,
    /// Route both granularities through one FIFO instead of two arbitrated queues.
    pub daemon_single_channel: bool,
    /// When a missing line's page is already inflight, also fetch the line
    /// itself (if the decision allows lines and the sub-block buffer has room).
    pub critical_line_on_inflight_page: bool,
    pub compression_enabled: bool,
    pub comp_latency_ns: f64,
    pub decomp_latency_ns: f64,
    pub header_bytes: u64,
    /// Link arbitration granularity in bytes; 0 serializes whole packets.
    pub link_flit_bytes: u64,
    pub max_outstanding_per_core: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            line_size_bytes: 64,
            page_size_bytes: 4096,
            footprint_pages: 8192,
            local_mem_fraction: 0.20,
            llc_capacity_lines: 16384,
            llc_associativity: 16,
            num_cores: 1,
            num_mcs: 1,
            bus_bandwidth_bytes_per_ns: 16.0,
            net_bandwidth_factor: 4.0,
            net_latency_ns: 100.0,
            local_mem_latency_ns: 50.0,
            llc_hit_latency_ns: 10.0,
            mc_dram_latency_ns: 50.0,
            scheme: Scheme::DaeMon,
            daemon_weights: (3, 1),
            daemon_buffer_capacity: (64, 16),
            daemon_thresholds: (0.25, 0.75),
            selection_variant: SelectionVariant::Table,
            daemon_forced_decision: None,
            daemon_single_channel: false,
            critical_line_on_inflight_page: true,
            compression_enabled: true,
            comp_latency_ns: 250.0,
            decomp_latency_ns: 250.0,
            header_bytes: 16,
            link_flit_bytes: 128,
            max_outstanding_per_core: 4,
            seed: 1,
        }
    }
}

/// Parses and validates a JSON config document. Empty input yields the defaults.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = if text.trim().is_empty() {
        SimConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| SimError::ConfigSyntax(e.to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Like [`parse_config`], but starting from an existing config instead of the defaults.
pub fn parse_config_over(base: &SimConfig, text: &str) -> Result<SimConfig> {
    let mut merged = serde_json::to_value(base).expect("config serializes");
    let overrides: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| SimError::ConfigSyntax(e.to_string()))?;
    let obj = merged.as_object_mut().expect("config is an object");
    for (k, v) in overrides {
        obj.insert(k, v);
    }
    let cfg: SimConfig =
        serde_json::from_value(merged).map_err(|e| SimError::ConfigSyntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_latency(field: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(SimError::invalid(field, format!("must be a finite value >= 0, got {v}")));
    }
    Ok(())
}

impl SimConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.line_size_bytes.is_power_of_two() {
            return Err(SimError::invalid("line_size_bytes", "not a power of two"));
        }
        if !self.page_size_bytes.is_power_of_two() || self.page_size_bytes % self.line_size_bytes != 0 {
            return Err(SimError::invalid(
                "page_size_bytes",
                "not a power of two / not divisible by line size",
            ));
        }
        if self.footprint_pages == 0 {
            return Err(SimError::invalid("footprint_pages", "must be >= 1"));
        }
        if !(self.local_mem_fraction > 0.0 && self.local_mem_fraction <= 1.0) {
            return Err(SimError::invalid("local_mem_fraction", "must lie in (0, 1]"));
        }
        if self.llc_capacity_lines == 0 || self.llc_associativity == 0 {
            return Err(SimError::invalid("llc_capacity_lines", "LLC capacity and associativity must be >= 1"));
        }
        if self.llc_capacity_lines % self.llc_associativity != 0 {
            return Err(SimError::invalid(
                "llc_associativity",
                "must divide llc_capacity_lines",
            ));
        }
        if self.num_cores == 0 {
            return Err(SimError::invalid("num_cores", "must be >= 1"));
        }
        if self.num_mcs == 0 {
            return Err(SimError::invalid("num_mcs", "must be >= 1"));
        }
        if !(self.bus_bandwidth_bytes_per_ns.is_finite() && self.bus_bandwidth_bytes_per_ns > 0.0) {
            return Err(SimError::invalid("bus_bandwidth_bytes_per_ns", "must be > 0"));
        }
        if !(self.net_bandwidth_factor.is_finite() && self.net_bandwidth_factor >= 1.0) {
            return Err(SimError::invalid(
                "net_bandwidth_factor",
                "must be >= 1 (network never faster than bus)",
            ));
        }
        check_latency("net_latency_ns", self.net_latency_ns)?;
        check_latency("local_mem_latency_ns", self.local_mem_latency_ns)?;
        check_latency("llc_hit_latency_ns", self.llc_hit_latency_ns)?;
        check_latency("mc_dram_latency_ns", self.mc_dram_latency_ns)?;
        check_latency("comp_latency_ns", self.comp_latency_ns)?;
        check_latency("decomp_latency_ns", self.decomp_latency_ns)?;
        if self.daemon_weights.0 == 0 || self.daemon_weights.1 == 0 {
            return Err(SimError::invalid("daemon_weights", "weights must be positive integers"));
        }
        if self.daemon_buffer_capacity.0 == 0 || self.daemon_buffer_capacity.1 == 0 {
            return Err(SimError::invalid("daemon_buffer_capacity", "capacities must be >= 1"));
        }
        let (lo, hi) = self.daemon_thresholds;
        if !(lo > 0.0 && lo < 1.0 && hi > 0.0 && hi < 1.0 && lo < hi) {
            return Err(SimError::invalid(
                "daemon_thresholds",
                "need 0 < low < high < 1",
            ));
        }
        if self.max_outstanding_per_core == 0 {
            return Err(SimError::invalid("max_outstanding_per_core", "must be >= 1"));
        }
        Ok(())
    }

    pub fn lines_per_page(&self) -> u64 {
        self.page_size_bytes / self.line_size_bytes
    }

    /// Bytes per ns on each CC-MC link.
    pub fn net_bandwidth(&self) -> f64 {
        self.bus_bandwidth_bytes_per_ns / self.net_bandwidth_factor
    }

    pub fn local_capacity_pages(&self) -> u64 {
        ((self.local_mem_fraction * self.footprint_pages as f64).ceil() as u64).max(1)
    }

    pub fn footprint_bytes(&self) -> u64 {
        self.footprint_pages * self.page_size_bytes
    }

    /// Whether page payloads are compressed on the link for this run.
    pub fn compresses_pages(&self) -> bool {
        self.scheme == Scheme::DaeMon && self.compression_enabled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressParts {
    pub page_id: u64,
    pub line_in_page: u64,
    pub offset_in_line: u64,
}

impl AddressParts {
    pub fn recompose(&self, cfg: &SimConfig) -> u64 {
        self.page_id * cfg.page_size_bytes + self.line_in_page * cfg.line_size_bytes + self.offset_in_line
    }
}

pub fn addr_decompose(addr: u64, cfg: &SimConfig) -> AddressParts {
    let in_page = addr % cfg.page_size_bytes;
    AddressParts {
        page_id: addr / cfg.page_size_bytes,
        line_in_page: in_page / cfg.line_size_bytes,
        offset_in_line: addr % cfg.line_size_bytes,
    }
}

/// Page-granularity striping of the address space across memory components.
pub fn page_to_mc(page_id: u64, num_mcs: usize) -> usize {
    debug_assert!(num_mcs >= 1);
    (page_id % num_mcs as u64) as usize
}
