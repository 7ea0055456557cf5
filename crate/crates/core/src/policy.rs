//! Data-movement schemes.
//!
//! Every scheme shares one state machine that runs after an LLC miss. A
//! scheme only chooses which granularities it wants for a miss: `Page` and
//! `PageFree` always want the page, `CacheLine` the line, `CacheLinePage`
//! both, and `DaeMon` asks its selection unit. Requests are tracked in two
//! bounded inflight tables (lines and pages); concurrent misses coalesce onto
//! existing entries, and a miss that can neither attach nor allocate waits
//! until some entry retires.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::config::{GranularityDecision, Scheme, SelectionVariant, SimConfig};
use crate::error::{Result, SimError};
use crate::hierarchy::{mc_service_time, LocalLookup, LocalPageCache, McRequestKind};
use crate::interconnect::{Endpoint, Packet, PacketKind};
use crate::workload::CompressibilityMap;
use crate::config::page_to_mc;

pub type DemandId = usize;

/// Where a demand access was finally served from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServedBy {
    Llc,
    LocalMem,
    LineReply,
    PageReply,
}

impl ServedBy {
    pub const ALL: [ServedBy; 4] = [ServedBy::Llc, ServedBy::LocalMem, ServedBy::LineReply, ServedBy::PageReply];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ServedBy::Llc => "llc",
            ServedBy::LocalMem => "local_mem",
            ServedBy::LineReply => "line_reply",
            ServedBy::PageReply => "page_reply",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandOutcome {
    pub demand: DemandId,
    pub completion_time_ns: f64,
    pub served_by: ServedBy,
}

/// An LLC miss handed to the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissRequest {
    pub demand: DemandId,
    pub job: usize,
    pub page: u64,
    pub line: u64,
    pub is_write: bool,
    pub issue_time_ns: f64,
}

/// Work the engine must carry out on the policy's behalf.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Put a packet on its link at `at` (at or after now).
    Send { packet: Packet, at: f64 },
    Complete(DemandOutcome),
    /// A page reply has arrived; install the page at `at` (after decompression).
    InstallPage { page: u64, at: f64 },
}

// ---------------------------------------------------------------------------
// Selection unit

/// Decision table: page-buffer pressure throttles pages, sub-block-buffer
/// pressure throttles lines, otherwise both granularities move.
pub fn select_granularity(sub_util: f64, page_util: f64, thresholds: (f64, f64)) -> GranularityDecision {
    let (_, hi) = thresholds;
    if page_util >= hi {
        GranularityDecision::LineOnly
    } else if sub_util >= hi {
        GranularityDecision::PageOnly
    } else {
        GranularityDecision::Both
    }
}

/// Variant that moves both granularities only while both buffers are nearly
/// idle, and lines alone otherwise.
pub fn select_granularity_conservative(sub_util: f64, page_util: f64, thresholds: (f64, f64)) -> GranularityDecision {
    let (lo, _) = thresholds;
    if sub_util <= lo && page_util <= lo {
        GranularityDecision::Both
    } else {
        GranularityDecision::LineOnly
    }
}

// ---------------------------------------------------------------------------
// Link compression

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressedPage {
    pub payload_bytes: u64,
    /// Charged by the sender before the packet is queued.
    pub comp_latency_ns: f64,
    /// Charged by the receiver before the page is installed.
    pub decomp_latency_ns: f64,
}

pub fn compress_page_payload(page_id: u64, cmap: &CompressibilityMap, cfg: &SimConfig) -> Result<CompressedPage> {
    if !cfg.compresses_pages() {
        return Ok(CompressedPage { payload_bytes: cfg.page_size_bytes, comp_latency_ns: 0.0, decomp_latency_ns: 0.0 });
    }
    let ratio = cmap
        .ratio(page_id)
        .ok_or_else(|| SimError::Workload(format!("page {page_id} has no compression ratio")))?;
    if !(ratio >= 1.0) {
        return Err(SimError::Workload(format!("page {page_id} has compression ratio {ratio} < 1.0")));
    }
    Ok(CompressedPage {
        payload_bytes: (cfg.page_size_bytes as f64 / ratio).ceil() as u64,
        comp_latency_ns: cfg.comp_latency_ns,
        decomp_latency_ns: cfg.decomp_latency_ns,
    })
}

// ---------------------------------------------------------------------------
// Inflight buffers

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InflightKey {
    Line { page: u64, line: u64 },
    Page(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coalesce {
    /// A new entry was allocated; the caller must send the request.
    Issued,
    /// An entry already existed; no new packet.
    Attached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferFull;

/// Pending line and page migrations with the demands waiting on each.
#[derive(Debug, Clone)]
pub struct InflightState {
    sub: HashMap<(u64, u64), Vec<DemandId>>,
    page: HashMap<u64, Vec<DemandId>>,
    sub_cap: usize,
    page_cap: usize,
}

impl InflightState {
    pub fn new(sub_cap: usize, page_cap: usize) -> Self {
        InflightState { sub: HashMap::new(), page: HashMap::new(), sub_cap, page_cap }
    }

    pub fn contains(&self, key: InflightKey) -> bool {
        match key {
            InflightKey::Line { page, line } => self.sub.contains_key(&(page, line)),
            InflightKey::Page(p) => self.page.contains_key(&p),
        }
    }

    pub fn has_space(&self, key: InflightKey) -> bool {
        match key {
            InflightKey::Line { .. } => self.sub.len() < self.sub_cap,
            InflightKey::Page(_) => self.page.len() < self.page_cap,
        }
    }

    pub fn coalesce_or_issue(&mut self, key: InflightKey, waiter: DemandId) -> Result<Coalesce, BufferFull> {
        let (full, slot) = match key {
            InflightKey::Line { page, line } => {
                let full = self.sub.len() >= self.sub_cap;
                (full, self.sub.get_mut(&(page, line)))
            }
            InflightKey::Page(p) => {
                let full = self.page.len() >= self.page_cap;
                (full, self.page.get_mut(&p))
            }
        };
        if let Some(waiters) = slot {
            waiters.push(waiter);
            return Ok(Coalesce::Attached);
        }
        if full {
            return Err(BufferFull);
        }
        match key {
            InflightKey::Line { page, line } => self.sub.insert((page, line), vec![waiter]),
            InflightKey::Page(p) => self.page.insert(p, vec![waiter]),
        };
        Ok(Coalesce::Issued)
    }

    pub fn waiters(&self, key: InflightKey) -> Option<&[DemandId]> {
        match key {
            InflightKey::Line { page, line } => self.sub.get(&(page, line)).map(Vec::as_slice),
            InflightKey::Page(p) => self.page.get(&p).map(Vec::as_slice),
        }
    }

    pub fn retire(&mut self, key: InflightKey) -> Option<Vec<DemandId>> {
        match key {
            InflightKey::Line { page, line } => self.sub.remove(&(page, line)),
            InflightKey::Page(p) => self.page.remove(&p),
        }
    }

    pub fn sub_occupancy(&self) -> usize {
        self.sub.len()
    }

    pub fn page_occupancy(&self) -> usize {
        self.page.len()
    }

    pub fn sub_utilization(&self) -> f64 {
        self.sub.len() as f64 / self.sub_cap as f64
    }

    pub fn page_utilization(&self) -> f64 {
        self.page.len() as f64 / self.page_cap as f64
    }

    pub fn capacities(&self) -> (usize, usize) {
        (self.sub_cap, self.page_cap)
    }
}

// ---------------------------------------------------------------------------
// Policy state machine

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyCounters {
    pub local_hits: u64,
    pub local_misses: u64,
    pub local_evictions: u64,
    pub page_writebacks: u64,
    pub dirty_lines_absorbed: u64,
    pub dirty_lines_dropped: u64,
    /// Indexed by `decision_index`.
    pub decisions: [u64; 3],
    pub stalls: u64,
    pub sub_occupancy_hist: Vec<u64>,
    pub page_occupancy_hist: Vec<u64>,
    pub mc_writebacks_received: u64,
}

pub fn decision_index(d: GranularityDecision) -> usize {
    match d {
        GranularityDecision::LineOnly => 0,
        GranularityDecision::PageOnly => 1,
        GranularityDecision::Both => 2,
    }
}

pub struct Policy<'a> {
    cfg: SimConfig,
    cmap: &'a CompressibilityMap,
    inflight: InflightState,
    local: LocalPageCache,
    pending: HashSet<DemandId>,
    stalled: VecDeque<MissRequest>,
    pub counters: PolicyCounters,
}

impl<'a> Policy<'a> {
    pub fn new(cfg: &SimConfig, cmap: &'a CompressibilityMap) -> Self {
        let (sub_cap, page_cap) = cfg.daemon_buffer_capacity;
        Policy {
            cfg: cfg.clone(),
            cmap,
            inflight: InflightState::new(sub_cap, page_cap),
            local: LocalPageCache::new(cfg.local_capacity_pages()),
            pending: HashSet::new(),
            stalled: VecDeque::new(),
            counters: PolicyCounters {
                sub_occupancy_hist: vec![0; sub_cap + 1],
                page_occupancy_hist: vec![0; page_cap + 1],
                ..PolicyCounters::default()
            },
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.cfg.scheme
    }

    pub fn inflight(&self) -> &InflightState {
        &self.inflight
    }

    pub fn local_cache(&self) -> &LocalPageCache {
        &self.local
    }

    pub fn local_cache_mut(&mut self) -> &mut LocalPageCache {
        &mut self.local
    }

    pub fn stalled_len(&self) -> usize {
        self.stalled.len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    fn uses_local_cache(&self) -> bool {
        !matches!(self.cfg.scheme, Scheme::Local | Scheme::CacheLine)
    }

    /// The selection unit's answer for the current buffer state.
    pub fn current_decision(&self) -> GranularityDecision {
        match self.cfg.scheme {
            Scheme::Page | Scheme::PageFree => GranularityDecision::PageOnly,
            Scheme::CacheLine => GranularityDecision::LineOnly,
            Scheme::CacheLinePage | Scheme::Local => GranularityDecision::Both,
            Scheme::DaeMon => {
                if let Some(forced) = self.cfg.daemon_forced_decision {
                    return forced;
                }
                let (s, p) = (self.inflight.sub_utilization(), self.inflight.page_utilization());
                match self.cfg.selection_variant {
                    SelectionVariant::Table => select_granularity(s, p, self.cfg.daemon_thresholds),
                    SelectionVariant::Conservative => {
                        select_granularity_conservative(s, p, self.cfg.daemon_thresholds)
                    }
                }
            }
        }
    }

    fn request_packet(&self, kind: PacketKind, req: &MissRequest) -> Packet {
        Packet {
            kind,
            page_id: req.page,
            line_in_page: kind.is_line().then_some(req.line),
            payload_bytes: 0,
            header_bytes: self.cfg.header_bytes,
            enqueue_time_ns: 0.0,
            src: Endpoint::Compute,
            dst: Endpoint::Memory(page_to_mc(req.page, self.cfg.num_mcs)),
            job_id: req.job,
        }
    }

    /// Serves an LLC miss. Completion may be immediate (local memory) or
    /// deferred until a reply arrives.
    pub fn handle_demand(&mut self, req: MissRequest, now: f64) -> Result<Vec<Action>> {
        let mut actions = Vec::new();
        if !self.dispatch(req, now, true, &mut actions)? {
            self.counters.stalls += 1;
            self.stalled.push_back(req);
        }
        Ok(actions)
    }

    fn dispatch(&mut self, req: MissRequest, now: f64, first: bool, actions: &mut Vec<Action>) -> Result<bool> {
        if self.cfg.scheme == Scheme::Local {
            actions.push(Action::Complete(DemandOutcome {
                demand: req.demand,
                completion_time_ns: now + self.cfg.local_mem_latency_ns,
                served_by: ServedBy::LocalMem,
            }));
            return Ok(true);
        }
        if self.uses_local_cache() {
            if self.local.lookup(req.page, true) == LocalLookup::Present {
                self.counters.local_hits += 1;
                actions.push(Action::Complete(DemandOutcome {
                    demand: req.demand,
                    completion_time_ns: now + self.cfg.local_mem_latency_ns,
                    served_by: ServedBy::LocalMem,
                }));
                return Ok(true);
            }
            if first {
                self.counters.local_misses += 1;
            }
        }

        let page_key = InflightKey::Page(req.page);
        let line_key = InflightKey::Line { page: req.page, line: req.line };
        let page_inflight = self.inflight.contains(page_key);
        let line_inflight = self.inflight.contains(line_key);
        let decision = self.current_decision();
        let mut want_line = decision != GranularityDecision::PageOnly;
        let want_page = decision != GranularityDecision::LineOnly;
        if page_inflight && self.cfg.scheme == Scheme::DaeMon && !self.cfg.critical_line_on_inflight_page {
            want_line = false;
        }

        let can_line = want_line && !line_inflight && self.inflight.has_space(line_key);
        let can_page = want_page && !page_inflight && self.inflight.has_space(page_key);
        if !(page_inflight || line_inflight || can_line || can_page) {
            return Ok(false);
        }

        self.counters.sub_occupancy_hist[self.inflight.sub_occupancy()] += 1;
        self.counters.page_occupancy_hist[self.inflight.page_occupancy()] += 1;
        if self.cfg.scheme == Scheme::DaeMon {
            self.counters.decisions[decision_index(decision)] += 1;
        }
        self.pending.insert(req.demand);

        // Existing entries are joined for free; the line goes out ahead of the page.
        if line_inflight || can_line {
            let out = self.inflight.coalesce_or_issue(line_key, req.demand).map_err(|_| {
                SimError::Internal("line buffer full after space check".into())
            })?;
            if out == Coalesce::Issued {
                actions.push(Action::Send { packet: self.request_packet(PacketKind::LineRequest, &req), at: now });
            }
        }
        if page_inflight || can_page {
            let out = self.inflight.coalesce_or_issue(page_key, req.demand).map_err(|_| {
                SimError::Internal("page buffer full after space check".into())
            })?;
            if out == Coalesce::Issued {
                actions.push(Action::Send { packet: self.request_packet(PacketKind::PageRequest, &req), at: now });
            }
        }
        Ok(true)
    }

    fn complete(&mut self, demand: DemandId, at: f64, served_by: ServedBy, actions: &mut Vec<Action>) {
        // first satisfying arrival wins
        if self.pending.remove(&demand) {
            actions.push(Action::Complete(DemandOutcome { demand, completion_time_ns: at, served_by }));
        }
    }

    fn retry_stalled(&mut self, now: f64, actions: &mut Vec<Action>) -> Result<()> {
        let waiting = std::mem::take(&mut self.stalled);
        for req in waiting {
            if !self.dispatch(req, now, false, actions)? {
                self.stalled.push_back(req);
            }
        }
        Ok(())
    }

    /// A reply delivered to the compute component.
    pub fn handle_arrival(&mut self, packet: &Packet, now: f64) -> Result<Vec<Action>> {
        let mut actions = Vec::new();
        match packet.kind {
            PacketKind::LineReply => {
                let line = packet
                    .line_in_page
                    .ok_or_else(|| SimError::Internal("line reply without a line index".into()))?;
                let waiters = self
                    .inflight
                    .retire(InflightKey::Line { page: packet.page_id, line })
                    .ok_or_else(|| {
                        SimError::Internal(format!("line reply for ({}, {line}) with no inflight entry", packet.page_id))
                    })?;
                for w in waiters {
                    self.complete(w, now, ServedBy::LineReply, &mut actions);
                }
                self.retry_stalled(now, &mut actions)?;
            }
            PacketKind::PageReply => {
                if !self.inflight.contains(InflightKey::Page(packet.page_id)) {
                    return Err(SimError::Internal(format!(
                        "page reply for {} with no inflight entry",
                        packet.page_id
                    )));
                }
                let decomp = if self.cfg.compresses_pages() { self.cfg.decomp_latency_ns } else { 0.0 };
                actions.push(Action::InstallPage { page: packet.page_id, at: now + decomp });
            }
            other => {
                return Err(SimError::Internal(format!("{} delivered to the compute side", other.name())));
            }
        }
        Ok(actions)
    }

    /// Installs a decompressed page into local memory and releases everyone
    /// waiting on it or on any of its lines.
    pub fn install_page(&mut self, page: u64, now: f64) -> Result<Vec<Action>> {
        let mut actions = Vec::new();
        let waiters = self
            .inflight
            .retire(InflightKey::Page(page))
            .ok_or_else(|| SimError::Internal(format!("install of page {page} with no inflight entry")))?;
        let outcome = self.local.insert(page, false)?;
        if let Some(victim) = outcome.victim {
            self.counters.local_evictions += 1;
            if victim.dirty {
                self.counters.page_writebacks += 1;
                let c = compress_page_payload(victim.id, self.cmap, &self.cfg)?;
                let packet = Packet {
                    kind: PacketKind::PageWriteback,
                    page_id: victim.id,
                    line_in_page: None,
                    payload_bytes: c.payload_bytes,
                    header_bytes: self.cfg.header_bytes,
                    enqueue_time_ns: 0.0,
                    src: Endpoint::Compute,
                    dst: Endpoint::Memory(page_to_mc(victim.id, self.cfg.num_mcs)),
                    job_id: 0,
                };
                actions.push(Action::Send { packet, at: now + c.comp_latency_ns });
            }
        }
        for w in waiters {
            self.complete(w, now, ServedBy::PageReply, &mut actions);
        }
        for line in 0..self.cfg.lines_per_page() {
            if let Some(ws) = self.inflight.waiters(InflightKey::Line { page, line }) {
                for w in ws.to_vec() {
                    self.complete(w, now, ServedBy::PageReply, &mut actions);
                }
            }
        }
        self.retry_stalled(now, &mut actions)?;
        Ok(actions)
    }

    /// Memory-component side: turns a delivered request into its reply.
    pub fn handle_mc_request(&mut self, packet: &Packet, now: f64) -> Result<Option<Action>> {
        let mc = packet.mc();
        let reply = |kind, payload| Packet {
            kind,
            page_id: packet.page_id,
            line_in_page: packet.line_in_page,
            payload_bytes: payload,
            header_bytes: self.cfg.header_bytes,
            enqueue_time_ns: 0.0,
            src: Endpoint::Memory(mc),
            dst: Endpoint::Compute,
            job_id: packet.job_id,
        };
        match packet.kind {
            PacketKind::LineRequest => {
                let at = now + mc_service_time(McRequestKind::Line, &self.cfg);
                Ok(Some(Action::Send { packet: reply(PacketKind::LineReply, self.cfg.line_size_bytes), at }))
            }
            PacketKind::PageRequest => {
                let c = compress_page_payload(packet.page_id, self.cmap, &self.cfg)?;
                let at = now + mc_service_time(McRequestKind::Page, &self.cfg) + c.comp_latency_ns;
                Ok(Some(Action::Send { packet: reply(PacketKind::PageReply, c.payload_bytes), at }))
            }
            PacketKind::PageWriteback => {
                self.counters.mc_writebacks_received += 1;
                Ok(None)
            }
            other => Err(SimError::Internal(format!("{} delivered to a memory component", other.name()))),
        }
    }

    /// A dirty line left the LLC. It is absorbed by its local page if that
    /// page is resident and dropped otherwise.
    pub fn absorb_dirty_line(&mut self, page: u64) {
        let absorbed = match self.cfg.scheme {
            Scheme::Local => true,
            Scheme::CacheLine => false,
            _ => self.local.mark_dirty(page),
        };
        if absorbed {
            self.counters.dirty_lines_absorbed += 1;
        } else {
            self.counters.dirty_lines_dropped += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scheme: Scheme) -> SimConfig {
        SimConfig { scheme, footprint_pages: 64, local_mem_fraction: 0.05, ..SimConfig::default() }
    }

    fn miss(demand: DemandId, page: u64, line: u64) -> MissRequest {
        MissRequest { demand, job: 0, page, line, is_write: false, issue_time_ns: 0.0 }
    }

    fn sends(actions: &[Action]) -> Vec<PacketKind> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Send { packet, .. } => Some(packet.kind),
                _ => None,
            })
            .collect()
    }

    fn completions(actions: &[Action]) -> Vec<DemandOutcome> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Complete(o) => Some(*o),
                _ => None,
            })
            .collect()
    }

    fn reply(kind: PacketKind, page: u64, line: Option<u64>) -> Packet {
        Packet {
            kind,
            page_id: page,
            line_in_page: line,
            payload_bytes: 0,
            header_bytes: 16,
            enqueue_time_ns: 0.0,
            src: Endpoint::Memory(0),
            dst: Endpoint::Compute,
            job_id: 0,
        }
    }

    #[test]
    fn selection_table() {
        let th = (0.25, 0.75);
        assert_eq!(select_granularity(0.1, 0.9, th), GranularityDecision::LineOnly);
        assert_eq!(select_granularity(0.1, 0.1, th), GranularityDecision::Both);
        assert_eq!(select_granularity(0.9, 0.1, th), GranularityDecision::PageOnly);
        assert_eq!(select_granularity(0.9, 0.9, th), GranularityDecision::LineOnly);
        assert_eq!(select_granularity_conservative(0.1, 0.2, th), GranularityDecision::Both);
        assert_eq!(select_granularity_conservative(0.1, 0.5, th), GranularityDecision::LineOnly);
    }

    #[test]
    fn compression_payloads() {
        let map2 = CompressibilityMap::constant(4, 2.0).unwrap();
        let map1 = CompressibilityMap::constant(4, 1.0).unwrap();
        let on = cfg(Scheme::DaeMon);
        assert_eq!(compress_page_payload(1, &map2, &on).unwrap().payload_bytes, 2048);
        let one = compress_page_payload(1, &map1, &on).unwrap();
        assert_eq!(one.payload_bytes, 4096);
        assert_eq!((one.comp_latency_ns, one.decomp_latency_ns), (250.0, 250.0));
        let off = SimConfig { compression_enabled: false, ..on.clone() };
        let c = compress_page_payload(1, &map2, &off).unwrap();
        assert_eq!((c.payload_bytes, c.comp_latency_ns), (4096, 0.0));
        // a page outside the map is a workload bug
        assert!(compress_page_payload(99, &map2, &on).is_err());
        // odd ratios round the payload up
        let map3 = CompressibilityMap::constant(4, 3.0).unwrap();
        assert_eq!(compress_page_payload(0, &map3, &on).unwrap().payload_bytes, 1366);
    }

    #[test]
    fn coalescing_examples() {
        let mut inflight = InflightState::new(4, 2);
        assert_eq!(inflight.coalesce_or_issue(InflightKey::Page(1), 0), Ok(Coalesce::Issued));
        assert_eq!(inflight.coalesce_or_issue(InflightKey::Page(1), 1), Ok(Coalesce::Attached));
        assert_eq!(inflight.waiters(InflightKey::Page(1)), Some(&[0, 1][..]));
        assert_eq!(inflight.coalesce_or_issue(InflightKey::Page(2), 2), Ok(Coalesce::Issued));
        assert_eq!(inflight.page_occupancy(), 2);
        assert_eq!(inflight.coalesce_or_issue(InflightKey::Page(3), 3), Err(BufferFull));
        // attaching never needs space
        assert_eq!(inflight.coalesce_or_issue(InflightKey::Page(2), 4), Ok(Coalesce::Attached));
        assert_eq!(inflight.retire(InflightKey::Page(1)), Some(vec![0, 1]));
        assert!(inflight.has_space(InflightKey::Page(3)));
    }

    #[test]
    fn page_scheme_coalesces_misses_to_one_page() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let mut p = Policy::new(&cfg(Scheme::Page), &map);
        let a = p.handle_demand(miss(0, 5, 1), 10.0).unwrap();
        let b = p.handle_demand(miss(1, 5, 2), 12.0).unwrap();
        assert_eq!(sends(&a), vec![PacketKind::PageRequest]);
        assert!(b.is_empty());
        let arr = p.handle_arrival(&reply(PacketKind::PageReply, 5, None), 500.0).unwrap();
        assert_eq!(arr, vec![Action::InstallPage { page: 5, at: 500.0 }]);
        let done = completions(&p.install_page(5, 500.0).unwrap());
        assert_eq!(done.len(), 2);
        assert!(done.iter().all(|o| o.completion_time_ns == 500.0 && o.served_by == ServedBy::PageReply));
        // now resident: served by local memory
        let c = completions(&p.handle_demand(miss(2, 5, 9), 600.0).unwrap());
        assert_eq!(c[0].served_by, ServedBy::LocalMem);
        assert_eq!(c[0].completion_time_ns, 650.0);
    }

    #[test]
    fn daemon_page_reply_charges_decompression() {
        let map = CompressibilityMap::constant(64, 2.0).unwrap();
        let c = SimConfig { daemon_forced_decision: Some(GranularityDecision::PageOnly), ..cfg(Scheme::DaeMon) };
        let mut p = Policy::new(&c, &map);
        p.handle_demand(miss(0, 3, 0), 0.0).unwrap();
        p.handle_demand(miss(1, 3, 1), 0.0).unwrap();
        let arr = p.handle_arrival(&reply(PacketKind::PageReply, 3, None), 1000.0).unwrap();
        assert_eq!(arr, vec![Action::InstallPage { page: 3, at: 1250.0 }]);
        let done = completions(&p.install_page(3, 1250.0).unwrap());
        assert_eq!(done.len(), 2);
        assert!(done.iter().all(|o| o.completion_time_ns == 1250.0));
    }

    #[test]
    fn both_completes_on_first_arrival_only() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let c = SimConfig { daemon_forced_decision: Some(GranularityDecision::Both), ..cfg(Scheme::DaeMon) };
        let mut p = Policy::new(&c, &map);
        let a = p.handle_demand(miss(0, 7, 4), 0.0).unwrap();
        assert_eq!(sends(&a), vec![PacketKind::LineRequest, PacketKind::PageRequest]);
        let first = completions(&p.handle_arrival(&reply(PacketKind::LineReply, 7, Some(4)), 300.0).unwrap());
        assert_eq!(first, vec![DemandOutcome { demand: 0, completion_time_ns: 300.0, served_by: ServedBy::LineReply }]);
        p.handle_arrival(&reply(PacketKind::PageReply, 7, None), 900.0).unwrap();
        assert!(completions(&p.install_page(7, 1150.0).unwrap()).is_empty());
        assert_eq!(p.local_cache().is_dirty(7), Some(false));
    }

    #[test]
    fn line_reply_after_page_adds_no_completion() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let mut p = Policy::new(&cfg(Scheme::CacheLinePage), &map);
        p.handle_demand(miss(0, 2, 3), 0.0).unwrap();
        p.handle_arrival(&reply(PacketKind::PageReply, 2, None), 100.0).unwrap();
        let done = completions(&p.install_page(2, 100.0).unwrap());
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].served_by, ServedBy::PageReply);
        let late = p.handle_arrival(&reply(PacketKind::LineReply, 2, Some(3)), 200.0).unwrap();
        assert!(completions(&late).is_empty());
        assert_eq!(p.inflight().sub_occupancy(), 0);
    }

    #[test]
    fn page_install_releases_line_waiters_of_that_page() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let mut p = Policy::new(&cfg(Scheme::CacheLinePage), &map);
        p.handle_demand(miss(0, 2, 3), 0.0).unwrap();
        // second line of the same page: page is inflight, line request goes out
        let a = p.handle_demand(miss(1, 2, 8), 5.0).unwrap();
        assert_eq!(sends(&a), vec![PacketKind::LineRequest]);
        p.handle_arrival(&reply(PacketKind::PageReply, 2, None), 100.0).unwrap();
        let done = completions(&p.install_page(2, 100.0).unwrap());
        assert_eq!(done.iter().map(|o| o.demand).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn critical_line_flag_controls_line_on_inflight_page() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        for (flag, expect) in [(true, vec![PacketKind::LineRequest]), (false, vec![])] {
            let c = SimConfig { critical_line_on_inflight_page: flag, ..cfg(Scheme::DaeMon) };
            let mut p = Policy::new(&c, &map);
            p.handle_demand(miss(0, 1, 0), 0.0).unwrap();
            let a = p.handle_demand(miss(1, 1, 5), 1.0).unwrap();
            assert_eq!(sends(&a), expect);
        }
    }

    #[test]
    fn dirty_victim_emits_compressed_writeback() {
        let map = CompressibilityMap::constant(64, 2.0).unwrap();
        // capacity ceil(0.05 * 64) = 4 pages
        let c = SimConfig { daemon_forced_decision: Some(GranularityDecision::PageOnly), ..cfg(Scheme::DaeMon) };
        let mut p = Policy::new(&c, &map);
        for page in 0..4 {
            p.handle_demand(miss(page as usize, page, 0), 0.0).unwrap();
            p.install_page(page, 10.0).unwrap();
        }
        p.absorb_dirty_line(0);
        assert_eq!(p.counters.dirty_lines_absorbed, 1);
        p.absorb_dirty_line(40);
        assert_eq!(p.counters.dirty_lines_dropped, 1);
        p.handle_demand(miss(9, 4, 0), 20.0).unwrap();
        let acts = p.install_page(4, 30.0).unwrap();
        let wb: Vec<_> = acts
            .iter()
            .filter_map(|a| match a {
                Action::Send { packet, at } => Some((packet.clone(), *at)),
                _ => None,
            })
            .collect();
        assert_eq!(wb.len(), 1);
        assert_eq!(wb[0].0.kind, PacketKind::PageWriteback);
        assert_eq!(wb[0].0.page_id, 0);
        assert_eq!(wb[0].0.payload_bytes, 2048);
        assert_eq!(wb[0].1, 280.0);
        assert_eq!(p.counters.page_writebacks, 1);
    }

    #[test]
    fn full_buffers_stall_then_retry() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let c = SimConfig { daemon_buffer_capacity: (1, 1), ..cfg(Scheme::Page) };
        let mut p = Policy::new(&c, &map);
        assert_eq!(sends(&p.handle_demand(miss(0, 1, 0), 0.0).unwrap()).len(), 1);
        assert!(p.handle_demand(miss(1, 2, 0), 1.0).unwrap().is_empty());
        assert_eq!(p.stalled_len(), 1);
        assert_eq!(p.counters.stalls, 1);
        p.handle_arrival(&reply(PacketKind::PageReply, 1, None), 50.0).unwrap();
        let acts = p.install_page(1, 50.0).unwrap();
        assert_eq!(sends(&acts), vec![PacketKind::PageRequest]);
        assert_eq!(p.stalled_len(), 0);
    }

    #[test]
    fn both_degrades_to_the_granularity_with_space() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let c = SimConfig { daemon_buffer_capacity: (8, 1), ..cfg(Scheme::CacheLinePage) };
        let mut p = Policy::new(&c, &map);
        p.handle_demand(miss(0, 1, 0), 0.0).unwrap();
        let a = p.handle_demand(miss(1, 2, 0), 0.0).unwrap();
        assert_eq!(sends(&a), vec![PacketKind::LineRequest]);
    }

    #[test]
    fn arrival_without_entry_is_internal_error() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let mut p = Policy::new(&cfg(Scheme::CacheLine), &map);
        assert!(matches!(
            p.handle_arrival(&reply(PacketKind::LineReply, 1, Some(1)), 0.0),
            Err(SimError::Internal(_))
        ));
        assert!(matches!(p.install_page(3, 0.0), Err(SimError::Internal(_))));
    }

    #[test]
    fn local_scheme_never_sends() {
        let map = CompressibilityMap::constant(64, 1.0).unwrap();
        let mut p = Policy::new(&cfg(Scheme::Local), &map);
        let a = p.handle_demand(miss(0, 1, 0), 100.0).unwrap();
        assert_eq!(
            a,
            vec![Action::Complete(DemandOutcome { demand: 0, completion_time_ns: 150.0, served_by: ServedBy::LocalMem })]
        );
    }

    #[test]
    fn mc_builds_compressed_replies() {
        let map = CompressibilityMap::constant(64, 4.0).unwrap();
        let mut p = Policy::new(&cfg(Scheme::DaeMon), &map);
        let mut req = reply(PacketKind::PageRequest, 6, None);
        req.src = Endpoint::Compute;
        req.dst = Endpoint::Memory(0);
        match p.handle_mc_request(&req, 100.0).unwrap() {
            Some(Action::Send { packet, at }) => {
                assert_eq!(packet.kind, PacketKind::PageReply);
                assert_eq!(packet.payload_bytes, 1024);
                assert_eq!(packet.dst, Endpoint::Compute);
                assert_eq!(at, 100.0 + 50.0 + 250.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
