//! Discrete-event loop.
//!
//! Events are processed in `(time, sequence)` order, where the sequence number
//! is assigned at scheduling time. Every simulation owns all of its state, so
//! independent simulations can run on separate threads.
//!
//! Core model: each core replays its trace in order. An access may issue once
//! its think time since the previous issue has elapsed and fewer than
//! `max_outstanding_per_core` of the core's accesses are incomplete. The LLC
//! is probed at issue; a miss reaches the policy `llc_hit_latency_ns` later.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::config::{addr_decompose, Scheme, SimConfig};
use crate::error::{Result, SimError};
use crate::hierarchy::{Llc, LlcLookup};
use crate::interconnect::{Endpoint, Grant, LinkState, Packet, PacketKind};
use crate::policy::{decision_index, Action, DemandId, DemandOutcome, MissRequest, Policy, ServedBy};
use crate::stats::{CoreStats, RunStats};
use crate::workload::{AccessTrace, CompressibilityMap};

const TO_MC: usize = 0;
const TO_CC: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    CoreReady(usize),
    LlcMiss(DemandId),
    LinkIdle { mc: usize, dir: usize },
    /// Deferred enqueue, e.g. after memory service or compression.
    SendPacket(Packet),
    PacketDelivered(Packet),
    PageInstall(u64),
    DemandComplete(DemandOutcome),
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time_ns: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time_ns.total_cmp(&self.time_ns).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Default)]
struct CoreState {
    next: usize,
    outstanding: usize,
    blocked_since: Option<f64>,
    last_issue: f64,
    stats: CoreStats,
}

#[derive(Debug, Clone, Copy)]
struct DemandRec {
    core: usize,
    index: usize,
    page: u64,
    line: u64,
    is_write: bool,
    issue_time: f64,
}

/// Everything a run produces beyond the summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub stats: RunStats,
    /// Completion time of every access, per core in trace order (when requested).
    pub completions: Option<Vec<Vec<f64>>>,
    /// Link grants across all links, ordered by time (when requested).
    pub grant_log: Option<Vec<Grant>>,
}

/// A configured run. Use [`run_simulation`] for the common case.
pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    traces: &'a [AccessTrace],
    cmap: &'a CompressibilityMap,
    record_completions: bool,
    grant_log: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a SimConfig, traces: &'a [AccessTrace], cmap: &'a CompressibilityMap) -> Self {
        Simulation { cfg, traces, cmap, record_completions: false, grant_log: false }
    }

    pub fn record_completions(mut self, on: bool) -> Self {
        self.record_completions = on;
        self
    }

    pub fn grant_log(mut self, on: bool) -> Self {
        self.grant_log = on;
        self
    }

    pub fn run(self) -> Result<SimOutput> {
        let mut engine = Engine::new(self.cfg, self.traces, self.cmap, self.record_completions, self.grant_log)?;
        engine.run()?;
        Ok(engine.finish())
    }
}

pub fn run_simulation(cfg: &SimConfig, traces: &[AccessTrace], cmap: &CompressibilityMap) -> Result<RunStats> {
    Ok(Simulation::new(cfg, traces, cmap).run()?.stats)
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    traces: &'a [AccessTrace],
    policy: Policy<'a>,
    llc: Llc,
    links: Vec<[LinkState; 2]>,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    cores: Vec<CoreState>,
    demands: Vec<DemandRec>,
    stats: RunStats,
    completions: Option<Vec<Vec<f64>>>,
}

impl<'a> Engine<'a> {
    fn new(
        cfg: &'a SimConfig,
        traces: &'a [AccessTrace],
        cmap: &'a CompressibilityMap,
        record_completions: bool,
        grant_log: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        if traces.len() != cfg.num_cores {
            return Err(SimError::Workload(format!(
                "{} traces supplied for {} cores",
                traces.len(),
                cfg.num_cores
            )));
        }
        let limit = cfg.footprint_bytes();
        for (core, t) in traces.iter().enumerate() {
            if let Some((i, r)) = t.records.iter().enumerate().find(|(_, r)| r.addr >= limit) {
                return Err(SimError::Workload(format!(
                    "core {core} access {i}: address {} outside the {}-page footprint",
                    r.addr, cfg.footprint_pages
                )));
            }
        }
        if cfg.compresses_pages() && (cmap.len() as u64) < cfg.footprint_pages {
            return Err(SimError::Workload(format!(
                "compressibility map covers {} of {} pages",
                cmap.len(),
                cfg.footprint_pages
            )));
        }
        let partitioned = cfg.scheme == Scheme::DaeMon && !cfg.daemon_single_channel;
        let bw = cfg.net_bandwidth();
        let links = (0..cfg.num_mcs)
            .map(|_| {
                let mk = || {
                    let mut l = if partitioned {
                        LinkState::partitioned(bw, cfg.net_latency_ns, cfg.daemon_weights)
                    } else {
                        LinkState::shared(bw, cfg.net_latency_ns)
                    }
                    .with_flit_bytes(cfg.link_flit_bytes);
                    if grant_log {
                        l.enable_grant_log();
                    }
                    l
                };
                [mk(), mk()]
            })
            .collect();
        let total: usize = traces.iter().map(AccessTrace::len).sum();
        Ok(Engine {
            cfg,
            traces,
            policy: Policy::new(cfg, cmap),
            llc: Llc::from_config(cfg),
            links,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            cores: vec![CoreState::default(); cfg.num_cores],
            demands: Vec::with_capacity(total),
            stats: RunStats::default(),
            completions: record_completions.then(|| traces.iter().map(|t| vec![f64::NAN; t.len()]).collect()),
        })
    }

    fn schedule(&mut self, time_ns: f64, kind: EventKind) {
        debug_assert!(time_ns >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.queue.push(Event { time_ns, seq: self.seq, kind });
    }

    fn run(&mut self) -> Result<()> {
        for (core, trace) in self.traces.iter().enumerate() {
            if let Some(first) = trace.records.first() {
                self.schedule(first.think_ns, EventKind::CoreReady(core));
            }
        }
        while let Some(ev) = self.queue.pop() {
            if ev.time_ns < self.now {
                return Err(SimError::Internal(format!("event at {} processed after {}", ev.time_ns, self.now)));
            }
            self.now = ev.time_ns;
            self.stats.events += 1;
            self.handle(ev.kind)?;
        }
        let expected: usize = self.traces.iter().map(AccessTrace::len).sum();
        let done: u64 = self.cores.iter().map(|c| c.stats.completed).sum();
        if done as usize != expected {
            return Err(SimError::Internal(format!(
                "simulation drained with {done} of {expected} accesses complete"
            )));
        }
        Ok(())
    }

    fn handle(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::CoreReady(core) => self.core_ready(core),
            EventKind::LlcMiss(id) => {
                let d = self.demands[id];
                let req = MissRequest {
                    demand: id,
                    job: d.core,
                    page: d.page,
                    line: d.line,
                    is_write: d.is_write,
                    issue_time_ns: d.issue_time,
                };
                let actions = self.policy.handle_demand(req, self.now)?;
                self.apply(actions)
            }
            EventKind::LinkIdle { mc, dir } => {
                self.try_grant(mc, dir);
                Ok(())
            }
            EventKind::SendPacket(packet) => {
                self.send_now(packet);
                Ok(())
            }
            EventKind::PacketDelivered(packet) => self.deliver(packet),
            EventKind::PageInstall(page) => {
                let actions = self.policy.install_page(page, self.now)?;
                self.apply(actions)
            }
            EventKind::DemandComplete(outcome) => {
                self.complete(outcome);
                Ok(())
            }
        }
    }

    fn core_ready(&mut self, core: usize) -> Result<()> {
        let trace = &self.traces[core];
        let state = &mut self.cores[core];
        if state.next >= trace.len() {
            return Ok(());
        }
        if state.outstanding >= self.cfg.max_outstanding_per_core {
            state.blocked_since = Some(self.now);
            return Ok(());
        }
        let index = state.next;
        let rec = trace.records[index];
        state.next += 1;
        state.outstanding += 1;
        state.last_issue = self.now;
        state.stats.accesses += 1;
        let next_think = trace.records.get(state.next).map(|r| r.think_ns);

        let parts = addr_decompose(rec.addr, self.cfg);
        let id = self.demands.len();
        self.demands.push(DemandRec {
            core,
            index,
            page: parts.page_id,
            line: parts.line_in_page,
            is_write: rec.is_write,
            issue_time: self.now,
        });
        let done_at = self.now + self.cfg.llc_hit_latency_ns;
        match self.llc.access(parts.page_id, parts.line_in_page, rec.is_write) {
            LlcLookup::Hit => {
                self.stats.cache.llc_hits += 1;
                self.schedule(
                    done_at,
                    EventKind::DemandComplete(DemandOutcome {
                        demand: id,
                        completion_time_ns: done_at,
                        served_by: ServedBy::Llc,
                    }),
                );
            }
            LlcLookup::Miss => {
                self.stats.cache.llc_misses += 1;
                self.schedule(done_at, EventKind::LlcMiss(id));
            }
        }
        if let Some(think) = next_think {
            self.schedule(self.now + think, EventKind::CoreReady(core));
        }
        Ok(())
    }

    fn apply(&mut self, actions: Vec<Action>) -> Result<()> {
        for action in actions {
            match action {
                Action::Send { packet, at } => {
                    if at > self.now {
                        self.schedule(at, EventKind::SendPacket(packet));
                    } else {
                        self.send_now(packet);
                    }
                }
                Action::Complete(outcome) => {
                    self.schedule(outcome.completion_time_ns, EventKind::DemandComplete(outcome));
                }
                Action::InstallPage { page, at } => self.schedule(at, EventKind::PageInstall(page)),
            }
        }
        Ok(())
    }

    fn send_now(&mut self, packet: Packet) {
        if self.cfg.scheme == Scheme::PageFree && !packet.kind.is_line() {
            let net = &mut self.stats.network;
            net.free_ride_bytes += packet.total_bytes();
            net.free_ride_packets += 1;
            net.kind_packets[packet.kind.index()] += 1;
            net.kind_bytes[packet.kind.index()] += packet.total_bytes();
            let at = self.now + self.cfg.net_latency_ns;
            self.schedule(at, EventKind::PacketDelivered(packet));
            return;
        }
        let mc = packet.mc();
        let dir = if packet.src == Endpoint::Compute { TO_MC } else { TO_CC };
        let link = &mut self.links[mc][dir];
        let channel = link.channel_for(packet.kind);
        link.enqueue(channel, packet, self.now);
        if link.is_idle(self.now) {
            self.try_grant(mc, dir);
        }
    }

    fn try_grant(&mut self, mc: usize, dir: usize) {
        let now = self.now;
        let link = &mut self.links[mc][dir];
        if !link.is_idle(now) {
            return;
        }
        if let Some(tx) = link.arbitrate(now) {
            let free_at = link.busy_until();
            let arrive_at = free_at + link.latency();
            self.schedule(free_at, EventKind::LinkIdle { mc, dir });
            if let Some(packet) = tx.finished {
                self.schedule(arrive_at, EventKind::PacketDelivered(packet));
            }
        }
    }

    fn deliver(&mut self, packet: Packet) -> Result<()> {
        if packet.dst != Endpoint::Compute {
            if let Some(action) = self.policy.handle_mc_request(&packet, self.now)? {
                self.apply(vec![action])?;
            }
            return Ok(());
        }
        if packet.kind == PacketKind::LineReply {
            let line = packet.line_in_page.unwrap_or(0);
            self.fill_llc(packet.page_id, line, false);
        }
        let actions = self.policy.handle_arrival(&packet, self.now)?;
        self.apply(actions)
    }

    fn fill_llc(&mut self, page: u64, line: u64, dirty: bool) {
        if let Some(victim) = self.llc.fill(page, line, dirty).victim {
            self.stats.cache.llc_evictions += 1;
            if victim.dirty {
                self.policy.absorb_dirty_line(victim.id.0);
            }
        }
    }

    fn complete(&mut self, outcome: DemandOutcome) {
        let d = self.demands[outcome.demand];
        if outcome.served_by != ServedBy::Llc {
            self.fill_llc(d.page, d.line, d.is_write);
        }
        self.stats.served_by[outcome.served_by.index()] += 1;
        if let Some(c) = &mut self.completions {
            c[d.core][d.index] = self.now;
        }
        let now = self.now;
        let trace_len = self.traces[d.core].len();
        let core = &mut self.cores[d.core];
        core.outstanding -= 1;
        core.stats.completed += 1;
        core.stats.total_latency_ns += now - d.issue_time;
        core.stats.finish_ns = core.stats.finish_ns.max(now);
        if let Some(since) = core.blocked_since.take() {
            core.stats.total_mem_stall_ns += now - since;
            self.schedule(now, EventKind::CoreReady(d.core));
        } else if core.next == trace_len && core.outstanding == 0 {
            core.stats.total_mem_stall_ns += now - core.last_issue;
        }
    }

    fn finish(mut self) -> SimOutput {
        let mut grant_log: Option<Vec<Grant>> = None;
        for pair in &mut self.links {
            for link in pair.iter_mut() {
                let c = &link.counters;
                let net = &mut self.stats.network;
                for i in 0..3 {
                    net.channel_bytes[i] += c.channel_bytes[i];
                    net.channel_payload_bytes[i] += c.channel_payload_bytes[i];
                    net.channel_packets[i] += c.channel_packets[i];
                }
                for i in 0..5 {
                    net.kind_packets[i] += c.kind_packets[i];
                    net.kind_bytes[i] += c.kind_bytes[i];
                }
                if link.grant_log().is_some() {
                    grant_log.get_or_insert_with(Vec::new).extend(link.take_grant_log());
                }
            }
        }
        if let Some(log) = &mut grant_log {
            log.sort_by(|a, b| a.time_ns.total_cmp(&b.time_ns));
        }
        let pc = &self.policy.counters;
        let cache = &mut self.stats.cache;
        cache.local_hits = pc.local_hits;
        cache.local_misses = pc.local_misses;
        cache.local_evictions = pc.local_evictions;
        cache.page_writebacks = pc.page_writebacks;
        cache.dirty_lines_absorbed = pc.dirty_lines_absorbed;
        cache.dirty_lines_dropped = pc.dirty_lines_dropped;
        let daemon = &mut self.stats.daemon;
        daemon.line_only = pc.decisions[decision_index(crate::config::GranularityDecision::LineOnly)];
        daemon.page_only = pc.decisions[decision_index(crate::config::GranularityDecision::PageOnly)];
        daemon.both = pc.decisions[decision_index(crate::config::GranularityDecision::Both)];
        daemon.stalls = pc.stalls;
        daemon.sub_occupancy_hist = pc.sub_occupancy_hist.clone();
        daemon.page_occupancy_hist = pc.page_occupancy_hist.clone();

        self.stats.cores = self.cores.iter().map(|c| c.stats.clone()).collect();
        self.stats.per_job_elapsed_ns = self.stats.cores.iter().map(|c| c.finish_ns).collect();
        self.stats.elapsed_ns = self.stats.per_job_elapsed_ns.iter().copied().fold(0.0, f64::max);
        SimOutput { stats: self.stats, completions: self.completions, grant_log }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::AccessRecord;

    fn trace(pages: u64, recs: &[(f64, u64, bool)]) -> AccessTrace {
        AccessTrace {
            footprint_pages: pages,
            records: recs.iter().map(|&(t, a, w)| AccessRecord { think_ns: t, addr: a, is_write: w }).collect(),
        }
    }

    #[test]
    fn event_order_is_time_then_sequence() {
        let mut heap = BinaryHeap::new();
        heap.push(Event { time_ns: 5.0, seq: 2, kind: EventKind::CoreReady(0) });
        heap.push(Event { time_ns: 5.0, seq: 1, kind: EventKind::CoreReady(1) });
        heap.push(Event { time_ns: 1.0, seq: 3, kind: EventKind::CoreReady(2) });
        let order: Vec<u64> = std::iter::from_fn(|| heap.pop().map(|e| e.seq)).collect();
        assert_eq!(order, vec![3, 1, 2]);
    }

    #[test]
    fn empty_traces_run_to_zero() {
        let cfg = SimConfig { num_cores: 2, ..SimConfig::default() };
        let cmap = CompressibilityMap::constant(cfg.footprint_pages, 1.0).unwrap();
        let traces = vec![AccessTrace::default(), AccessTrace::default()];
        let stats = run_simulation(&cfg, &traces, &cmap).unwrap();
        assert_eq!(stats.elapsed_ns, 0.0);
        assert_eq!(stats.accesses(), 0);
        assert_eq!(stats.network.total_bytes(), 0);
    }

    #[test]
    fn trace_count_must_match_cores() {
        let cfg = SimConfig { num_cores: 2, ..SimConfig::default() };
        let cmap = CompressibilityMap::constant(cfg.footprint_pages, 1.0).unwrap();
        assert!(run_simulation(&cfg, &[AccessTrace::default()], &cmap).is_err());
    }

    #[test]
    fn out_of_footprint_address_is_rejected() {
        let cfg = SimConfig { footprint_pages: 2, ..SimConfig::default() };
        let cmap = CompressibilityMap::constant(2, 1.0).unwrap();
        let t = trace(2, &[(0.0, 8192, false)]);
        assert!(run_simulation(&cfg, &[t], &cmap).is_err());
    }

    #[test]
    fn blocking_core_serializes_accesses() {
        // Local scheme, blocking core: each access costs llc + local memory.
        let cfg = SimConfig {
            scheme: Scheme::Local,
            max_outstanding_per_core: 1,
            llc_hit_latency_ns: 10.0,
            local_mem_latency_ns: 50.0,
            footprint_pages: 4,
            ..SimConfig::default()
        };
        let cmap = CompressibilityMap::constant(4, 1.0).unwrap();
        let t = trace(4, &[(0.0, 0, false), (0.0, 4096, false), (0.0, 0, false)]);
        let out = Simulation::new(&cfg, std::slice::from_ref(&t), &cmap).record_completions(true).run().unwrap();
        // miss 0..60, miss 60..120, hit 120..130
        assert_eq!(out.completions.unwrap()[0], vec![60.0, 120.0, 130.0]);
        assert_eq!(out.stats.elapsed_ns, 130.0);
        assert_eq!(out.stats.cache.llc_hits, 1);
        assert_eq!(out.stats.network.total_bytes(), 0);
        // blocked 0..60 and 60..120, then drained 120..130
        assert_eq!(out.stats.cores[0].total_mem_stall_ns, 130.0);
    }
}
