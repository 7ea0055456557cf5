//! CC-MC network links.
//!
//! A link direction serializes at the network bandwidth and then adds a fixed
//! propagation delay. Packets are serialized in flits of at most
//! `flit_bytes` (0 sends whole packets); the arbiter picks a queue per flit,
//! and within a queue the head packet finishes before the next one starts.
//! A packet is delivered one propagation delay after its last flit. Baseline schemes feed a direction
//! from a single FIFO. The partitioned configuration feeds it from a sub-block
//! queue and a page queue served by weighted deficit round-robin over bytes:
//! each visit to a queue adds `weight * unit` bytes of credit, where `unit` is
//! the largest head-of-line packet among the non-empty queues at that moment.
//! With equal-size packets this is exact weighted round-robin; with mixed
//! sizes the byte shares converge to the weight ratio.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::SimConfig;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PacketKind {
    LineRequest,
    PageRequest,
    LineReply,
    PageReply,
    PageWriteback,
}

impl PacketKind {
    pub const ALL: [PacketKind; 5] = [
        PacketKind::LineRequest,
        PacketKind::PageRequest,
        PacketKind::LineReply,
        PacketKind::PageReply,
        PacketKind::PageWriteback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::LineRequest => "line_request",
            PacketKind::PageRequest => "page_request",
            PacketKind::LineReply => "line_reply",
            PacketKind::PageReply => "page_reply",
            PacketKind::PageWriteback => "page_writeback",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_line(self) -> bool {
        matches!(self, PacketKind::LineRequest | PacketKind::LineReply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ChannelId {
    SubBlock,
    Page,
    /// The single FIFO used when granularities are not partitioned.
    Shared,
}

impl ChannelId {
    pub const ALL: [ChannelId; 3] = [ChannelId::SubBlock, ChannelId::Page, ChannelId::Shared];

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::SubBlock => "sub_block",
            ChannelId::Page => "page",
            ChannelId::Shared => "shared",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Which endpoint a packet is travelling from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Endpoint {
    Compute,
    Memory(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    pub page_id: u64,
    /// Present for line kinds only.
    pub line_in_page: Option<u64>,
    pub payload_bytes: u64,
    pub header_bytes: u64,
    pub enqueue_time_ns: f64,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub job_id: usize,
}

impl Packet {
    pub fn total_bytes(&self) -> u64 {
        self.payload_bytes + self.header_bytes
    }

    /// The memory component at one end of this packet's path.
    pub fn mc(&self) -> usize {
        match (self.src, self.dst) {
            (Endpoint::Memory(m), _) | (_, Endpoint::Memory(m)) => m,
            _ => 0,
        }
    }
}

/// Wire time for `total_bytes`: propagation plus serialization, or propagation
/// alone for a free-riding transfer.
pub fn transfer_duration(total_bytes: u64, cfg: &SimConfig, free_ride: bool) -> f64 {
    if free_ride {
        cfg.net_latency_ns
    } else {
        cfg.net_latency_ns + total_bytes as f64 / cfg.net_bandwidth()
    }
}

#[derive(Debug, Clone)]
pub struct Channel {
    pub name: ChannelId,
    queue: VecDeque<Packet>,
    deficit: u64,
    weight: u64,
    /// Bytes of the head packet already serialized.
    head_sent: u64,
}

impl Channel {
    fn new(name: ChannelId, weight: u32) -> Self {
        Channel { name, queue: VecDeque::new(), deficit: 0, weight: weight as u64, head_sent: 0 }
    }

    fn head_flit(&self, flit_bytes: u64) -> Option<u64> {
        self.queue.front().map(|p| {
            let left = p.total_bytes() - self.head_sent;
            if flit_bytes == 0 {
                left
            } else {
                left.min(flit_bytes)
            }
        })
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn deficit(&self) -> u64 {
        self.deficit
    }
}

/// One granted flit, for auditing partition rates and byte counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grant {
    pub time_ns: f64,
    pub channel: ChannelId,
    pub kind: PacketKind,
    pub bytes: u64,
}

/// Per-channel and per-kind transmit counters of a link direction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub channel_bytes: [u64; 3],
    pub channel_payload_bytes: [u64; 3],
    pub channel_packets: [u64; 3],
    pub kind_packets: [u64; 5],
    pub kind_bytes: [u64; 5],
}

impl LinkCounters {
    fn record_flit(&mut self, channel: ChannelId, bytes: u64) {
        self.channel_bytes[channel.index()] += bytes;
    }

    fn record_packet(&mut self, channel: ChannelId, packet: &Packet) {
        let (c, k) = (channel.index(), packet.kind.index());
        self.channel_payload_bytes[c] += packet.payload_bytes;
        self.channel_packets[c] += 1;
        self.kind_packets[k] += 1;
        self.kind_bytes[k] += packet.total_bytes();
    }

    pub fn merge(&mut self, other: &LinkCounters) {
        for i in 0..3 {
            self.channel_bytes[i] += other.channel_bytes[i];
            self.channel_payload_bytes[i] += other.channel_payload_bytes[i];
            self.channel_packets[i] += other.channel_packets[i];
        }
        for i in 0..5 {
            self.kind_packets[i] += other.kind_packets[i];
            self.kind_bytes[i] += other.kind_bytes[i];
        }
    }
}

/// What one arbitration put on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub channel: ChannelId,
    pub kind: PacketKind,
    pub bytes: u64,
    /// The packet, once this flit was its last one.
    pub finished: Option<Packet>,
}

/// One direction of a link: its queues, arbiter and serializer.
#[derive(Debug, Clone)]
pub struct LinkState {
    bandwidth: f64,
    latency: f64,
    flit_bytes: u64,
    busy_until: f64,
    channels: Vec<Channel>,
    cursor: usize,
    visit_open: bool,
    pub counters: LinkCounters,
    grant_log: Option<Vec<Grant>>,
}

impl LinkState {
    /// Two weighted queues: sub-block first, then page.
    pub fn partitioned(bandwidth: f64, latency: f64, weights: (u32, u32)) -> Self {
        Self::with_channels(
            bandwidth,
            latency,
            vec![Channel::new(ChannelId::SubBlock, weights.0), Channel::new(ChannelId::Page, weights.1)],
        )
    }

    pub fn shared(bandwidth: f64, latency: f64) -> Self {
        Self::with_channels(bandwidth, latency, vec![Channel::new(ChannelId::Shared, 1)])
    }

    pub fn with_flit_bytes(mut self, flit_bytes: u64) -> Self {
        self.flit_bytes = flit_bytes;
        self
    }

    fn with_channels(bandwidth: f64, latency: f64, channels: Vec<Channel>) -> Self {
        LinkState {
            bandwidth,
            latency,
            flit_bytes: 0,
            busy_until: 0.0,
            channels,
            cursor: 0,
            visit_open: false,
            counters: LinkCounters::default(),
            grant_log: None,
        }
    }

    pub fn enable_grant_log(&mut self) {
        self.grant_log.get_or_insert_with(Vec::new);
    }

    pub fn grant_log(&self) -> Option<&[Grant]> {
        self.grant_log.as_deref()
    }

    pub fn take_grant_log(&mut self) -> Vec<Grant> {
        self.grant_log.take().unwrap_or_default()
    }

    pub fn is_partitioned(&self) -> bool {
        self.channels.len() == 2
    }

    /// Queue a packet of the given kind lands in on this direction.
    pub fn channel_for(&self, kind: PacketKind) -> ChannelId {
        if !self.is_partitioned() {
            ChannelId::Shared
        } else if kind.is_line() {
            ChannelId::SubBlock
        } else {
            ChannelId::Page
        }
    }

    pub fn channel(&self, id: ChannelId) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == id)
    }

    pub fn busy_until(&self) -> f64 {
        self.busy_until
    }

    pub fn latency(&self) -> f64 {
        self.latency
    }

    pub fn is_idle(&self, now: f64) -> bool {
        now >= self.busy_until
    }

    pub fn has_backlog(&self) -> bool {
        self.channels.iter().any(|c| !c.is_empty())
    }

    pub fn backlog(&self) -> usize {
        self.channels.iter().map(Channel::len).sum()
    }

    pub fn serialization_time(&self, bytes: u64) -> f64 {
        bytes as f64 / self.bandwidth
    }

    /// Appends to the FIFO of the packet's channel and stamps its enqueue time.
    pub fn enqueue(&mut self, channel: ChannelId, mut packet: Packet, now: f64) {
        packet.enqueue_time_ns = now;
        let ch = self
            .channels
            .iter_mut()
            .find(|c| c.name == channel)
            .unwrap_or_else(|| panic!("link has no {} channel", channel.name()));
        ch.queue.push_back(packet);
    }

    /// Picks the next flit to serialize. Must only be called while idle.
    /// The link stays occupied until `busy_until()`.
    pub fn arbitrate(&mut self, now: f64) -> Option<Transmission> {
        debug_assert!(self.is_idle(now), "arbitrate on a busy link");
        if !self.has_backlog() {
            return None;
        }
        let n = self.channels.len();
        let flit = self.flit_bytes;
        loop {
            let q = self.cursor;
            if !self.visit_open {
                if self.channels[q].is_empty() {
                    self.channels[q].deficit = 0;
                    self.cursor = (q + 1) % n;
                    continue;
                }
                let unit = self.channels.iter().filter_map(|c| c.head_flit(flit)).max().unwrap_or(0).max(1);
                let ch = &mut self.channels[q];
                ch.deficit += ch.weight * unit;
                self.visit_open = true;
            }
            let ch = &mut self.channels[q];
            if let Some(bytes) = ch.head_flit(flit).filter(|&b| b <= ch.deficit) {
                ch.deficit -= bytes;
                ch.head_sent += bytes;
                let name = ch.name;
                let head = ch.queue.front().expect("head exists");
                let kind = head.kind;
                let finished = if ch.head_sent == head.total_bytes() {
                    ch.head_sent = 0;
                    ch.queue.pop_front()
                } else {
                    None
                };
                if ch.queue.is_empty() {
                    ch.deficit = 0;
                    self.visit_open = false;
                    self.cursor = (q + 1) % n;
                }
                self.busy_until = now + self.serialization_time(bytes);
                self.counters.record_flit(name, bytes);
                if let Some(p) = &finished {
                    self.counters.record_packet(name, p);
                }
                if let Some(log) = &mut self.grant_log {
                    log.push(Grant { time_ns: now, channel: name, kind, bytes });
                }
                return Some(Transmission { channel: name, kind, bytes, finished });
            }
            if ch.queue.is_empty() {
                ch.deficit = 0;
            }
            self.visit_open = false;
            self.cursor = (q + 1) % n;
        }
    }
}

/// Writes grants as CSV with the header `time_ns,channel,kind,bytes`.
pub fn write_grant_log(grants: &[Grant], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| SimError::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "time_ns,channel,kind,bytes").map_err(io)?;
    for g in grants {
        writeln!(out, "{:.3},{},{},{}", g.time_ns, g.channel.name(), g.kind.name(), g.bytes).map_err(io)?;
    }
    out.flush().map_err(io)
}
