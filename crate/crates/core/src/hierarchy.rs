//! Compute-side caches and the memory-component service model.
//!
//! The LLC holds lines, local memory holds whole pages. The two levels are
//! managed independently (no inclusion in either direction) and both use LRU.

use std::collections::{BTreeMap, HashMap};

use crate::config::SimConfig;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Victim<K> {
    pub id: K,
    pub dirty: bool,
}

/// Result of inserting into a full or non-full cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvictionOutcome<K> {
    pub victim: Option<Victim<K>>,
}

impl<K> EvictionOutcome<K> {
    pub fn none() -> Self {
        EvictionOutcome { victim: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlcLookup {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LlcEntry {
    page: u64,
    line: u64,
    dirty: bool,
}

/// Set-associative LRU last-level cache. Each set is kept least-recent first.
#[derive(Debug, Clone)]
pub struct Llc {
    sets: Vec<Vec<LlcEntry>>,
    associativity: usize,
    lines_per_page: u64,
}

impl Llc {
    pub fn new(capacity_lines: u64, associativity: u64, lines_per_page: u64) -> Self {
        let num_sets = (capacity_lines / associativity).max(1) as usize;
        Llc {
            sets: vec![Vec::with_capacity(associativity as usize); num_sets],
            associativity: associativity as usize,
            lines_per_page,
        }
    }

    pub fn from_config(cfg: &SimConfig) -> Self {
        Llc::new(cfg.llc_capacity_lines, cfg.llc_associativity, cfg.lines_per_page())
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    fn set_of(&self, page: u64, line: u64) -> usize {
        ((page * self.lines_per_page + line) % self.sets.len() as u64) as usize
    }

    /// Looks a line up; a hit makes it most-recent and ORs in the write.
    pub fn access(&mut self, page: u64, line: u64, is_write: bool) -> LlcLookup {
        let set_idx = self.set_of(page, line);
        let set = &mut self.sets[set_idx];
        match set.iter().position(|e| e.page == page && e.line == line) {
            Some(pos) => {
                let mut e = set.remove(pos);
                e.dirty |= is_write;
                set.push(e);
                LlcLookup::Hit
            }
            None => LlcLookup::Miss,
        }
    }

    pub fn contains(&self, page: u64, line: u64) -> bool {
        self.sets[self.set_of(page, line)].iter().any(|e| e.page == page && e.line == line)
    }

    /// Installs a line as most-recent. Filling a resident line only refreshes
    /// it and merges the dirty flag.
    pub fn fill(&mut self, page: u64, line: u64, dirty: bool) -> EvictionOutcome<(u64, u64)> {
        let assoc = self.associativity;
        let set_idx = self.set_of(page, line);
        let set = &mut self.sets[set_idx];
        if let Some(pos) = set.iter().position(|e| e.page == page && e.line == line) {
            let mut e = set.remove(pos);
            e.dirty |= dirty;
            set.push(e);
            return EvictionOutcome::none();
        }
        let victim = if set.len() >= assoc {
            let v = set.remove(0);
            Some(Victim { id: (v.page, v.line), dirty: v.dirty })
        } else {
            None
        };
        set.push(LlcEntry { page, line, dirty });
        EvictionOutcome { victim }
    }

    pub fn occupancy(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalLookup {
    Present,
    Absent,
}

/// Local memory used as a page-granularity LRU cache of remote memory.
#[derive(Debug, Clone)]
pub struct LocalPageCache {
    capacity: usize,
    // page -> (recency stamp, dirty)
    pages: HashMap<u64, (u64, bool)>,
    by_recency: BTreeMap<u64, u64>,
    clock: u64,
}

impl LocalPageCache {
    pub fn new(capacity_pages: u64) -> Self {
        LocalPageCache {
            capacity: capacity_pages.max(1) as usize,
            pages: HashMap::new(),
            by_recency: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    fn bump(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn lookup(&mut self, page: u64, touch: bool) -> LocalLookup {
        let Some(&(stamp, dirty)) = self.pages.get(&page) else {
            return LocalLookup::Absent;
        };
        if touch {
            let fresh = self.bump();
            self.by_recency.remove(&stamp);
            self.by_recency.insert(fresh, page);
            self.pages.insert(page, (fresh, dirty));
        }
        LocalLookup::Present
    }

    pub fn is_dirty(&self, page: u64) -> Option<bool> {
        self.pages.get(&page).map(|&(_, d)| d)
    }

    /// Inserts a non-resident page as most-recent, evicting the LRU page when full.
    pub fn insert(&mut self, page: u64, dirty: bool) -> Result<EvictionOutcome<u64>> {
        if self.pages.contains_key(&page) {
            return Err(SimError::Internal(format!("page {page} inserted while already resident")));
        }
        let victim = if self.pages.len() >= self.capacity {
            let (&stamp, &vpage) = self.by_recency.iter().next().expect("full cache has an LRU entry");
            self.by_recency.remove(&stamp);
            let (_, vdirty) = self.pages.remove(&vpage).expect("recency index in sync");
            Some(Victim { id: vpage, dirty: vdirty })
        } else {
            None
        };
        let stamp = self.bump();
        self.pages.insert(page, (stamp, dirty));
        self.by_recency.insert(stamp, page);
        Ok(EvictionOutcome { victim })
    }

    /// Marks a resident page dirty without changing its recency. Returns
    /// whether the page was resident.
    pub fn mark_dirty(&mut self, page: u64) -> bool {
        match self.pages.get_mut(&page) {
            Some(entry) => {
                entry.1 = true;
                true
            }
            None => false,
        }
    }
}

/// Kind of work a memory component performs for one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McRequestKind {
    Line,
    Page,
    Writeback,
}

/// Fixed-latency memory-component model; contention lives on the links.
pub fn mc_service_time(_kind: McRequestKind, cfg: &SimConfig) -> f64 {
    cfg.mc_dram_latency_ns
}
