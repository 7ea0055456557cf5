//! Per-core access traces and per-page compressibility.
//!
//! Synthetic traces use `ChaCha8Rng` seeded through `SeedableRng::seed_from_u64`,
//! so a `(params, seed)` pair always yields the same trace on every platform.
//! Every generation step consumes exactly five uniform draws regardless of the
//! branch taken, which keeps traces for different locality settings coupled
//! under the same seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessRecord {
    /// Gap since the previous access issued by the same core.
    pub think_ns: f64,
    pub addr: u64,
    pub is_write: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccessTrace {
    pub footprint_pages: u64,
    pub records: Vec<AccessRecord>,
}

impl AccessTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Shifts every address up by `page_offset` pages, e.g. to give co-running
    /// jobs disjoint address ranges.
    pub fn relocated(&self, page_offset: u64, page_size_bytes: u64) -> AccessTrace {
        AccessTrace {
            footprint_pages: self.footprint_pages + page_offset,
            records: self
                .records
                .iter()
                .map(|r| AccessRecord { addr: r.addr + page_offset * page_size_bytes, ..*r })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadParams {
    pub num_accesses: usize,
    /// Probability that the next access moves to the next line of the current page.
    pub spatial_locality: f64,
    /// Skew of the page chosen on a jump; 0 is uniform.
    pub zipf_alpha: f64,
    pub write_fraction: f64,
    pub think_ns_mean: f64,
    pub footprint_pages: u64,
    pub start_page: u64,
    pub line_size_bytes: u64,
    pub page_size_bytes: u64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            num_accesses: 100_000,
            spatial_locality: 0.5,
            zipf_alpha: 0.8,
            write_fraction: 0.2,
            think_ns_mean: 10.0,
            footprint_pages: 8192,
            start_page: 0,
            line_size_bytes: 64,
            page_size_bytes: 4096,
        }
    }
}

impl WorkloadParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimError::Workload(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        prob("spatial_locality", self.spatial_locality)?;
        prob("write_fraction", self.write_fraction)?;
        if !(self.zipf_alpha.is_finite() && self.zipf_alpha >= 0.0) {
            return Err(SimError::Workload(format!("zipf_alpha must be >= 0, got {}", self.zipf_alpha)));
        }
        if !(self.think_ns_mean.is_finite() && self.think_ns_mean >= 0.0) {
            return Err(SimError::Workload("think_ns_mean must be >= 0".into()));
        }
        if self.footprint_pages == 0 && self.num_accesses > 0 {
            return Err(SimError::Workload("footprint_pages = 0 with a non-empty trace".into()));
        }
        if self.num_accesses > 0 && self.start_page >= self.footprint_pages {
            return Err(SimError::Workload("start_page lies outside the footprint".into()));
        }
        if !self.line_size_bytes.is_power_of_two()
            || !self.page_size_bytes.is_power_of_two()
            || self.page_size_bytes < self.line_size_bytes
        {
            return Err(SimError::Workload("line/page sizes must be powers of two with line <= page".into()));
        }
        Ok(())
    }
}

/// Parses and validates a JSON parameter document. Empty input yields the defaults.
pub fn parse_params(text: &str) -> Result<WorkloadParams> {
    let params: WorkloadParams = if text.trim().is_empty() {
        WorkloadParams::default()
    } else {
        serde_json::from_str(text).map_err(|e| SimError::Workload(format!("params: {e}")))?
    };
    params.validate()?;
    Ok(params)
}

/// Inverse-CDF sampler over ranks `0..n` with weight `1 / (rank + 1)^alpha`.
#[derive(Debug, Clone)]
pub struct ZipfTable {
    cdf: Vec<f64>,
}

impl ZipfTable {
    pub fn new(n: u64, alpha: f64) -> Self {
        let mut cdf = Vec::with_capacity(n as usize);
        let mut acc = 0.0;
        for rank in 0..n {
            acc += 1.0 / ((rank + 1) as f64).powf(alpha);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        ZipfTable { cdf }
    }

    /// Maps a uniform draw in `[0, 1)` to a rank.
    pub fn sample(&self, u: f64) -> u64 {
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u64
    }
}

/// Geometric number of failures with the given mean, from one uniform draw.
fn geometric(u: f64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let p = 1.0 / (mean + 1.0);
    // 1 - u lies in (0, 1], so the log is finite.
    ((1.0 - u).ln() / (1.0 - p).ln()).floor()
}

pub fn gen_synthetic_trace(params: &WorkloadParams, seed: u64) -> Result<AccessTrace> {
    params.validate()?;
    let mut trace = AccessTrace { footprint_pages: params.footprint_pages, records: Vec::new() };
    if params.num_accesses == 0 {
        return Ok(trace);
    }
    let lines_per_page = params.page_size_bytes / params.line_size_bytes;
    let zipf = ZipfTable::new(params.footprint_pages, params.zipf_alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut page = params.start_page;
    let mut line = 0u64;
    trace.records.reserve(params.num_accesses);
    for i in 0..params.num_accesses {
        let u_stay: f64 = rng.gen();
        let u_page: f64 = rng.gen();
        let u_line: f64 = rng.gen();
        let u_write: f64 = rng.gen();
        let u_think: f64 = rng.gen();
        if i > 0 {
            if u_stay < params.spatial_locality {
                line = (line + 1) % lines_per_page;
            } else {
                page = zipf.sample(u_page);
                line = ((u_line * lines_per_page as f64) as u64).min(lines_per_page - 1);
            }
        }
        trace.records.push(AccessRecord {
            think_ns: geometric(u_think, params.think_ns_mean),
            addr: page * params.page_size_bytes + line * params.line_size_bytes,
            is_write: u_write < params.write_fraction,
        });
    }
    Ok(trace)
}

/// Reads a text trace: `key=value` header lines (`footprint_pages` required),
/// then `think_ns,addr,R|W` rows. `#` starts a comment.
pub fn load_trace_file(path: impl AsRef<Path>, page_size_bytes: u64) -> Result<AccessTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_trace(&text, path, page_size_bytes)
}

pub fn parse_trace(text: &str, path: &Path, page_size_bytes: u64) -> Result<AccessTrace> {
    let err = |line: usize, msg: String| SimError::TraceFormat { path: path.to_path_buf(), line, msg };
    let mut footprint: Option<u64> = None;
    let mut records = Vec::new();
    let mut in_body = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if !in_body {
            if let Some((key, value)) = content.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                if key == "footprint_pages" {
                    let v = value
                        .parse::<u64>()
                        .map_err(|_| err(lineno, format!("bad footprint_pages `{value}`")))?;
                    footprint = Some(v);
                }
                continue;
            }
            in_body = true;
        }
        let Some(fp) = footprint else {
            return Err(err(lineno, "missing `footprint_pages=` header".into()));
        };
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(lineno, format!("expected `think_ns,addr,R|W`, got `{content}`")));
        }
        let think_ns = fields[0]
            .parse::<f64>()
            .ok()
            .filter(|t| t.is_finite() && *t >= 0.0)
            .ok_or_else(|| err(lineno, format!("bad think_ns `{}`", fields[0])))?;
        let addr = parse_addr(fields[1]).ok_or_else(|| err(lineno, format!("bad address `{}`", fields[1])))?;
        let is_write = match fields[2] {
            "R" | "r" => false,
            "W" | "w" => true,
            other => return Err(err(lineno, format!("bad access kind `{other}`"))),
        };
        if addr >= fp * page_size_bytes {
            return Err(err(lineno, format!("address out of footprint: {addr}")));
        }
        records.push(AccessRecord { think_ns, addr, is_write });
    }
    let footprint_pages = footprint.ok_or_else(|| err(0, "missing `footprint_pages=` header".into()))?;
    Ok(AccessTrace { footprint_pages, records })
}

fn parse_addr(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

pub fn format_trace(trace: &AccessTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 16 + 32);
    writeln!(out, "footprint_pages={}", trace.footprint_pages).unwrap();
    for r in &trace.records {
        writeln!(out, "{},{},{}", r.think_ns, r.addr, if r.is_write { 'W' } else { 'R' }).unwrap();
    }
    out
}

pub fn write_trace_file(trace: &AccessTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_trace(trace)).map_err(|e| SimError::io(path, e))
}

/// How page compression ratios are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RatioDistribution {
    Constant(f64),
    Uniform(f64, f64),
}

impl Default for RatioDistribution {
    fn default() -> Self {
        RatioDistribution::Constant(1.0)
    }
}

/// Compression ratio (uncompressed / compressed size) of every page.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressibilityMap {
    ratios: Vec<f64>,
}

impl CompressibilityMap {
    pub fn constant(footprint_pages: u64, ratio: f64) -> Result<Self> {
        gen_compressibility_map(footprint_pages, RatioDistribution::Constant(ratio), 0)
    }

    pub fn ratio(&self, page_id: u64) -> Option<f64> {
        self.ratios.get(page_id as usize).copied()
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len().max(1) as f64
    }
}

pub fn gen_compressibility_map(
    footprint_pages: u64,
    distribution: RatioDistribution,
    seed: u64,
) -> Result<CompressibilityMap> {
    let ratios = match distribution {
        RatioDistribution::Constant(c) => {
            if !(c.is_finite() && c >= 1.0) {
                return Err(SimError::Workload(format!("compression ratio {c} is below 1.0")));
            }
            vec![c; footprint_pages as usize]
        }
        RatioDistribution::Uniform(lo, hi) => {
            if !(lo.is_finite() && hi.is_finite() && lo >= 1.0 && lo <= hi) {
                return Err(SimError::Workload(format!(
                    "compression ratio range {lo}..{hi} needs 1.0 <= lo <= hi"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..footprint_pages).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
        }
    };
    Ok(CompressibilityMap { ratios })
}

/// Reads a `page_id,ratio` sidecar. Pages not listed are incompressible (1.0).
pub fn load_compressibility_file(path: impl AsRef<Path>, footprint_pages: u64) -> Result<CompressibilityMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let mut ratios = vec![1.0; footprint_pages as usize];
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| SimError::TraceFormat { path: path.to_path_buf(), line: idx + 1, msg };
        let (page, ratio) = content
            .split_once(',')
            .ok_or_else(|| err(format!("expected `page_id,ratio`, got `{content}`")))?;
        let page: u64 = page.trim().parse().map_err(|_| err(format!("bad page id `{page}`")))?;
        let ratio: f64 = ratio.trim().parse().map_err(|_| err(format!("bad ratio `{ratio}`")))?;
        if page >= footprint_pages {
            return Err(err(format!("page {page} outside footprint")));
        }
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(err(format!("ratio {ratio} is below 1.0")));
        }
        ratios[page as usize] = ratio;
    }
    Ok(CompressibilityMap { ratios })
}
