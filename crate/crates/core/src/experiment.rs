//! Experiment sweeps: a spec names workloads, schemes and axis values; every
//! cell of the cross-product runs independently and results are written as
//! one row per (workload, scheme, axis point, repetition).
//!
//! # Output schema
//!
//! CSV with the header in [`COLUMNS`], or JSON lines whose keys are the same
//! names. Ratios carry 6 decimals, times 3; counters are integers. `slowdown`
//! and `mean_job_slowdown` are empty (null in JSON lines) when normalization
//! is off. `job_elapsed_ns` lists per-job elapsed times joined by `;`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config_over, Scheme, SimConfig};
use crate::engine::{run_simulation, Simulation};
use crate::error::{Result, SimError};
use crate::interconnect::{ChannelId, Grant, PacketKind};
use crate::policy::ServedBy;
use crate::stats::{slowdown_ns, RunStats};
use crate::workload::{
    gen_compressibility_map, gen_synthetic_trace, load_compressibility_file, load_trace_file, AccessTrace,
    CompressibilityMap, RatioDistribution, WorkloadParams,
};

/// Output column names, in order.
pub const COLUMNS: [&str; 43] = [
    "workload",
    "scheme",
    "net_bandwidth_factor",
    "num_mcs",
    "num_jobs",
    "rep",
    "seed",
    "accesses",
    "elapsed_ns",
    "slowdown",
    "mean_job_slowdown",
    "job_elapsed_ns",
    "total_mem_stall_ns",
    "mean_latency_ns",
    "llc_hits",
    "llc_misses",
    "llc_evictions",
    "local_hits",
    "local_misses",
    "local_evictions",
    "page_writebacks",
    "dirty_lines_absorbed",
    "dirty_lines_dropped",
    "served_llc",
    "served_local",
    "served_line_reply",
    "served_page_reply",
    "net_bytes",
    "sub_block_bytes",
    "page_bytes",
    "shared_bytes",
    "page_reply_bytes",
    "line_request_packets",
    "page_request_packets",
    "line_reply_packets",
    "page_reply_packets",
    "page_writeback_packets",
    "free_ride_bytes",
    "decisions_line_only",
    "decisions_page_only",
    "decisions_both",
    "daemon_stalls",
    "events",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for OutputFormat {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json-lines" => Ok(OutputFormat::Jsonl),
            _ => Err(SimError::Experiment(format!("unknown output format `{s}` (csv or jsonl)"))),
        }
    }
}

/// Where a workload's accesses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSource {
    Params(WorkloadParams),
    /// A trace file, relative to the spec file's directory.
    Trace(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadEntry {
    pub name: String,
    #[serde(flatten)]
    pub source: WorkloadSource,
}

/// Page compressibility for every cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressibilitySpec {
    Constant(f64),
    Uniform(f64, f64),
    /// A `page_id,ratio` sidecar, relative to the spec file's directory.
    File(PathBuf),
}

impl Default for CompressibilitySpec {
    fn default() -> Self {
        CompressibilitySpec::Constant(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Overrides applied to the default config.
    pub base: serde_json::Map<String, serde_json::Value>,
    pub workloads: Vec<WorkloadEntry>,
    pub compressibility: CompressibilitySpec,
    pub schemes: Vec<Scheme>,
    /// Empty means the base config's value.
    pub net_bandwidth_factors: Vec<f64>,
    pub num_mcs: Vec<usize>,
    /// Jobs per cell; each job runs on its own core with its own address range.
    pub num_jobs: Vec<usize>,
    pub repetitions: u32,
    /// Adds slowdown vs the `local` run of the same workload and axis point.
    pub normalize: bool,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: serde_json::Map::new(),
            workloads: Vec::new(),
            compressibility: CompressibilitySpec::default(),
            schemes: Scheme::ALL.to_vec(),
            net_bandwidth_factors: Vec::new(),
            num_mcs: Vec::new(),
            num_jobs: Vec::new(),
            repetitions: 1,
            normalize: true,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec =
        serde_json::from_str(text).map_err(|e| SimError::Experiment(format!("spec: {e}")))?;
    spec.base_config()?;
    spec.check()?;
    Ok(spec)
}

impl ExperimentSpec {
    pub fn base_config(&self) -> Result<SimConfig> {
        let text = serde_json::Value::Object(self.base.clone()).to_string();
        parse_config_over(&SimConfig::default(), &text)
    }

    fn check(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(SimError::Experiment("spec lists no schemes".into()));
        }
        if self.workloads.is_empty() {
            return Err(SimError::Experiment("spec lists no workloads".into()));
        }
        if self.repetitions == 0 {
            return Err(SimError::Experiment("repetitions must be >= 1".into()));
        }
        if self.normalize && !self.schemes.contains(&Scheme::Local) {
            return Err(SimError::Experiment(
                "normalized metrics need the `local` scheme in `schemes`".into(),
            ));
        }
        if self.num_jobs.contains(&0) {
            return Err(SimError::Experiment("num_jobs values must be >= 1".into()));
        }
        for (i, w) in self.workloads.iter().enumerate() {
            if self.workloads[..i].iter().any(|o| o.name == w.name) {
                return Err(SimError::Experiment(format!("duplicate workload name `{}`", w.name)));
            }
        }
        Ok(())
    }

    fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
        if values.is_empty() {
            vec![base]
        } else {
            values.to_vec()
        }
    }
}

/// Key of one cell. Indices refer to positions in the spec's lists, so
/// sorting by key reproduces spec order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CellKey {
    workload: usize,
    scheme: usize,
    factor: usize,
    mcs: usize,
    jobs: usize,
    rep: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub workload: String,
    pub scheme: Scheme,
    pub net_bandwidth_factor: f64,
    pub num_mcs: usize,
    pub num_jobs: usize,
    pub rep: u32,
    pub seed: u64,
    pub stats: RunStats,
    pub slowdown: Option<f64>,
    pub mean_job_slowdown: Option<f64>,
}

/// Same-named workload traces for one repetition: one trace per job, in
/// disjoint address ranges.
fn job_traces(
    source: &WorkloadSource,
    base_dir: &Path,
    cfg: &SimConfig,
    jobs: usize,
    seed: u64,
) -> Result<Vec<AccessTrace>> {
    let solo: Vec<AccessTrace> = match source {
        WorkloadSource::Params(p) => {
            if p.line_size_bytes != cfg.line_size_bytes || p.page_size_bytes != cfg.page_size_bytes {
                return Err(SimError::Workload("workload line/page sizes differ from the config".into()));
            }
            (0..jobs).map(|j| gen_synthetic_trace(p, job_seed(seed, j))).collect::<Result<_>>()?
        }
        WorkloadSource::Trace(path) => {
            let t = load_trace_file(base_dir.join(path), cfg.page_size_bytes)?;
            vec![t; jobs]
        }
    };
    let span = solo.iter().map(|t| t.footprint_pages).max().unwrap_or(0);
    Ok(solo
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let mut r = t.relocated(j as u64 * span, cfg.page_size_bytes);
            r.footprint_pages = span * jobs as u64;
            r
        })
        .collect())
}

/// Seed of job `j` in a repetition seeded with `seed`.
pub fn job_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add(1_000_003u64.wrapping_mul(j as u64))
}

fn build_cmap(spec: &CompressibilitySpec, base_dir: &Path, pages: u64, seed: u64) -> Result<CompressibilityMap> {
    match spec {
        CompressibilitySpec::Constant(c) => gen_compressibility_map(pages, RatioDistribution::Constant(*c), seed),
        CompressibilitySpec::Uniform(lo, hi) => {
            gen_compressibility_map(pages, RatioDistribution::Uniform(*lo, *hi), seed)
        }
        CompressibilitySpec::File(p) => load_compressibility_file(base_dir.join(p), pages),
    }
}

struct Prepared {
    key: CellKey,
    cfg: SimConfig,
    workload: String,
    traces: std::sync::Arc<(Vec<AccessTrace>, CompressibilityMap)>,
    label: String,
}

/// Runs every cell of `spec` on `threads` workers (0 = all cores) and
/// returns rows sorted by spec order. Relative paths resolve against `base_dir`.
pub fn run_experiment_rows(spec: &ExperimentSpec, base_dir: &Path, threads: usize) -> Result<Vec<ResultRow>> {
    spec.check()?;
    let base = spec.base_config()?;
    let factors = ExperimentSpec::axis(&spec.net_bandwidth_factors, base.net_bandwidth_factor);
    let mcs = ExperimentSpec::axis(&spec.num_mcs, base.num_mcs);
    let jobs = ExperimentSpec::axis(&spec.num_jobs, base.num_cores);

    let mut cells = Vec::new();
    for (wi, w) in spec.workloads.iter().enumerate() {
        for (ji, &nj) in jobs.iter().enumerate() {
            for rep in 0..spec.repetitions {
                let seed = base.seed.wrapping_add(rep as u64);
                let label = format!("workload={} jobs={nj} rep={rep}", w.name);
                let wrap = |e: SimError| SimError::Cell { cell: label.clone(), source: Box::new(e) };
                let traces = job_traces(&w.source, base_dir, &base, nj, seed).map_err(wrap)?;
                let pages = traces.first().map_or(base.footprint_pages, |t| t.footprint_pages);
                let cmap = build_cmap(&spec.compressibility, base_dir, pages, seed).map_err(wrap)?;
                let shared = std::sync::Arc::new((traces, cmap));
                for (fi, &f) in factors.iter().enumerate() {
                    for (mi, &m) in mcs.iter().enumerate() {
                        for (si, &scheme) in spec.schemes.iter().enumerate() {
                            let cfg = SimConfig {
                                scheme,
                                net_bandwidth_factor: f,
                                num_mcs: m,
                                num_cores: nj,
                                footprint_pages: pages,
                                seed,
                                ..base.clone()
                            };
                            let label = format!(
                                "workload={} scheme={} net_bandwidth_factor={f} num_mcs={m} num_jobs={nj} rep={rep}",
                                w.name,
                                scheme.name()
                            );
                            cells.push(Prepared {
                                key: CellKey { workload: wi, factor: fi, mcs: mi, jobs: ji, rep, scheme: si },
                                cfg,
                                workload: w.name.clone(),
                                traces: shared.clone(),
                                label,
                            });
                        }
                    }
                }
            }
        }
    }

    let run = || {
        cells
            .par_iter()
            .map(|c| {
                let r = c.cfg.validate().and_then(|_| run_simulation(&c.cfg, &c.traces.0, &c.traces.1));
                (c.key, r)
            })
            .collect::<Vec<_>>()
    };
    let mut results = if threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimError::Internal(format!("thread pool: {e}")))?
            .install(run)
    };
    results.sort_by_key(|(k, _)| *k);
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| cells[i].key);

    let mut rows = Vec::with_capacity(cells.len());
    for (i, (_, r)) in order.into_iter().zip(results) {
        let c = &cells[i];
        let stats = r.map_err(|e| SimError::Cell { cell: c.label.clone(), source: Box::new(e) })?;
        rows.push(ResultRow {
            workload: c.workload.clone(),
            scheme: c.cfg.scheme,
            net_bandwidth_factor: c.cfg.net_bandwidth_factor,
            num_mcs: c.cfg.num_mcs,
            num_jobs: c.cfg.num_cores,
            rep: c.key.rep,
            seed: c.cfg.seed,
            stats,
            slowdown: None,
            mean_job_slowdown: None,
        });
    }
    if spec.normalize {
        normalize(&mut rows, &cells_keys(&cells))?;
    }
    Ok(rows)
}

fn cells_keys(cells: &[Prepared]) -> Vec<CellKey> {
    let mut keys: Vec<CellKey> = cells.iter().map(|c| c.key).collect();
    keys.sort();
    keys
}

/// Fills slowdowns from the `local` row sharing each row's workload, axis
/// point and repetition. `keys` are the rows' cell keys in row order.
fn normalize(rows: &mut [ResultRow], keys: &[CellKey]) -> Result<()> {
    let mut local = std::collections::HashMap::new();
    for (row, key) in rows.iter().zip(keys) {
        if row.scheme == Scheme::Local {
            local.insert(CellKey { scheme: 0, ..*key }, row.stats.clone());
        }
    }
    for (row, key) in rows.iter_mut().zip(keys) {
        let base = local.get(&CellKey { scheme: 0, ..*key }).ok_or_else(|| {
            SimError::Experiment(format!("no local run for workload `{}`", row.workload))
        })?;
        row.slowdown = Some(slowdown_ns(row.stats.elapsed_ns, base.elapsed_ns)?);
        row.mean_job_slowdown = Some(mean_job_slowdown(&row.stats, base)?);
    }
    Ok(())
}

/// Mean over jobs of each job's elapsed time relative to the baseline run.
pub fn mean_job_slowdown(stats: &RunStats, baseline: &RunStats) -> Result<f64> {
    let n = stats.per_job_elapsed_ns.len();
    if n == 0 || n != baseline.per_job_elapsed_ns.len() {
        return Err(SimError::Metrics("per-job elapsed times do not line up with the baseline".into()));
    }
    let mut sum = 0.0;
    for (a, b) in stats.per_job_elapsed_ns.iter().zip(&baseline.per_job_elapsed_ns) {
        sum += slowdown_ns(*a, *b)?;
    }
    Ok(sum / n as f64)
}

/// Reads a spec file, runs it and writes the results. `out` overrides the
/// spec's output path. Returns the path written and the row count.
pub fn run_experiment(spec_path: &Path, out: Option<&Path>, threads: usize) -> Result<(PathBuf, usize)> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| SimError::io(spec_path, e))?;
    let spec = parse_spec(&text)?;
    let base_dir = spec_path.parent().unwrap_or(Path::new("."));
    let target = match (out, &spec.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base_dir.join(o),
        (None, None) => return Err(SimError::Experiment("no output path in the spec or on the command line".into())),
    };
    let rows = run_experiment_rows(&spec, base_dir, threads)?;
    emit_results(&rows, spec.format, &target)?;
    Ok((target, rows.len()))
}

/// Runs `cfg` on the given traces, plus a `local` run of the same traces
/// when the configured scheme is not `local`, and returns normalized rows
/// (local first) and, if asked, the configured run's grant log.
pub fn simulate_rows(
    cfg: &SimConfig,
    traces: &[AccessTrace],
    cmap: &CompressibilityMap,
    workload: &str,
    threads: usize,
    grant_log: bool,
) -> Result<(Vec<ResultRow>, Option<Vec<Grant>>)> {
    cfg.validate()?;
    let mut schemes = vec![Scheme::Local];
    if cfg.scheme != Scheme::Local {
        schemes.push(cfg.scheme);
    }
    let run = || {
        schemes
            .par_iter()
            .map(|&scheme| {
                let c = SimConfig { scheme, ..cfg.clone() };
                Simulation::new(&c, traces, cmap).grant_log(grant_log && scheme == cfg.scheme).run()
            })
            .collect::<Vec<_>>()
    };
    let outputs = if threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimError::Internal(format!("thread pool: {e}")))?
            .install(run)
    };
    let mut rows = Vec::new();
    let mut log = None;
    for (scheme, out) in schemes.iter().zip(outputs) {
        let out = out.map_err(|e| SimError::Cell { cell: format!("workload={workload} scheme={scheme}"), source: Box::new(e) })?;
        if *scheme == cfg.scheme {
            log = out.grant_log;
        }
        rows.push(ResultRow {
            workload: workload.to_owned(),
            scheme: *scheme,
            net_bandwidth_factor: cfg.net_bandwidth_factor,
            num_mcs: cfg.num_mcs,
            num_jobs: cfg.num_cores,
            rep: 0,
            seed: cfg.seed,
            stats: out.stats,
            slowdown: None,
            mean_job_slowdown: None,
        });
    }
    let local = rows[0].stats.clone();
    for r in &mut rows {
        r.slowdown = Some(slowdown_ns(r.stats.elapsed_ns, local.elapsed_ns)?);
        r.mean_job_slowdown = Some(mean_job_slowdown(&r.stats, &local)?);
    }
    Ok((rows, log))
}

enum Field {
    Text(String),
    Num(String),
    Missing,
}

fn ratio(v: Option<f64>) -> Field {
    v.map_or(Field::Missing, |x| Field::Num(format!("{x:.6}")))
}

fn time(v: f64) -> Field {
    Field::Num(format!("{v:.3}"))
}

fn int(v: impl Into<u64>) -> Field {
    Field::Num(v.into().to_string())
}

fn fields(r: &ResultRow) -> Vec<Field> {
    let s = &r.stats;
    let n = &s.network;
    let c = &s.cache;
    let d = &s.daemon;
    let jobs = s.per_job_elapsed_ns.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join(";");
    vec![
        Field::Text(r.workload.clone()),
        Field::Text(r.scheme.name().to_owned()),
        Field::Num(format!("{:.3}", r.net_bandwidth_factor)),
        int(r.num_mcs as u64),
        int(r.num_jobs as u64),
        int(r.rep),
        int(r.seed),
        int(s.accesses()),
        time(s.elapsed_ns),
        ratio(r.slowdown),
        ratio(r.mean_job_slowdown),
        Field::Text(jobs),
        time(s.total_mem_stall_ns()),
        time(s.mean_latency_ns()),
        int(c.llc_hits),
        int(c.llc_misses),
        int(c.llc_evictions),
        int(c.local_hits),
        int(c.local_misses),
        int(c.local_evictions),
        int(c.page_writebacks),
        int(c.dirty_lines_absorbed),
        int(c.dirty_lines_dropped),
        int(s.served_by[ServedBy::Llc.index()]),
        int(s.served_by[ServedBy::LocalMem.index()]),
        int(s.served_by[ServedBy::LineReply.index()]),
        int(s.served_by[ServedBy::PageReply.index()]),
        int(n.total_bytes()),
        int(n.bytes(ChannelId::SubBlock)),
        int(n.bytes(ChannelId::Page)),
        int(n.bytes(ChannelId::Shared)),
        int(n.kind_bytes[PacketKind::PageReply.index()]),
        int(n.packets(PacketKind::LineRequest)),
        int(n.packets(PacketKind::PageRequest)),
        int(n.packets(PacketKind::LineReply)),
        int(n.packets(PacketKind::PageReply)),
        int(n.packets(PacketKind::PageWriteback)),
        int(n.free_ride_bytes),
        int(d.line_only),
        int(d.page_only),
        int(d.both),
        int(d.stalls),
        int(s.events),
    ]
}

/// Writes rows atomically: the target only appears once fully written.
pub fn emit_results(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(SimError::Experiment("no result rows to write".into()));
    }
    let mut buf = Vec::new();
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            let err = |e: csv::Error| SimError::Internal(format!("csv: {e}"));
            w.write_record(COLUMNS).map_err(err)?;
            for r in rows {
                w.write_record(fields(r).into_iter().map(|f| match f {
                    Field::Text(s) | Field::Num(s) => s,
                    Field::Missing => String::new(),
                }))
                .map_err(err)?;
            }
            w.flush().map_err(|e| SimError::io(path, e))?;
        }
        OutputFormat::Jsonl => {
            for r in rows {
                let parts: Vec<String> = COLUMNS
                    .iter()
                    .zip(fields(r))
                    .map(|(k, f)| {
                        let v = match f {
                            Field::Text(s) => serde_json::Value::String(s).to_string(),
                            Field::Num(s) => s,
                            Field::Missing => "null".to_owned(),
                        };
                        format!("\"{k}\":{v}")
                    })
                    .collect();
                buf.extend_from_slice(format!("{{{}}}\n", parts.join(",")).as_bytes());
            }
        }
    }
    write_atomic(path, &buf)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| SimError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| SimError::io(path, e))?;
    tmp.persist(path).map_err(|e| SimError::io(path, e.error))?;
    Ok(())
}

/// Spatial-locality points of the default suite.
pub const SUITE_LOCALITIES: [f64; 6] = [0.05, 0.2, 0.4, 0.6, 0.8, 0.95];

/// Workloads spanning spatial locality, named `loc005` ... `loc095`.
pub fn suite_workloads(num_accesses: usize) -> Vec<WorkloadEntry> {
    SUITE_LOCALITIES
        .iter()
        .map(|&s| WorkloadEntry {
            name: format!("loc{:03}", (s * 100.0).round() as u32),
            source: WorkloadSource::Params(WorkloadParams {
                num_accesses,
                spatial_locality: s,
                ..WorkloadParams::default()
            }),
        })
        .collect()
}

/// All schemes over the default suite at bandwidth factors 2 and 8.
pub fn default_suite() -> ExperimentSpec {
    ExperimentSpec {
        workloads: suite_workloads(100_000),
        compressibility: CompressibilitySpec::Uniform(1.0, 4.0),
        net_bandwidth_factors: vec![2.0, 8.0],
        ..ExperimentSpec::default()
    }
}

/// Four co-running jobs per workload on one link.
pub fn multijob_suite() -> ExperimentSpec {
    ExperimentSpec {
        workloads: suite_workloads(50_000),
        compressibility: CompressibilitySpec::Uniform(1.0, 4.0),
        schemes: vec![Scheme::Local, Scheme::Page, Scheme::DaeMon],
        num_jobs: vec![4],
        ..ExperimentSpec::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(schemes: Vec<Scheme>) -> ExperimentSpec {
        let params = |s| {
            WorkloadSource::Params(WorkloadParams {
                num_accesses: 300,
                spatial_locality: s,
                footprint_pages: 64,
                ..WorkloadParams::default()
            })
        };
        ExperimentSpec {
            base: serde_json::from_str(r#"{"llc_capacity_lines": 256}"#).unwrap(),
            workloads: vec![
                WorkloadEntry { name: "a".into(), source: params(0.2) },
                WorkloadEntry { name: "b".into(), source: params(0.9) },
            ],
            compressibility: CompressibilitySpec::Constant(2.0),
            schemes,
            net_bandwidth_factors: vec![2.0, 8.0],
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn cross_product_row_count_and_order() {
        let spec = tiny_spec(vec![Scheme::Local, Scheme::Page, Scheme::DaeMon]);
        let rows = run_experiment_rows(&spec, Path::new("."), 2).unwrap();
        assert_eq!(rows.len(), 12);
        let keys: Vec<_> = rows.iter().map(|r| (r.workload.as_str(), r.net_bandwidth_factor, r.scheme)).collect();
        assert_eq!(keys[0], ("a", 2.0, Scheme::Local));
        assert_eq!(keys[1], ("a", 8.0, Scheme::Local));
        assert_eq!(keys[2], ("a", 2.0, Scheme::Page));
        assert_eq!(keys[5], ("a", 8.0, Scheme::DaeMon));
        assert_eq!(keys[6], ("b", 2.0, Scheme::Local));
        for r in &rows {
            if r.scheme == Scheme::Local {
                assert_eq!(r.slowdown, Some(1.0));
            }
        }
    }

    #[test]
    fn normalization_needs_local() {
        let spec = tiny_spec(vec![Scheme::Page]);
        let err = run_experiment_rows(&spec, Path::new("."), 1).unwrap_err();
        assert!(err.to_string().contains("local"), "{err}");
        let spec = ExperimentSpec { normalize: false, ..spec };
        let rows = run_experiment_rows(&spec, Path::new("."), 1).unwrap();
        assert!(rows.iter().all(|r| r.slowdown.is_none()));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = tiny_spec(vec![Scheme::Local, Scheme::CacheLinePage, Scheme::DaeMon]);
        let a = run_experiment_rows(&spec, Path::new("."), 1).unwrap();
        let b = run_experiment_rows(&spec, Path::new("."), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn emit_formats() {
        let row = ResultRow {
            workload: "w".into(),
            scheme: Scheme::Page,
            net_bandwidth_factor: 2.0,
            num_mcs: 1,
            num_jobs: 1,
            rep: 0,
            seed: 1,
            stats: RunStats { elapsed_ns: 200.0, per_job_elapsed_ns: vec![200.0], ..RunStats::default() },
            slowdown: Some(2.0),
            mean_job_slowdown: Some(2.0),
        };
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("r.csv");
        emit_results(std::slice::from_ref(&row), OutputFormat::Csv, &csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], COLUMNS.join(","));
        assert!(lines[1].contains(",200.000,2.000000,2.000000,"), "{}", lines[1]);

        let jl = dir.path().join("r.jsonl");
        emit_results(&[row.clone(), row], OutputFormat::Jsonl, &jl).unwrap();
        let text = std::fs::read_to_string(&jl).unwrap();
        assert_eq!(text.lines().count(), 2);
        let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: Vec<_> = obj.keys().cloned().collect();
        let mut want: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
        want.sort();
        let mut got = keys;
        got.sort();
        assert_eq!(got, want);
        assert_eq!(obj["slowdown"].as_f64(), Some(2.0));
    }

    #[test]
    fn emit_rejects_empty_and_unwritable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_results(&[], OutputFormat::Csv, &dir.path().join("x.csv")).is_err());
        let row = ResultRow {
            workload: "w".into(),
            scheme: Scheme::Local,
            net_bandwidth_factor: 1.0,
            num_mcs: 1,
            num_jobs: 1,
            rep: 0,
            seed: 1,
            stats: RunStats::default(),
            slowdown: None,
            mean_job_slowdown: None,
        };
        assert!(emit_results(&[row], OutputFormat::Csv, &dir.path().join("missing/x.csv")).is_err());
    }

    #[test]
    fn failing_cell_is_named_and_nothing_written() {
        let mut spec = tiny_spec(vec![Scheme::Local, Scheme::Page]);
        spec.workloads[1].source = WorkloadSource::Trace(PathBuf::from("does_not_exist.trace"));
        let dir = tempfile::tempdir().unwrap();
        let spec_path = dir.path().join("spec.json");
        let out = dir.path().join("out.csv");
        std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
        let err = run_experiment(&spec_path, Some(&out), 1).unwrap_err();
        assert!(err.to_string().contains("workload=b"), "{err}");
        assert!(!out.exists());
    }

    #[test]
    fn spec_json_shape() {
        let spec = parse_spec(
            r#"{
                "base": {"net_latency_ns": 50},
                "workloads": [
                    {"name": "syn", "params": {"num_accesses": 10, "footprint_pages": 4}},
                    {"name": "file", "trace": "t.trace"}
                ],
                "compressibility": {"uniform": [1.0, 4.0]},
                "schemes": ["local", "daemon"],
                "net_bandwidth_factors": [2, 4, 8],
                "format": "jsonl"
            }"#,
        )
        .unwrap();
        assert_eq!(spec.base_config().unwrap().net_latency_ns, 50.0);
        assert_eq!(spec.workloads[1].source, WorkloadSource::Trace("t.trace".into()));
        assert_eq!(spec.format, OutputFormat::Jsonl);
        assert!(parse_spec(r#"{"workloads": [], "bogus": 1}"#).is_err());
        assert!(parse_spec(r#"{"base": {"bogus": 1}, "workloads": [{"name": "x", "trace": "t"}]}"#).is_err());
    }

    #[test]
    fn jobs_get_disjoint_address_ranges() {
        let cfg = SimConfig::default();
        let src = WorkloadSource::Params(WorkloadParams { num_accesses: 200, footprint_pages: 16, ..Default::default() });
        let traces = job_traces(&src, Path::new("."), &cfg, 3, 7).unwrap();
        for (j, t) in traces.iter().enumerate() {
            assert_eq!(t.footprint_pages, 48);
            for r in &t.records {
                assert_eq!(r.addr / cfg.page_size_bytes / 16, j as u64);
            }
        }
        assert_ne!(traces[0].records[5].addr % (16 * 4096), traces[1].records[5].addr % (16 * 4096));
    }
}
