use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dmsim::interconnect::write_grant_log;
use dmsim::workload::{load_compressibility_file, load_trace_file, parse_params, write_trace_file};
use dmsim::{emit_results, gen_synthetic_trace, parse_config, run_experiment, simulate_rows, CompressibilityMap};
use dmsim::OutputFormat;

#[derive(Parser)]
#[command(name = "dmsim", version, about = "Discrete-event simulator of remote-memory data movement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config on one trace per core; also runs `local` for the slowdown column.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// One trace file per core, in core order.
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        /// `page_id,ratio` sidecar; unlisted pages are incompressible.
        #[arg(long)]
        compressibility: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        /// Write the configured run's link grants as CSV.
        #[arg(long)]
        grant_log: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Generate a synthetic trace from a JSON parameter file.
    GenTrace {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec (a sweep over workloads, schemes and axes).
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn simulate(
    config: &Path,
    traces: &[PathBuf],
    compressibility: Option<&Path>,
    out: &Path,
    format: OutputFormat,
    grant_log: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let mut cfg = parse_config(&read(config)?).with_context(|| format!("config {}", config.display()))?;
    if traces.len() != cfg.num_cores {
        bail!("{} trace(s) given for num_cores = {}", traces.len(), cfg.num_cores);
    }
    let traces = traces
        .iter()
        .map(|p| load_trace_file(p, cfg.page_size_bytes))
        .collect::<dmsim::Result<Vec<_>>>()?;
    let span = traces.iter().map(|t| t.footprint_pages).max().unwrap_or(0);
    cfg.footprint_pages = cfg.footprint_pages.max(span);
    let cmap = match compressibility {
        Some(p) => load_compressibility_file(p, cfg.footprint_pages)?,
        None => CompressibilityMap::constant(cfg.footprint_pages, 1.0)?,
    };
    let name = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    let (rows, log) = simulate_rows(&cfg, &traces, &cmap, &name, jobs, grant_log.is_some())?;
    emit_results(&rows, format, out)?;
    if let (Some(path), Some(log)) = (grant_log, log) {
        write_grant_log(&log, path)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, traces, compressibility, out, format, grant_log, jobs } => {
            simulate(&config, &traces, compressibility.as_deref(), &out, format, grant_log.as_deref(), jobs)?
        }
        Command::GenTrace { params, seed, out } => {
            let params = parse_params(&read(&params)?).with_context(|| format!("params {}", params.display()))?;
            let trace = gen_synthetic_trace(&params, seed)?;
            write_trace_file(&trace, &out)?;
        }
        Command::Experiment { spec, out, jobs } => {
            let (path, rows) = run_experiment(&spec, out.as_deref(), jobs)?;
            eprintln!("wrote {rows} rows to {}", path.display());
        }
    }
    Ok(())
}
