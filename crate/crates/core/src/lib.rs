//! Trace-driven discrete-event simulator of data movement between a compute
//! component and network-attached memory components.
//!
//! The compute side has an LLC and a local DRAM that caches remote pages.
//! Remote data moves at line granularity, page granularity, or both,
//! depending on the [`Scheme`]. The `daemon` scheme partitions link
//! bandwidth between a sub-block queue and a page queue, picks granularities
//! from inflight-buffer utilization, and compresses pages on the link.

pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod interconnect;
pub mod policy;
pub mod stats;
pub mod workload;

pub use config::{addr_decompose, page_to_mc, parse_config, AddressParts, GranularityDecision, Scheme, SimConfig};
pub use engine::{run_simulation, SimOutput, Simulation};
pub use error::{Result, SimError};
pub use stats::{geomean, slowdown, RunStats};
pub use workload::{gen_compressibility_map, gen_synthetic_trace, AccessRecord, AccessTrace, CompressibilityMap, WorkloadParams};
pub use experiment::{
    default_suite, emit_results, multijob_suite, parse_spec, run_experiment, run_experiment_rows, simulate_rows, ExperimentSpec,
    OutputFormat, ResultRow,
};
