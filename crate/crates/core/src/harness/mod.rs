//! Dataset ingestion, split construction, pipeline runs and experiment
//! drivers.

pub mod config;
pub mod dataset;
pub mod experiments;
pub mod fixtures;
pub mod pipeline;
pub mod split;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

pub use config::{ConfigError, EmbedderConfig, ExperimentConfig};
pub use dataset::{load_dataset, parse_dataset, DatasetFormat, DatasetSample, LoadedDataset, Split};
pub use experiments::{
    benchmark_lookup, default_thresholds, measure_latency, run_memory_scaling,
    run_refusal_experiment, LatencyReport, LookupBenchmark, RefusalReport, RefusalRow,
    ScalingReport,
};
pub use fixtures::{oracle_fixture, oracle_output};
pub use pipeline::{evaluate_output, run_pipeline, Evaluated, QueryRecord, RecordOutcome, Resources, RunReport, RunSettings};
pub use split::{build_unknown_uri_split, unseen_uri_violations, SplitOptions, UnknownUriSplit};

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut out = create(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Pretty-printed JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}
