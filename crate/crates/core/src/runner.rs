//! Run orchestration and artifact emission: metrics as JSON lines, event
//! CSVs, key files and the optional spectrum, for single runs and sweeps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{sweep_seed, RunConfig};
use crate::protocol::{run_protocol_with, ProtocolMetrics, RunOutput};
use crate::receiver::DetectionEvent;
use crate::{Error, Result};

/// One metrics record as written to `metrics.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub point: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_parameter: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    #[serde(flatten)]
    pub metrics: ProtocolMetrics,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub record: MetricsRecord,
    pub dir: PathBuf,
}

fn provenance(cfg: &RunConfig, seed: u64) -> String {
    format!("# config_hash={}, seed={}", cfg.hash(), seed)
}

pub fn write_events_csv<W: Write>(mut w: W, header: &str, events: &[DetectionEvent]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "pulse_index,detector,timestamp_ns,cause")?;
    for e in events {
        writeln!(w, "{},{},{:.6},{}", e.pulse_index, e.detector, e.timestamp * 1e9, e.cause)?;
    }
    Ok(())
}

pub fn write_key<W: Write>(mut w: W, header: &str, bits: &[u8]) -> Result<()> {
    writeln!(w, "{header}")?;
    let text: String = bits.iter().map(|&b| if b != 0 { '1' } else { '0' }).collect();
    writeln!(w, "{text}")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes event CSVs, key files and the spectrum (when captured) into `dir`.
pub fn write_point_artifacts(dir: &Path, cfg: &RunConfig, seed: u64, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = provenance(cfg, seed);
    write_events_csv(create(&dir.join("events_d1.csv"))?, &header, &out.events_d1)?;
    write_events_csv(create(&dir.join("events_d2.csv"))?, &header, &out.events_d2)?;
    write_key(create(&dir.join("key_alice.txt"))?, &header, &out.key.alice_bits)?;
    write_key(create(&dir.join("key_bob.txt"))?, &header, &out.key.bob_bits)?;
    if let Some(s) = &out.spectrum {
        s.write_csv(create(&dir.join("spectrum.csv"))?, &header[2..])?;
    }
    Ok(())
}

/// Runs `cfg` (expanding any sweep) and writes all artifacts below `out_dir`.
///
/// A plain run writes into `out_dir` with the root seed. Sweep point `i`
/// writes into `out_dir/point_<i>` with a seed derived from the root seed
/// and `i`, and points run in parallel. `metrics.jsonl` in `out_dir` holds
/// one record per point in index order.
pub fn execute(cfg: &RunConfig, root_seed: u64, out_dir: &Path, emit_spectrum: bool) -> Result<Vec<PointResult>> {
    cfg.validate()?;
    let points = cfg.expand_sweep()?;
    let sweep = cfg.sweep.clone();
    fs::create_dir_all(out_dir)?;
    let results: Vec<Result<PointResult>> = points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let (seed, dir, param, value) = match &sweep {
                None => (root_seed, out_dir.to_path_buf(), None, None),
                Some(s) => (
                    sweep_seed(root_seed, i),
                    out_dir.join(format!("point_{i:03}")),
                    Some(s.parameter.clone()),
                    Some(s.values[i]),
                ),
            };
            let out = run_protocol_with(point, seed, emit_spectrum)?;
            write_point_artifacts(&dir, point, seed, &out)?;
            Ok(PointResult {
                record: MetricsRecord {
                    point: i,
                    sweep_parameter: param,
                    sweep_value: value,
                    metrics: out.metrics,
                },
                dir,
            })
        })
        .collect();
    let results: Vec<PointResult> = results.into_iter().collect::<Result<_>>()?;
    let mut w = create(&out_dir.join("metrics.jsonl"))?;
    for r in &results {
        let line = serde_json::to_string(&r.record).map_err(|e| Error::ConfigParse(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(results)
}

/// Fixed-width summary table, one row per point.
pub fn summary_table(results: &[PointResult]) -> String {
    let mut s = String::new();
    let param = results.first().and_then(|r| r.record.sweep_parameter.clone());
    let label = param.clone().unwrap_or_else(|| "point".into());
    s.push_str(&format!(
        "{:>16} {:>10} {:>10} {:>14} {:>10} {:>10}\n",
        label, "qber", "visib", "sifted/pulse", "h(e)", "bits"
    ));
    for r in results {
        let m = &r.record.metrics;
        let key = match r.record.sweep_value {
            Some(v) => format!("{v}"),
            None => format!("{}", r.record.point),
        };
        s.push_str(&format!(
            "{:>16} {:>10.5} {:>10.5} {:>14.6} {:>10.5} {:>10}\n",
            key, m.qber, m.visibility, m.sifted_rate_per_pulse, m.leakage_bits_per_bit, m.sifted_bits
        ));
    }
    s
}
