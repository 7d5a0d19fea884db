//! Plot-ready files for a CLT run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::stats::{default_bin_count, ecdf, histogram};
use super::CltRunResult;
use crate::error::{Error, Result};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const ECDF_FILE: &str = "ecdf.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub theoretical_variance: f64,
    pub ks_distance: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub admissible: bool,
    pub wall_time_seconds: f64,
}

impl From<&CltRunResult> for RunSummary {
    fn from(r: &CltRunResult) -> Self {
        RunSummary {
            config: r.config.clone(),
            theoretical_variance: r.theoretical.variance,
            ks_distance: r.ks_distance,
            sample_mean: r.sample_mean,
            sample_variance: r.sample_variance,
            admissible: r.admissibility.admissible,
            wall_time_seconds: r.wall_time_seconds,
        }
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// `replicate,zeta,scope,n,gamma,x,seed`, one row per replicate.
pub fn write_samples_csv<W: Write>(
    result: &CltRunResult,
    out: W,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv_writer(out);
    w.write_record(["replicate", "zeta", "scope", "n", "gamma", "x", "seed"])?;
    for s in &result.samples {
        w.write_record([
            s.replicate_index.to_string(),
            s.zeta.to_string(),
            s.scope.as_str().to_string(),
            s.n.to_string(),
            s.gamma.to_string(),
            s.x.to_string(),
            s.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `bin_lo,bin_hi,count,density`.
pub fn write_histogram_csv<W: Write>(result: &CltRunResult, bins: usize, out: W) -> Result<()> {
    let h = histogram(&result.zetas(), bins)?;
    let mut w = csv_writer(out);
    let mut rows = || -> std::result::Result<(), csv::Error> {
        w.write_record(["bin_lo", "bin_hi", "count", "density"])?;
        for (b, (&c, &d)) in h.counts.iter().zip(&h.densities).enumerate() {
            let (lo, hi) = h.edges(b);
            w.write_record([lo.to_string(), hi.to_string(), c.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    rows().map_err(|e| csv_error(Path::new(HISTOGRAM_FILE), e))
}

/// `value,ecdf,theoretical_cdf` at each sorted sample.
pub fn write_ecdf_csv<W: Write>(result: &CltRunResult, out: W) -> Result<()> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let e = ecdf(&result.zetas())?;
    let normal = Normal::new(0.0, result.theoretical.variance.sqrt())
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut w = csv_writer(out);
    let mut rows = || -> std::result::Result<(), csv::Error> {
        w.write_record(["value", "ecdf", "theoretical_cdf"])?;
        for (v, p) in e.steps() {
            w.write_record([v.to_string(), p.to_string(), normal.cdf(v).to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    rows().map_err(|e| csv_error(Path::new(ECDF_FILE), e))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    /// Histogram bin count; `Some(0)` picks `⌈√n0⌉`.
    pub histogram_bins: Option<usize>,
    pub ecdf: bool,
}

/// Writes `samples.csv`, `summary.json` and the optional plot files into
/// `dir`, creating it if needed. Returns the written paths.
pub fn export_run(
    result: &CltRunResult,
    dir: &Path,
    options: ExportOptions,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(SAMPLES_FILE);
    write_samples_csv(result, create(&path)?).map_err(|e| csv_error(&path, e))?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, &RunSummary::from(result))
        .map_err(|e| Error::format(&path, e))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if let Some(bins) = options.histogram_bins {
        let bins = if bins == 0 {
            default_bin_count(result.samples.len())
        } else {
            bins
        };
        let path = dir.join(HISTOGRAM_FILE);
        write_histogram_csv(result, bins, create(&path)?).map_err(|e| relocate(e, &path))?;
        written.push(path);
    }
    if options.ecdf {
        let path = dir.join(ECDF_FILE);
        write_ecdf_csv(result, create(&path)?).map_err(|e| relocate(e, &path))?;
        written.push(path);
    }
    Ok(written)
}

fn relocate(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        Error::Format { message, .. } => Error::format(path, message),
        other => other,
    }
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}
